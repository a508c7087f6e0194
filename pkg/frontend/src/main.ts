import { ConsoleApp } from "./ui.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
new ConsoleApp(root);
