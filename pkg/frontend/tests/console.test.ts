/**
 * Console round-trip against a scripted fake gateway: the acceptance
 * path (enter flips the indicator in one message, a typed utterance
 * yields a visible routed reply, every outbound envelope is
 * schema-valid).
 */

import { beforeEach, describe, expect, it } from "vitest";

import type { SocketLike } from "../src/connection.js";
import { Envelope, validateEnvelope } from "../src/protocol.js";
import { ConsoleApp } from "../src/ui.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: Envelope[] = [];

  constructor(private gateway: FakeGateway) {}

  send(data: string): void {
    for (const line of data.split("\n")) {
      if (line.trim() === "") continue;
      const env = JSON.parse(line) as Envelope;
      validateEnvelope(env); // every byte of console traffic must be schema-valid
      this.sent.push(env);
      this.gateway.handle(this, env);
    }
  }

  close(): void {
    this.onclose?.();
  }

  reply(env: Envelope): void {
    this.onmessage?.({ data: JSON.stringify(env) + "\n" });
  }
}

/** Minimal scripted stand-in for the server's session behavior. */
class FakeGateway {
  seq = 0;
  sockets: FakeSocket[] = [];

  socketFactory = (_url: string): SocketLike => {
    const socket = new FakeSocket(this);
    this.sockets.push(socket);
    queueMicrotask(() => socket.onopen?.());
    return socket;
  };

  private env(type: string, payload: Record<string, unknown>, ts = 1): Envelope {
    return { type, session: "console", ts_ms: ts, seq: this.seq++, payload };
  }

  handle(socket: FakeSocket, env: Envelope): void {
    if (env.type === "session_open") {
      socket.reply(this.env("session_open", { condition: "hybrid" }));
      socket.reply(this.env("state_update", {
        state: "idle",
        indicator: { background: "red", icon: "mute" },
        people_count: 0,
      }));
    } else if (env.type === "config_get") {
      socket.reply(this.env("config_get", { key: "condition", value: "hybrid" }));
    } else if (env.type === "config_set") {
      socket.reply(this.env("config_set", env.payload));
    } else if (env.type === "inject_event") {
      const event = env.payload["event"] as Record<string, unknown>;
      if (event["kind"] === "user_entered") {
        socket.reply(this.env("state_update", {
          state: "listening",
          indicator: { background: "green", icon: "microphone" },
          people_count: event["people_count"],
        }, env.ts_ms));
        socket.reply(this.env("start_listening", {}, env.ts_ms));
      }
    } else if (env.type === "asr_event" && env.payload["kind"] === "silence") {
      const ts = (env.payload["timestamp_ms"] as number) + 450;
      socket.reply(this.env("utterance_final", {
        text: "where are the robots", people_count: 1, finalized_at_ms: ts,
      }, ts));
      socket.reply(this.env("response_selected", {
        source: "kb", text: "In the main hall.", animation_id: null,
        matched_intent: "robots", score: 1.0,
      }, ts));
    }
  }
}

function click(root: HTMLElement, selector: string): void {
  (root.querySelector(selector) as HTMLButtonElement).click();
}

async function settled(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}

describe("console against a fake gateway", () => {
  let gateway: FakeGateway;
  let root: HTMLElement;
  let app: ConsoleApp;

  beforeEach(async () => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app") as HTMLElement;
    gateway = new FakeGateway();
    app = new ConsoleApp(root, gateway.socketFactory);
    click(root, "#connect");
    await settled();
  });

  it("shows the idle snapshot on connect", () => {
    const indicator = root.querySelector("#indicator") as HTMLElement;
    expect(indicator.classList.contains("red")).toBe(true);
    expect(root.querySelector("#agent-state")!.textContent).toBe("idle");
    expect((root.querySelector("#banner") as HTMLElement).hidden).toBe(true);
  });

  it("visitor-enters flips the background red to green in one state update", () => {
    const indicator = root.querySelector("#indicator") as HTMLElement;
    expect(indicator.classList.contains("red")).toBe(true);
    click(root, "#enter");
    expect(indicator.classList.contains("green")).toBe(true);
    expect(root.querySelector("#icon")!.textContent).toBe("🎤");
    expect(root.querySelector("#agent-state")!.textContent).toBe("listening");
  });

  it("a typed utterance produces a visible routed response in the timeline", () => {
    click(root, "#enter");
    const input = root.querySelector("#utterance") as HTMLInputElement;
    input.value = "where are the robots";
    click(root, "#say");
    const timeline = root.querySelector("#timeline") as HTMLElement;
    const entries = Array.from(timeline.querySelectorAll("li"));
    const reply = entries.find((li) => li.dataset.kind === "response_selected");
    expect(reply).toBeDefined();
    expect(reply!.textContent).toContain("In the main hall.");
    expect(input.value).toBe("");
  });

  it("all console traffic validates against the public envelope schema", () => {
    click(root, "#enter");
    const input = root.querySelector("#utterance") as HTMLInputElement;
    input.value = "hello there";
    click(root, "#say");
    click(root, "#tick");
    click(root, "#leave");
    click(root, "#kb-reload");
    const sent = gateway.sockets[0].sent;
    expect(sent.length).toBeGreaterThanOrEqual(8);
    for (const env of sent) {
      expect(() => validateEnvelope(env)).not.toThrow(); // also enforced at send time
    }
    const seqs = sent.map((e) => e.seq);
    expect([...seqs].sort((a, b) => a - b)).toEqual(seqs);
    expect(new Set(seqs).size).toBe(seqs.length);
  });

  it("switching the condition sends config_set and reflects the ack", () => {
    const picker = root.querySelector("#condition") as HTMLSelectElement;
    picker.value = "mocap_only";
    picker.dispatchEvent(new Event("change"));
    const sent = gateway.sockets[0].sent;
    const configSet = sent.find((e) => e.type === "config_set");
    expect(configSet!.payload).toEqual({ key: "condition", value: "mocap_only" });
    expect(app.state.condition).toBe("mocap_only");
  });

  it("a dropped connection shows the banner and preserves the timeline", () => {
    click(root, "#enter");
    const before = app.state.timeline.length;
    expect(before).toBeGreaterThan(0);
    gateway.sockets[0].close();
    expect((root.querySelector("#banner") as HTMLElement).hidden).toBe(false);
    expect(app.state.timeline.length).toBe(before);
  });
});
