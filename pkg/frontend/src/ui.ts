/**
 * Operator console UI: renders the session view and wires the controls.
 *
 * Layout: connection bar (address, session, connect, disconnected
 * banner), the big indicator panel (background color + icon mirror the
 * agent's listening state), injection controls (visitor enters/leaves,
 * typed utterance, condition switch, KB reload), the scrolling event
 * timeline, and the latency summary table.
 */

import { GatewayConnection, SocketFactory } from "./connection.js";
import {
  ConditionName,
  Envelope,
  ProtocolViolation,
  getConfig,
  openSession,
  reloadKb,
  setCondition,
  tick,
  userEntered,
  userLeft,
  utteranceDrafts,
} from "./protocol.js";
import {
  ConsoleState,
  applyEnvelope,
  initialState,
  latencySummary,
  recordOutbound,
  setConnected,
} from "./state.js";

const STAGE_ORDER = ["asr_endpoint", "routing", "tts", "animation", "end_to_end"];

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node as T;
}

export class ConsoleApp {
  state: ConsoleState;
  connection: GatewayConnection | null = null;

  private root: HTMLElement;
  private factory: SocketFactory | undefined;

  constructor(root: HTMLElement, factory?: SocketFactory) {
    this.root = root;
    this.factory = factory;
    this.state = initialState("console");
    root.innerHTML = TEMPLATE;
    this.wire();
    this.render();
  }

  // -- wiring ------------------------------------------------------------

  private wire(): void {
    el<HTMLButtonElement>(this.root, "#connect").onclick = () => this.connect();
    el<HTMLButtonElement>(this.root, "#enter").onclick = () =>
      this.sendSafe(userEntered(this.state.peopleCount + 1));
    el<HTMLButtonElement>(this.root, "#leave").onclick = () =>
      this.sendSafe(userLeft(Math.max(0, this.state.peopleCount - 1)));
    el<HTMLButtonElement>(this.root, "#tick").onclick = () => this.sendSafe(tick());
    el<HTMLButtonElement>(this.root, "#say").onclick = () => this.sendUtterance();
    el<HTMLInputElement>(this.root, "#utterance").onkeydown = (ev) => {
      if ((ev as KeyboardEvent).key === "Enter") this.sendUtterance();
    };
    el<HTMLSelectElement>(this.root, "#condition").onchange = (ev) => {
      const value = (ev.target as HTMLSelectElement).value as ConditionName;
      this.sendSafe(setCondition(value));
    };
    el<HTMLButtonElement>(this.root, "#kb-reload").onclick = () => this.sendSafe(reloadKb());
  }

  connect(): void {
    const address = el<HTMLInputElement>(this.root, "#address").value;
    const session = el<HTMLInputElement>(this.root, "#session").value || "console";
    this.connection?.close();
    this.state = initialState(session);
    this.connection = new GatewayConnection(
      address,
      session,
      {
        onEnvelope: (env) => this.onEnvelope(env),
        onStatus: (connected) => this.onStatus(connected),
        onProtocolError: (message) => this.onProtocolError(message),
        onSent: (env) => this.onSent(env),
      },
      this.factory,
    );
    this.connection.connect();
    this.render();
  }

  // -- events --------------------------------------------------------------

  onEnvelope(env: Envelope): void {
    this.state = applyEnvelope(this.state, env);
    this.render();
  }

  private onSent(env: Envelope): void {
    this.state = recordOutbound(this.state, env);
    this.render();
  }

  private onStatus(connected: boolean): void {
    this.state = setConnected(this.state, connected);
    if (connected) {
      // Subscribe, then ask for the active condition so the picker is honest.
      this.connection?.send(openSession());
      this.connection?.send(getConfig("condition"));
    }
    this.render();
  }

  private onProtocolError(message: string): void {
    this.state = {
      ...this.state,
      timeline: [
        ...this.state.timeline,
        { ts_ms: 0, kind: "error", label: `protocol: ${message}`, outbound: false, isError: true },
      ],
    };
    this.render();
  }

  private sendSafe(draft: { type: string; payload: Record<string, unknown> }): void {
    try {
      this.connection?.send(draft);
    } catch (e) {
      if (e instanceof ProtocolViolation) this.onProtocolError(e.message);
      else throw e;
    }
  }

  private sendUtterance(): void {
    const input = el<HTMLInputElement>(this.root, "#utterance");
    const drafts = utteranceDrafts(input.value, this.connection?.nowMs() ?? Date.now());
    if (drafts.length === 0 || !this.connection) return;
    try {
      this.connection.sendAll(drafts);
      input.value = "";
    } catch (e) {
      if (e instanceof ProtocolViolation) this.onProtocolError(e.message);
      else throw e;
    }
  }

  // -- rendering ---------------------------------------------------------------

  render(): void {
    const state = this.state;
    el(this.root, "#banner").hidden = state.connected;
    const panel = el(this.root, "#indicator");
    const background = state.indicator?.background ?? "red";
    panel.classList.toggle("green", background === "green");
    panel.classList.toggle("red", background !== "green");
    el(this.root, "#icon").textContent = state.indicator?.icon === "microphone" ? "🎤" : "🔇";
    el(this.root, "#agent-state").textContent = state.agentState ?? "—";
    el(this.root, "#people").textContent = String(state.peopleCount);
    el(this.root, "#session-label").textContent = state.session;
    const picker = el<HTMLSelectElement>(this.root, "#condition");
    if (state.condition && picker.value !== state.condition) picker.value = state.condition;

    const list = el(this.root, "#timeline");
    list.innerHTML = "";
    for (const entry of state.timeline.slice(-200)) {
      const item = document.createElement("li");
      item.className = entry.outbound ? "out" : entry.isError ? "err" : "in";
      item.dataset.kind = entry.kind;
      item.textContent = `${entry.ts_ms} ${entry.outbound ? "→" : "←"} ${entry.label}`;
      list.appendChild(item);
    }
    (list as HTMLElement).scrollTop = (list as HTMLElement).scrollHeight;

    const table = el(this.root, "#latency-body");
    table.innerHTML = "";
    const summary = latencySummary(state);
    for (const stage of STAGE_ORDER) {
      const row = summary[stage];
      if (!row) continue;
      const tr = document.createElement("tr");
      tr.innerHTML =
        `<td>${stage}</td><td>${row.count}</td>` +
        `<td>${row.mean === null ? "—" : row.mean.toFixed(1)}</td>` +
        `<td>${row.p50 ?? "—"}</td><td>${row.p95 ?? "—"}</td><td>${row.max ?? "—"}</td>`;
      table.appendChild(tr);
    }
  }
}

const TEMPLATE = `
<header>
  <input id="address" value="ws://127.0.0.1:8765/ws" size="28" />
  <input id="session" value="console" size="10" />
  <button id="connect">connect</button>
  <span id="banner" class="banner" hidden>disconnected — retrying…</span>
</header>
<main>
  <section id="indicator" class="red">
    <div id="icon">🔇</div>
    <div id="agent-state">—</div>
    <div>session <b id="session-label">—</b> · <span id="people">0</span> present</div>
  </section>
  <section class="controls">
    <button id="enter">visitor enters</button>
    <button id="leave">visitor leaves</button>
    <button id="tick">tick</button>
    <input id="utterance" placeholder="type an utterance…" size="32" />
    <button id="say">say</button>
    <select id="condition">
      <option value="hybrid">hybrid</option>
      <option value="mocap_only">mocap only</option>
      <option value="generative_only">generative only</option>
    </select>
    <button id="kb-reload">reload KB</button>
  </section>
  <section class="panes">
    <ul id="timeline"></ul>
    <table id="latency">
      <thead><tr><th>stage</th><th>n</th><th>mean</th><th>p50</th><th>p95</th><th>max</th></tr></thead>
      <tbody id="latency-body"></tbody>
    </table>
  </section>
</main>
`;
