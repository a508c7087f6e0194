/**
 * Gateway channel client: one WebSocket, newline-terminated JSON
 * envelope per message, per-connection monotone seq, auto-reconnect
 * with capped exponential backoff.
 */

import { Draft, Envelope, ProtocolViolation, decodeEnvelope, validateEnvelope } from "./protocol.js";

/** The subset of WebSocket the connection needs (swappable in tests). */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHandlers {
  onEnvelope(env: Envelope): void;
  onStatus(connected: boolean): void;
  onProtocolError(message: string): void;
  /** Sent envelopes, after validation (for the timeline). */
  onSent?(env: Envelope): void;
}

const BACKOFF_BASE_MS = 500;
const BACKOFF_CAP_MS = 10_000;

export class GatewayConnection {
  private socket: SocketLike | null = null;
  private seq = 0;
  private attempts = 0;
  private closed = false;
  private lastTs = 0;

  constructor(
    private url: string,
    private session: string,
    private handlers: ConnectionHandlers,
    private factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    private scheduleRetry: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  connect(): void {
    this.closed = false;
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.handlers.onStatus(true);
    };
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onerror = () => undefined;
    socket.onclose = () => {
      this.socket = null;
      this.handlers.onStatus(false);
      if (!this.closed) {
        const backoff = Math.min(BACKOFF_BASE_MS * 2 ** this.attempts, BACKOFF_CAP_MS);
        this.attempts += 1;
        this.scheduleRetry(() => this.connect(), backoff);
      }
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }

  get isOpen(): boolean {
    return this.socket !== null;
  }

  /** Monotone integer milliseconds for outbound timestamps. */
  nowMs(): number {
    this.lastTs = Math.max(Date.now(), this.lastTs + 1);
    return this.lastTs;
  }

  /**
   * Stamp, validate, and send one draft. Returns the envelope that went
   * out; throws ProtocolViolation (and sends nothing) if the draft does
   * not match the public schema.
   */
  send(draft: Draft, tsMs?: number): Envelope {
    const env: Envelope = {
      type: draft.type,
      session: this.session,
      ts_ms: tsMs ?? this.nowMs(),
      seq: ++this.seq,
      payload: draft.payload,
    };
    validateEnvelope(env);
    if (!this.socket) {
      throw new ProtocolViolation("not connected");
    }
    this.socket.send(JSON.stringify(env) + "\n");
    this.handlers.onSent?.(env);
    return env;
  }

  sendAll(drafts: Draft[], tsMs?: number): Envelope[] {
    return drafts.map((draft) => {
      const payloadTs = (draft.payload as Record<string, unknown>)["timestamp_ms"];
      const ts = typeof payloadTs === "number" ? payloadTs : tsMs;
      return this.send(draft, ts);
    });
  }

  private receive(data: string): void {
    for (const line of data.split("\n")) {
      if (line.trim() === "") continue;
      try {
        this.handlers.onEnvelope(decodeEnvelope(line));
      } catch (e) {
        this.handlers.onProtocolError((e as Error).message);
      }
    }
  }
}
