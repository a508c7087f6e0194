import { describe, expect, it, vi } from "vitest";

import { GatewayConnection, SocketLike } from "../src/connection.js";
import { Envelope, ProtocolViolation, tick, userEntered } from "../src/protocol.js";

class StubSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }
}

function harness() {
  const sockets: StubSocket[] = [];
  const envelopes: Envelope[] = [];
  const errors: string[] = [];
  const statuses: boolean[] = [];
  const retries: { fn: () => void; ms: number }[] = [];
  const connection = new GatewayConnection(
    "ws://test/ws",
    "s1",
    {
      onEnvelope: (env) => envelopes.push(env),
      onStatus: (connected) => statuses.push(connected),
      onProtocolError: (message) => errors.push(message),
    },
    () => {
      const socket = new StubSocket();
      sockets.push(socket);
      return socket;
    },
    (fn, ms) => retries.push({ fn, ms }),
  );
  return { connection, sockets, envelopes, errors, statuses, retries };
}

describe("gateway connection", () => {
  it("assigns strictly increasing seq per connection", () => {
    const h = harness();
    h.connection.connect();
    h.sockets[0].onopen?.();
    const a = h.connection.send(userEntered(1), 10);
    const b = h.connection.send(tick(), 11);
    expect(b.seq).toBeGreaterThan(a.seq);
    expect(h.sockets[0].sent.length).toBe(2);
    expect(h.sockets[0].sent[0].endsWith("\n")).toBe(true);
  });

  it("refuses to send schema-violating drafts", () => {
    const h = harness();
    h.connection.connect();
    h.sockets[0].onopen?.();
    expect(() =>
      h.connection.send({ type: "warp_drive", payload: {} }),
    ).toThrow(ProtocolViolation);
    expect(h.sockets[0].sent).toEqual([]);
  });

  it("splits multi-envelope messages and surfaces bad lines", () => {
    const h = harness();
    h.connection.connect();
    const socket = h.sockets[0];
    socket.onopen?.();
    const good = JSON.stringify({
      type: "start_listening", session: "s1", ts_ms: 1, seq: 0, payload: {},
    });
    socket.onmessage?.({ data: `${good}\n{broken\n${good}\n` });
    expect(h.envelopes.length).toBe(2);
    expect(h.errors.length).toBe(1);
  });

  it("reconnects with growing backoff until closed on purpose", () => {
    const h = harness();
    h.connection.connect();
    h.sockets[0].onopen?.();
    h.sockets[0].close();
    expect(h.statuses).toEqual([true, false]);
    expect(h.retries.length).toBe(1);
    expect(h.retries[0].ms).toBe(500);
    h.retries[0].fn(); // second attempt
    h.sockets[1].close();
    expect(h.retries[1].ms).toBe(1000);
    h.retries[1].fn();
    h.connection.close(); // deliberate close: no further retries
    expect(h.retries.length).toBe(2);
  });

  it("timestamps are strictly monotone even within one millisecond", () => {
    const h = harness();
    const a = h.connection.nowMs();
    const b = h.connection.nowMs();
    const c = h.connection.nowMs();
    expect(b).toBeGreaterThan(a);
    expect(c).toBeGreaterThan(b);
  });
});
