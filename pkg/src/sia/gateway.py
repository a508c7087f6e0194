"""Gateway server: the distributed seam.

All clients — detection feeds, recognizer bridges, embodiment renderers,
operator consoles — attach over one WebSocket channel speaking
newline-terminated envelope lines; plain HTTP endpoints cover admin
(config, knowledge-base reload, latency reports, session listing).
Every session owns a single serialized event path, so concurrent
clients can never interleave halfway through a state change, and every
state update is broadcast to all connections subscribed to the session.

With ``--virtual-clock`` each session runs on its own virtual scheduler
advanced by inbound message timestamps, which makes a scripted client
drive the server deterministically; otherwise timers run on the asyncio
loop in wall time.
"""

from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import logging
from typing import Any

from aiohttp import WSMsgType, web

from sia.adapters import MockLLMAdapter, MockTtsAdapter
from sia.animation import AssetRegistry, ExperimentCondition
from sia.clock import VirtualClock, WallClock
from sia.config import ServerConfig
from sia.core import ClockRegression
from sia.dialog import KnowledgeBase, load_kb
from sia.harness import load_bundled_kb, load_bundled_registry
from sia.latency import LatencyRecord, LatencyStore, Stage, latency_report
from sia.presence import BoundingBox, DetectionFrame, PresenceError
from sia.protocol import (
    ENVELOPE_TYPES,
    Envelope,
    ProtocolError,
    UnknownSession,
    asr_event_from_wire,
    decode,
    encode,
    event_from_wire,
)
from sia.session import SessionRuntime
from sia.speechio import SpeechError

logger = logging.getLogger(__name__)

# Envelope kinds a client may send; everything else only flows server→client.
_CLIENT_SENDABLE = {
    "session_open",
    "session_close",
    "detection_frame",
    "asr_event",
    "inject_event",
    "latency_record",
    "kb_reload",
    "config_get",
    "config_set",
}


class Connection:
    """One WebSocket client: outbound queue plus per-direction seq."""

    _ids = itertools.count(1)

    def __init__(self, ws: web.WebSocketResponse) -> None:
        self.id = next(Connection._ids)
        self.ws = ws
        self.sessions: set[str] = set()
        self.outbound: asyncio.Queue[bytes | None] = asyncio.Queue()
        self._out_seq = itertools.count()
        self._last_in_seq: int | None = None

    def next_seq(self) -> int:
        return next(self._out_seq)

    def check_in_seq(self, seq: int) -> bool:
        if self._last_in_seq is not None and seq <= self._last_in_seq:
            return False
        self._last_in_seq = seq
        return True

    def send(self, data: bytes) -> None:
        self.outbound.put_nowait(data)


class SessionHub:
    """Server-side home of one session: runtime, clock, subscribers."""

    def __init__(self, server: "GatewayServer", session_id: str, condition: ExperimentCondition):
        self.session_id = session_id
        self.server = server
        self.clients: set[Connection] = set()
        self.journal: list[tuple[int, int, str]] = []  # (conn_id, seq, type)
        self.clock = VirtualClock() if server.virtual else server.wall_clock
        self.runtime = SessionRuntime(
            session_id=session_id,
            config=server.config,
            scheduler=self.clock,
            kb=server.kb,
            registry=server.registry,
            llm=MockLLMAdapter(server.config.persona),
            tts=MockTtsAdapter(),
            latency=server.latency,
            emit=self._emit,
            condition=condition,
        )

    def advance(self, ts_ms: int) -> None:
        if self.server.virtual and ts_ms > self.clock.now_ms():
            self.clock.advance_to(ts_ms)

    def _emit(self, kind: str, ts_ms: int, payload: dict[str, Any]) -> None:
        if kind not in ENVELOPE_TYPES:
            return  # runtime-internal notification (e.g. performance_plan)
        for conn in list(self.clients):
            env = Envelope(
                type=kind, session=self.session_id, ts_ms=ts_ms,
                seq=conn.next_seq(), payload=payload,
            )
            conn.send(encode(env))

    def send_snapshot(self, conn: Connection) -> None:
        from sia.core import StateUpdate, indicator_for
        from sia.protocol import state_update_payload

        snap = self.runtime.snapshot()
        update = StateUpdate(
            state=self.runtime.session.agent_state,
            indicator=indicator_for(self.runtime.session.agent_state),
            people_count=self.runtime.session.people_count,
            ts_ms=self.clock.now_ms(),
        )
        for kind, payload in (
            ("session_open", {"condition": snap["condition"]}),
            ("state_update", state_update_payload(update)),
        ):
            env = Envelope(
                type=kind, session=self.session_id, ts_ms=self.clock.now_ms(),
                seq=conn.next_seq(), payload=payload,
            )
            conn.send(encode(env))


class GatewayServer:
    def __init__(
        self,
        config: ServerConfig,
        kb: KnowledgeBase,
        registry: AssetRegistry,
        virtual: bool = False,
        kb_path: str | None = None,
    ) -> None:
        self.config = config
        self.kb = kb
        self.registry = registry
        self.virtual = virtual
        self.kb_path = kb_path
        self.latency = LatencyStore()
        self.sessions: dict[str, SessionHub] = {}
        self.wall_clock: WallClock | None = None

    # -- app wiring -------------------------------------------------------

    def build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self.handle_ws)
        app.router.add_get("/config", self.handle_get_config)
        app.router.add_put("/config", self.handle_put_config)
        app.router.add_post("/kb_reload", self.handle_kb_reload)
        app.router.add_get("/latency_report", self.handle_latency_report)
        app.router.add_get("/sessions", self.handle_sessions)
        app.on_startup.append(self._on_startup)
        return app

    async def _on_startup(self, app: web.Application) -> None:
        if not self.virtual:
            self.wall_clock = WallClock(asyncio.get_running_loop())

    # -- websocket channel --------------------------------------------------

    async def handle_ws(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=30)
        await ws.prepare(request)
        conn = Connection(ws)
        writer = asyncio.create_task(self._writer(conn))
        try:
            async for msg in ws:
                if msg.type is not WSMsgType.TEXT:
                    continue
                for line in msg.data.splitlines():
                    if line.strip():
                        self._process_line(conn, line)
        finally:
            for session_id in conn.sessions:
                hub = self.sessions.get(session_id)
                if hub:
                    hub.clients.discard(conn)
            conn.outbound.put_nowait(None)
            await writer
        return ws

    async def _writer(self, conn: Connection) -> None:
        while True:
            data = await conn.outbound.get()
            if data is None:
                return
            try:
                await conn.ws.send_str(data.decode("utf-8").rstrip("\n"))
            except ConnectionError:
                return

    def _process_line(self, conn: Connection, line: str) -> None:
        try:
            env = decode(line)
        except ProtocolError as exc:
            self._send_error(conn, "?", 0, exc.code, str(exc))
            return
        if not conn.check_in_seq(env.seq):
            self._send_error(conn, env.session, env.ts_ms, "seq_violation",
                             f"seq {env.seq} did not increase")
            return
        try:
            self._dispatch(conn, env)
        except ProtocolError as exc:
            self._send_error(conn, env.session, env.ts_ms, exc.code, str(exc))
        except (PresenceError, SpeechError, ClockRegression, ValueError) as exc:
            self._send_error(conn, env.session, env.ts_ms, type(exc).__name__.lower(), str(exc))
        except Exception:
            logger.exception("dispatch failed for %s", env.type)
            self._send_error(conn, env.session, env.ts_ms, "internal_error", "dispatch failed")

    def _send_error(self, conn: Connection, session: str, ts_ms: int, code: str, message: str) -> None:
        env = Envelope(
            type="error", session=session or "?", ts_ms=ts_ms, seq=conn.next_seq(),
            payload={"code": code, "message": message},
        )
        conn.send(encode(env))

    def _reply(self, conn: Connection, env: Envelope, payload: dict[str, Any]) -> None:
        out = Envelope(
            type=env.type, session=env.session, ts_ms=env.ts_ms,
            seq=conn.next_seq(), payload=payload,
        )
        conn.send(encode(out))

    def _hub(self, env: Envelope) -> SessionHub:
        hub = self.sessions.get(env.session)
        if hub is None:
            raise UnknownSession(f"no session {env.session!r}")
        return hub

    def _dispatch(self, conn: Connection, env: Envelope) -> None:
        """Route one envelope; session-bound kinds run on the session's clock."""
        if env.type not in _CLIENT_SENDABLE:
            self._send_error(conn, env.session, env.ts_ms, "unroutable_type",
                             f"{env.type} is not client-sendable")
            return

        if env.type == "session_open":
            condition = ExperimentCondition(env.payload.get("condition") or self.config.condition)
            hub = self.sessions.get(env.session)
            if hub is None:
                hub = SessionHub(self, env.session, condition)
                self.sessions[env.session] = hub
            hub.clients.add(conn)
            conn.sessions.add(env.session)
            hub.journal.append((conn.id, env.seq, env.type))
            hub.send_snapshot(conn)
            return

        if env.type == "kb_reload":
            path = env.payload.get("path") or self.kb_path
            if not path:
                raise UnknownSession("no knowledge base path configured")
            self.reload_kb(path)
            self._reply(conn, env, {"path": path, "entries": len(self.kb.entries)})
            return
        if env.type == "config_get":
            key = env.payload.get("key")
            value = self.config.get(key) if key else self.config.to_dict()
            self._reply(conn, env, {"key": key, "value": value})
            return
        if env.type == "config_set":
            key, value = env.payload["key"], env.payload["value"]
            try:
                self.apply_config(key, value)
            except (KeyError, ValueError) as exc:
                self._send_error(conn, env.session, env.ts_ms, "config_error", str(exc))
                return
            self._reply(conn, env, {"key": key, "value": self.config.get(key)})
            return

        hub = self._hub(env)
        hub.journal.append((conn.id, env.seq, env.type))
        hub.advance(env.ts_ms)
        # Virtual mode trusts driver timestamps; a live server stamps events
        # with its own arrival clock so client epochs cannot skew timers.
        ts = env.ts_ms if self.virtual else hub.clock.now_ms()

        if env.type == "session_close":
            hub.runtime.close()
            hub._emit("session_close", ts, {"reason": env.payload.get("reason") or "closed"})
            for client in hub.clients:
                client.sessions.discard(env.session)
            del self.sessions[env.session]
        elif env.type == "detection_frame":
            frame_ts = env.payload["timestamp_ms"] if self.virtual else ts
            frame = DetectionFrame(
                frame_ts,
                tuple(BoundingBox(b["x"], b["y"], b["w"], b["h"]) for b in env.payload["boxes"]),
            )
            hub.runtime.handle_detection_frame(frame)
        elif env.type == "asr_event":
            payload = env.payload if self.virtual else {**env.payload, "timestamp_ms": ts}
            hub.runtime.handle_asr_event(asr_event_from_wire(payload))
        elif env.type == "inject_event":
            event = event_from_wire(env.payload["event"], ts)
            hub.runtime.handle_injected(event)
        elif env.type == "latency_record":
            p = env.payload
            self.latency.append(
                LatencyRecord(Stage(p["stage"]), p["start_ms"], p["end_ms"],
                              env.session, p["turn_index"])
            )

    # -- admin -----------------------------------------------------------------

    def reload_kb(self, path: str) -> None:
        self.kb = load_kb(path)
        for hub in self.sessions.values():
            hub.runtime.kb = self.kb

    def apply_config(self, key: str, value: Any) -> None:
        self.config.set(key, value)
        if key == "condition":
            condition = ExperimentCondition(value)
            for hub in self.sessions.values():
                hub.runtime.condition = condition

    async def handle_get_config(self, request: web.Request) -> web.Response:
        return web.json_response(self.config.to_dict())

    async def handle_put_config(self, request: web.Request) -> web.Response:
        try:
            doc = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            return web.json_response({"error": "body must be a JSON object"}, status=400)
        if not isinstance(doc, dict):
            return web.json_response({"error": "body must be a JSON object"}, status=400)
        try:
            for key, value in doc.items():
                self.apply_config(key, value)
        except (KeyError, ValueError) as exc:
            return web.json_response({"error": str(exc)}, status=400)
        return web.json_response(self.config.to_dict())

    async def handle_kb_reload(self, request: web.Request) -> web.Response:
        try:
            doc = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            doc = {}
        path = (doc.get("path") if isinstance(doc, dict) else None) or self.kb_path
        if not path:
            return web.json_response({"error": "no knowledge base path configured"}, status=400)
        try:
            self.reload_kb(path)
        except (OSError, ValueError) as exc:
            return web.json_response({"error": str(exc)}, status=400)
        return web.json_response({"path": path, "entries": len(self.kb.entries)})

    async def handle_latency_report(self, request: web.Request) -> web.Response:
        stage_name = request.query.get("stage")
        stage = None
        if stage_name:
            try:
                stage = Stage(stage_name)
            except ValueError:
                return web.json_response({"error": f"unknown stage {stage_name!r}"}, status=400)
        summary = latency_report(self.latency.records(), stage)
        return web.json_response(summary.to_dict())

    async def handle_sessions(self, request: web.Request) -> web.Response:
        return web.json_response(
            [hub.runtime.snapshot() | {"clients": len(hub.clients)} for hub in self.sessions.values()]
        )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sia-server", description="Interaction gateway server")
    parser.add_argument("--config", help="server config JSON file")
    parser.add_argument("--kb", help="knowledge base JSON file")
    parser.add_argument("--assets", help="animation asset manifest JSON file")
    parser.add_argument("--listen", default="127.0.0.1:8765", help="addr:port to listen on")
    parser.add_argument("--condition", choices=[c.value for c in ExperimentCondition])
    parser.add_argument("--virtual-clock", action="store_true",
                        help="advance session clocks from message timestamps (harness mode)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    config = ServerConfig.load(args.config) if args.config else ServerConfig()
    if args.condition:
        config.condition = ExperimentCondition(args.condition)
    kb = load_kb(args.kb) if args.kb else load_bundled_kb()
    registry = AssetRegistry.from_manifest(args.assets) if args.assets else load_bundled_registry()

    server = GatewayServer(config, kb, registry, virtual=args.virtual_clock, kb_path=args.kb)
    host, _, port = args.listen.rpartition(":")
    web.run_app(server.build_app(), host=host or "127.0.0.1", port=int(port))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
