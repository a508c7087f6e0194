"""Gateway server: channel round-trips, dispatch, admin, serialization."""

import asyncio
import itertools
import json

import aiohttp
from aiohttp import WSMsgType, web

from sia.config import ServerConfig
from sia.gateway import GatewayServer
from sia.harness import load_bundled_kb, load_bundled_registry


class Client:
    def __init__(self, ws):
        self.ws = ws
        self._seq = itertools.count(1)

    async def send(self, kind, session, ts_ms, payload):
        env = {"type": kind, "session": session, "ts_ms": ts_ms,
               "seq": next(self._seq), "payload": payload}
        await self.ws.send_str(json.dumps(env))

    async def send_raw(self, text):
        await self.ws.send_str(text)

    async def recv(self, timeout=5.0):
        msg = await asyncio.wait_for(self.ws.receive(), timeout)
        assert msg.type is WSMsgType.TEXT, msg
        return json.loads(msg.data)

    async def recv_until(self, kind, timeout=5.0, collect=None):
        while True:
            env = await self.recv(timeout)
            if collect is not None:
                collect.append(env)
            if env["type"] == kind:
                return env


def run_gateway(test, virtual=True, config=None):
    async def runner():
        server = GatewayServer(
            config or ServerConfig(),
            load_bundled_kb(),
            load_bundled_registry(),
            virtual=virtual,
        )
        app_runner = web.AppRunner(server.build_app())
        await app_runner.setup()
        site = web.TCPSite(app_runner, "127.0.0.1", 0)
        await site.start()
        port = site._server.sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"
        try:
            async with aiohttp.ClientSession() as http:
                await test(server, http, base)
        finally:
            await app_runner.cleanup()

    asyncio.run(runner())


async def open_session(http, base, session="s1", condition=None):
    ws = await http.ws_connect(base + "/ws")
    client = Client(ws)
    payload = {"condition": condition} if condition else {}
    await client.send("session_open", session, 0, payload)
    ack = await client.recv()
    assert ack["type"] == "session_open"
    snapshot = await client.recv()
    assert snapshot["type"] == "state_update"
    return client, snapshot


def test_open_returns_snapshot():
    async def scenario(server, http, base):
        client, snapshot = await open_session(http, base)
        assert snapshot["payload"]["state"] == "idle"
        assert snapshot["payload"]["indicator"] == {"background": "red", "icon": "mute"}
        await client.ws.close()

    run_gateway(scenario)


def test_injected_user_entered_flips_indicator():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        await client.send("inject_event", "s1", 10,
                          {"event": {"kind": "user_entered", "people_count": 1}})
        update = await client.recv_until("state_update")
        assert update["payload"]["state"] == "listening"
        assert update["payload"]["indicator"] == {"background": "green", "icon": "microphone"}
        await client.recv_until("start_listening")
        await client.ws.close()

    run_gateway(scenario)


def test_detection_frames_debounce_into_presence():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        box = {"x": 0.3, "y": 0.2, "w": 0.3, "h": 0.6}
        for i in range(10):
            ts = 33 * (i + 1)
            await client.send("detection_frame", "s1", ts,
                              {"timestamp_ms": ts, "boxes": [box]})
        update = await client.recv_until("state_update")
        assert update["payload"]["state"] == "listening"
        assert update["ts_ms"] == 330
        await client.ws.close()

    run_gateway(scenario)


def test_full_turn_over_the_wire():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        await client.send("inject_event", "s1", 0,
                          {"event": {"kind": "user_entered", "people_count": 1}})
        await client.send("asr_event", "s1", 100,
                          {"timestamp_ms": 100, "kind": "partial", "text": "hello"})
        # advance the virtual clock past the 700 ms endpoint window
        await client.send("inject_event", "s1", 1000, {"event": {"kind": "tick"}})
        seen = []
        response = await client.recv_until("response_selected", collect=seen)
        assert response["payload"]["matched_intent"] == "greeting"
        kinds = [e["type"] for e in seen]
        assert "utterance_final" in kinds
        assert kinds.count("state_update") >= 3  # listening, thinking, talking
        # advance past the talking performance so the stream can conclude
        await client.send("inject_event", "s1", 10_000, {"event": {"kind": "tick"}})
        complete = await client.recv_until("animation_complete")
        assert complete["payload"]["aborted"] is False
        update = await client.recv_until("state_update")
        assert update["payload"]["state"] == "listening"
        # latency records reached the store
        report = await (await http.get(base + "/latency_report?stage=end_to_end")).json()
        assert report["count"] == 1
        await client.ws.close()

    run_gateway(scenario)


def test_protocol_errors_are_replied_not_fatal():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        await client.send_raw("{not json")
        err = await client.recv_until("error")
        assert err["payload"]["code"] == "malformed_message"
        await client.send_raw(json.dumps({"type": "telepathy", "session": "s1",
                                          "ts_ms": 0, "seq": 99, "payload": {}}))
        err = await client.recv_until("error")
        assert err["payload"]["code"] == "unknown_type"
        await client.send_raw(json.dumps({"type": "detection_frame", "session": "s1",
                                          "ts_ms": 0, "seq": 100, "payload": {}}))
        err = await client.recv_until("error")
        assert err["payload"]["code"] == "schema_violation"
        # the connection still works afterward
        await client.send("inject_event", "s1", 5, {"event": {"kind": "tick"}})
        await client.send("config_get", "s1", 5, {"key": "condition"})
        ack = await client.recv_until("config_get")
        assert ack["payload"]["value"] == "hybrid"
        await client.ws.close()

    run_gateway(scenario)


def test_unknown_session_and_seq_violation():
    async def scenario(server, http, base):
        ws = await http.ws_connect(base + "/ws")
        client = Client(ws)
        await client.send("detection_frame", "ghost", 10,
                          {"timestamp_ms": 10, "boxes": []})
        err = await client.recv_until("error")
        assert err["payload"]["code"] == "unknown_session"
        await client.send_raw(json.dumps({"type": "config_get", "session": "x",
                                          "ts_ms": 0, "seq": 1, "payload": {}}))
        err = await client.recv_until("error")
        assert err["payload"]["code"] == "seq_violation"
        await ws.close()

    run_gateway(scenario)


def test_rest_admin_round_trip(tmp_path):
    async def scenario(server, http, base):
        config = await (await http.get(base + "/config")).json()
        assert config["silence_ms"] == 700
        resp = await http.put(base + "/config", json={"silence_ms": 500})
        assert resp.status == 200
        assert server.config.silence_ms == 500
        resp = await http.put(base + "/config", json={"nope": 1})
        assert resp.status == 400

        kb_file = tmp_path / "kb.json"
        kb_file.write_text(json.dumps([
            {"intent_id": "only", "training_phrases": ["just this"],
             "answer_individual": "answer"}
        ]))
        resp = await http.post(base + "/kb_reload", json={"path": str(kb_file)})
        assert resp.status == 200
        assert (await resp.json())["entries"] == 1
        assert len(server.kb.entries) == 1

        client, _ = await open_session(http, base)
        sessions = await (await http.get(base + "/sessions")).json()
        assert sessions[0]["session"] == "s1"
        assert sessions[0]["clients"] == 1

        report = await (await http.get(base + "/latency_report?stage=bogus")).json()
        assert "error" in report
        await client.ws.close()

    run_gateway(scenario)


def test_latency_records_accepted_from_clients():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        for i, duration in enumerate([100, 200, 300, 400, 500]):
            await client.send("latency_record", "s1", i,
                              {"stage": "tts", "start_ms": 0, "end_ms": duration,
                               "turn_index": i})
        await client.send("config_get", "s1", 99, {})
        await client.recv_until("config_get")
        report = await (await http.get(base + "/latency_report?stage=tts")).json()
        assert report == {"count": 5, "mean": 300, "p50": 300, "p95": 500, "max": 500}
        await client.ws.close()

    run_gateway(scenario)


def test_broadcast_reaches_all_clients_in_seq_order():
    async def scenario(server, http, base):
        alpha, _ = await open_session(http, base)
        beta, _ = await open_session(http, base)
        for i in range(5):
            sender = alpha if i % 2 == 0 else beta
            await sender.send("inject_event", "s1", i + 1,
                              {"event": {"kind": "user_entered" if i == 0 else "tick"}})
        update_a = await alpha.recv_until("state_update")
        update_b = await beta.recv_until("state_update")
        assert update_a["payload"] == update_b["payload"]
        # the per-session journal is a linear order, monotone per connection
        journal = server.sessions["s1"].journal
        per_conn = {}
        for conn_id, seq, _ in journal:
            assert seq > per_conn.get(conn_id, -1)
            per_conn[conn_id] = seq
        assert len(per_conn) == 2
        await alpha.ws.close()
        await beta.ws.close()

    run_gateway(scenario)


def test_condition_switch_mid_session_affects_next_plans():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        await client.send("config_set", "s1", 1,
                          {"key": "condition", "value": "mocap_only"})
        ack = await client.recv_until("config_set")
        assert ack["payload"]["value"] == "mocap_only"
        from sia.animation import ExperimentCondition

        assert server.sessions["s1"].runtime.condition is ExperimentCondition.MOCAP_ONLY
        assert server.config.condition is ExperimentCondition.MOCAP_ONLY
        await client.ws.close()

    run_gateway(scenario)


def test_wall_clock_turn_uses_server_arrival_times():
    """Live mode: client epoch timestamps must not skew server timers."""

    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        epoch = 1_900_000_000_000  # far-future client clock
        await client.send("inject_event", "s1", epoch,
                          {"event": {"kind": "user_entered", "people_count": 1}})
        await client.recv_until("start_listening")
        await client.send("asr_event", "s1", epoch + 50,
                          {"timestamp_ms": epoch + 50, "kind": "partial", "text": "hello"})
        response = await client.recv_until("response_selected", timeout=5.0)
        assert response["payload"]["matched_intent"] == "greeting"
        await client.ws.close()

    run_gateway(scenario, virtual=False, config=ServerConfig(silence_ms=150))


def test_session_close_removes_session():
    async def scenario(server, http, base):
        client, _ = await open_session(http, base)
        await client.send("session_close", "s1", 10, {"reason": "done"})
        closed = await client.recv_until("session_close")
        assert closed["payload"]["reason"] == "done"
        assert "s1" not in server.sessions
        await client.ws.close()

    run_gateway(scenario)
