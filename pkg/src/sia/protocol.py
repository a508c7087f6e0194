"""Wire protocol: the message envelope and its closed schema set.

Every message between clients and the server is one UTF-8 JSON document
per line wrapped in an envelope: type, session, ts_ms (integer
milliseconds), a per-connection monotone seq, and a type-specific
payload. The canonical byte form (sorted keys, compact separators,
trailing newline) round-trips: decode(encode(e)) == e and
encode(decode(line)) == line for canonical lines.

Decoding never crashes on garbage: every failure maps to a typed error
(malformed document, unknown type, schema violation) that the server
returns to the sender as an ``error`` envelope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from sia.core import (
    AgentEvent,
    AnimationComplete,
    ResponseReady,
    StateUpdate,
    Tick,
    UserEntered,
    UserLeft,
    UtteranceFinal,
)
from sia.dialog import DialogResponse, ResponseSource
from sia.speechio import AsrEvent, AsrKind


class ProtocolError(Exception):
    code = "protocol_error"


class MalformedMessage(ProtocolError):
    code = "malformed_message"


class UnknownType(ProtocolError):
    code = "unknown_type"


class SchemaViolation(ProtocolError):
    code = "schema_violation"


class UnknownSession(ProtocolError):
    code = "unknown_session"


@dataclass(frozen=True)
class Envelope:
    type: str
    session: str
    ts_ms: int
    seq: int
    payload: Mapping[str, Any]


ENVELOPE_TYPES = frozenset(
    {
        "detection_frame",
        "asr_event",
        "state_update",
        "start_listening",
        "utterance_final",
        "response_selected",
        "animation_frame",
        "animation_complete",
        "inject_event",
        "latency_record",
        "error",
        "kb_reload",
        "config_get",
        "config_set",
        "session_open",
        "session_close",
    }
)

_STATES = {"idle", "listening", "thinking", "talking"}
_STAGES = {"asr_endpoint", "routing", "tts", "animation", "end_to_end"}
_CONDITIONS = {"hybrid", "mocap_only", "generative_only"}
_EVENT_KINDS = {
    "user_entered",
    "user_left",
    "utterance_final",
    "response_ready",
    "animation_complete",
    "tick",
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool))


def _require(payload: Mapping[str, Any], field: str, check: Callable[[Any], bool], desc: str) -> Any:
    if field not in payload:
        raise SchemaViolation(f"missing field {field!r}")
    value = payload[field]
    if not check(value):
        raise SchemaViolation(f"field {field!r} must be {desc}")
    return value


def _optional(payload: Mapping[str, Any], field: str, check: Callable[[Any], bool], desc: str) -> Any:
    if field not in payload or payload[field] is None:
        return None
    value = payload[field]
    if not check(value):
        raise SchemaViolation(f"field {field!r} must be {desc}")
    return value


def _check_box(box: Any) -> None:
    if not isinstance(box, dict):
        raise SchemaViolation("each box must be an object")
    for coord in ("x", "y", "w", "h"):
        _require(box, coord, _is_number, "a number")


def _validate_detection_frame(p: Mapping[str, Any]) -> None:
    _require(p, "timestamp_ms", _is_int, "an integer")
    boxes = _require(p, "boxes", lambda v: isinstance(v, list), "a list")
    for box in boxes:
        _check_box(box)


def _validate_asr_event(p: Mapping[str, Any]) -> None:
    _require(p, "timestamp_ms", _is_int, "an integer")
    kind = _require(p, "kind", lambda v: v in ("partial", "silence"), "partial or silence")
    if kind == "partial":
        _require(p, "text", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    else:
        _optional(p, "text", lambda v: isinstance(v, str), "a string")


def _validate_state_update(p: Mapping[str, Any]) -> None:
    _require(p, "state", lambda v: v in _STATES, "one of " + "/".join(sorted(_STATES)))
    indicator = _require(p, "indicator", lambda v: isinstance(v, dict), "an object")
    background = _require(indicator, "background", lambda v: v in ("red", "green"), "red or green")
    icon = _require(indicator, "icon", lambda v: v in ("mute", "microphone"), "mute or microphone")
    if (background == "green") != (icon == "microphone"):
        raise SchemaViolation("indicator must pair green with microphone and red with mute")
    _require(p, "people_count", lambda v: _is_int(v) and v >= 0, "a non-negative integer")


def _validate_start_listening(p: Mapping[str, Any]) -> None:
    pass


def _validate_utterance_final(p: Mapping[str, Any]) -> None:
    _require(p, "text", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    _require(p, "people_count", lambda v: _is_int(v) and v >= 1, "a positive integer")
    _require(p, "finalized_at_ms", _is_int, "an integer")


def _validate_response_selected(p: Mapping[str, Any]) -> None:
    _require(p, "source", lambda v: v in ("kb", "llm"), "kb or llm")
    _require(p, "text", lambda v: isinstance(v, str), "a string")
    _optional(p, "animation_id", lambda v: isinstance(v, str), "a string")
    _optional(p, "matched_intent", lambda v: isinstance(v, str), "a string")
    _require(p, "score", lambda v: _is_number(v) and 0.0 <= v <= 1.0, "a number in [0,1]")


def _validate_animation_frame(p: Mapping[str, Any]) -> None:
    _require(p, "plan_id", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    _require(p, "frame_index", lambda v: _is_int(v) and v >= 0, "a non-negative integer")
    _require(p, "timestamp_ms", _is_int, "an integer")


def _validate_animation_complete(p: Mapping[str, Any]) -> None:
    _require(p, "plan_id", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    _require(p, "aborted", lambda v: isinstance(v, bool), "a boolean")


def _validate_inject_event(p: Mapping[str, Any]) -> None:
    event = _require(p, "event", lambda v: isinstance(v, dict), "an object")
    _require(event, "kind", lambda v: v in _EVENT_KINDS, "a known event kind")


def _validate_latency_record(p: Mapping[str, Any]) -> None:
    _require(p, "stage", lambda v: v in _STAGES, "a known stage")
    start = _require(p, "start_ms", _is_int, "an integer")
    end = _require(p, "end_ms", _is_int, "an integer")
    if end < start:
        raise SchemaViolation("end_ms must not precede start_ms")
    _require(p, "turn_index", lambda v: _is_int(v) and v >= 0, "a non-negative integer")


def _validate_error(p: Mapping[str, Any]) -> None:
    _require(p, "code", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    _require(p, "message", lambda v: isinstance(v, str), "a string")


def _validate_kb_reload(p: Mapping[str, Any]) -> None:
    _optional(p, "path", lambda v: isinstance(v, str), "a string")


def _validate_config_get(p: Mapping[str, Any]) -> None:
    _optional(p, "key", lambda v: isinstance(v, str), "a string")


def _validate_config_set(p: Mapping[str, Any]) -> None:
    _require(p, "key", lambda v: isinstance(v, str) and v != "", "a non-empty string")
    if "value" not in p:
        raise SchemaViolation("missing field 'value'")


def _validate_session_open(p: Mapping[str, Any]) -> None:
    _optional(p, "condition", lambda v: v in _CONDITIONS, "a known condition")


def _validate_session_close(p: Mapping[str, Any]) -> None:
    _optional(p, "reason", lambda v: isinstance(v, str), "a string")


_VALIDATORS: dict[str, Callable[[Mapping[str, Any]], None]] = {
    "detection_frame": _validate_detection_frame,
    "asr_event": _validate_asr_event,
    "state_update": _validate_state_update,
    "start_listening": _validate_start_listening,
    "utterance_final": _validate_utterance_final,
    "response_selected": _validate_response_selected,
    "animation_frame": _validate_animation_frame,
    "animation_complete": _validate_animation_complete,
    "inject_event": _validate_inject_event,
    "latency_record": _validate_latency_record,
    "error": _validate_error,
    "kb_reload": _validate_kb_reload,
    "config_get": _validate_config_get,
    "config_set": _validate_config_set,
    "session_open": _validate_session_open,
    "session_close": _validate_session_close,
}


def validate_envelope(env: Envelope) -> None:
    if env.type not in ENVELOPE_TYPES:
        raise UnknownType(f"unknown type {env.type!r}")
    if not isinstance(env.session, str) or not env.session:
        raise SchemaViolation("session must be a non-empty string")
    if not _is_int(env.ts_ms):
        raise SchemaViolation("ts_ms must be an integer")
    if not _is_int(env.seq) or env.seq < 0:
        raise SchemaViolation("seq must be a non-negative integer")
    if not isinstance(env.payload, Mapping):
        raise SchemaViolation("payload must be an object")
    _VALIDATORS[env.type](env.payload)


def decode(data: bytes | str) -> Envelope:
    """Parse one envelope line; raise a typed ProtocolError on any defect."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedMessage(f"not utf-8: {exc}") from exc
    else:
        text = data
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, RecursionError, ValueError) as exc:
        raise MalformedMessage(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("envelope must be a JSON object")

    for field, desc in (("type", "string"), ("session", "string")):
        if field not in doc:
            raise SchemaViolation(f"missing envelope field {field!r}")
        if not isinstance(doc[field], str):
            raise SchemaViolation(f"envelope field {field!r} must be a string")
    for field in ("ts_ms", "seq"):
        if field not in doc:
            raise SchemaViolation(f"missing envelope field {field!r}")
        if not _is_int(doc[field]):
            raise SchemaViolation(f"envelope field {field!r} must be an integer")
    payload = doc.get("payload")
    if payload is None or not isinstance(payload, dict):
        raise SchemaViolation("missing or invalid envelope field 'payload'")

    env = Envelope(
        type=doc["type"],
        session=doc["session"],
        ts_ms=doc["ts_ms"],
        seq=doc["seq"],
        payload=payload,
    )
    validate_envelope(env)
    return env


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode(env: Envelope) -> bytes:
    """Canonical newline-terminated byte form of a valid envelope."""
    validate_envelope(env)
    doc = {
        "type": env.type,
        "session": env.session,
        "ts_ms": env.ts_ms,
        "seq": env.seq,
        "payload": env.payload,
    }
    return (canonical_json(doc) + "\n").encode("utf-8")


# --- domain <-> wire helpers --------------------------------------------------


def state_update_payload(update: StateUpdate) -> dict[str, Any]:
    return {
        "state": update.state.value,
        "indicator": {
            "background": update.indicator.background.value,
            "icon": update.indicator.icon.value,
        },
        "people_count": update.people_count,
    }


def response_to_wire(response: DialogResponse) -> dict[str, Any]:
    return {
        "source": response.source.value,
        "text": response.text,
        "animation_id": response.animation_id,
        "matched_intent": response.matched_intent,
        "score": response.score,
    }


def response_from_wire(payload: Mapping[str, Any]) -> DialogResponse:
    try:
        return DialogResponse(
            source=ResponseSource(payload["source"]),
            text=payload["text"],
            animation_id=payload.get("animation_id"),
            matched_intent=payload.get("matched_intent"),
            score=payload.get("score", 0.0),
        )
    except (KeyError, ValueError) as exc:
        raise SchemaViolation(f"invalid response object: {exc}") from exc


def event_from_wire(event: Mapping[str, Any], ts_ms: int) -> AgentEvent:
    """Build a core event from an inject_event payload body."""
    kind = event.get("kind")
    try:
        if kind == "user_entered":
            return UserEntered(ts_ms, event.get("people_count", 1))
        if kind == "user_left":
            return UserLeft(ts_ms, event.get("people_count", 0))
        if kind == "utterance_final":
            return UtteranceFinal(ts_ms, event["text"], event.get("people_count", 1))
        if kind == "response_ready":
            return ResponseReady(ts_ms, response_from_wire(event["response"]))
        if kind == "animation_complete":
            return AnimationComplete(ts_ms, bool(event.get("aborted", False)))
        if kind == "tick":
            return Tick(ts_ms)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"invalid {kind} event: {exc}") from exc
    raise SchemaViolation(f"unknown event kind {kind!r}")


def asr_event_from_wire(payload: Mapping[str, Any]) -> AsrEvent:
    kind = AsrKind(payload["kind"])
    if kind is AsrKind.PARTIAL:
        return AsrEvent.partial(payload["timestamp_ms"], payload["text"])
    return AsrEvent.silence(payload["timestamp_ms"])
