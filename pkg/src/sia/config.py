"""Server configuration.

One flat record covering every tunable the modules expose. Values load
from a JSON object file, every key can be read/written at runtime via
the admin surface, and the per-module views (zone, endpoint) are built
on demand so live updates take effect on the next frame/utterance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from sia.animation import ExperimentCondition
from sia.presence import ZoneConfig
from sia.speechio import EndpointConfig

DEFAULT_PERSONA = (
    "You are a virtual museum guide with a human-like on-screen body. "
    "Answer briefly, stay friendly, and never claim abilities beyond "
    "speaking, gesturing, and showing facial expressions."
)
DEFAULT_APOLOGY = "I am sorry, I could not come up with an answer in time. Could you try again?"


@dataclass
class ServerConfig:
    # interaction zone
    min_area_ratio: float = 0.05
    min_midpoint_height: float = 0.5
    debounce_frames: int = 10
    # endpointing
    silence_ms: int = 700
    max_utterance_ms: int = 30_000
    # dialog
    kb_threshold: float = 0.7
    persona: str = DEFAULT_PERSONA
    apology_text: str = DEFAULT_APOLOGY
    # nonverbal behavior
    condition: ExperimentCondition = ExperimentCondition.HYBRID
    fps: int = 30
    neutral_gesture_id: str = "idle_talk"
    # orchestration
    thinking_timeout_ms: int = 10_000
    greet_on_enter: bool = False
    greeting_utterance: str = "hello"
    routing_latency_ms: int = 0
    tts_latency_ms: int = 0
    # simulation
    camera_fps: int = 30
    settle_ms: int = 15_000

    def zone_config(self) -> ZoneConfig:
        return ZoneConfig(
            min_area_ratio=self.min_area_ratio,
            min_midpoint_height=self.min_midpoint_height,
            debounce_frames=self.debounce_frames,
        )

    def endpoint_config(self) -> EndpointConfig:
        return EndpointConfig(
            silence_ms=self.silence_ms, max_utterance_ms=self.max_utterance_ms
        )

    def to_dict(self) -> dict[str, Any]:
        doc = dataclasses.asdict(self)
        doc["condition"] = self.condition.value
        return doc

    def get(self, key: str) -> Any:
        if key not in _FIELDS:
            raise KeyError(f"unknown config key {key!r}")
        value = getattr(self, key)
        return value.value if isinstance(value, ExperimentCondition) else value

    def set(self, key: str, value: Any) -> None:
        """Set one key, validating via the module-level config types."""
        if key not in _FIELDS:
            raise KeyError(f"unknown config key {key!r}")
        if key == "condition":
            value = ExperimentCondition(value)
        else:
            _check_scalar(key, value)
        old = getattr(self, key)
        setattr(self, key, value)
        try:
            self.zone_config()
            self.endpoint_config()
        except Exception:
            setattr(self, key, old)
            raise

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ServerConfig":
        unknown = set(doc) - set(_FIELDS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls()
        for key, value in doc.items():
            config.set(key, value)
        return config

    @classmethod
    def load(cls, path: str | Path) -> "ServerConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config file must be a JSON object")
        return cls.from_dict(doc)


_FIELDS = {f.name: f for f in dataclasses.fields(ServerConfig)}

_INT_KEYS = {
    "debounce_frames",
    "silence_ms",
    "max_utterance_ms",
    "fps",
    "thinking_timeout_ms",
    "routing_latency_ms",
    "tts_latency_ms",
    "camera_fps",
    "settle_ms",
}
_POSITIVE_KEYS = {"fps", "camera_fps"}


def _check_scalar(key: str, value: Any) -> None:
    if key in _INT_KEYS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValueError(f"{key} must be an integer")
        if value < 0 or (key in _POSITIVE_KEYS and value < 1):
            raise ValueError(f"{key} out of range: {value}")
    elif key == "kb_threshold":
        if not 0.0 < float(value) <= 1.0:
            raise ValueError(f"kb_threshold must be in (0, 1]: {value}")
    elif key == "greet_on_enter":
        if not isinstance(value, bool):
            raise ValueError("greet_on_enter must be a boolean")
    elif key in ("persona", "apology_text", "greeting_utterance", "neutral_gesture_id"):
        if not isinstance(value, str):
            raise ValueError(f"{key} must be a string")
