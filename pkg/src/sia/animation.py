"""Nonverbal-behavior planning and playback.

Pre-recorded gesture assets are opaque records (id, duration, label)
kept in a registry; generated facial animation is represented by a
face-frame stream flag. A performance plan combines the synthesized
speech with a gesture and/or face stream depending on the experiment
condition:

- hybrid: gesture by id when the response names one and it resolves,
  face stream always; unknown or absent ids degrade to face-only.
- mocap_only: never a face stream; falls back to a configured neutral
  talking gesture when the response has no usable id.
- generative_only: face stream only, never a gesture.

Streaming emits placeholder frames at a fixed rate for the plan's
duration and then delivers exactly one completion signal — the event
that sends the agent back to listening.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from sia.clock import Scheduler, Timer
from sia.core import AnimationComplete
from sia.dialog import DialogResponse
from sia.speechio import SpeechHandle

logger = logging.getLogger(__name__)


class AnimationError(Exception):
    pass


class DuplicateId(AnimationError):
    pass


class NotFound(AnimationError):
    pass


class ExperimentCondition(str, Enum):
    HYBRID = "hybrid"
    MOCAP_ONLY = "mocap_only"
    GENERATIVE_ONLY = "generative_only"


@dataclass(frozen=True, slots=True)
class AnimationAsset:
    animation_id: str
    duration_ms: int
    label: str = ""

    def __post_init__(self) -> None:
        if not self.animation_id:
            raise ValueError("animation_id must be non-empty")
        if self.duration_ms <= 0:
            raise ValueError(f"duration_ms must be positive: {self.duration_ms}")


class AssetRegistry:
    """Gesture assets keyed by unique id."""

    def __init__(self) -> None:
        self._assets: dict[str, AnimationAsset] = {}

    def __len__(self) -> int:
        return len(self._assets)

    def register(self, asset: AnimationAsset) -> None:
        if asset.animation_id in self._assets:
            raise DuplicateId(f"asset {asset.animation_id!r} already registered")
        self._assets[asset.animation_id] = asset

    def get(self, animation_id: str | None) -> AnimationAsset | None:
        if animation_id is None:
            return None
        return self._assets.get(animation_id)

    def lookup(self, animation_id: str) -> AnimationAsset:
        asset = self._assets.get(animation_id)
        if asset is None:
            raise NotFound(f"no asset {animation_id!r}")
        return asset

    @classmethod
    def from_manifest(cls, path: str | Path) -> "AssetRegistry":
        """Load a registry from a JSON manifest (list of asset objects)."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise ValueError(f"{path}: asset manifest must be a JSON list")
        registry = cls()
        for item in raw:
            registry.register(
                AnimationAsset(
                    animation_id=item["animation_id"],
                    duration_ms=item["duration_ms"],
                    label=item.get("label", ""),
                )
            )
        return registry


@dataclass(frozen=True, slots=True)
class PerformancePlan:
    """What the agent performs for one talking turn."""

    plan_id: str
    speech: SpeechHandle
    face_stream: bool
    gesture: str | None
    total_duration_ms: int


def plan_performance(
    response: DialogResponse,
    speech: SpeechHandle,
    condition: ExperimentCondition,
    registry: AssetRegistry,
    neutral_gesture_id: str | None = None,
    plan_id: str | None = None,
) -> PerformancePlan:
    """Build the performance plan for a routed response.

    Degrades, never fails: an unresolvable animation id logs a warning
    and falls back to the no-gesture path for the active condition. The
    plan lasts until both speech and gesture are done.
    """
    asset = registry.get(response.animation_id)
    if response.animation_id is not None and asset is None:
        logger.warning(
            "animation id %r not in registry; degrading to no-gesture path",
            response.animation_id,
        )

    if condition is ExperimentCondition.GENERATIVE_ONLY:
        face, gesture_asset = True, None
    elif condition is ExperimentCondition.MOCAP_ONLY:
        face = False
        gesture_asset = asset if asset is not None else registry.get(neutral_gesture_id)
        if gesture_asset is None and neutral_gesture_id is not None:
            logger.warning("neutral gesture %r not in registry", neutral_gesture_id)
    else:
        face, gesture_asset = True, asset

    total = speech.duration_ms
    if gesture_asset is not None:
        total = max(total, gesture_asset.duration_ms)

    return PerformancePlan(
        plan_id=plan_id or speech.audio_id,
        speech=speech,
        face_stream=face,
        gesture=gesture_asset.animation_id if gesture_asset else None,
        total_duration_ms=total,
    )


@dataclass(frozen=True, slots=True)
class AnimationFrame:
    plan_id: str
    frame_index: int
    timestamp_ms: int


def frame_count(total_duration_ms: int, fps: int) -> int:
    """Frames streamed for a plan: max(1, floor(duration * fps / 1000))."""
    return max(1, total_duration_ms * fps // 1000)


def frame_offsets(total_duration_ms: int, fps: int) -> list[int]:
    """Millisecond offsets of each frame from stream start."""
    return [k * 1000 // fps for k in range(frame_count(total_duration_ms, fps))]


class PerformanceStream:
    """Streams one plan's placeholder frames and signals completion.

    Runs on the owner's scheduler; frames go straight to ``on_frame``
    and exactly one :class:`AnimationComplete` (normal or aborted)
    reaches ``on_complete``, no matter how the stream ends.
    """

    def __init__(
        self,
        plan: PerformancePlan,
        scheduler: Scheduler,
        on_frame: Callable[[AnimationFrame], None],
        on_complete: Callable[[AnimationComplete], None],
        fps: int = 30,
    ) -> None:
        self.plan = plan
        self._scheduler = scheduler
        self._on_frame = on_frame
        self._on_complete = on_complete
        self._fps = fps
        self._timers: list[Timer] = []
        self._completed = False

    def start(self) -> None:
        start = self._scheduler.now_ms()
        for index, offset in enumerate(frame_offsets(self.plan.total_duration_ms, self._fps)):
            self._timers.append(
                self._scheduler.call_at(start + offset, self._make_frame(index, start + offset))
            )
        self._timers.append(
            self._scheduler.call_at(
                start + self.plan.total_duration_ms, lambda: self._complete(aborted=False)
            )
        )

    def _make_frame(self, index: int, at_ms: int) -> Callable[[], None]:
        def fire() -> None:
            self._on_frame(AnimationFrame(self.plan.plan_id, index, at_ms))

        return fire

    def abort(self) -> None:
        """Stop streaming; the completion signal still fires exactly once."""
        for timer in self._timers:
            timer.cancel()
        self._complete(aborted=True)

    @property
    def completed(self) -> bool:
        return self._completed

    def _complete(self, aborted: bool) -> None:
        if self._completed:
            return
        self._completed = True
        for timer in self._timers:
            timer.cancel()
        self._on_complete(AnimationComplete(self._scheduler.now_ms(), aborted=aborted))
