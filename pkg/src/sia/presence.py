"""Camera-based user management.

Detection frames (normalized bounding boxes at a nominal 30 fps) are
reduced to a debounced presence flag and people count. A box counts as
inside the interaction zone when it is large enough relative to the
image (near) or its midpoint sits low enough in the frame — the second
rule admits small, low-in-frame detections such as children standing
close. Presence and count only change after the raw signal has agreed
for a configurable number of consecutive frames, so single-frame
detector glitches never reach the agent.
"""

from __future__ import annotations

from dataclasses import dataclass

from sia.core import AgentEvent, UserEntered, UserLeft


class PresenceError(Exception):
    pass


class InvalidBox(PresenceError):
    """Bounding box outside the normalized [0,1] image."""


class StaleFrame(PresenceError):
    """Frame timestamp did not increase within the stream."""


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Normalized image coordinates, origin top-left, y growing downward."""

    x: float
    y: float
    w: float
    h: float

    def validate(self) -> None:
        if not (
            self.x >= 0.0
            and self.y >= 0.0
            and self.w > 0.0
            and self.h > 0.0
            and self.x + self.w <= 1.0
            and self.y + self.h <= 1.0
        ):
            raise InvalidBox(f"box out of bounds: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def midpoint_y(self) -> float:
        return self.y + self.h / 2.0


@dataclass(frozen=True, slots=True)
class DetectionFrame:
    timestamp_ms: int
    boxes: tuple[BoundingBox, ...]


@dataclass(frozen=True, slots=True)
class ZoneConfig:
    """Interaction-zone thresholds and the debounce window.

    Defaults (overridable via config): 5% of the image area, midpoint at
    half frame height, 10 consecutive frames (~333 ms at 30 fps).
    """

    min_area_ratio: float = 0.05
    min_midpoint_height: float = 0.5
    debounce_frames: int = 10

    def __post_init__(self) -> None:
        if not 0.0 < self.min_area_ratio < 1.0:
            raise ValueError(f"min_area_ratio must be in (0,1): {self.min_area_ratio}")
        if not 0.0 < self.min_midpoint_height < 1.0:
            raise ValueError(
                f"min_midpoint_height must be in (0,1): {self.min_midpoint_height}"
            )
        if self.debounce_frames < 1:
            raise ValueError(f"debounce_frames must be >= 1: {self.debounce_frames}")


@dataclass(frozen=True, slots=True)
class PresenceEstimate:
    users_in_zone: int
    present: bool
    stable_since_ms: int


def classify_box(box: BoundingBox, config: ZoneConfig) -> bool:
    """True when the box is inside the interaction zone.

    In zone iff area ratio >= min_area_ratio OR midpoint_y >=
    min_midpoint_height (larger midpoint_y means lower in the frame,
    i.e. closer to the camera). Raises :class:`InvalidBox` for boxes
    violating the normalized-coordinate invariants.
    """
    box.validate()
    return box.area >= config.min_area_ratio or box.midpoint_y >= config.min_midpoint_height


def count_people(frame: DetectionFrame, config: ZoneConfig) -> int:
    """Raw (pre-debounce) number of in-zone boxes in one frame."""
    return sum(1 for box in frame.boxes if classify_box(box, config))


class PresenceTracker:
    """Debounced presence state for one camera stream. Single writer.

    One consistency counter gates the presence flip; a second,
    value-keyed counter gates count changes while presence is stable,
    so count flicker (1,2,1,2,...) never propagates.
    """

    def __init__(self) -> None:
        self.present = False
        self.count = 0
        self.stable_since_ms = 0
        self._last_ts: int | None = None
        self._flip_streak = 0
        self._count_value: int | None = None
        self._count_streak = 0

    def estimate(self) -> PresenceEstimate:
        return PresenceEstimate(
            users_in_zone=self.count,
            present=self.present,
            stable_since_ms=self.stable_since_ms,
        )

    def update(
        self, frame: DetectionFrame, config: ZoneConfig
    ) -> tuple[PresenceEstimate, list[AgentEvent]]:
        """Fold one frame into the tracker; emit entered/left flips.

        Raises :class:`StaleFrame` on a non-increasing timestamp and
        propagates :class:`InvalidBox` before any state is touched.
        """
        if self._last_ts is not None and frame.timestamp_ms <= self._last_ts:
            raise StaleFrame(
                f"frame at {frame.timestamp_ms}ms after {self._last_ts}ms"
            )
        raw = count_people(frame, config)
        self._last_ts = frame.timestamp_ms

        events: list[AgentEvent] = []
        raw_present = raw > 0

        if raw_present != self.present:
            # Candidate flip; raw frames disagreeing with the debounced
            # status all agree with each other (boolean), so one counter
            # suffices. Any count-change streak is abandoned.
            self._flip_streak += 1
            self._count_value = None
            self._count_streak = 0
            if self._flip_streak >= config.debounce_frames:
                self.present = raw_present
                self.count = raw if raw_present else 0
                self.stable_since_ms = frame.timestamp_ms
                self._flip_streak = 0
                if self.present:
                    events.append(UserEntered(frame.timestamp_ms, self.count))
                else:
                    events.append(UserLeft(frame.timestamp_ms, 0))
        else:
            self._flip_streak = 0
            if self.present and raw != self.count:
                if raw == self._count_value:
                    self._count_streak += 1
                else:
                    self._count_value = raw
                    self._count_streak = 1
                if self._count_streak >= config.debounce_frames:
                    self.count = raw
                    self.stable_since_ms = frame.timestamp_ms
                    self._count_value = None
                    self._count_streak = 0
            else:
                self._count_value = None
                self._count_streak = 0

        return self.estimate(), events


def update_presence(
    tracker: PresenceTracker, frame: DetectionFrame, config: ZoneConfig
) -> tuple[PresenceTracker, PresenceEstimate, list[AgentEvent]]:
    """Functional-shaped wrapper over :meth:`PresenceTracker.update`."""
    estimate, events = tracker.update(frame, config)
    return tracker, estimate, events
