"""Per-stage latency instrumentation.

Each conversational turn is timed in stages: the endpointing wait,
dialog routing, speech synthesis, animation startup, and the end-to-end
span from the finalized utterance to the first animation frame of the
reply. Reports use nearest-rank percentiles.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable


class Stage(str, Enum):
    ASR_ENDPOINT = "asr_endpoint"
    ROUTING = "routing"
    TTS = "tts"
    ANIMATION = "animation"
    END_TO_END = "end_to_end"


@dataclass(frozen=True, slots=True)
class LatencyRecord:
    stage: Stage
    start_ms: int
    end_ms: int
    session: str
    turn_index: int

    def __post_init__(self) -> None:
        if self.end_ms < self.start_ms:
            raise ValueError(f"end_ms {self.end_ms} before start_ms {self.start_ms}")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


class LatencyStore:
    """Append-only record store, safe for concurrent writers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._records: list[LatencyRecord] = []

    def append(self, record: LatencyRecord) -> None:
        with self._lock:
            self._records.append(record)

    def records(self) -> list[LatencyRecord]:
        with self._lock:
            return list(self._records)


@dataclass(frozen=True, slots=True)
class LatencySummary:
    count: int
    mean: float | None
    p50: int | None
    p95: int | None
    max: int | None

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "p50": self.p50,
            "p95": self.p95,
            "max": self.max,
        }


def nearest_rank(sorted_values: list[int], percentile: float) -> int:
    """Nearest-rank percentile over an ascending list (1-based rank)."""
    rank = max(1, math.ceil(percentile / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def latency_report(
    records: Iterable[LatencyRecord], stage: Stage | None = None
) -> LatencySummary:
    """Summarize durations, optionally filtered to one stage."""
    durations = sorted(
        r.duration_ms for r in records if stage is None or r.stage is stage
    )
    if not durations:
        return LatencySummary(count=0, mean=None, p50=None, p95=None, max=None)
    return LatencySummary(
        count=len(durations),
        mean=sum(durations) / len(durations),
        p50=nearest_rank(durations, 50),
        p95=nearest_rank(durations, 95),
        max=durations[-1],
    )
