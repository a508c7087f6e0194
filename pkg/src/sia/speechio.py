"""Speech-side orchestration: utterance endpointing and TTS handles.

The recognizer adapter delivers cumulative partial hypotheses (each
partial replaces the previous one — they are never concatenated). An
utterance is final once a configurable silence window (default 700 ms)
elapses after the last partial; the finalization instant is exactly
last_partial_ts + silence_ms. A maximum-duration guard force-finalizes
pathological never-ending streams.

Synthesis goes through a ``TtsAdapter``; the deterministic mock used in
tests and simulation derives the audio duration from text length.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol


class SpeechError(Exception):
    pass


class OutOfOrderEvent(SpeechError):
    """Recognizer event timestamp regressed within one stream."""


class EmptyText(SpeechError):
    """Synthesis requested for empty text."""


class TtsFailure(SpeechError):
    """The synthesis adapter failed; the turn is abandoned."""


class AsrKind(str, Enum):
    PARTIAL = "partial"
    SILENCE = "silence"


@dataclass(frozen=True, slots=True)
class AsrEvent:
    timestamp_ms: int
    kind: AsrKind
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is AsrKind.PARTIAL and not self.text:
            raise ValueError("partial events must carry non-empty text")

    @classmethod
    def partial(cls, timestamp_ms: int, text: str) -> "AsrEvent":
        return cls(timestamp_ms, AsrKind.PARTIAL, text)

    @classmethod
    def silence(cls, timestamp_ms: int) -> "AsrEvent":
        return cls(timestamp_ms, AsrKind.SILENCE)


@dataclass(frozen=True, slots=True)
class EndpointConfig:
    silence_ms: int = 700
    max_utterance_ms: int = 30_000

    def __post_init__(self) -> None:
        if self.silence_ms <= 0:
            raise ValueError(f"silence_ms must be positive: {self.silence_ms}")
        if self.max_utterance_ms <= 0:
            raise ValueError(f"max_utterance_ms must be positive: {self.max_utterance_ms}")


@dataclass(frozen=True, slots=True)
class FinalUtterance:
    text: str
    finalized_at_ms: int


class UtteranceEndpointer:
    """Incremental endpointer for one listening period.

    Feed recognizer events as they arrive; the owner schedules a timer
    for :meth:`deadline_ms` and calls :meth:`on_deadline` when it fires.
    Feeding an event timestamped at or past the current deadline
    finalizes first (the silence window had already elapsed), so timer
    ties are order-independent.
    """

    def __init__(self, config: EndpointConfig) -> None:
        self.config = config
        self._last_ts: int | None = None
        self._first_partial_ts: int | None = None
        self._last_partial_ts: int | None = None
        self._text: str | None = None
        self._finalized = False

    @property
    def last_partial_ts(self) -> int | None:
        return self._last_partial_ts

    def deadline_ms(self) -> int | None:
        """Instant at which the current hypothesis becomes final, if any."""
        if self._finalized or self._last_partial_ts is None:
            return None
        return min(
            self._last_partial_ts + self.config.silence_ms,
            self._first_partial_ts + self.config.max_utterance_ms,
        )

    def feed(self, event: AsrEvent) -> FinalUtterance | None:
        if self._finalized:
            return None
        if self._last_ts is not None and event.timestamp_ms < self._last_ts:
            raise OutOfOrderEvent(
                f"asr event at {event.timestamp_ms}ms after {self._last_ts}ms"
            )
        self._last_ts = event.timestamp_ms

        deadline = self.deadline_ms()
        if deadline is not None and event.timestamp_ms >= deadline:
            return self._finalize(deadline)

        if event.kind is AsrKind.PARTIAL:
            if self._first_partial_ts is None:
                self._first_partial_ts = event.timestamp_ms
            self._last_partial_ts = event.timestamp_ms
            self._text = event.text
        return None

    def on_deadline(self, now_ms: int) -> FinalUtterance | None:
        deadline = self.deadline_ms()
        if deadline is None or now_ms < deadline:
            return None
        return self._finalize(deadline)

    def _finalize(self, at_ms: int) -> FinalUtterance:
        self._finalized = True
        assert self._text is not None
        return FinalUtterance(text=self._text, finalized_at_ms=at_ms)


def endpoint_utterance(
    events: Iterable[AsrEvent], config: EndpointConfig
) -> FinalUtterance | None:
    """Endpoint a complete recognizer stream.

    Returns the first finalization the stream implies (the end of the
    stream counts as unbounded silence), or None when the stream carried
    no partial at all.
    """
    ep = UtteranceEndpointer(config)
    for event in events:
        final = ep.feed(event)
        if final is not None:
            return final
    deadline = ep.deadline_ms()
    if deadline is None:
        return None
    return ep.on_deadline(deadline)


@dataclass(frozen=True, slots=True)
class SpeechHandle:
    """Synthesized speech: opaque audio id plus playback duration."""

    text: str
    audio_id: str
    duration_ms: int

    def __post_init__(self) -> None:
        if self.text and self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive for non-empty text")


class TtsAdapter(Protocol):
    def synthesize(self, text: str) -> SpeechHandle: ...


def synthesize(text: str, tts: TtsAdapter) -> SpeechHandle:
    """Synthesize ``text`` through the adapter.

    Raises :class:`EmptyText` for empty input and wraps any adapter
    failure in :class:`TtsFailure` so the orchestrator can abandon the
    turn without entering the talking state.
    """
    if not text:
        raise EmptyText("cannot synthesize empty text")
    try:
        return tts.synthesize(text)
    except SpeechError:
        raise
    except Exception as exc:
        raise TtsFailure(str(exc)) from exc


def deterministic_audio_id(text: str) -> str:
    return "tts-" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
