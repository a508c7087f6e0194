"""Deterministic mock adapters for the external AI services.

Real deployments plug recognizer, synthesizer, and language-model
clients in behind the same call shapes; the mocks here are pure
functions of their inputs so simulation runs replay byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

from sia.dialog import EmptyUtterance, normalize_text
from sia.speechio import SpeechHandle, deterministic_audio_id

MOCK_TTS_BASE_MS = 300
MOCK_TTS_PER_CHAR_MS = 60


def mock_llm(utterance: str, persona: str) -> str:
    """Reference fallback model: echoes the normalized utterance.

    The persona preamble is accepted (a real adapter prepends it to the
    prompt) but does not influence the mock's output.
    """
    normalized = normalize_text(utterance)
    if not normalized:
        raise EmptyUtterance(f"utterance {utterance!r} normalized to zero tokens")
    return "LLM:" + normalized


@dataclass
class MockLLMAdapter:
    persona: str = ""

    def complete(self, utterance: str) -> str:
        return mock_llm(utterance, self.persona)


@dataclass
class MockTtsAdapter:
    """Synthesis stub: duration grows linearly with text length.

    duration_ms = 300 + 60 * character_count, pinned so timings in
    golden transcripts are hand-checkable.
    """

    base_ms: int = MOCK_TTS_BASE_MS
    per_char_ms: int = MOCK_TTS_PER_CHAR_MS

    def synthesize(self, text: str) -> SpeechHandle:
        return SpeechHandle(
            text=text,
            audio_id=deterministic_audio_id(text),
            duration_ms=self.base_ms + self.per_char_ms * len(text),
        )
