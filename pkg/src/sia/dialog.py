"""Hybrid conversational routing.

Utterances are matched against a predefined knowledge base of intents
(idf-weighted cosine similarity over normalized tokens). When no intent
clears the confidence threshold, the utterance falls back to a
generative language-model adapter. Answers carry an optional gesture
animation id and may have a separate phrasing for groups.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

# Non-equal token multisets never score a perfect 1.0, even when their
# tf vectors are parallel (e.g. "hello hello" vs "hello").
NEAR_MATCH_CAP = 1.0 - 1e-9

DEFAULT_THRESHOLD = 0.7


class DialogError(Exception):
    pass


class EmptyUtterance(DialogError):
    """Utterance normalized to zero tokens."""


class LLMUnavailable(DialogError):
    """The fallback language-model adapter failed; caller substitutes an apology."""


class LLMAdapter(Protocol):
    def complete(self, utterance: str) -> str: ...


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, strip non-alphanumeric characters, split on whitespace.

    Unicode-aware: any character for which ``str.isalnum()`` is false is
    treated as a separator. This is the single tokenization used by the
    matcher, its oracles, and the mock LLM.
    """
    lowered = text.lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    return cleaned.split()


def normalize_text(text: str) -> str:
    """Normalized tokens re-joined with single spaces."""
    return " ".join(normalize_tokens(text))


class ResponseSource(str, Enum):
    KB = "kb"
    LLM = "llm"


@dataclass(frozen=True, slots=True)
class KBEntry:
    """One intent: training phrases plus canned answers.

    ``answer_group`` is the optional phrasing used when more than one
    person is in the interaction zone; ``animation_id`` names the
    pre-recorded gesture asset associated with the answer, if any.
    """

    intent_id: str
    training_phrases: tuple[str, ...]
    answer_individual: str
    answer_group: str | None = None
    animation_id: str | None = None

    def __post_init__(self) -> None:
        if not self.intent_id:
            raise ValueError("intent_id must be non-empty")
        if not self.training_phrases:
            raise ValueError(f"intent {self.intent_id!r}: training_phrases must be non-empty")
        if not self.answer_individual:
            raise ValueError(f"intent {self.intent_id!r}: answer_individual must be non-empty")


@dataclass(frozen=True, slots=True)
class DialogResponse:
    """A routed reply: where it came from, what to say, what to perform."""

    source: ResponseSource
    text: str
    animation_id: str | None = None
    matched_intent: str | None = None
    score: float = 0.0

    def __post_init__(self) -> None:
        if self.source is ResponseSource.LLM and self.animation_id is not None:
            raise ValueError("LLM responses never carry a gesture animation_id")
        if self.source is ResponseSource.KB and self.matched_intent is None:
            raise ValueError("KB responses must name their matched intent")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")


class KnowledgeBase:
    """Immutable intent store with precomputed idf weights.

    Documents for the idf table are the individual training phrases of
    all entries; idf(t) = 1 + ln(N / max(df(t), 1)), and tokens never
    seen in any phrase weigh as if df = 1. Reloading builds a fresh
    instance; an instance never mutates.
    """

    def __init__(self, entries: list[KBEntry] | tuple[KBEntry, ...]) -> None:
        self.entries: tuple[KBEntry, ...] = tuple(entries)
        seen: set[str] = set()
        for entry in self.entries:
            if entry.intent_id in seen:
                raise ValueError(f"duplicate intent_id {entry.intent_id!r}")
            seen.add(entry.intent_id)

        phrase_tokens: list[list[str]] = []
        for entry in self.entries:
            for phrase in entry.training_phrases:
                phrase_tokens.append(normalize_tokens(phrase))
        self._doc_count = len(phrase_tokens)

        df: Counter[str] = Counter()
        for tokens in phrase_tokens:
            df.update(set(tokens))
        n = max(self._doc_count, 1)
        self.idf_table: dict[str, float] = {
            token: 1.0 + math.log(n / count) for token, count in df.items()
        }
        self._default_idf = 1.0 + math.log(n)

        # Per-entry weighted phrase vectors, reused by every route() call.
        self._entry_vectors: dict[str, list[tuple[Counter[str], dict[str, float], float]]] = {}
        for entry in self.entries:
            vecs = []
            for phrase in entry.training_phrases:
                counts = Counter(normalize_tokens(phrase))
                vec = self._weigh(counts)
                vecs.append((counts, vec, _norm(vec)))
            self._entry_vectors[entry.intent_id] = vecs

    def idf(self, token: str) -> float:
        return self.idf_table.get(token, self._default_idf)

    def _weigh(self, counts: Counter[str]) -> dict[str, float]:
        return {token: count * self.idf(token) for token, count in counts.items()}

    def score(self, utterance: str, entry: KBEntry) -> float:
        counts = Counter(normalize_tokens(utterance))
        if not counts:
            raise EmptyUtterance(f"utterance {utterance!r} normalized to zero tokens")
        return self._score_counts(counts, self._weigh(counts), entry)

    def _score_counts(
        self, counts: Counter[str], vec: dict[str, float], entry: KBEntry
    ) -> float:
        norm = _norm(vec)
        best = 0.0
        for phrase_counts, phrase_vec, phrase_norm in self._entry_vectors[entry.intent_id]:
            if counts == phrase_counts:
                return 1.0
            if norm == 0.0 or phrase_norm == 0.0:
                continue
            dot = sum(w * phrase_vec[t] for t, w in vec.items() if t in phrase_vec)
            if dot <= 0.0:
                continue
            cos = dot / (norm * phrase_norm)
            best = max(best, min(cos, NEAR_MATCH_CAP))
        return best


def _norm(vec: dict[str, float]) -> float:
    return math.sqrt(sum(w * w for w in vec.values()))


def score_intent(utterance: str, entry: KBEntry, kb: KnowledgeBase) -> float:
    """Confidence in [0, 1] that ``utterance`` means ``entry``'s intent.

    The maximum over the entry's training phrases of the idf-weighted
    cosine similarity; exactly 1.0 iff the normalized token multisets of
    the utterance and some phrase are equal.
    """
    return kb.score(utterance, entry)


def adapt_for_group(entry: KBEntry, people_count: int) -> str:
    """Pick the individual or group phrasing of an answer."""
    if people_count < 1:
        raise ValueError("people_count must be >= 1")
    if people_count >= 2 and entry.answer_group:
        return entry.answer_group
    return entry.answer_individual


def route(
    utterance: str,
    kb: KnowledgeBase,
    people_count: int,
    threshold: float,
    llm: LLMAdapter,
) -> DialogResponse:
    """Route an utterance to the best KB intent or to the LLM fallback.

    The best entry is the score argmax (ties broken by lexicographically
    smallest intent_id). At or above ``threshold`` the KB answer wins,
    adapted for groups and carrying the entry's animation_id; below it
    the utterance goes to the language-model adapter. Adapter failures
    raise :class:`LLMUnavailable`.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1]: {threshold}")
    if people_count < 1:
        raise ValueError("people_count must be >= 1")

    counts = Counter(normalize_tokens(utterance))
    if not counts:
        raise EmptyUtterance(f"utterance {utterance!r} normalized to zero tokens")

    best_entry: KBEntry | None = None
    best_score = 0.0
    vec = None
    if kb.entries:
        vec = kb._weigh(counts)
    for entry in kb.entries:
        s = kb._score_counts(counts, vec, entry)
        if best_entry is None or s > best_score or (
            s == best_score and entry.intent_id < best_entry.intent_id
        ):
            best_entry = entry
            best_score = s

    if best_entry is not None and best_score >= threshold:
        return DialogResponse(
            source=ResponseSource.KB,
            text=adapt_for_group(best_entry, people_count),
            animation_id=best_entry.animation_id,
            matched_intent=best_entry.intent_id,
            score=best_score,
        )

    try:
        text = llm.complete(utterance)
    except Exception as exc:
        raise LLMUnavailable(str(exc)) from exc
    return DialogResponse(source=ResponseSource.LLM, text=text, score=best_score)


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a knowledge base from a JSON file (a list of entry objects)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: knowledge base file must be a JSON list of entries")
    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ValueError(f"{path}: entry {i} is not an object")
        try:
            entries.append(
                KBEntry(
                    intent_id=item["intent_id"],
                    training_phrases=tuple(item["training_phrases"]),
                    answer_individual=item["answer_individual"],
                    answer_group=item.get("answer_group"),
                    animation_id=item.get("animation_id"),
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}: entry {i} missing field {exc}") from exc
    return KnowledgeBase(entries)
