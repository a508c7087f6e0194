"""Independent reference implementations the test suite checks against.

Each oracle restates a module's contract with a deliberately different
structure (windows instead of streak counters, explicit candidate scans
instead of incremental state) so agreement is meaningful.
"""

from __future__ import annotations

import math
from collections import Counter


# --- interaction zone ----------------------------------------------------------


def zone_oracle(x: float, y: float, w: float, h: float,
                min_area_ratio: float, min_midpoint_height: float) -> bool:
    return (w * h >= min_area_ratio) or (y + h / 2.0 >= min_midpoint_height)


# --- presence debounce -----------------------------------------------------------


def presence_oracle(raw_counts: list[int], debounce: int):
    """Replay raw in-zone counts with explicit window checks.

    Returns (events, presents, counts): events are (index, kind, count)
    with kind "enter"/"leave"; presents/counts hold the debounced state
    after each frame.
    """
    present = False
    count = 0
    events: list[tuple[int, str, int]] = []
    presents: list[bool] = []
    counts: list[int] = []
    for i, raw in enumerate(raw_counts):
        window = raw_counts[i - debounce + 1 : i + 1] if i + 1 >= debounce else []
        if (raw > 0) != present:
            if len(window) == debounce and all((r > 0) != present for r in window):
                present = raw > 0
                count = raw if present else 0
                events.append((i, "enter" if present else "leave", count))
        elif present and raw != count and raw > 0:
            if len(window) == debounce and all(r == raw for r in window):
                count = raw
        presents.append(present)
        counts.append(count)
    return events, presents, counts


# --- intent scoring ---------------------------------------------------------------


def tokenize_oracle(text: str) -> list[str]:
    out: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        else:
            if current:
                out.append("".join(current))
                current = []
    if current:
        out.append("".join(current))
    return out


def score_oracle(utterance: str, entry_phrases: list[str], all_phrases: list[str]) -> float:
    """idf-weighted cosine, max over phrases, 1.0 iff equal multisets."""
    docs = [tokenize_oracle(p) for p in all_phrases]
    n = max(len(docs), 1)
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))

    def idf(token: str) -> float:
        return 1.0 + math.log(n / max(df.get(token, 1), 1))

    def weigh(tokens: list[str]) -> dict[str, float]:
        return {t: c * idf(t) for t, c in Counter(tokens).items()}

    utokens = tokenize_oracle(utterance)
    ucounts = Counter(utokens)
    uvec = weigh(utokens)
    unorm = math.sqrt(sum(w * w for w in uvec.values()))

    best = 0.0
    for phrase in entry_phrases:
        ptokens = tokenize_oracle(phrase)
        if Counter(ptokens) == ucounts:
            return 1.0
        pvec = weigh(ptokens)
        pnorm = math.sqrt(sum(w * w for w in pvec.values()))
        dot = sum(w * pvec[t] for t, w in uvec.items() if t in pvec)
        if unorm == 0.0 or pnorm == 0.0 or dot <= 0.0:
            continue
        best = max(best, min(dot / (unorm * pnorm), 1.0 - 1e-9))
    return best


def route_oracle(utterance: str, entries, threshold: float):
    """(source, intent_id | None) by brute-force argmax with id tie-break."""
    all_phrases = [p for e in entries for p in e.training_phrases]
    best_id = None
    best_score = 0.0
    for entry in sorted(entries, key=lambda e: e.intent_id):
        s = score_oracle(utterance, list(entry.training_phrases), all_phrases)
        if best_id is None or s > best_score:
            best_id = entry.intent_id
            best_score = s
    if best_id is not None and best_score >= threshold:
        return "kb", best_id
    return "llm", None


# --- endpointing ------------------------------------------------------------------


def endpoint_oracle(events, silence_ms: int, max_utterance_ms: int):
    """(text, finalized_at_ms) or None, by explicit candidate scan."""
    partials = [(e.timestamp_ms, e.text) for e in events if e.kind.value == "partial"]
    if not partials:
        return None
    times = [ts for ts, _ in partials]
    candidate = None
    for ts in times:
        blocked = any(ts < t < ts + silence_ms for t in times)
        if not blocked:
            candidate = ts + silence_ms
            break
    if candidate is None:
        candidate = times[-1] + silence_ms
    finalized_at = min(candidate, times[0] + max_utterance_ms)
    text = None
    for ts, t in partials:
        if ts < finalized_at:
            text = t
    return text, finalized_at


# --- latency ------------------------------------------------------------------------


def nearest_rank_oracle(values: list[int], percentile: float) -> int:
    ordered = sorted(values)
    rank = math.ceil(percentile / 100.0 * len(ordered))
    return ordered[max(rank, 1) - 1]
