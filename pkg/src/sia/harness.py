"""Deterministic scenario engine and replay CLI.

A scenario scripts one visitor session as timed directives: a bounding
box appearing in the camera view, disappearing again, speaking for a
while, or just waiting. Running a scenario drives the full stack —
synthesized 30 fps detection frames, recognizer partials every 250 ms
while speaking, the mock dialog/synthesis adapters — under the virtual
clock and logs a transcript of everything observable. The same inputs
always produce byte-identical transcripts, which makes stored golden
transcripts an exact regression check.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

from sia.adapters import MockLLMAdapter, MockTtsAdapter
from sia.animation import AssetRegistry, ExperimentCondition
from sia.clock import VirtualClock
from sia.config import ServerConfig
from sia.dialog import KnowledgeBase, load_kb
from sia.latency import LatencyStore, Stage
from sia.presence import BoundingBox, DetectionFrame
from sia.protocol import canonical_json
from sia.session import SessionRuntime
from sia.speechio import AsrEvent

PARTIAL_CADENCE_MS = 250


class HarnessError(Exception):
    pass


class ScenarioInvalid(HarnessError):
    pass


class DivergenceFromGolden(HarnessError):
    pass


# --- scenario ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Appear:
    box: BoundingBox


@dataclass(frozen=True, slots=True)
class Disappear:
    pass


@dataclass(frozen=True, slots=True)
class Say:
    text: str
    speaking_duration_ms: int


@dataclass(frozen=True, slots=True)
class Wait:
    pass


Directive = Union[Appear, Disappear, Say, Wait]


@dataclass(frozen=True, slots=True)
class Step:
    at_ms: int
    directive: Directive


@dataclass(frozen=True, slots=True)
class Scenario:
    name: str
    seed: int
    steps: tuple[Step, ...]

    def validate(self) -> None:
        last = 0
        visible = 0
        for i, step in enumerate(self.steps):
            if step.at_ms < last:
                raise ScenarioInvalid(f"step {i}: at_ms decreases ({step.at_ms} < {last})")
            last = step.at_ms
            d = step.directive
            if isinstance(d, Appear):
                d.box.validate()
                visible += 1
            elif isinstance(d, Disappear):
                if visible == 0:
                    raise ScenarioInvalid(f"step {i}: disappear with nobody visible")
                visible -= 1
            elif isinstance(d, Say):
                if visible == 0:
                    raise ScenarioInvalid(f"step {i}: say while no box is present")
                if not d.text.split():
                    raise ScenarioInvalid(f"step {i}: say text is empty")
                if d.speaking_duration_ms <= 0:
                    raise ScenarioInvalid(f"step {i}: speaking_duration_ms must be positive")

    def end_ms(self) -> int:
        return self.steps[-1].at_ms if self.steps else 0


def load_scenario(path: str | Path) -> Scenario:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioInvalid("scenario must be a JSON object")
    steps = []
    for i, raw in enumerate(doc.get("steps", [])):
        kind = raw.get("kind")
        at_ms = raw.get("at_ms")
        if not isinstance(at_ms, int) or at_ms < 0:
            raise ScenarioInvalid(f"step {i}: at_ms must be a non-negative integer")
        if kind == "appear":
            box = raw.get("box", {})
            directive: Directive = Appear(
                BoundingBox(box.get("x"), box.get("y"), box.get("w"), box.get("h"))
            )
        elif kind == "disappear":
            directive = Disappear()
        elif kind == "say":
            directive = Say(raw.get("text", ""), raw.get("speaking_duration_ms", 0))
        elif kind == "wait":
            directive = Wait()
        else:
            raise ScenarioInvalid(f"step {i}: unknown directive kind {kind!r}")
        steps.append(Step(at_ms, directive))
    scenario = Scenario(
        name=doc.get("name", "unnamed"),
        seed=doc.get("seed", 0),
        steps=tuple(steps),
    )
    scenario.validate()
    return scenario


def say_asr_events(at_ms: int, say: Say) -> list[AsrEvent]:
    """Recognizer stream for one spoken line.

    Cumulative partials every 250 ms starting one cadence in; partial k
    carries the first ceil(words*k/K) words, the last one the full line;
    a silence marker follows one cadence after the final partial.
    """
    k_total = max(1, say.speaking_duration_ms // PARTIAL_CADENCE_MS)
    words = say.text.split()
    events = []
    for k in range(1, k_total + 1):
        n_words = math.ceil(len(words) * k / k_total)
        text = " ".join(words[:n_words])
        events.append(AsrEvent.partial(at_ms + PARTIAL_CADENCE_MS * k, text))
    events.append(AsrEvent.silence(at_ms + PARTIAL_CADENCE_MS * (k_total + 1)))
    return events


# --- transcript ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TranscriptEntry:
    ts_ms: int
    kind: str
    detail: dict


class Transcript:
    """Ordered log of one scenario run; serializes to canonical JSON lines."""

    def __init__(self, entries: list[TranscriptEntry] | None = None) -> None:
        self.entries: list[TranscriptEntry] = entries or []

    def append(self, ts_ms: int, kind: str, detail: dict) -> None:
        self.entries.append(TranscriptEntry(ts_ms, kind, dict(detail)))

    def of_kind(self, kind: str) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(
            canonical_json({"ts_ms": e.ts_ms, "kind": e.kind, "detail": e.detail}) + "\n"
            for e in self.entries
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        entries = []
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            entries.append(TranscriptEntry(doc["ts_ms"], doc["kind"], doc["detail"]))
        return cls(entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Transcript) and self.entries == other.entries


def compare_to_golden(transcript: Transcript, golden_path: str | Path) -> None:
    """Raise :class:`DivergenceFromGolden` at the first differing line."""
    actual = transcript.to_jsonl().splitlines()
    expected = Path(golden_path).read_text(encoding="utf-8").splitlines()
    for i, (a, b) in enumerate(zip(actual, expected), start=1):
        if a != b:
            raise DivergenceFromGolden(
                f"line {i} differs\n  expected: {b}\n  actual:   {a}"
            )
    if len(actual) != len(expected):
        raise DivergenceFromGolden(
            f"length differs: expected {len(expected)} lines, got {len(actual)}"
        )


# --- run ----------------------------------------------------------------------

# Per-frame placeholders are not logged; the end_to_end latency record
# pins the first-frame instant, and everything else is in the log.
_UNLOGGED_KINDS = {"animation_frame"}


def run_scenario(
    scenario: Scenario,
    config: ServerConfig,
    kb: KnowledgeBase | None = None,
    registry: AssetRegistry | None = None,
    condition: ExperimentCondition | None = None,
    session_id: str = "sim",
) -> Transcript:
    """Replay one scenario against the full stack under the virtual clock."""
    scenario.validate()
    kb = kb if kb is not None else load_bundled_kb()
    registry = registry if registry is not None else load_bundled_registry()
    condition = condition or config.condition

    clock = VirtualClock()
    latency = LatencyStore()
    transcript = Transcript()

    def emit(kind: str, ts_ms: int, payload: dict) -> None:
        if kind not in _UNLOGGED_KINDS:
            transcript.append(ts_ms, kind, payload)

    runtime = SessionRuntime(
        session_id=session_id,
        config=config,
        scheduler=clock,
        kb=kb,
        registry=registry,
        llm=MockLLMAdapter(config.persona),
        tts=MockTtsAdapter(),
        latency=latency,
        emit=emit,
        condition=condition,
    )

    transcript.append(
        0,
        "session_open",
        {
            "session": session_id,
            "scenario": scenario.name,
            "seed": scenario.seed,
            "condition": condition.value,
        },
    )

    visible: list[BoundingBox] = []

    def make_appear(box: BoundingBox):
        return lambda: visible.append(box)

    def pop_box() -> None:
        if visible:
            visible.pop()

    def make_asr(event: AsrEvent):
        return lambda: runtime.handle_asr_event(event)

    for step in scenario.steps:
        if isinstance(step.directive, Appear):
            clock.call_at(step.at_ms, make_appear(step.directive.box))
        elif isinstance(step.directive, Disappear):
            clock.call_at(step.at_ms, pop_box)
        elif isinstance(step.directive, Say):
            for event in say_asr_events(step.at_ms, step.directive):
                clock.call_at(event.timestamp_ms, make_asr(event))

    def make_camera_frame(ts: int):
        def fire() -> None:
            runtime.handle_detection_frame(DetectionFrame(ts, tuple(visible)))

        return fire

    camera_end = scenario.end_ms() + config.settle_ms
    k = 0
    while True:
        ts = k * 1000 // config.camera_fps
        if ts > camera_end:
            break
        clock.call_at(ts, make_camera_frame(ts))
        k += 1

    clock.run_until_idle()
    runtime.close()
    transcript.append(clock.now_ms(), "session_close", {"reason": "scenario_end"})
    return transcript


# --- bundled data ---------------------------------------------------------------


def _data_text(name: str) -> str:
    return resources.files("sia").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_bundled_kb() -> KnowledgeBase:
    from sia.dialog import KBEntry

    raw = json.loads(_data_text("kb_museum.json"))
    return KnowledgeBase(
        [
            KBEntry(
                intent_id=item["intent_id"],
                training_phrases=tuple(item["training_phrases"]),
                answer_individual=item["answer_individual"],
                answer_group=item.get("answer_group"),
                animation_id=item.get("animation_id"),
            )
            for item in raw
        ]
    )


def load_bundled_registry() -> AssetRegistry:
    registry = AssetRegistry()
    from sia.animation import AnimationAsset

    for item in json.loads(_data_text("assets.json")):
        registry.register(
            AnimationAsset(item["animation_id"], item["duration_ms"], item.get("label", ""))
        )
    return registry


def load_bundled_scenario(name: str = "scenario_museum_visit.json") -> Scenario:
    return scenario_from_dict(json.loads(_data_text(name)))


def bundled_golden_text(name: str) -> str:
    return resources.files("sia").joinpath("data/golden").joinpath(name).read_text(
        encoding="utf-8"
    )


# --- CLI -----------------------------------------------------------------------


def _print_latency_report(transcript: Transcript) -> None:
    records = transcript.of_kind("latency_record")
    print(f"{'stage':<14}{'count':>6}{'mean':>10}{'p50':>8}{'p95':>8}{'max':>8}")
    for stage in Stage:
        durations = sorted(
            e.detail["end_ms"] - e.detail["start_ms"]
            for e in records
            if e.detail["stage"] == stage.value
        )
        if not durations:
            print(f"{stage.value:<14}{0:>6}{'-':>10}{'-':>8}{'-':>8}{'-':>8}")
            continue
        from sia.latency import nearest_rank

        mean = sum(durations) / len(durations)
        print(
            f"{stage.value:<14}{len(durations):>6}{mean:>10.1f}"
            f"{nearest_rank(durations, 50):>8}{nearest_rank(durations, 95):>8}{durations[-1]:>8}"
        )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sia-sim", description="Scenario replay harness")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and print/write its transcript")
    run.add_argument("scenario", help="scenario JSON file, or 'museum_visit' for the bundled one")
    run.add_argument("--condition", choices=[c.value for c in ExperimentCondition])
    run.add_argument("--golden", help="stored transcript to compare against")
    run.add_argument("--report", choices=["latency"], help="print a latency summary")
    run.add_argument("--config", help="server config JSON file")
    run.add_argument("--kb", help="knowledge base JSON file")
    run.add_argument("--assets", help="animation asset manifest JSON file")
    run.add_argument("--out", help="write the transcript to this file")
    args = parser.parse_args(argv)

    config = ServerConfig.load(args.config) if args.config else ServerConfig()
    if args.scenario == "museum_visit":
        scenario = load_bundled_scenario()
    else:
        scenario = load_scenario(args.scenario)
    kb = load_kb(args.kb) if args.kb else load_bundled_kb()
    registry = (
        AssetRegistry.from_manifest(args.assets) if args.assets else load_bundled_registry()
    )
    condition = ExperimentCondition(args.condition) if args.condition else None

    transcript = run_scenario(scenario, config, kb=kb, registry=registry, condition=condition)

    if args.out:
        Path(args.out).write_text(transcript.to_jsonl(), encoding="utf-8")
    else:
        sys.stdout.write(transcript.to_jsonl())

    if args.report == "latency":
        _print_latency_report(transcript)

    if args.golden:
        try:
            compare_to_golden(transcript, args.golden)
        except DivergenceFromGolden as exc:
            print(f"golden divergence: {exc}", file=sys.stderr)
            return 1
        print("transcript matches golden", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
