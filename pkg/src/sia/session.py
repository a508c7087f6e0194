"""Per-session orchestration.

A ``SessionRuntime`` owns one agent session end to end: it folds
detection frames into the presence tracker, gates recognizer events on
the listening state, endpoints utterances, runs routing and synthesis
off the state machine's commands, schedules the talking performance,
and records per-stage latency. All entry points are synchronous and
must be called from the session's single writer (the gateway serializes
them through the session queue; the simulation harness drives them from
the virtual clock).

Turn pipeline and its latency stages::

    utterance_final      response routed     speech ready        first frame
         |-- routing --------->|---- tts -------->|--- animation ---->|
         |<-------------------- end_to_end ------------------------->|

``ResponseReady`` is applied only once both the routed text and its
synthesized speech exist, so a synthesis failure never puts the agent
into the talking state: the turn is dropped and the session recovers to
listening with a diagnostic.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Protocol

from sia.animation import (
    AnimationFrame,
    AssetRegistry,
    ExperimentCondition,
    PerformanceStream,
    plan_performance,
)
from sia.clock import Scheduler, Timer
from sia.config import ServerConfig
from sia.core import (
    Action,
    AgentEvent,
    AgentState,
    AnimationComplete,
    CommandMessage,
    ResponseReady,
    SessionState,
    StateUpdate,
    UserEntered,
    UtteranceFinal,
    apply_event,
    indicator_for,
)
from sia.dialog import (
    DialogResponse,
    EmptyUtterance,
    KnowledgeBase,
    LLMUnavailable,
    ResponseSource,
    normalize_tokens,
    route,
)
from sia.latency import LatencyRecord, LatencyStore, Stage
from sia.presence import DetectionFrame, PresenceTracker
from sia.protocol import response_to_wire, state_update_payload
from sia.speechio import (
    AsrEvent,
    SpeechHandle,
    TtsAdapter,
    TtsFailure,
    UtteranceEndpointer,
    synthesize,
)

logger = logging.getLogger(__name__)

# Callable(kind, ts_ms, payload): the owner wraps these into envelopes
# (gateway) or transcript entries (harness).
EmitFn = Callable[[str, int, dict[str, Any]], None]


class LLMPort(Protocol):
    def complete(self, utterance: str) -> str: ...


def apology_response(config: ServerConfig) -> DialogResponse:
    return DialogResponse(source=ResponseSource.LLM, text=config.apology_text, score=0.0)


class SessionRuntime:
    """One agent session: state, trackers, timers, and turn pipeline."""

    def __init__(
        self,
        session_id: str,
        config: ServerConfig,
        scheduler: Scheduler,
        kb: KnowledgeBase,
        registry: AssetRegistry,
        llm: LLMPort,
        tts: TtsAdapter,
        latency: LatencyStore,
        emit: EmitFn,
        condition: ExperimentCondition | None = None,
    ) -> None:
        self.session_id = session_id
        self.config = config
        self.scheduler = scheduler
        self.kb = kb
        self.registry = registry
        self.llm = llm
        self.tts = tts
        self.latency = latency
        self.emit = emit
        self.condition = condition or config.condition
        self.session = SessionState(condition=self.condition.value)
        self.tracker = PresenceTracker()
        self.closed = False

        self.turn_index = -1
        self._turn_gen = 0
        self._endpointer: UtteranceEndpointer | None = None
        self._finalize_timer: Timer | None = None
        self._thinking_timer: Timer | None = None
        self._stream: PerformanceStream | None = None
        self._speech: SpeechHandle | None = None
        self._turn_t0: int | None = None
        self._routing_end: int | None = None
        self._tts_end: int | None = None
        self._asr_span: tuple[int, int] | None = None

    # -- inbound ---------------------------------------------------------

    def handle_detection_frame(self, frame: DetectionFrame) -> None:
        estimate, events = self.tracker.update(frame, self.config.zone_config())
        for event in events:
            self._apply(event)

    def handle_asr_event(self, event: AsrEvent) -> None:
        """Recognizer events count only while listening (red means mute)."""
        if self.session.agent_state is not AgentState.LISTENING or self._endpointer is None:
            return
        final = self._endpointer.feed(event)
        if final is not None:
            self._finalized(final)
        else:
            self._reschedule_finalize()

    def handle_injected(self, event: AgentEvent) -> None:
        """Console-injected synthetic events go through the same pipeline."""
        self._apply(event)

    def close(self) -> None:
        """End the session; an active performance aborts but still completes."""
        if self.closed:
            return
        if self._stream is not None and not self._stream.completed:
            self._stream.abort()
        self.closed = True
        self._cancel_finalize()
        self._cancel_thinking_deadline()
        self._turn_gen += 1

    # -- event application -------------------------------------------------

    def _apply(self, event: AgentEvent) -> None:
        messages = apply_event(self.session, event)
        for message in messages:
            if isinstance(message, StateUpdate):
                self.emit("state_update", message.ts_ms, state_update_payload(message))
            elif isinstance(message, CommandMessage):
                self._run_action(message.action, message.ts_ms, event)
        if (
            messages
            and isinstance(event, UserEntered)
            and self.config.greet_on_enter
            and normalize_tokens(self.config.greeting_utterance)
        ):
            self._apply(
                UtteranceFinal(event.ts_ms, self.config.greeting_utterance, event.people_count)
            )

    def _run_action(self, action: Action, ts_ms: int, event: AgentEvent) -> None:
        if action is Action.START_LISTENING:
            self._endpointer = UtteranceEndpointer(self.config.endpoint_config())
            self._cancel_finalize()
            self.emit("start_listening", ts_ms, {})
        elif action is Action.STOP_LISTENING:
            self._endpointer = None
            self._cancel_finalize()
        elif action is Action.START_ROUTING:
            assert isinstance(event, UtteranceFinal)
            self._start_turn(event)
        elif action is Action.START_PERFORMANCE:
            assert isinstance(event, ResponseReady)
            self._start_performance(event)
        elif action is Action.RETURN_TO_IDLE:
            self._cancel_turn()

    # -- endpointing --------------------------------------------------------

    def _reschedule_finalize(self) -> None:
        self._cancel_finalize()
        if self._endpointer is None:
            return
        deadline = self._endpointer.deadline_ms()
        if deadline is not None:
            self._finalize_timer = self.scheduler.call_at(deadline, self._on_finalize_deadline)

    def _cancel_finalize(self) -> None:
        if self._finalize_timer is not None:
            self._finalize_timer.cancel()
            self._finalize_timer = None

    def _on_finalize_deadline(self) -> None:
        if (
            self.closed
            or self._endpointer is None
            or self.session.agent_state is not AgentState.LISTENING
        ):
            return
        final = self._endpointer.on_deadline(self.scheduler.now_ms())
        if final is not None:
            self._finalized(final)

    def _finalized(self, final) -> None:
        self._cancel_finalize()
        if not normalize_tokens(final.text):
            # Nothing routable (pure punctuation); keep listening.
            self._endpointer = UtteranceEndpointer(self.config.endpoint_config())
            return
        last_partial = self._endpointer.last_partial_ts if self._endpointer else None
        if last_partial is not None:
            self._asr_span = (last_partial, final.finalized_at_ms)
        people = max(1, self.tracker.count)
        self.emit(
            "utterance_final",
            final.finalized_at_ms,
            {
                "text": final.text,
                "people_count": people,
                "finalized_at_ms": final.finalized_at_ms,
            },
        )
        self._apply(UtteranceFinal(final.finalized_at_ms, final.text, people))

    # -- turn pipeline -------------------------------------------------------

    def _start_turn(self, utterance: UtteranceFinal) -> None:
        self._turn_gen += 1
        gen = self._turn_gen
        self.turn_index += 1
        self._turn_t0 = utterance.ts_ms
        self._routing_end = None
        self._tts_end = None
        self._speech = None
        if self._asr_span is not None and self._asr_span[1] == utterance.ts_ms:
            self._record(Stage.ASR_ENDPOINT, self._asr_span[0], self._asr_span[1])
        self._asr_span = None

        self._thinking_timer = self.scheduler.call_at(
            utterance.ts_ms + self.config.thinking_timeout_ms,
            lambda: self._on_thinking_timeout(gen),
        )
        self.scheduler.call_at(
            utterance.ts_ms + self.config.routing_latency_ms,
            lambda: self._route_done(gen, utterance),
        )

    def _route_done(self, gen: int, utterance: UtteranceFinal) -> None:
        if gen != self._turn_gen or self.closed:
            return
        now = self.scheduler.now_ms()
        try:
            response = route(
                utterance.text,
                self.kb,
                utterance.people_count,
                self.config.kb_threshold,
                self.llm,
            )
        except (LLMUnavailable, EmptyUtterance) as exc:
            logger.warning("routing failed (%s); substituting apology", exc)
            response = apology_response(self.config)
        if self._turn_t0 is not None:
            self._record(Stage.ROUTING, self._turn_t0, now)
        self._routing_end = now
        self.scheduler.call_at(
            now + self.config.tts_latency_ms, lambda: self._tts_done(gen, response)
        )

    def _tts_done(self, gen: int, response: DialogResponse) -> None:
        if gen != self._turn_gen or self.closed:
            return
        now = self.scheduler.now_ms()
        try:
            speech = synthesize(response.text, self.tts)
        except TtsFailure as exc:
            self._recover_to_listening(f"tts_failure: {exc}")
            return
        if self._routing_end is not None:
            self._record(Stage.TTS, self._routing_end, now)
        self._tts_end = now
        self._speech = speech
        self._apply(ResponseReady(now, response))

    def _on_thinking_timeout(self, gen: int) -> None:
        if gen != self._turn_gen or self.closed:
            return
        if self.session.agent_state is not AgentState.THINKING:
            return
        logger.warning("session %s: thinking deadline hit; sending apology", self.session_id)
        self._turn_gen += 1
        new_gen = self._turn_gen
        now = self.scheduler.now_ms()
        if self._turn_t0 is not None and self._routing_end is None:
            self._record(Stage.ROUTING, self._turn_t0, now)
        self._routing_end = now
        response = apology_response(self.config)
        self.scheduler.call_at(
            now + self.config.tts_latency_ms, lambda: self._tts_done(new_gen, response)
        )

    def _start_performance(self, event: ResponseReady) -> None:
        self._cancel_thinking_deadline()
        response = event.response
        speech = self._speech
        if speech is None:
            # Injected response with no synthesis stage behind it.
            try:
                speech = synthesize(response.text, self.tts)
            except TtsFailure as exc:
                self._recover_to_listening(f"tts_failure: {exc}")
                return
        self._speech = None

        plan = plan_performance(
            response,
            speech,
            self.condition,
            self.registry,
            neutral_gesture_id=self.config.neutral_gesture_id,
            plan_id=f"{self.session_id}-t{max(self.turn_index, 0)}",
        )
        self.emit("response_selected", event.ts_ms, response_to_wire(response))
        self.emit(
            "performance_plan",
            event.ts_ms,
            {
                "plan_id": plan.plan_id,
                "face_stream": plan.face_stream,
                "gesture": plan.gesture,
                "speech_duration_ms": speech.duration_ms,
                "total_duration_ms": plan.total_duration_ms,
                "condition": self.condition.value,
            },
        )
        self._stream = PerformanceStream(
            plan,
            self.scheduler,
            on_frame=self._on_frame,
            on_complete=self._on_stream_complete,
            fps=self.config.fps,
        )
        self._stream.start()

    def _on_frame(self, frame: AnimationFrame) -> None:
        self.emit(
            "animation_frame",
            frame.timestamp_ms,
            {
                "plan_id": frame.plan_id,
                "frame_index": frame.frame_index,
                "timestamp_ms": frame.timestamp_ms,
            },
        )
        if frame.frame_index == 0:
            if self._tts_end is not None:
                self._record(Stage.ANIMATION, self._tts_end, frame.timestamp_ms)
            if self._turn_t0 is not None:
                self._record(Stage.END_TO_END, self._turn_t0, frame.timestamp_ms)

    def _on_stream_complete(self, complete: AnimationComplete) -> None:
        plan_id = self._stream.plan.plan_id if self._stream else ""
        self._stream = None
        self.emit(
            "animation_complete",
            complete.ts_ms,
            {"plan_id": plan_id, "aborted": complete.aborted},
        )
        if not self.closed:
            self._apply(complete)

    # -- recovery / bookkeeping ----------------------------------------------

    def _recover_to_listening(self, reason: str) -> None:
        """Orchestrator-level rollback: drop the turn, resume listening."""
        logger.error("session %s: %s; recovering to listening", self.session_id, reason)
        self._cancel_turn()
        now = self.scheduler.now_ms()
        self.session.agent_state = AgentState.LISTENING
        self.session.pending_response = None
        self.session.last_transition_at = now
        self.emit("error", now, {"code": "tts_failure", "message": reason})
        self.emit(
            "state_update",
            now,
            state_update_payload(
                StateUpdate(
                    state=AgentState.LISTENING,
                    indicator=indicator_for(AgentState.LISTENING),
                    people_count=self.session.people_count,
                    ts_ms=now,
                )
            ),
        )
        self._endpointer = UtteranceEndpointer(self.config.endpoint_config())
        self.emit("start_listening", now, {})

    def _cancel_turn(self) -> None:
        self._turn_gen += 1
        self._cancel_thinking_deadline()
        self._speech = None

    def _cancel_thinking_deadline(self) -> None:
        if self._thinking_timer is not None:
            self._thinking_timer.cancel()
            self._thinking_timer = None

    def _record(self, stage: Stage, start_ms: int, end_ms: int) -> None:
        record = LatencyRecord(
            stage=stage,
            start_ms=start_ms,
            end_ms=end_ms,
            session=self.session_id,
            turn_index=max(self.turn_index, 0),
        )
        self.latency.append(record)
        self.emit(
            "latency_record",
            end_ms,
            {
                "stage": stage.value,
                "start_ms": start_ms,
                "end_ms": end_ms,
                "turn_index": record.turn_index,
            },
        )

    def snapshot(self) -> dict[str, Any]:
        """Current state for admin listings and late-joining clients."""
        return {
            "session": self.session_id,
            "state": self.session.agent_state.value,
            "people_count": self.session.people_count,
            "condition": self.condition.value,
            "turn_index": self.turn_index,
        }
