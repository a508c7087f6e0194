"""Agent behavior state machine.

Four states (idle, listening, thinking, talking) driven by presence,
speech, dialog, and animation events. ``transition`` is a pure, total
function over every state/event pair: pairs outside the transition
table are rejected, never faulted. ``apply_event`` wraps it with the
per-session bookkeeping (people count, pending response) and produces
the outbound messages the embodiment clients consume.

Behavior rules encoded here:
- A visitor entering wakes the agent from idle into listening.
- A finalized utterance sends the agent thinking; the routed response
  (with its synthesized speech) starts the talking performance.
- When everyone leaves during listening or thinking, the agent returns
  to idle (any in-flight response is discarded). If it happens while
  talking, the agent finishes the current utterance first and goes idle
  on the animation-complete signal. Speech is never aborted mid-word.
- The on-screen indicator is green with a microphone icon exactly while
  listening; every other state shows red with a mute icon.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from sia.dialog import DialogResponse


class AgentState(str, Enum):
    IDLE = "idle"
    LISTENING = "listening"
    THINKING = "thinking"
    TALKING = "talking"


class Action(str, Enum):
    """Side-effect commands attached to accepted transitions."""

    START_LISTENING = "start_listening"
    START_ROUTING = "start_routing"
    START_PERFORMANCE = "start_performance"
    STOP_LISTENING = "stop_listening"
    RETURN_TO_IDLE = "return_to_idle"


class Background(str, Enum):
    RED = "red"
    GREEN = "green"


class Icon(str, Enum):
    MUTE = "mute"
    MICROPHONE = "microphone"


@dataclass(frozen=True, slots=True)
class Indicator:
    background: Background
    icon: Icon


_INDICATOR_OPEN = Indicator(Background.GREEN, Icon.MICROPHONE)
_INDICATOR_MUTED = Indicator(Background.RED, Icon.MUTE)

_INDICATORS: dict[AgentState, Indicator] = {
    AgentState.IDLE: _INDICATOR_MUTED,
    AgentState.LISTENING: _INDICATOR_OPEN,
    AgentState.THINKING: _INDICATOR_MUTED,
    AgentState.TALKING: _INDICATOR_MUTED,
}


def indicator_for(state: AgentState) -> Indicator:
    """Green/microphone while listening; red/mute otherwise."""
    return _INDICATORS[state]


# --- events -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class UserEntered:
    """Debounced presence flip to occupied. ``people_count`` is the count after the flip."""

    ts_ms: int
    people_count: int = 1

    def __post_init__(self) -> None:
        if self.people_count < 1:
            raise ValueError("UserEntered.people_count must be >= 1")


@dataclass(frozen=True, slots=True)
class UserLeft:
    """Debounced presence change downward; count 0 means the zone emptied."""

    ts_ms: int
    people_count: int = 0

    def __post_init__(self) -> None:
        if self.people_count < 0:
            raise ValueError("UserLeft.people_count must be >= 0")


@dataclass(frozen=True, slots=True)
class UtteranceFinal:
    """An endpointed user utterance. A finalized utterance implies a speaker."""

    ts_ms: int
    text: str
    people_count: int = 1

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("UtteranceFinal.text must be non-empty")
        if self.people_count < 1:
            raise ValueError("UtteranceFinal.people_count must be >= 1")


@dataclass(frozen=True, slots=True)
class ResponseReady:
    """Routing and speech synthesis finished for the current turn."""

    ts_ms: int
    response: DialogResponse


@dataclass(frozen=True, slots=True)
class AnimationComplete:
    """The talking performance finished streaming (possibly aborted)."""

    ts_ms: int
    aborted: bool = False


@dataclass(frozen=True, slots=True)
class Tick:
    """Clock advance only; never transitions the machine."""

    ts_ms: int


AgentEvent = Union[UserEntered, UserLeft, UtteranceFinal, ResponseReady, AnimationComplete, Tick]


# --- transition function ----------------------------------------------------


@dataclass(frozen=True, slots=True)
class TransitionResult:
    next: AgentState
    actions: tuple[Action, ...]
    accepted: bool


_ENTER = TransitionResult(AgentState.LISTENING, (Action.START_LISTENING,), True)
_HEARD = TransitionResult(AgentState.THINKING, (Action.START_ROUTING,), True)
_RESPOND = TransitionResult(AgentState.TALKING, (Action.START_PERFORMANCE,), True)
_DONE_PRESENT = TransitionResult(AgentState.LISTENING, (Action.START_LISTENING,), True)
_DONE_ALONE = TransitionResult(AgentState.IDLE, (Action.RETURN_TO_IDLE,), True)

_STATIC: dict[tuple[AgentState, type], TransitionResult] = {
    (AgentState.IDLE, UserEntered): _ENTER,
    (AgentState.LISTENING, UtteranceFinal): _HEARD,
    (AgentState.THINKING, ResponseReady): _RESPOND,
}

# Emptied-zone rows: listening and thinking bail out to idle (the
# thinking row discards in-flight work); talking keeps going until the
# performance completes.
_LEFT_TO_ZERO: dict[AgentState, TransitionResult] = {
    AgentState.LISTENING: TransitionResult(
        AgentState.IDLE, (Action.STOP_LISTENING, Action.RETURN_TO_IDLE), True
    ),
    AgentState.THINKING: TransitionResult(AgentState.IDLE, (Action.RETURN_TO_IDLE,), True),
    AgentState.TALKING: TransitionResult(AgentState.TALKING, (), True),
}

_REJECT: dict[AgentState, TransitionResult] = {
    s: TransitionResult(s, (), False) for s in AgentState
}


def transition(state: AgentState, event: AgentEvent, people_count: int = 0) -> TransitionResult:
    """Successor state and commands for one event; total over all pairs.

    ``people_count`` is the session's current count, consulted only by
    the talking-finished row (back to listening while anyone remains,
    otherwise idle). Pairs not in the table are rejected: the result
    keeps the state, carries no actions, and is flagged unaccepted.
    """
    res = _STATIC.get((state, type(event)))
    if res is not None:
        return res
    cls = type(event)
    if cls is AnimationComplete and state is AgentState.TALKING:
        return _DONE_PRESENT if people_count > 0 else _DONE_ALONE
    if cls is UserLeft and event.people_count == 0:
        res = _LEFT_TO_ZERO.get(state)
        if res is not None:
            return res
    return _REJECT[state]


# --- session wrapper ---------------------------------------------------------


class ClockRegression(Exception):
    """Event timestamp precedes the session's last accepted transition."""


@dataclass(slots=True)
class SessionState:
    """Mutable per-session context around the pure machine.

    Single-writer: all apply_event calls for one session must be
    serialized through that session's event queue.
    """

    agent_state: AgentState = AgentState.IDLE
    people_count: int = 0
    last_transition_at: int = 0
    pending_response: DialogResponse | None = None
    condition: str = "hybrid"


@dataclass(frozen=True, slots=True)
class StateUpdate:
    """Broadcast on every accepted transition; drives indicators on clients."""

    state: AgentState
    indicator: Indicator
    people_count: int
    ts_ms: int


@dataclass(frozen=True, slots=True)
class CommandMessage:
    action: Action
    ts_ms: int


OutboundMessage = Union[StateUpdate, CommandMessage]

_COUNTED = (UserEntered, UserLeft, UtteranceFinal)


def apply_event(session: SessionState, event: AgentEvent) -> list[OutboundMessage]:
    """Apply one event to a session, in place; return outbound messages.

    People-count bookkeeping applies for every count-bearing event, even
    when the transition itself is rejected (a second visitor entering
    mid-speech must still be counted). Rejected events otherwise change
    nothing and emit nothing. Raises :class:`ClockRegression` when the
    event timestamp precedes the last accepted transition.
    """
    if event.ts_ms < session.last_transition_at:
        raise ClockRegression(
            f"event at {event.ts_ms}ms precedes last transition at {session.last_transition_at}ms"
        )

    result = transition(session.agent_state, event, session.people_count)

    if isinstance(event, _COUNTED):
        session.people_count = event.people_count

    if not result.accepted:
        return []

    prev = session.agent_state
    session.agent_state = result.next
    session.last_transition_at = event.ts_ms

    if isinstance(event, ResponseReady):
        session.pending_response = event.response
    if prev is AgentState.TALKING and result.next is not AgentState.TALKING:
        session.pending_response = None
    if result.next is AgentState.IDLE:
        session.pending_response = None

    messages: list[OutboundMessage] = [
        StateUpdate(
            state=result.next,
            indicator=indicator_for(result.next),
            people_count=session.people_count,
            ts_ms=event.ts_ms,
        )
    ]
    messages.extend(CommandMessage(action, event.ts_ms) for action in result.actions)
    return messages
