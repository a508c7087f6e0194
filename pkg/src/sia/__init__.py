"""Interaction orchestration for socially interactive agents.

Subpackages cover the agent state machine (core), camera-based presence
(presence), hybrid knowledge-base/LLM dialog (dialog), endpointing and
synthesis contracts (speechio), gesture/face performance planning
(animation), the wire protocol and gateway server (protocol, gateway),
latency instrumentation (latency), and the deterministic scenario
harness (harness).
"""

from sia.core import (
    Action,
    AgentEvent,
    AgentState,
    AnimationComplete,
    Indicator,
    ResponseReady,
    SessionState,
    Tick,
    TransitionResult,
    UserEntered,
    UserLeft,
    UtteranceFinal,
    apply_event,
    indicator_for,
    transition,
)
from sia.dialog import (
    DialogResponse,
    KBEntry,
    KnowledgeBase,
    ResponseSource,
    adapt_for_group,
    route,
    score_intent,
)
from sia.presence import (
    BoundingBox,
    DetectionFrame,
    PresenceEstimate,
    PresenceTracker,
    ZoneConfig,
    classify_box,
    count_people,
    update_presence,
)
from sia.speechio import (
    AsrEvent,
    EndpointConfig,
    FinalUtterance,
    SpeechHandle,
    endpoint_utterance,
    synthesize,
)

__all__ = [
    "Action",
    "AgentEvent",
    "AgentState",
    "AnimationComplete",
    "AsrEvent",
    "BoundingBox",
    "DetectionFrame",
    "DialogResponse",
    "EndpointConfig",
    "FinalUtterance",
    "Indicator",
    "KBEntry",
    "KnowledgeBase",
    "PresenceEstimate",
    "PresenceTracker",
    "ResponseReady",
    "ResponseSource",
    "SessionState",
    "SpeechHandle",
    "Tick",
    "TransitionResult",
    "UserEntered",
    "UserLeft",
    "UtteranceFinal",
    "ZoneConfig",
    "adapt_for_group",
    "apply_event",
    "classify_box",
    "count_people",
    "endpoint_utterance",
    "indicator_for",
    "route",
    "score_intent",
    "synthesize",
    "transition",
    "update_presence",
]
