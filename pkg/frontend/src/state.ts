/**
 * Console view-model: a pure reducer over inbound/outbound envelopes.
 *
 * The console holds no agent logic — it only mirrors what the gateway
 * broadcasts. The rendered indicator is always the one carried by the
 * last state_update; closing and reopening the console never changes
 * server behavior.
 */

import type { AgentStateName, Envelope, IndicatorView } from "./protocol.js";

export interface TimelineEntry {
  ts_ms: number;
  kind: string;
  label: string;
  outbound: boolean;
  isError: boolean;
}

export interface StageSummary {
  count: number;
  mean: number | null;
  p50: number | null;
  p95: number | null;
  max: number | null;
}

export interface ConsoleState {
  session: string;
  connected: boolean;
  agentState: AgentStateName | null;
  indicator: IndicatorView | null;
  peopleCount: number;
  condition: string | null;
  timeline: TimelineEntry[];
  latencyDurations: Record<string, number[]>;
}

export const TIMELINE_LIMIT = 500;

export function initialState(session: string): ConsoleState {
  return {
    session,
    connected: false,
    agentState: null,
    indicator: null,
    peopleCount: 0,
    condition: null,
    timeline: [],
    latencyDurations: {},
  };
}

function push(state: ConsoleState, entry: TimelineEntry): ConsoleState {
  const timeline = [...state.timeline, entry].slice(-TIMELINE_LIMIT);
  return { ...state, timeline };
}

function describe(env: Envelope): string {
  const p = env.payload as Record<string, any>;
  switch (env.type) {
    case "state_update":
      return `state → ${p.state} (${p.people_count} present)`;
    case "utterance_final":
      return `heard: "${p.text}"`;
    case "response_selected":
      return `${String(p.source).toUpperCase()} reply: "${p.text}"` +
        (p.matched_intent ? ` [${p.matched_intent}]` : "");
    case "animation_complete":
      return p.aborted ? "performance aborted" : "performance finished";
    case "start_listening":
      return "microphone open";
    case "latency_record":
      return `${p.stage}: ${p.end_ms - p.start_ms} ms`;
    case "error":
      return `server error ${p.code}: ${p.message}`;
    case "session_open":
      return `session open (${p.condition ?? "default"})`;
    case "session_close":
      return `session closed (${p.reason ?? ""})`;
    case "config_set":
      return `config ${p.key} = ${JSON.stringify(p.value)}`;
    case "config_get":
      return `config ${p.key ?? "*"}: ${JSON.stringify(p.value)}`;
    case "kb_reload":
      return `knowledge base reloaded (${p.entries ?? "?"} entries)`;
    default:
      return env.type;
  }
}

/** Fold one broadcast envelope into the view. */
export function applyEnvelope(state: ConsoleState, env: Envelope): ConsoleState {
  let next = state;
  if (env.type === "state_update") {
    const p = env.payload as Record<string, any>;
    next = {
      ...next,
      agentState: p.state,
      indicator: p.indicator,
      peopleCount: p.people_count,
    };
  } else if (env.type === "session_open") {
    const p = env.payload as Record<string, any>;
    next = { ...next, condition: (p.condition as string) ?? next.condition };
  } else if (env.type === "config_set" || env.type === "config_get") {
    const p = env.payload as Record<string, any>;
    if (p.key === "condition" && typeof p.value === "string") {
      next = { ...next, condition: p.value };
    }
  } else if (env.type === "latency_record") {
    const p = env.payload as Record<string, any>;
    const durations = { ...next.latencyDurations };
    durations[p.stage] = [...(durations[p.stage] ?? []), p.end_ms - p.start_ms];
    next = { ...next, latencyDurations: durations };
  }
  if (env.type === "animation_frame") {
    return next; // too chatty for the timeline; latency panel covers timing
  }
  return push(next, {
    ts_ms: env.ts_ms,
    kind: env.type,
    label: describe(env),
    outbound: false,
    isError: env.type === "error",
  });
}

/** Log an action the operator sent. */
export function recordOutbound(state: ConsoleState, env: Envelope): ConsoleState {
  return push(state, {
    ts_ms: env.ts_ms,
    kind: env.type,
    label: `sent ${env.type}`,
    outbound: true,
    isError: false,
  });
}

export function setConnected(state: ConsoleState, connected: boolean): ConsoleState {
  return { ...state, connected };
}

function nearestRank(sorted: number[], percentile: number): number {
  const rank = Math.max(1, Math.ceil((percentile / 100) * sorted.length));
  return sorted[rank - 1];
}

/** Nearest-rank summary per stage, matching the server's report math. */
export function latencySummary(state: ConsoleState): Record<string, StageSummary> {
  const out: Record<string, StageSummary> = {};
  for (const [stage, durations] of Object.entries(state.latencyDurations)) {
    if (durations.length === 0) {
      out[stage] = { count: 0, mean: null, p50: null, p95: null, max: null };
      continue;
    }
    const sorted = [...durations].sort((a, b) => a - b);
    out[stage] = {
      count: sorted.length,
      mean: sorted.reduce((a, b) => a + b, 0) / sorted.length,
      p50: nearestRank(sorted, 50),
      p95: nearestRank(sorted, 95),
      max: sorted[sorted.length - 1],
    };
  }
  return out;
}
