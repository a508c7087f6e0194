/**
 * Envelope protocol: types, schema validation, and builders.
 *
 * The console speaks only the gateway's public envelope schema — every
 * outbound message is built here and validated against the same closed
 * type set the server enforces, so a schema drift fails loudly on the
 * client before it ever reaches the wire.
 */

export interface Envelope {
  type: string;
  session: string;
  ts_ms: number;
  seq: number;
  payload: Record<string, unknown>;
}

export type AgentStateName = "idle" | "listening" | "thinking" | "talking";
export type ConditionName = "hybrid" | "mocap_only" | "generative_only";

export interface IndicatorView {
  background: "red" | "green";
  icon: "mute" | "microphone";
}

export const ENVELOPE_TYPES = new Set([
  "detection_frame",
  "asr_event",
  "state_update",
  "start_listening",
  "utterance_final",
  "response_selected",
  "animation_frame",
  "animation_complete",
  "inject_event",
  "latency_record",
  "error",
  "kb_reload",
  "config_get",
  "config_set",
  "session_open",
  "session_close",
]);

const STATES = new Set(["idle", "listening", "thinking", "talking"]);
const STAGES = new Set(["asr_endpoint", "routing", "tts", "animation", "end_to_end"]);
const CONDITIONS = new Set(["hybrid", "mocap_only", "generative_only"]);
const EVENT_KINDS = new Set([
  "user_entered",
  "user_left",
  "utterance_final",
  "response_ready",
  "animation_complete",
  "tick",
]);

export class ProtocolViolation extends Error {}

function isInt(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value);
}

function fail(message: string): never {
  throw new ProtocolViolation(message);
}

function require(payload: Record<string, unknown>, field: string, ok: (v: unknown) => boolean, desc: string): unknown {
  if (!(field in payload)) fail(`missing field '${field}'`);
  const value = payload[field];
  if (!ok(value)) fail(`field '${field}' must be ${desc}`);
  return value;
}

function optional(payload: Record<string, unknown>, field: string, ok: (v: unknown) => boolean, desc: string): void {
  if (!(field in payload) || payload[field] === null) return;
  if (!ok(payload[field])) fail(`field '${field}' must be ${desc}`);
}

type Validator = (p: Record<string, unknown>) => void;

const VALIDATORS: Record<string, Validator> = {
  detection_frame: (p) => {
    require(p, "timestamp_ms", isInt, "an integer");
    const boxes = require(p, "boxes", Array.isArray, "a list") as unknown[];
    for (const box of boxes) {
      if (typeof box !== "object" || box === null) fail("each box must be an object");
      for (const coord of ["x", "y", "w", "h"]) {
        require(box as Record<string, unknown>, coord, (v) => typeof v === "number", "a number");
      }
    }
  },
  asr_event: (p) => {
    require(p, "timestamp_ms", isInt, "an integer");
    const kind = require(p, "kind", (v) => v === "partial" || v === "silence", "partial or silence");
    if (kind === "partial") {
      require(p, "text", (v) => typeof v === "string" && v !== "", "a non-empty string");
    }
  },
  state_update: (p) => {
    require(p, "state", (v) => STATES.has(v as string), "a known state");
    const indicator = require(p, "indicator", (v) => typeof v === "object" && v !== null, "an object") as Record<string, unknown>;
    const background = require(indicator, "background", (v) => v === "red" || v === "green", "red or green");
    const icon = require(indicator, "icon", (v) => v === "mute" || v === "microphone", "mute or microphone");
    if ((background === "green") !== (icon === "microphone")) {
      fail("indicator must pair green with microphone and red with mute");
    }
    require(p, "people_count", (v) => isInt(v) && (v as number) >= 0, "a non-negative integer");
  },
  start_listening: () => {},
  utterance_final: (p) => {
    require(p, "text", (v) => typeof v === "string" && v !== "", "a non-empty string");
    require(p, "people_count", (v) => isInt(v) && (v as number) >= 1, "a positive integer");
    require(p, "finalized_at_ms", isInt, "an integer");
  },
  response_selected: (p) => {
    require(p, "source", (v) => v === "kb" || v === "llm", "kb or llm");
    require(p, "text", (v) => typeof v === "string", "a string");
    optional(p, "animation_id", (v) => typeof v === "string", "a string");
    optional(p, "matched_intent", (v) => typeof v === "string", "a string");
    require(p, "score", (v) => typeof v === "number" && v >= 0 && v <= 1, "a number in [0,1]");
  },
  animation_frame: (p) => {
    require(p, "plan_id", (v) => typeof v === "string" && v !== "", "a non-empty string");
    require(p, "frame_index", (v) => isInt(v) && (v as number) >= 0, "a non-negative integer");
    require(p, "timestamp_ms", isInt, "an integer");
  },
  animation_complete: (p) => {
    require(p, "plan_id", (v) => typeof v === "string" && v !== "", "a non-empty string");
    require(p, "aborted", (v) => typeof v === "boolean", "a boolean");
  },
  inject_event: (p) => {
    const event = require(p, "event", (v) => typeof v === "object" && v !== null, "an object") as Record<string, unknown>;
    require(event, "kind", (v) => EVENT_KINDS.has(v as string), "a known event kind");
  },
  latency_record: (p) => {
    require(p, "stage", (v) => STAGES.has(v as string), "a known stage");
    const start = require(p, "start_ms", isInt, "an integer") as number;
    const end = require(p, "end_ms", isInt, "an integer") as number;
    if (end < start) fail("end_ms must not precede start_ms");
    require(p, "turn_index", (v) => isInt(v) && (v as number) >= 0, "a non-negative integer");
  },
  error: (p) => {
    require(p, "code", (v) => typeof v === "string" && v !== "", "a non-empty string");
    require(p, "message", (v) => typeof v === "string", "a string");
  },
  kb_reload: (p) => optional(p, "path", (v) => typeof v === "string", "a string"),
  config_get: (p) => optional(p, "key", (v) => typeof v === "string", "a string"),
  config_set: (p) => {
    require(p, "key", (v) => typeof v === "string" && v !== "", "a non-empty string");
    if (!("value" in p)) fail("missing field 'value'");
  },
  session_open: (p) => optional(p, "condition", (v) => CONDITIONS.has(v as string), "a known condition"),
  session_close: (p) => optional(p, "reason", (v) => typeof v === "string", "a string"),
};

/** Throws ProtocolViolation unless the envelope matches the public schema. */
export function validateEnvelope(env: Envelope): void {
  if (!ENVELOPE_TYPES.has(env.type)) fail(`unknown type '${env.type}'`);
  if (typeof env.session !== "string" || env.session === "") fail("session must be a non-empty string");
  if (!isInt(env.ts_ms)) fail("ts_ms must be an integer");
  if (!isInt(env.seq) || env.seq < 0) fail("seq must be a non-negative integer");
  if (typeof env.payload !== "object" || env.payload === null || Array.isArray(env.payload)) {
    fail("payload must be an object");
  }
  VALIDATORS[env.type](env.payload);
}

/** Parse one wire line into a validated envelope. */
export function decodeEnvelope(line: string): Envelope {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (e) {
    fail(`not a JSON document: ${(e as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    fail("envelope must be a JSON object");
  }
  const env = doc as Envelope;
  validateEnvelope(env);
  return env;
}

// --- outbound builders -------------------------------------------------------
//
// Every operator action maps to exactly one documented envelope kind.

export interface Draft {
  type: string;
  payload: Record<string, unknown>;
}

export function openSession(condition?: ConditionName): Draft {
  return { type: "session_open", payload: condition ? { condition } : {} };
}

export function closeSession(reason?: string): Draft {
  return { type: "session_close", payload: reason ? { reason } : {} };
}

export function userEntered(peopleCount: number): Draft {
  return { type: "inject_event", payload: { event: { kind: "user_entered", people_count: peopleCount } } };
}

export function userLeft(peopleCount: number): Draft {
  return { type: "inject_event", payload: { event: { kind: "user_left", people_count: peopleCount } } };
}

export function tick(): Draft {
  return { type: "inject_event", payload: { event: { kind: "tick" } } };
}

export function asrPartial(timestampMs: number, text: string): Draft {
  return { type: "asr_event", payload: { timestamp_ms: timestampMs, kind: "partial", text } };
}

export function asrSilence(timestampMs: number): Draft {
  return { type: "asr_event", payload: { timestamp_ms: timestampMs, kind: "silence" } };
}

/**
 * Cumulative recognizer stream for one typed utterance: growing word
 * prefixes every 250 ms, then a silence marker.
 */
export function utteranceDrafts(text: string, startMs: number): Draft[] {
  const words = text.trim().split(/\s+/).filter((w) => w !== "");
  if (words.length === 0) return [];
  const drafts: Draft[] = [];
  for (let k = 1; k <= words.length; k++) {
    drafts.push(asrPartial(startMs + 250 * k, words.slice(0, k).join(" ")));
  }
  drafts.push(asrSilence(startMs + 250 * (words.length + 1)));
  return drafts;
}

export function detectionFrame(timestampMs: number, boxes: { x: number; y: number; w: number; h: number }[]): Draft {
  return { type: "detection_frame", payload: { timestamp_ms: timestampMs, boxes } };
}

export function setCondition(condition: ConditionName): Draft {
  return { type: "config_set", payload: { key: "condition", value: condition } };
}

export function getConfig(key?: string): Draft {
  return { type: "config_get", payload: key ? { key } : {} };
}

export function reloadKb(path?: string): Draft {
  return { type: "kb_reload", payload: path ? { path } : {} };
}
