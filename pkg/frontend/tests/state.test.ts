import { describe, expect, it } from "vitest";

import type { Envelope } from "../src/protocol.js";
import { applyEnvelope, initialState, latencySummary, TIMELINE_LIMIT } from "../src/state.js";

let seq = 0;
function env(type: string, payload: Record<string, unknown>, ts = 100): Envelope {
  return { type, session: "s1", ts_ms: ts, seq: ++seq, payload };
}

const LISTENING = env("state_update", {
  state: "listening",
  indicator: { background: "green", icon: "microphone" },
  people_count: 1,
});

describe("view-model reducer", () => {
  it("a single state_update flips the rendered indicator", () => {
    let state = initialState("s1");
    expect(state.indicator).toBeNull();
    state = applyEnvelope(state, LISTENING);
    expect(state.agentState).toBe("listening");
    expect(state.indicator).toEqual({ background: "green", icon: "microphone" });
    expect(state.peopleCount).toBe(1);
    state = applyEnvelope(
      state,
      env("state_update", {
        state: "thinking",
        indicator: { background: "red", icon: "mute" },
        people_count: 1,
      }),
    );
    expect(state.indicator!.background).toBe("red");
  });

  it("routed responses appear in the timeline with their text", () => {
    let state = initialState("s1");
    state = applyEnvelope(state, env("utterance_final", {
      text: "where are the robots",
      people_count: 1,
      finalized_at_ms: 900,
    }));
    state = applyEnvelope(state, env("response_selected", {
      source: "kb",
      text: "In the main hall.",
      animation_id: null,
      matched_intent: "robots",
      score: 1.0,
    }));
    const labels = state.timeline.map((e) => e.label);
    expect(labels[0]).toContain("where are the robots");
    expect(labels[1]).toContain("In the main hall.");
    expect(labels[1]).toContain("KB");
  });

  it("animation frames stay off the timeline", () => {
    let state = initialState("s1");
    state = applyEnvelope(state, env("animation_frame", {
      plan_id: "p", frame_index: 0, timestamp_ms: 5,
    }));
    expect(state.timeline).toEqual([]);
  });

  it("latency records aggregate with nearest-rank percentiles", () => {
    let state = initialState("s1");
    for (const [i, duration] of [100, 200, 300, 400, 500].entries()) {
      state = applyEnvelope(state, env("latency_record", {
        stage: "routing", start_ms: 0, end_ms: duration, turn_index: i,
      }));
    }
    const summary = latencySummary(state)["routing"];
    expect(summary).toEqual({ count: 5, mean: 300, p50: 300, p95: 500, max: 500 });
  });

  it("condition follows config acknowledgments", () => {
    let state = initialState("s1");
    state = applyEnvelope(state, env("config_set", { key: "condition", value: "generative_only" }));
    expect(state.condition).toBe("generative_only");
  });

  it("the timeline is bounded", () => {
    let state = initialState("s1");
    for (let i = 0; i < TIMELINE_LIMIT + 50; i++) {
      state = applyEnvelope(state, env("start_listening", {}, i));
    }
    expect(state.timeline.length).toBe(TIMELINE_LIMIT);
    expect(state.timeline[0].ts_ms).toBe(50);
  });
});
