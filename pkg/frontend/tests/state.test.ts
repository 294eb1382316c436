import { describe, expect, it } from "vitest";

import type { TraceEvent, TurnResponse } from "../src/api.js";
import {
  STRATEGIES,
  applyError,
  applyGreeting,
  applyTurn,
  initialState,
  matchesTranscript,
  mergeTrace,
  requestSend,
} from "../src/state.js";

const metrics = { token_cost: 10, latency_ms: 5, provider_calls: 1 };

function turn(bot: string[], trace: TraceEvent[] = [], terminated = false): TurnResponse {
  return { bot, terminated, trace, metrics };
}

function event(seq: number, kind = "bot_message"): TraceEvent {
  return { seq, turn: 1, kind, payload: {} };
}

describe("strategy selector", () => {
  it("offers the five orchestration strategies", () => {
    expect(STRATEGIES).toHaveLength(5);
    expect([...STRATEGIES].sort()).toEqual([
      "autonomous",
      "best_of_n",
      "first_success",
      "merging",
      "proactive",
    ]);
  });
});

describe("chat flow", () => {
  it("renders the greeting as bot bubbles", () => {
    const state = applyGreeting(initialState(), "s1", ["Hi!", "How can I help?"]);
    expect(state.sessionId).toBe("s1");
    expect(state.bubbles).toEqual([
      { role: "bot", text: "Hi!" },
      { role: "bot", text: "How can I help?" },
    ]);
  });

  it("keeps chat order: user bubble then bot bubbles", () => {
    let state = applyGreeting(initialState(), "s1", ["Hi!"]);
    const sent = requestSend(state, "hello");
    state = sent.state;
    expect(sent.send).toBe("hello");
    state = applyTurn(state, turn(["hey", "there"])).state;
    expect(state.bubbles.map((b) => b.text)).toEqual(["Hi!", "hello", "hey", "there"]);
    expect(state.inFlight).toBe(false);
  });

  it("queues messages while a turn is in flight", () => {
    let state = applyGreeting(initialState(), "s1", []);
    state = requestSend(state, "first").state;
    const queued = requestSend(state, "second");
    expect(queued.send).toBeNull();
    expect(queued.state.queue).toEqual(["second"]);
    const done = applyTurn(queued.state, turn(["ok"]));
    expect(done.next).toBe("second");
    expect(done.state.queue).toEqual([]);
  });

  it("disables input on a terminated session", () => {
    let state = applyGreeting(initialState(), "s1", []);
    state = requestSend(state, "bye").state;
    state = applyTurn(state, turn(["Bye."], [], true)).state;
    expect(state.terminated).toBe(true);
    expect(requestSend(state, "more?").send).toBeNull();
  });

  it("does not transmit before a session exists or for blank text", () => {
    expect(requestSend(initialState(), "hi").send).toBeNull();
    const live = applyGreeting(initialState(), "s1", []);
    expect(requestSend(live, "   ").send).toBeNull();
  });
});

describe("trace feed", () => {
  it("stays ordered by sequence number and deduplicates", () => {
    const merged = mergeTrace([event(1), event(4)], [event(2), event(4), event(3)]);
    expect(merged.map((e) => e.seq)).toEqual([1, 2, 3, 4]);
  });

  it("updates the badge from the state snapshot", () => {
    let state = applyGreeting(initialState(), "s1", []);
    state = requestSend(state, "order a book").state;
    const snapshot = {
      active_agent: "order",
      args: { order: { books: "Dune" } },
      transcript: [],
      last_turn_metrics: metrics,
      terminated: false,
      strategy: "proactive",
    };
    state = applyTurn(state, turn(["Sure."]), snapshot).state;
    expect(state.activeAgent).toBe("order");
    expect(state.args.order.books).toBe("Dune");
  });
});

describe("errors", () => {
  it("keeps the banner text and clears the in-flight flag", () => {
    let state = applyGreeting(initialState(), "s1", []);
    state = requestSend(state, "hi").state;
    state = applyError(state, "connection lost");
    expect(state.error).toBe("connection lost");
    expect(state.inFlight).toBe(false);
  });
});

describe("transcript mirror", () => {
  it("matches iff bubbles equal the server transcript", () => {
    let state = applyGreeting(initialState(), "s1", ["Hi!"]);
    state = requestSend(state, "hello").state;
    state = applyTurn(state, turn(["hey"])).state;
    const transcript = [
      { role: "bot", text: "Hi!" },
      { role: "user", text: "hello" },
      { role: "bot", text: "hey" },
    ];
    expect(matchesTranscript(state, transcript)).toBe(true);
    expect(matchesTranscript(state, transcript.slice(1))).toBe(false);
  });
});
