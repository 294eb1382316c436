// View-state logic, kept free of DOM and network so it is unit-testable.

import type { StateSnapshot, TraceEvent, TurnMetrics, TurnResponse } from "./api.js";

export const STRATEGIES = [
  "proactive",
  "merging",
  "first_success",
  "best_of_n",
  "autonomous",
] as const;

export interface Bubble {
  role: "user" | "bot";
  text: string;
}

export interface ViewState {
  sessionId: string | null;
  strategy: string;
  bubbles: Bubble[];
  trace: TraceEvent[];
  activeAgent: string | null;
  args: Record<string, Record<string, unknown>>;
  metrics: TurnMetrics | null;
  terminated: boolean;
  inFlight: boolean;
  queue: string[];
  error: string | null;
}

export function initialState(strategy: string = "proactive"): ViewState {
  return {
    sessionId: null,
    strategy,
    bubbles: [],
    trace: [],
    activeAgent: null,
    args: {},
    metrics: null,
    terminated: false,
    inFlight: false,
    queue: [],
    error: null,
  };
}

export function applyGreeting(state: ViewState, id: string, greeting: string[]): ViewState {
  return {
    ...state,
    sessionId: id,
    error: null,
    bubbles: greeting.map((text) => ({ role: "bot", text }) as Bubble),
  };
}

/**
 * Request to send a message. While a turn is in flight the text is queued
 * instead (one active request per session); on a terminated session nothing
 * happens. Returns the text to actually transmit now, if any.
 */
export function requestSend(state: ViewState, text: string): { state: ViewState; send: string | null } {
  if (state.terminated || !state.sessionId || !text.trim()) {
    return { state, send: null };
  }
  if (state.inFlight) {
    return { state: { ...state, queue: [...state.queue, text] }, send: null };
  }
  return {
    state: {
      ...state,
      inFlight: true,
      bubbles: [...state.bubbles, { role: "user", text }],
    },
    send: text,
  };
}

/** Fold a completed turn into the view; returns any queued follow-up text. */
export function applyTurn(
  state: ViewState,
  response: TurnResponse,
  snapshot?: StateSnapshot,
): { state: ViewState; next: string | null } {
  const next = state.queue.length > 0 && !response.terminated ? state.queue[0] : null;
  const merged: ViewState = {
    ...state,
    inFlight: false,
    queue: next !== null ? state.queue.slice(1) : state.queue,
    bubbles: [...state.bubbles, ...response.bot.map((text) => ({ role: "bot", text }) as Bubble)],
    trace: mergeTrace(state.trace, response.trace),
    metrics: response.metrics,
    terminated: response.terminated,
    activeAgent: snapshot ? snapshot.active_agent : state.activeAgent,
    args: snapshot ? snapshot.args : state.args,
  };
  return { state: merged, next };
}

/** Append live events keeping the feed ordered by sequence number, no dupes. */
export function mergeTrace(existing: TraceEvent[], incoming: TraceEvent[]): TraceEvent[] {
  const seen = new Set(existing.map((e) => e.seq));
  const merged = existing.concat(incoming.filter((e) => !seen.has(e.seq)));
  merged.sort((a, b) => a.seq - b.seq);
  return merged;
}

export function applyError(state: ViewState, message: string): ViewState {
  return { ...state, inFlight: false, error: message };
}

/** The chat must mirror the server transcript exactly. */
export function matchesTranscript(
  state: ViewState,
  transcript: { role: string; text: string }[],
): boolean {
  if (state.bubbles.length !== transcript.length) return false;
  return state.bubbles.every(
    (b, i) => b.role === transcript[i].role && b.text === transcript[i].text,
  );
}
