// DOM wiring for the console: chat pane, active-agent badge, trace feed,
// args table, metrics strip, strategy selector.

import { ApiClient, type TraceEvent } from "./api.js";
import {
  STRATEGIES,
  applyError,
  applyGreeting,
  applyTurn,
  initialState,
  mergeTrace,
  requestSend,
  type ViewState,
} from "./state.js";

const client = new ApiClient(window.location.origin);
let state: ViewState = initialState();
let cancelStream: (() => void) | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function render(): void {
  const chat = $("chat");
  chat.innerHTML = "";
  for (const bubble of state.bubbles) {
    const div = document.createElement("div");
    div.className = `bubble ${bubble.role}`;
    div.textContent = bubble.text;
    chat.appendChild(div);
  }
  chat.scrollTop = chat.scrollHeight;

  $("badge").textContent = state.activeAgent ?? "—";
  $("metrics").textContent = state.metrics
    ? `tokens ${state.metrics.token_cost} · calls ${state.metrics.provider_calls} · ${state.metrics.latency_ms} ms`
    : "";

  const feed = $("trace");
  feed.innerHTML = "";
  for (const event of state.trace.slice(-200)) {
    const li = document.createElement("li");
    li.textContent = `#${event.seq} t${event.turn} ${event.kind} ${JSON.stringify(event.payload)}`;
    feed.appendChild(li);
  }
  feed.scrollTop = feed.scrollHeight;

  const args = $("args");
  args.innerHTML = "";
  for (const [owner, values] of Object.entries(state.args)) {
    for (const [name, value] of Object.entries(values)) {
      const row = document.createElement("tr");
      row.innerHTML = `<td>${owner}</td><td>${name}</td><td>${JSON.stringify(value)}</td>`;
      args.appendChild(row);
    }
  }

  const input = $<HTMLInputElement>("input");
  input.disabled = state.terminated || !state.sessionId;
  $("banner").textContent = state.error ?? (state.terminated ? "Session ended." : "");
}

function onEvent(event: TraceEvent): void {
  state = { ...state, trace: mergeTrace(state.trace, [event]) };
  render();
}

async function connect(): Promise<void> {
  const strategy = $<HTMLSelectElement>("strategy").value;
  if (cancelStream) cancelStream();
  state = initialState(strategy);
  render();
  try {
    const created = await client.createSession(strategy);
    state = applyGreeting(state, created.id, created.greeting);
    const snapshot = await client.getState(created.id);
    state = { ...state, activeAgent: snapshot.active_agent, args: snapshot.args };
    cancelStream = client.streamEvents(created.id, onEvent);
  } catch (err) {
    state = applyError(state, `Cannot reach the server: ${String(err)}`);
  }
  render();
}

async function transmit(text: string): Promise<void> {
  if (!state.sessionId) return;
  try {
    const response = await client.sendMessage(state.sessionId, text);
    const snapshot = await client.getState(state.sessionId);
    const { state: merged, next } = applyTurn(state, response, snapshot);
    state = merged;
    render();
    if (next !== null) {
      const retry = requestSend(state, next);
      state = retry.state;
      render();
      if (retry.send !== null) await transmit(retry.send);
    }
  } catch (err) {
    state = applyError(state, String(err));
    render();
  }
}

function init(): void {
  const select = $<HTMLSelectElement>("strategy");
  for (const name of STRATEGIES) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name;
    select.appendChild(option);
  }
  select.addEventListener("change", () => void connect());
  $("retry").addEventListener("click", () => void connect());
  $<HTMLFormElement>("composer").addEventListener("submit", (e) => {
    e.preventDefault();
    const input = $<HTMLInputElement>("input");
    const { state: next, send } = requestSend(state, input.value);
    state = next;
    input.value = "";
    render();
    if (send !== null) void transmit(send);
  });
  void connect();
}

document.addEventListener("DOMContentLoaded", init);
