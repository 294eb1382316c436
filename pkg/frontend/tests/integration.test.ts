// End-to-end test against a real served program with the scripted provider.

import { spawn, type ChildProcess } from "node:child_process";
import { createServer } from "node:net";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  applyGreeting,
  applyTurn,
  initialState,
  matchesTranscript,
  requestSend,
  type ViewState,
} from "../src/state.js";

const ROOT = path.resolve(__dirname, "..", "..");
const PROGRAM = path.join(ROOT, "corpus", "bookstore.yaml");
const RULES = path.join(ROOT, "tests", "fixtures", "bookstore_full_rules.yaml");

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

let proc: ChildProcess;
let client: ApiClient;

beforeAll(async () => {
  const port = await freePort();
  proc = spawn(
    "python3",
    [
      "-m",
      "adl.cli",
      "serve",
      PROGRAM,
      "--provider",
      `scripted:${RULES}`,
      "--port",
      String(port),
    ],
    { cwd: ROOT, stdio: "ignore" },
  );
  client = new ApiClient(`http://127.0.0.1:${port}`);
  const deadline = Date.now() + 20000;
  for (;;) {
    try {
      await client.getProgram();
      break;
    } catch {
      if (Date.now() > deadline) throw new Error("server did not start");
      await new Promise((r) => setTimeout(r, 150));
    }
  }
}, 30000);

afterAll(() => {
  proc?.kill();
});

async function sendThrough(state: ViewState, text: string): Promise<ViewState> {
  const { state: pending, send } = requestSend(state, text);
  expect(send).toBe(text);
  const response = await client.sendMessage(pending.sessionId!, text);
  const snapshot = await client.getState(pending.sessionId!);
  return applyTurn(pending, response, snapshot).state;
}

describe("console against a live server", () => {
  it("connects, flips the badge on intent shift, and mirrors the transcript", async () => {
    const created = await client.createSession("proactive");
    let state = applyGreeting(initialState("proactive"), created.id, created.greeting);
    expect(created.greeting.length).toBeGreaterThan(0);

    state = await sendThrough(
      state,
      "Actually, I'd like to place an order for a book instead.",
    );
    expect(state.activeAgent).toBe("order");
    expect(state.bubbles[state.bubbles.length - 1].role).toBe("bot");

    // every rendered bubble appears verbatim, in order, in the server transcript
    const snapshot = await client.getState(created.id);
    expect(matchesTranscript(state, snapshot.transcript as { role: string; text: string }[])).toBe(
      true,
    );
  }, 30000);

  it("streams trace events covering the turn", async () => {
    const created = await client.createSession("proactive");
    const events: number[] = [];
    const cancel = client.streamEvents(created.id, (e) => events.push(e.seq));
    const response = await client.sendMessage(
      created.id,
      "Actually, I'd like to place an order for a book instead.",
    );
    const deadline = Date.now() + 10000;
    while (events.length < response.trace.length && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 100));
    }
    cancel();
    // feed is ordered and covers at least the turn the server reported
    expect(events.length).toBeGreaterThanOrEqual(response.trace.length);
    expect([...events].sort((a, b) => a - b)).toEqual(events);
  }, 30000);

  it("lists the program's agents", async () => {
    const program = await client.getProgram();
    const names = program.agents.map((a) => a.name);
    expect(names).toContain("order");
    expect(names).toContain("triage");
  });
});
