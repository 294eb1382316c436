// Thin client for the adl HTTP service (JSON API + SSE trace stream).

export interface TraceEvent {
  seq: number;
  turn: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface TurnMetrics {
  token_cost: number;
  latency_ms: number;
  provider_calls: number;
}

export interface TurnResponse {
  bot: string[];
  terminated: boolean;
  trace: TraceEvent[];
  metrics: TurnMetrics;
}

export interface StateSnapshot {
  active_agent: string | null;
  args: Record<string, Record<string, unknown>>;
  transcript: { role: string; text: string }[];
  last_turn_metrics: TurnMetrics | null;
  terminated: boolean;
  strategy: string;
}

export interface ProgramInfo {
  agents: { name: string; type: string; description: string }[];
  graph: unknown;
}

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    const err = (body as { error?: { code?: string; message?: string } }).error ?? {};
    throw new ApiError(err.code ?? "E_HTTP", err.message ?? response.statusText, response.status);
  }
  return body as T;
}

export class ApiClient {
  constructor(private baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  async createSession(strategy?: string): Promise<{ id: string; greeting: string[] }> {
    const response = await fetch(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(strategy ? { strategy } : {}),
    });
    return unwrap(response);
  }

  async sendMessage(sessionId: string, text: string): Promise<TurnResponse> {
    const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    return unwrap(response);
  }

  async getState(sessionId: string): Promise<StateSnapshot> {
    return unwrap(await fetch(`${this.baseUrl}/api/sessions/${sessionId}/state`));
  }

  async getProgram(): Promise<ProgramInfo> {
    return unwrap(await fetch(`${this.baseUrl}/api/program`));
  }

  /**
   * Subscribe to the trace stream. Implemented over a streaming fetch (rather
   * than EventSource) so the same code runs in browsers and in tests.
   * Returns a function that cancels the subscription.
   */
  streamEvents(sessionId: string, onEvent: (event: TraceEvent) => void): () => void {
    const controller = new AbortController();
    void (async () => {
      try {
        const response = await fetch(`${this.baseUrl}/api/events/${sessionId}`, {
          signal: controller.signal,
        });
        if (!response.ok || !response.body) return;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let boundary;
          while ((boundary = buffer.indexOf("\n\n")) >= 0) {
            const chunk = buffer.slice(0, boundary);
            buffer = buffer.slice(boundary + 2);
            for (const line of chunk.split("\n")) {
              if (line.startsWith("data: ")) {
                onEvent(JSON.parse(line.slice("data: ".length)) as TraceEvent);
              }
            }
          }
        }
      } catch {
        // aborted or connection dropped; the poll-free UI degrades gracefully
      }
    })();
    return () => controller.abort();
  }
}
