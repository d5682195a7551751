// Thin typed client for the loqa service JSON API. Every function does one
// fetch and returns the parsed payload; non-2xx responses become ApiError
// so views can branch on status (422 vs network trouble) without string
// matching.

// ---- Payload types ----

export interface HealthInfo {
  status: string;
  version: string;
  windows: number;
  labels: number;
  embed_dim: number | null;
}

export interface QuerySpec {
  function: string;
  contexts: string[];
  scope: Record<string, unknown>;
}

export interface Decomposition {
  source: string;
  category: string;
  marked: string;
  specs: QuerySpec[];
}

export interface ChatResponse {
  session_id: string;
  question: string;
  category: string;
  answer: string;
  short: string;
  decomposition: Decomposition;
  contexts: string[];
  trace: string[];
  latency_ms: number;
  error: string | null;
  now: number;
}

export interface SessionHistory {
  session_id: string;
  history: { question: string; answer: string; short: string; now: number }[];
}

export interface LabelScore {
  label: string;
  score: number;
}

export interface TimelineEntry {
  timestamp: number;
  user_id: string;
  labels: LabelScore[];
}

export interface TimelineResponse {
  entries: TimelineEntry[];
  count: number;
}

// ---- Errors ----

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

// ---- Client ----

export class ApiClient {
  base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body, keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/api/health");
  }

  labels(): Promise<string[]> {
    return this.request<{ labels: string[] }>("/api/labels").then(
      (r) => r.labels,
    );
  }

  chat(
    question: string,
    sessionId: string,
    opts: { now?: number; userId?: string } = {},
  ): Promise<ChatResponse> {
    return this.request<ChatResponse>("/api/chat", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        question,
        session_id: sessionId,
        now: opts.now ?? null,
        user_id: opts.userId ?? null,
      }),
    });
  }

  session(sessionId: string): Promise<SessionHistory> {
    return this.request<SessionHistory>(
      `/api/session/${encodeURIComponent(sessionId)}`,
    );
  }

  timeline(
    start: number,
    end: number,
    opts: { userId?: string; k?: number } = {},
  ): Promise<TimelineResponse> {
    const params = new URLSearchParams({
      start: String(start),
      end: String(end),
    });
    if (opts.userId) params.set("user_id", opts.userId);
    if (opts.k) params.set("k", String(opts.k));
    return this.request<TimelineResponse>(`/api/timeline?${params}`);
  }
}
