/**
 * Thin client for the stmlforge session service. The UI never transforms
 * code itself: every displayed string originates from one of these calls.
 */

export interface CandidateInfo {
  rule: string;
  pos: number;
  verdict: "True" | "Unknown";
  preview_diff: string;
}

export interface PragmaGroup {
  pos: number;
  lines: string[];
}

export interface HistoryEntry {
  step: number;
  rule: string;
  pos: number;
}

export interface SessionState {
  session_id: string;
  code: string;
  target: string | null;
  pragmas: PragmaGroup[];
  candidates: CandidateInfo[];
  history: HistoryEntry[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }

  get isStaleCandidate(): boolean {
    return this.status === 409;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const text = await resp.text();
  if (!resp.ok) {
    let message = text;
    try {
      message = (JSON.parse(text) as { error?: string }).error ?? text;
    } catch {
      // non-JSON error body: report it as-is
    }
    throw new ApiError(resp.status, message);
  }
  return JSON.parse(text) as T;
}

export class SessionApi {
  constructor(readonly base: string = "") {}

  async createSession(source: string, target?: string): Promise<string> {
    const body: Record<string, string> = { source };
    if (target) body.target = target;
    const result = await request<{ session_id: string }>(`${this.base}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return result.session_id;
  }

  getState(sessionId: string): Promise<SessionState> {
    return request<SessionState>(`${this.base}/sessions/${sessionId}`);
  }

  apply(sessionId: string, rule: string, pos: number, force = false): Promise<SessionState> {
    return request<SessionState>(`${this.base}/sessions/${sessionId}/apply`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ rule, pos, force }),
    });
  }

  undo(sessionId: string): Promise<SessionState> {
    return request<SessionState>(`${this.base}/sessions/${sessionId}/undo`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
  }

  translate(sessionId: string, target: string): Promise<{ target: string; output: string }> {
    return request(`${this.base}/sessions/${sessionId}/translate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ target }),
    });
  }

  async exportLog(sessionId: string): Promise<string> {
    const resp = await fetch(`${this.base}/sessions/${sessionId}/export`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return resp.text();
  }
}
