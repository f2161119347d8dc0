/** Typed client for the session service. All numbers come back exactly as
 * the service serialized them (JSON doubles); nothing is recomputed here. */

export interface SessionConfig {
  procedure: string;
  alpha: number;
  tau?: number;
  lambda?: number;
  gamma?: { kind: string; s?: number };
}

export interface SessionSummary {
  id: string;
  procedure: string;
  alpha: number;
  mode: string;
  step: number;
  remaining: number;
  level: number;
  submissions: number;
  created: number;
  updated: number;
}

export interface LevelInfo {
  step: number;
  level: number;
  tau: number;
  lambda: number;
  remaining: number;
}

export interface Decision {
  seq: number;
  step: number;
  p: number;
  level: number;
  tau: number;
  lambda: number;
  rejected: boolean;
  remaining: number;
}

export interface WhatIfReport {
  p: number;
  would_reject: boolean;
  next_remaining: number;
  next_level: number;
}

export interface History {
  id: string;
  decisions: Decision[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public constraint?: string,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const text = await response.text();
  let body: unknown;
  try {
    body = JSON.parse(text);
  } catch {
    throw new ApiError(response.status, "bad_response", text.slice(0, 200));
  }
  if (!response.ok) {
    const err = body as { code?: string; message?: string; constraint?: string };
    throw new ApiError(
      response.status,
      err.code ?? "error",
      err.message ?? text.slice(0, 200),
      err.constraint,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  createSession(config: SessionConfig): Promise<SessionSummary> {
    return request(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  listSessions(): Promise<SessionSummary[]> {
    return request(`${this.base}/sessions`);
  }

  getSession(id: string): Promise<SessionSummary> {
    return request(`${this.base}/sessions/${id}`);
  }

  getLevel(id: string): Promise<LevelInfo> {
    return request(`${this.base}/sessions/${id}/level`);
  }

  submit(id: string, p: number, seq: number): Promise<Decision> {
    return request(`${this.base}/sessions/${id}/pvalues`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ p, seq }),
    });
  }

  whatIf(id: string, p: number): Promise<WhatIfReport> {
    return request(`${this.base}/sessions/${id}/whatif?p=${encodeURIComponent(p)}`);
  }

  history(id: string): Promise<History> {
    return request(`${this.base}/sessions/${id}/history`);
  }
}
