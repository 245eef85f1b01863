/** Thin typed client for the certification service HTTP API. */

import type {
  CandidateDetail,
  DecisionPayload,
  DecisionResponse,
  Progress,
  QueueResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ReviewApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? resp.statusText);
    }
    return body as T;
  }

  queue(status = "pending", limit = 200): Promise<QueueResponse> {
    return this.getJson(`/api/candidates?status=${status}&limit=${limit}`);
  }

  candidate(id: string): Promise<CandidateDetail> {
    return this.getJson(`/api/candidates/${encodeURIComponent(id)}`);
  }

  progress(): Promise<Progress> {
    return this.getJson(`/api/progress`);
  }

  async postDecision(id: string, payload: DecisionPayload): Promise<DecisionResponse> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/candidates/${encodeURIComponent(id)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      },
    );
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? resp.statusText);
    }
    return body as DecisionResponse;
  }
}
