/** Typed fetch client for the scoring service. */

import type {
  ExampleDetail,
  ExampleListResponse,
  HealthResponse,
  PerturbResponse,
  ScoreResponse,
  SortOrder,
  Substitution,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && body.detail !== undefined) {
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  health(): Promise<HealthResponse> {
    return request(`${this.baseUrl}/health`);
  }

  listExamples(
    sort: SortOrder = "lambda_desc",
    offset = 0,
    limit = 20,
  ): Promise<ExampleListResponse> {
    const params = new URLSearchParams({
      sort,
      offset: String(offset),
      limit: String(limit),
    });
    return request(`${this.baseUrl}/examples?${params.toString()}`);
  }

  exampleDetail(id: string): Promise<ExampleDetail> {
    return request(`${this.baseUrl}/examples/${encodeURIComponent(id)}`);
  }

  score(text: string): Promise<ScoreResponse> {
    return request(`${this.baseUrl}/score`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  perturb(text: string, substitutions: Substitution[]): Promise<PerturbResponse> {
    return request(`${this.baseUrl}/perturb`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, substitutions }),
    });
  }
}
