// Typed client for the tappability analysis service. The UI never computes
// probabilities or mismatch flags itself; every number on screen comes out
// of an AnalysisResponse.

export interface ElementBounds {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ElementResult {
  element_id: string;
  bounds: ElementBounds;
  clickable: boolean;
  probability: number;
  perceived_tappable: boolean;
  mismatch: boolean;
}

export interface AnalysisResponse {
  elements: ElementResult[];
  model_version: string;
  threshold_used: number;
}

export interface HealthResponse {
  status: string;
  model_version: string;
  threshold: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly reason: string,
  ) {
    super(`analysis service returned ${status}: ${reason}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class AnalysisClient {
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  // At most one analyze request is in flight; a newer one aborts the older.
  async analyze(screenshot: Blob, hierarchy: Blob, threshold?: number): Promise<AnalysisResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;

    const form = new FormData();
    form.append("screenshot", screenshot, "screenshot.png");
    form.append("hierarchy", hierarchy, "hierarchy.json");
    const query = threshold === undefined ? "" : `?threshold=${threshold}`;
    const response = await this.fetchImpl(`${this.baseUrl}/analyze${query}`, {
      method: "POST",
      body: form,
      signal: controller.signal,
    });
    if (this.inflight === controller) {
      this.inflight = null;
    }
    if (!response.ok) {
      let reason = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.error === "string") reason = body.error;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, reason);
    }
    return (await response.json()) as AnalysisResponse;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/health`);
    if (!response.ok) {
      throw new ApiError(response.status, "model not available");
    }
    return (await response.json()) as HealthResponse;
  }
}
