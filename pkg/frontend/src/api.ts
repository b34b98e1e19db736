// Thin typed client for the four backend endpoints. The base URL is
// configurable so the console can run against a server on another origin.

export interface QueryEntry {
  item_id: string;
  item_text: string;
  score: number;
}

export interface QueryResponse {
  request: string;
  model_tag: string;
  k: number;
  entries: QueryEntry[];
  latency_ms: number;
  used_fallback: boolean;
}

export interface ModelInfo {
  tag: string;
  kind: string;
  default: boolean;
}

export interface ModelsResponse {
  models: ModelInfo[];
  default: string;
}

export interface FeedbackItem {
  request_text: string;
  model_tag: string;
  k: number;
  rating: number;
}

export interface SummaryResponse {
  model_tag: string | null;
  count: number;
  mean: number | null;
  sd: number | null;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Pick the API base: explicit ?api= query param, then a global, then same origin. */
export function resolveApiBase(search: string = "", globals: Record<string, unknown> = {}): string {
  const params = new URLSearchParams(search);
  const fromParam = params.get("api");
  if (fromParam) return fromParam.replace(/\/+$/, "");
  const fromGlobal = globals["REQRANK_API_BASE"];
  if (typeof fromGlobal === "string" && fromGlobal.length > 0) return fromGlobal.replace(/\/+$/, "");
  return "";
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReqrankApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `network error: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText || `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = JSON.stringify(body.detail);
      } catch {
        // keep the status text when the body is not JSON
      }
      throw new ApiError(response.status, detail);
    }
    return response.json();
  }

  async models(): Promise<ModelsResponse> {
    return (await this.request("/api/models")) as ModelsResponse;
  }

  async query(text: string, k: number, modelTag?: string): Promise<QueryResponse> {
    const body: Record<string, unknown> = { text, k };
    if (modelTag) body["model_tag"] = modelTag;
    return (await this.request("/api/query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    })) as QueryResponse;
  }

  /** Resolves true when the rating was stored; throws only on network failure. */
  async feedback(item: FeedbackItem): Promise<boolean> {
    try {
      await this.request("/api/feedback", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(item),
      });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status > 0) return false;
      throw err;
    }
  }

  async summary(modelTag?: string): Promise<SummaryResponse> {
    const suffix = modelTag ? `?model_tag=${encodeURIComponent(modelTag)}` : "";
    return (await this.request(`/api/feedback/summary${suffix}`)) as SummaryResponse;
  }
}
