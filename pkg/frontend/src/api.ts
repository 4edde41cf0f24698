/** Typed client for the window labeling service HTTP API. */

export interface WindowRecord {
  id: number;
  series_id: string;
  fold: number;
  source_index: number;
  start: number;
  end: number;
  padded: boolean;
  noise_bin: string | null;
  sigma: number | null;
  values: number[];
  raw_values: number[] | null;
  labels: string[];
  version: number;
}

export interface WindowPage {
  total: number;
  offset: number;
  windows: WindowRecord[];
}

export interface Progress {
  total: number;
  labeled: number;
  other_fraction: number;
}

export interface LabelUpdate {
  id: number;
  labels: string[];
  version: number;
}

export type WindowStatus = "all" | "labeled" | "unlabeled";

/**
 * Error raised for any failed request. `status` is the HTTP status code,
 * or 0 when the service could not be reached at all.
 */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get unreachable(): boolean {
    return this.status === 0;
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body: unknown = await resp.json();
    if (body && typeof body === "object" && "detail" in body) {
      const detail = (body as { detail: unknown }).detail;
      if (typeof detail === "string") return detail;
      return JSON.stringify(detail);
    }
  } catch {
    // fall through to the status text
  }
  return resp.statusText || `request failed with status ${resp.status}`;
}

export class LabelClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `labeling service unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorDetail(resp));
    }
    return (await resp.json()) as T;
  }

  vocabulary(): Promise<string[]> {
    return this.request<string[]>("/vocabulary");
  }

  windows(status: WindowStatus = "all", offset = 0, limit = 50): Promise<WindowPage> {
    return this.request<WindowPage>(
      `/windows?status=${status}&offset=${offset}&limit=${limit}`,
    );
  }

  window(id: number): Promise<WindowRecord> {
    return this.request<WindowRecord>(`/windows/${id}`);
  }

  putLabels(id: number, labels: string[]): Promise<LabelUpdate> {
    return this.request<LabelUpdate>(`/windows/${id}/labels`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ labels }),
    });
  }

  progress(): Promise<Progress> {
    return this.request<Progress>("/progress");
  }
}

/** The subset of the client the labeling session depends on. */
export interface LabelApi {
  vocabulary(): Promise<string[]>;
  windows(status?: WindowStatus, offset?: number, limit?: number): Promise<WindowPage>;
  putLabels(id: number, labels: string[]): Promise<LabelUpdate>;
  progress(): Promise<Progress>;
}
