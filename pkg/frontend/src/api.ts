/** Typed client for the label review API. */

import type {
  ErrorBody,
  Health,
  LabelsResponse,
  PairsResponse,
  RenameResponse,
  Resolution,
  ResolveResponse,
} from "./types.js";

/** The service answered with a non-2xx status and a flat JSON error body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(body.message ?? body.error);
    this.name = "ApiError";
  }

  /** Machine tag from the body, e.g. "version_conflict" or "name_collision". */
  get code(): string {
    return this.body.error;
  }

  /** Server-side version, present on 409 responses. */
  get currentVersion(): number | undefined {
    return this.body.current_version;
  }
}

/** The service could not be reached at all (network refused, DNS, abort). */
export class TransportError extends Error {
  constructor(message: string, readonly cause?: unknown) {
    super(message);
    this.name = "TransportError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The surface the store needs; ApiClient satisfies it structurally. */
export interface ReviewApi {
  health(): Promise<Health>;
  labels(): Promise<LabelsResponse>;
  pairs(): Promise<PairsResponse>;
  resolvePair(
    pairId: number,
    resolution: Resolution,
    expectedVersion: number,
    newName?: string,
  ): Promise<ResolveResponse>;
  renameLabel(
    labelId: number,
    newName: string,
    expectedVersion: number,
  ): Promise<RenameResponse>;
}

export class ApiClient implements ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string | null = null,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { accept: "application/json" };
    if (body !== undefined) {
      headers["content-type"] = "application/json";
    }
    if (this.token) {
      headers["authorization"] = `Bearer ${this.token}`;
    }
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new TransportError(`cannot reach the review service (${method} ${path})`, cause);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorBody(response));
    }
    return (await response.json()) as T;
  }

  health(): Promise<Health> {
    return this.request("GET", "/api/health");
  }

  labels(): Promise<LabelsResponse> {
    return this.request("GET", "/api/labels");
  }

  pairs(): Promise<PairsResponse> {
    return this.request("GET", "/api/pairs");
  }

  resolvePair(
    pairId: number,
    resolution: Resolution,
    expectedVersion: number,
    newName?: string,
  ): Promise<ResolveResponse> {
    const body: Record<string, unknown> = {
      resolution,
      expected_version: expectedVersion,
    };
    if (newName !== undefined) {
      body["new_name"] = newName;
    }
    return this.request("POST", `/api/pairs/${pairId}/resolution`, body);
  }

  renameLabel(
    labelId: number,
    newName: string,
    expectedVersion: number,
  ): Promise<RenameResponse> {
    return this.request("POST", `/api/labels/${labelId}/rename`, {
      new_name: newName,
      expected_version: expectedVersion,
    });
  }
}

async function errorBody(response: Response): Promise<ErrorBody> {
  try {
    const parsed: unknown = await response.json();
    if (
      typeof parsed === "object" &&
      parsed !== null &&
      typeof (parsed as { error?: unknown }).error === "string"
    ) {
      return parsed as ErrorBody;
    }
  } catch {
    // fall through: body was not JSON
  }
  return { error: `http_${response.status}` };
}
