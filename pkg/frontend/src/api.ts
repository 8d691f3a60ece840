/** Typed client for the platform REST API. All values are server-computed;
 * this module only moves JSON and never invents state. */

export interface Accuracy {
  numerator: number;
  denominator: number;
  decimal: number;
}

export interface LeaderboardEntry {
  model: string;
  dataset: string;
  mode: string;
  accuracy: Accuracy;
  time_per_sample_s: number;
  num_samples: number;
  total_communication_bytes: number;
  completed_at: number;
  request_id: string;
  prev_hash: string;
  entry_hash: string;
}

export type RequestStateName =
  | "Requested"
  | "Approved"
  | "Running"
  | "Completed"
  | "Failed"
  | "Refused";

export interface EvaluationRequest {
  id: string;
  model: string;
  dataset: string;
  mode: string;
  created_by: string;
  state: RequestStateName;
  commitment_root: string | null;
  created_at: number;
  updated_at: number;
  failure_reason: string | null;
  cert_serials: number[];
  record: Record<string, unknown> | null;
}

export interface AuditSession {
  session_id: string;
  variant: "HonestOwner" | "Committed";
  kappa: number;
  alpha: number;
  bound: number;
  state: string;
  indices: number[] | null;
  verdict: "Accepted" | "Rejected" | null;
  rejection_reason: string | null;
  per_index_results: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly requestId: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface DatasetRegistration {
  name: string;
  num_features: number;
  num_classes: number;
  t?: number;
  root?: { root: string; t: number };
  points?: { input: number[]; label: number }[];
  salts?: string[];
}

export type ModelRegistration =
  | { name: string; kind: "inline"; model: Record<string, unknown> }
  | { name: string; kind: "remote"; url: string; credential?: string; num_classes: number };

export interface AuditParams {
  dataset: string;
  variant?: "HonestOwner" | "Committed";
  kappa?: number;
  alpha?: number;
  seed?: number;
}

export function newIdempotencyKey(): string {
  const c = globalThis.crypto;
  if (c && "randomUUID" in c) return c.randomUUID();
  return `ik-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class PlatformClient {
  constructor(
    private readonly baseUrl: string,
    private readonly identity: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  withIdentity(identity: string): PlatformClient {
    return new PlatformClient(this.baseUrl, identity, this.fetchFn);
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.identity) headers["X-Identity"] = this.identity;
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network", `platform unreachable: ${(err as Error).message}`, "");
    }
    const payload = await res.json().catch(() => ({}));
    if (!res.ok) {
      throw new ApiError(
        res.status,
        String(payload.code ?? "error"),
        String(payload.message ?? payload.detail ?? res.statusText),
        String(payload.request_id ?? ""),
      );
    }
    return payload as T;
  }

  registerDataset(body: DatasetRegistration): Promise<Record<string, unknown>> {
    return this.call("POST", "/datasets", body);
  }

  registerModel(body: ModelRegistration): Promise<Record<string, unknown>> {
    return this.call("POST", "/models", body);
  }

  createRequest(
    model: string,
    dataset: string,
    mode: string,
    idempotencyKey?: string,
  ): Promise<EvaluationRequest> {
    return this.call("POST", "/requests", {
      model,
      dataset,
      mode,
      idempotency_key: idempotencyKey,
    });
  }

  approveRequest(rid: string): Promise<EvaluationRequest> {
    return this.call("POST", `/requests/${rid}/approve`);
  }

  refuseRequest(rid: string, reason = "refused"): Promise<EvaluationRequest> {
    return this.call("POST", `/requests/${rid}/refuse`, { reason });
  }

  getRequest(rid: string): Promise<EvaluationRequest> {
    return this.call("GET", `/requests/${rid}`);
  }

  async getLeaderboard(dataset?: string, mode?: string): Promise<LeaderboardEntry[]> {
    const params = new URLSearchParams();
    if (dataset) params.set("dataset", dataset);
    if (mode) params.set("mode", mode);
    const qs = params.toString();
    const res = await this.call<{ entries: LeaderboardEntry[] }>(
      "GET",
      `/leaderboard${qs ? `?${qs}` : ""}`,
    );
    return res.entries;
  }

  createAudit(params: AuditParams): Promise<AuditSession> {
    return this.call("POST", "/audits", params);
  }

  getAudit(aid: string): Promise<AuditSession> {
    return this.call("GET", `/audits/${aid}`);
  }
}
