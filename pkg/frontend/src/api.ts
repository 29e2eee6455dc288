// Typed client for the annotation endpoints. Shapes mirror the service's
// wire schemas; anything the server would reject is rejected here first
// by the review session, so this layer stays a thin transport.

export interface BatchSummary {
  id: string;
  mode: 'specific' | 'generic';
  epsilon: number;
  min_points: number;
  cluster_count: number;
  decided_count: number;
  applied_version: number | null;
}

export type MemberRow = [text: string, weight: number, distance: number];

export interface BatchCluster {
  id: number;
  effectiveness: number;
  size: number;
  total_weight: number;
  members: MemberRow[];
  samples: MemberRow[];
}

export type DecisionAction = 'choose' | 'reject' | 'merge';

export interface Decision {
  cluster_id: number;
  action: DecisionAction;
  intent_name: string | null;
  reason: string | null;
  merge_target: number | null;
}

export interface BatchDetail {
  id: string;
  mode: 'specific' | 'generic';
  epsilon: number;
  min_points: number;
  clusters: BatchCluster[];
  decisions: Decision[];
  applied_version: number | null;
}

export interface DecisionResponse {
  status: 'recorded' | 'unchanged';
  decided_count: number;
}

export interface ApplyResponse {
  store_version: number;
  intents_added: number;
  intent_count: number;
}

export interface VersionInfo {
  schema_version: number;
  store_version: number | null;
  intent_count: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === 'string' ? detail : JSON.stringify(detail));
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const body = await res.json().catch(() => null);
    if (!res.ok) {
      throw new ApiError(res.status, body?.detail ?? body);
    }
    return body as T;
  }

  version(): Promise<VersionInfo> {
    return this.request('/v1/version');
  }

  async listBatches(): Promise<BatchSummary[]> {
    const body = await this.request<{ batches: BatchSummary[] }>('/v1/annotation/batches');
    return body.batches;
  }

  getBatch(batchId: string): Promise<BatchDetail> {
    return this.request(`/v1/annotation/batches/${encodeURIComponent(batchId)}`);
  }

  postDecision(batchId: string, decision: Decision): Promise<DecisionResponse> {
    return this.request(`/v1/annotation/batches/${encodeURIComponent(batchId)}/decisions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(decision),
    });
  }

  applyBatch(batchId: string): Promise<ApplyResponse> {
    return this.request(`/v1/annotation/batches/${encodeURIComponent(batchId)}/apply`, {
      method: 'POST',
    });
  }
}
