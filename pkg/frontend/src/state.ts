// Review session for one annotation batch. All rules the server enforces
// on decisions are checked here first, so the client only ever submits
// payloads the service accepts; a 409 still happens when another reviewer
// decided the same cluster, and then the optimistic entry is rolled back.

import {
  ApiClient,
  ApiError,
  ApplyResponse,
  BatchDetail,
  Decision,
  DecisionAction,
} from './api.js';

export interface DecideInput {
  action: DecisionAction;
  intentName?: string;
  reason?: string;
  mergeTarget?: number;
}

export type DecideOutcome = 'recorded' | 'unchanged' | 'conflict';

// Mirrors the server's intent id derivation so duplicate names are caught
// before submit.
export function slugifyIntentName(name: string): string {
  const lowered = name.trim().toLowerCase();
  let slug = '';
  for (const ch of lowered) {
    slug += /[\p{L}\p{N}]/u.test(ch) ? ch : '_';
  }
  slug = slug.replace(/_+/g, '_').replace(/^_|_$/g, '');
  return slug;
}

export class ValidationError extends Error {}

export class ReviewSession {
  private decisions = new Map<number, Decision>();
  private pending = new Set<number>();
  private listeners: Array<() => void> = [];
  conflictNotice: string | null = null;
  applyResult: ApplyResponse | null = null;

  private constructor(
    private readonly api: ApiClient,
    public batch: BatchDetail,
  ) {
    this.ingest(batch);
  }

  static async open(api: ApiClient, batchId: string): Promise<ReviewSession> {
    return new ReviewSession(api, await api.getBatch(batchId));
  }

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l();
  }

  private ingest(batch: BatchDetail): void {
    this.batch = batch;
    this.decisions = new Map(batch.decisions.map((d) => [d.cluster_id, d]));
    this.pending.clear();
  }

  async refresh(): Promise<void> {
    this.ingest(await this.api.getBatch(this.batch.id));
    this.conflictNotice = null;
    this.emit();
  }

  decisionFor(clusterId: number): Decision | null {
    return this.decisions.get(clusterId) ?? null;
  }

  isPending(clusterId: number): boolean {
    return this.pending.has(clusterId);
  }

  decidedCount(): number {
    return this.decisions.size;
  }

  undecidedIds(): number[] {
    return this.batch.clusters.map((c) => c.id).filter((id) => !this.decisions.has(id));
  }

  // Merge may only target clusters that are currently chosen.
  mergeTargets(): number[] {
    return [...this.decisions.values()]
      .filter((d) => d.action === 'choose')
      .map((d) => d.cluster_id)
      .sort((a, b) => a - b);
  }

  private chosenSlugs(exceptCluster: number): Set<string> {
    const slugs = new Set<string>();
    for (const d of this.decisions.values()) {
      if (d.action === 'choose' && d.cluster_id !== exceptCluster && d.intent_name) {
        slugs.add(slugifyIntentName(d.intent_name));
      }
    }
    return slugs;
  }

  validate(clusterId: number, input: DecideInput): Decision {
    if (!this.batch.clusters.some((c) => c.id === clusterId)) {
      throw new ValidationError(`cluster ${clusterId} is not in this batch`);
    }
    const decision: Decision = {
      cluster_id: clusterId,
      action: input.action,
      intent_name: null,
      reason: null,
      merge_target: null,
    };
    if (input.action === 'choose') {
      const name = (input.intentName ?? '').trim();
      if (!name) throw new ValidationError('choose needs an intent name');
      const slug = slugifyIntentName(name);
      if (!slug) throw new ValidationError('intent name has no usable characters');
      if (this.chosenSlugs(clusterId).has(slug)) {
        throw new ValidationError(`intent id "${slug}" is already used in this batch`);
      }
      decision.intent_name = name;
    } else if (input.action === 'reject') {
      const reason = (input.reason ?? '').trim();
      if (!reason) throw new ValidationError('reject needs a reason');
      decision.reason = reason;
    } else {
      if (input.mergeTarget === undefined) {
        throw new ValidationError('merge needs a target cluster');
      }
      if (input.mergeTarget === clusterId) {
        throw new ValidationError('a cluster cannot merge into itself');
      }
      if (!this.mergeTargets().includes(input.mergeTarget)) {
        throw new ValidationError(`cluster ${input.mergeTarget} is not a chosen cluster`);
      }
      decision.merge_target = input.mergeTarget;
    }
    const existing = this.decisions.get(clusterId);
    if (existing && !sameDecision(existing, decision)) {
      throw new ValidationError(
        `cluster ${clusterId} already has a decision; refresh to change course`,
      );
    }
    return decision;
  }

  async decide(clusterId: number, input: DecideInput): Promise<DecideOutcome> {
    const decision = this.validate(clusterId, input);
    const existing = this.decisions.get(clusterId);
    if (existing && sameDecision(existing, decision)) {
      return 'unchanged';
    }
    // Optimistic: show the decision immediately, roll back if the server
    // knows better.
    this.decisions.set(clusterId, decision);
    this.pending.add(clusterId);
    this.emit();
    try {
      await this.api.postDecision(this.batch.id, decision);
      this.pending.delete(clusterId);
      this.emit();
      return 'recorded';
    } catch (err) {
      this.decisions.delete(clusterId);
      this.pending.delete(clusterId);
      if (err instanceof ApiError && err.status === 409) {
        this.conflictNotice =
          `cluster ${clusterId} was decided elsewhere; refresh to see the recorded decision`;
        this.emit();
        return 'conflict';
      }
      this.emit();
      throw err;
    }
  }

  canApply(): boolean {
    return (
      this.batch.applied_version === null &&
      this.pending.size === 0 &&
      this.undecidedIds().length === 0 &&
      this.batch.clusters.length > 0
    );
  }

  async apply(): Promise<ApplyResponse> {
    if (!this.canApply()) {
      throw new ValidationError('batch is not fully decided yet');
    }
    const result = await this.api.applyBatch(this.batch.id);
    this.applyResult = result;
    this.batch.applied_version = result.store_version;
    this.emit();
    return result;
  }
}

function sameDecision(a: Decision, b: Decision): boolean {
  return (
    a.action === b.action &&
    a.intent_name === b.intent_name &&
    a.reason === b.reason &&
    a.merge_target === b.merge_target
  );
}
