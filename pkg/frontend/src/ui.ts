// DOM rendering for the two screens: batch list and cluster review.
// Cards render in server export order (rank order); a full re-render runs
// on every state change, with focus restored to the active control.

import { ApiClient, ApiError, BatchCluster, BatchSummary, Decision } from './api.js';
import { ReviewSession, ValidationError } from './state.js';

const SAMPLE_LIMIT = 25;

type Filter = 'all' | 'undecided' | 'choose' | 'reject' | 'merge';

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  private session: ReviewSession | null = null;
  private filter: Filter = 'all';
  private selected: number | null = null;
  private cardError = new Map<number, string>();
  private banner: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {
    document.addEventListener('keydown', (e) => this.onKey(e));
  }

  async showBatchList(): Promise<void> {
    this.session = null;
    this.root.replaceChildren(el('p', 'loading', 'Loading batches...'));
    let batches: BatchSummary[];
    try {
      batches = await this.api.listBatches();
    } catch (err) {
      this.root.replaceChildren(el('p', 'error', `Could not load batches: ${String(err)}`));
      return;
    }
    const screen = el('div', 'batch-list');
    screen.appendChild(el('h1', '', 'Annotation batches'));
    if (batches.length === 0) {
      screen.appendChild(el('p', 'empty', 'No batches exported yet.'));
    }
    for (const b of batches) {
      const row = el('div', 'batch-row');
      row.dataset.batchId = b.id;
      const title = el('a', 'batch-id', b.id) as HTMLAnchorElement;
      title.href = `#/batch/${encodeURIComponent(b.id)}`;
      row.appendChild(title);
      row.appendChild(el('span', `mode mode-${b.mode}`, b.mode));
      row.appendChild(el('span', 'count', `${b.decided_count}/${b.cluster_count} decided`));
      row.appendChild(
        el(
          'span',
          b.applied_version === null ? 'state open' : 'state applied',
          b.applied_version === null ? 'open' : `applied as v${b.applied_version}`,
        ),
      );
      screen.appendChild(row);
    }
    this.root.replaceChildren(screen);
  }

  async showReview(batchId: string): Promise<ReviewSession> {
    this.root.replaceChildren(el('p', 'loading', `Loading batch ${batchId}...`));
    const session = await ReviewSession.open(this.api, batchId);
    this.session = session;
    this.filter = 'all';
    this.selected = session.batch.clusters[0]?.id ?? null;
    this.cardError.clear();
    this.banner = null;
    session.subscribe(() => this.renderReview());
    this.renderReview();
    return session;
  }

  private visibleClusters(): BatchCluster[] {
    const s = this.session!;
    return s.batch.clusters.filter((c) => {
      const d = s.decisionFor(c.id);
      if (this.filter === 'all') return true;
      if (this.filter === 'undecided') return d === null;
      return d?.action === this.filter;
    });
  }

  private renderReview(): void {
    const s = this.session;
    if (!s) return;
    const active = document.activeElement as HTMLElement | null;
    const restoreKey = active?.dataset?.focusKey ?? null;

    const screen = el('div', 'review');
    screen.appendChild(this.reviewHeader(s));
    if (s.conflictNotice) {
      const notice = el('div', 'conflict-banner');
      notice.appendChild(el('span', '', s.conflictNotice));
      const refresh = el('button', 'refresh-btn', 'Refresh') as HTMLButtonElement;
      refresh.onclick = () => void s.refresh();
      notice.appendChild(refresh);
      screen.appendChild(notice);
    }
    if (this.banner) {
      screen.appendChild(el('div', 'banner', this.banner));
    }
    if (s.applyResult) {
      screen.appendChild(
        el(
          'div',
          'apply-banner',
          `Applied as store version ${s.applyResult.store_version}: ` +
            `${s.applyResult.intents_added} intents added, ` +
            `${s.applyResult.intent_count} total`,
        ),
      );
    }
    screen.appendChild(this.filterBar());
    const cards = el('div', 'cards');
    const ranks = new Map(s.batch.clusters.map((c, i) => [c.id, i + 1]));
    for (const cluster of this.visibleClusters()) {
      cards.appendChild(this.clusterCard(s, cluster, ranks.get(cluster.id)!));
    }
    screen.appendChild(cards);
    this.root.replaceChildren(screen);

    if (restoreKey) {
      const again = this.root.querySelector<HTMLElement>(`[data-focus-key="${restoreKey}"]`);
      again?.focus();
    }
  }

  private reviewHeader(s: ReviewSession): HTMLElement {
    const header = el('div', 'review-header');
    const back = el('a', 'back', 'all batches') as HTMLAnchorElement;
    back.href = '#/';
    header.appendChild(back);
    header.appendChild(el('h1', '', s.batch.id));
    header.appendChild(el('span', `mode mode-${s.batch.mode}`, s.batch.mode));
    header.appendChild(
      el('span', 'progress', `${s.decidedCount()}/${s.batch.clusters.length} decided`),
    );
    const apply = el('button', 'apply-btn', 'Apply batch') as HTMLButtonElement;
    apply.disabled = !s.canApply();
    apply.dataset.focusKey = 'apply';
    apply.onclick = () => void this.runApply(s);
    header.appendChild(apply);
    if (s.batch.applied_version !== null && !s.applyResult) {
      header.appendChild(el('span', 'state applied', `applied as v${s.batch.applied_version}`));
    }
    return header;
  }

  private async runApply(s: ReviewSession): Promise<void> {
    this.banner = null;
    try {
      await s.apply();
    } catch (err) {
      this.banner = err instanceof ApiError ? `Apply failed: ${err.message}` : String(err);
      this.renderReview();
    }
  }

  private filterBar(): HTMLElement {
    const bar = el('div', 'filters');
    const options: Filter[] = ['all', 'undecided', 'choose', 'reject', 'merge'];
    for (const option of options) {
      const btn = el(
        'button',
        `filter-btn${this.filter === option ? ' active' : ''}`,
        option,
      ) as HTMLButtonElement;
      btn.dataset.filter = option;
      btn.onclick = () => {
        this.filter = option;
        this.renderReview();
      };
      bar.appendChild(btn);
    }
    return bar;
  }

  private clusterCard(s: ReviewSession, cluster: BatchCluster, rank: number): HTMLElement {
    const decision = s.decisionFor(cluster.id);
    const card = el(
      'div',
      `card${this.selected === cluster.id ? ' selected' : ''}${decision ? ' decided' : ''}`,
    );
    card.dataset.clusterId = String(cluster.id);
    card.onclick = () => {
      if (this.selected !== cluster.id) {
        this.selected = cluster.id;
        this.renderReview();
      }
    };

    const head = el('div', 'card-head');
    head.appendChild(el('span', 'rank', `#${rank}`));
    head.appendChild(el('span', 'cluster-id', `cluster ${cluster.id}`));
    head.appendChild(el('span', 'effectiveness', cluster.effectiveness.toFixed(4)));
    head.appendChild(
      el('span', 'size', `${cluster.size} queries, weight ${cluster.total_weight.toFixed(1)}`),
    );
    if (decision) head.appendChild(this.decisionBadge(decision));
    if (s.isPending(cluster.id)) head.appendChild(el('span', 'pending', 'saving...'));
    card.appendChild(head);

    const samples = el('ul', 'samples');
    for (const [text, weight, distance] of cluster.samples.slice(0, SAMPLE_LIMIT)) {
      const item = el('li', 'sample');
      item.appendChild(el('span', 'sample-text', text));
      item.appendChild(el('span', 'sample-meta', `w=${weight} d=${distance.toFixed(3)}`));
      samples.appendChild(item);
    }
    card.appendChild(samples);

    const error = this.cardError.get(cluster.id);
    if (error) card.appendChild(el('p', 'card-error', error));
    if (!decision) card.appendChild(this.controls(s, cluster.id));
    return card;
  }

  private decisionBadge(d: Decision): HTMLElement {
    const label =
      d.action === 'choose'
        ? `chosen: ${d.intent_name}`
        : d.action === 'reject'
          ? `rejected: ${d.reason}`
          : `merged into cluster ${d.merge_target}`;
    return el('span', `decision decision-${d.action}`, label);
  }

  private controls(s: ReviewSession, clusterId: number): HTMLElement {
    const controls = el('div', 'controls');

    const chooseRow = el('div', 'control-row');
    const nameInput = el('input', 'name-input') as HTMLInputElement;
    nameInput.placeholder = 'intent name';
    nameInput.dataset.focusKey = `choose-${clusterId}`;
    const chooseBtn = el('button', 'choose-btn', 'Choose') as HTMLButtonElement;
    const submitChoose = () =>
      void this.submit(s, clusterId, { action: 'choose', intentName: nameInput.value });
    chooseBtn.onclick = submitChoose;
    nameInput.onkeydown = (e) => {
      if (e.key === 'Enter') submitChoose();
    };
    chooseRow.append(nameInput, chooseBtn);
    controls.appendChild(chooseRow);

    const rejectRow = el('div', 'control-row');
    const reasonInput = el('input', 'reason-input') as HTMLInputElement;
    reasonInput.placeholder = 'reject reason';
    reasonInput.dataset.focusKey = `reject-${clusterId}`;
    const rejectBtn = el('button', 'reject-btn', 'Reject') as HTMLButtonElement;
    const submitReject = () =>
      void this.submit(s, clusterId, { action: 'reject', reason: reasonInput.value });
    rejectBtn.onclick = submitReject;
    reasonInput.onkeydown = (e) => {
      if (e.key === 'Enter') submitReject();
    };
    rejectRow.append(reasonInput, rejectBtn);
    controls.appendChild(rejectRow);

    const mergeRow = el('div', 'control-row');
    const targetSelect = el('select', 'merge-select') as HTMLSelectElement;
    targetSelect.dataset.focusKey = `merge-${clusterId}`;
    const targets = s.mergeTargets().filter((t) => t !== clusterId);
    const placeholder = document.createElement('option');
    placeholder.value = '';
    placeholder.textContent = targets.length ? 'merge into...' : 'no chosen clusters yet';
    targetSelect.appendChild(placeholder);
    for (const t of targets) {
      const option = document.createElement('option');
      option.value = String(t);
      option.textContent = `cluster ${t} (${s.decisionFor(t)?.intent_name})`;
      targetSelect.appendChild(option);
    }
    const mergeBtn = el('button', 'merge-btn', 'Merge') as HTMLButtonElement;
    mergeBtn.disabled = targets.length === 0;
    mergeBtn.onclick = () => {
      if (targetSelect.value === '') return;
      void this.submit(s, clusterId, { action: 'merge', mergeTarget: Number(targetSelect.value) });
    };
    mergeRow.append(targetSelect, mergeBtn);
    controls.appendChild(mergeRow);
    return controls;
  }

  private async submit(
    s: ReviewSession,
    clusterId: number,
    input: Parameters<ReviewSession['decide']>[1],
  ): Promise<void> {
    this.cardError.delete(clusterId);
    try {
      await s.decide(clusterId, input);
    } catch (err) {
      if (err instanceof ValidationError) {
        this.cardError.set(clusterId, err.message);
        this.renderReview();
        return;
      }
      this.banner = `Decision failed: ${String(err)}`;
      this.renderReview();
    }
  }

  // j/k move the selection, c/r/m focus the matching control of the
  // selected card, Enter inside an input submits it (wired on the input).
  private onKey(e: KeyboardEvent): void {
    if (!this.session) return;
    const target = e.target as HTMLElement | null;
    if (target && (target.tagName === 'INPUT' || target.tagName === 'SELECT')) return;
    const visible = this.visibleClusters().map((c) => c.id);
    if (visible.length === 0) return;
    const at = this.selected === null ? -1 : visible.indexOf(this.selected);
    if (e.key === 'j' || e.key === 'ArrowDown') {
      this.selected = visible[Math.min(at + 1, visible.length - 1)] ?? null;
      this.renderReview();
      e.preventDefault();
    } else if (e.key === 'k' || e.key === 'ArrowUp') {
      this.selected = visible[Math.max(at - 1, 0)] ?? null;
      this.renderReview();
      e.preventDefault();
    } else if (e.key === 'c' || e.key === 'r' || e.key === 'm') {
      if (this.selected === null) return;
      const key = { c: 'choose', r: 'reject', m: 'merge' }[e.key];
      const control = this.root.querySelector<HTMLElement>(
        `[data-focus-key="${key}-${this.selected}"]`,
      );
      control?.focus();
      e.preventDefault();
    }
  }
}
