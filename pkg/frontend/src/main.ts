// Entry point: wires the three panels (labeling, history/policy, adjudication)
// onto index.html and binds the y/n keyboard shortcuts.

import { ApiError, ReviewApi } from './api.js';
import { LabelingSession } from './labeling.js';
import {
  renderFlaggedTable,
  renderHistorySvg,
  renderPolicySummary,
  renderStabilityBadge,
  escapeHtml,
} from './render.js';

const api = new ReviewApi();
const session = new LabelingSession(api, 10);

const el = (id: string) => document.getElementById(id)!;

function showCurrent(): void {
  const article = session.current;
  if (!article) {
    el('article-card').innerHTML =
      '<p class="muted">No batch loaded. Press "Next batch" to start.</p>';
    return;
  }
  el('article-card').innerHTML =
    `<h3>${escapeHtml(article.title)}</h3>` +
    `<p>${escapeHtml(article.abstract ?? '(no abstract)')}</p>` +
    `<p class="muted">${session.verdicts.size}/${session.articles.length} labeled ` +
    '&mdash; press <kbd>y</kbd> to include, <kbd>n</kbd> to exclude</p>';
}

async function refreshHistory(): Promise<void> {
  const history = await api.getHistory();
  el('history-chart').innerHTML = renderHistorySvg(history.points);
  el('stability').innerHTML = renderStabilityBadge(history.stable);
  el('batch-count').textContent = `${history.points.length} batches submitted`;
}

async function refreshFlagged(): Promise<void> {
  const { items } = await api.getFlagged();
  el('flagged-count').textContent = `${items.length} flagged articles`;
  el('flagged-table').innerHTML = renderFlaggedTable(items);
}

async function submitIfDone(): Promise<void> {
  if (!session.done) return;
  await session.submit();
  await refreshHistory();
  showCurrent();
}

function report(err: unknown): void {
  const msg = err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
  el('status').textContent = msg;
}

el('next-batch').addEventListener('click', () => {
  session.loadBatch().then(showCurrent).catch(report);
});

document.addEventListener('keydown', (event) => {
  if (event.key !== 'y' && event.key !== 'n') return;
  if (!session.current) return;
  session.label(event.key === 'y' ? 'include' : 'exclude');
  showCurrent();
  submitIfDone().catch(report);
});

for (const name of ['A', 'B'] as const) {
  el(`policy-${name}`).addEventListener('click', async () => {
    try {
      const resp = await api.postPolicy(name);
      el('policy-summary').textContent = renderPolicySummary(resp);
    } catch (err) {
      report(err);
    }
  });
}

el('flagged-table').addEventListener('click', async (event) => {
  const target = event.target as HTMLElement;
  const id = target.dataset.id;
  const decision = target.dataset.decision as 'include' | 'exclude' | undefined;
  if (!id || !decision) return;
  try {
    await api.postAdjudication(id, decision);
    await refreshFlagged();
  } catch (err) {
    report(err);
  }
});

refreshHistory().catch(report);
refreshFlagged().catch(report);
showCurrent();
