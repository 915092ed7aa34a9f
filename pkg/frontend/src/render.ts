// HTML/SVG string builders. Kept as pure functions returning markup so the
// contract tests can assert on output without a DOM.

import { FlaggedItem, HistoryPoint, PolicyResponse } from './api.js';

export const BIN_LABELS = [
  'Most Likely To Exclude',
  'Likely To Exclude',
  'Undecided',
  'Likely To Include',
  'Most Likely To Include',
];

const BIN_COLORS = ['#b23b3b', '#d98943', '#c9b458', '#7da35c', '#3b7a4f'];

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function formatCount(n: number): string {
  return n.toLocaleString('en-US');
}

export function renderPolicySummary(resp: PolicyResponse): string {
  return (
    `Threshold ${resp.policy}: ` +
    `${formatCount(resp.auto_excluded)} auto-excluded, ` +
    `${formatCount(resp.manual)} for manual review`
  );
}

export function renderStabilityBadge(stable: boolean): string {
  return stable
    ? '<span class="badge stable">stable</span>'
    : '<span class="badge training">still moving</span>';
}

/** Stacked-share line chart of the five bins over labeling progress. */
export function renderHistorySvg(
  points: HistoryPoint[],
  width = 640,
  height = 220,
): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${width} ${height}"><text x="12" y="24">no batches submitted yet</text></svg>`;
  }
  const xs = points.map((p) => p.labeled_count);
  const xMin = xs[0];
  const xSpan = Math.max(1, xs[xs.length - 1] - xMin);
  const lines = BIN_LABELS.map((label, b) => {
    const path = points
      .map((p, i) => {
        const pool = p.bins.reduce((a, c) => a + c, 0) || 1;
        const x = ((p.labeled_count - xMin) / xSpan) * (width - 40) + 30;
        const y = height - 20 - (p.bins[b] / pool) * (height - 40);
        return `${i === 0 ? 'M' : 'L'}${x.toFixed(1)},${y.toFixed(1)}`;
      })
      .join(' ');
    return `<path d="${path}" fill="none" stroke="${BIN_COLORS[b]}" stroke-width="2"><title>${label}</title></path>`;
  });
  return `<svg viewBox="0 0 ${width} ${height}" class="history-chart">${lines.join('')}</svg>`;
}

export function renderFlaggedRow(item: FlaggedItem): string {
  const chunks = Object.entries(item.chunks_used)
    .map(([q, idx]) => `${q}: [${idx.join(', ')}]`)
    .join('; ');
  const adjudication = item.adjudication
    ? `<span class="adjudicated ${item.adjudication}">${item.adjudication}</span>`
    : `<button data-id="${escapeHtml(item.article_id)}" data-decision="include">include</button>` +
      `<button data-id="${escapeHtml(item.article_id)}" data-decision="exclude">exclude</button>`;
  return (
    `<tr data-article="${escapeHtml(item.article_id)}">` +
    `<td>${escapeHtml(item.article_title)}</td>` +
    `<td>${escapeHtml(item.outcome_category)}</td>` +
    `<td>${escapeHtml(item.verdict)}</td>` +
    `<td class="chunks">${escapeHtml(chunks)}</td>` +
    `<td>${adjudication}</td>` +
    '</tr>'
  );
}

export function renderFlaggedTable(items: FlaggedItem[]): string {
  const rows = items.map(renderFlaggedRow).join('\n');
  return (
    '<table class="flagged"><thead><tr>' +
    '<th>Title</th><th>Outcome</th><th>Model verdict</th>' +
    '<th>Context chunks</th><th>Adjudication</th>' +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}
