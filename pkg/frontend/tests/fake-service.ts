// In-memory stand-in for the review service, mirroring its contract:
// one history point per accepted /labels batch, write-once adjudications
// (404 unknown / 409 repeat), and /policy arithmetic over the bin counts.

import { FlaggedItem, HistoryPoint } from '../src/api.js';

export const PAPER_BINS = [6308, 2661, 1345, 1721, 404];

const POLICY_EXCLUDED_BINS: Record<string, number[]> = { A: [0, 1], B: [0] };

export interface FakeStore {
  // shared across "reloads", like the service's JSONL file on disk
  adjudications: Map<string, string>;
}

export function makeFlaggedFixture(n: number): FlaggedItem[] {
  return Array.from({ length: n }, (_, i) => ({
    article_id: `art${String(i).padStart(3, '0')}`,
    file_name: `art${String(i).padStart(3, '0')}.txt`,
    article_title: `Flagged trial synthesis ${i}`,
    answers: { Q1: 'yes', Q2: 'yes', Q3: 'yes', Q4: 'yes', Q5: 'yes' },
    outcome_category: 'Falls',
    final_decision: 'included',
    verdict: 'Include',
    reason: 'gates passed, outcome includes Falls',
    chunks_used: { Q1: [0, 2, 3] },
    adjudication: null,
  }));
}

export class FakeReviewService {
  history: HistoryPoint[] = [];
  labeled = new Set<string>();
  poolIds: string[];
  bins: number[];
  flagged: FlaggedItem[];

  constructor(
    private store: FakeStore,
    opts: { poolSize?: number; bins?: number[]; flagged?: FlaggedItem[] } = {},
  ) {
    const poolSize = opts.poolSize ?? 100;
    this.poolIds = Array.from({ length: poolSize }, (_, i) => `p${i}`);
    this.bins = opts.bins ?? [poolSize, 0, 0, 0, 0];
    this.flagged = opts.flagged ?? [];
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, 'http://fake');
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (url.pathname === '/batch') {
      const n = Number(url.searchParams.get('n') ?? '100');
      const unlabeled = this.poolIds.filter((id) => !this.labeled.has(id));
      const articles = unlabeled.slice(0, n).map((id) => ({
        id,
        title: `Synthetic article ${id}`,
        abstract: `Abstract for ${id}.`,
      }));
      return this.json(200, { articles });
    }

    if (url.pathname === '/labels') {
      for (const item of body.labels) {
        if (!this.poolIds.includes(item.id)) {
          return this.json(404, { detail: `unknown article id ${item.id}` });
        }
        if (this.labeled.has(item.id)) {
          return this.json(409, { detail: `article ${item.id} already labeled` });
        }
      }
      for (const item of body.labels) this.labeled.add(item.id);
      const point = {
        labeled_count: this.labeled.size,
        bins: [...this.bins],
      };
      this.history.push(point);
      return this.json(200, {
        labeled_count: point.labeled_count,
        bin_counts: point.bins,
        stable: false,
      });
    }

    if (url.pathname === '/history') {
      return this.json(200, { points: this.history, stable: false });
    }

    if (url.pathname === '/policy') {
      const excluded = POLICY_EXCLUDED_BINS[body.name];
      if (!excluded) return this.json(422, { detail: 'unknown policy' });
      const auto = excluded.reduce((sum, b) => sum + this.bins[b], 0);
      const total = this.bins.reduce((a, c) => a + c, 0);
      return this.json(200, {
        policy: body.name,
        auto_excluded: auto,
        manual: total - auto,
      });
    }

    if (url.pathname === '/flagged') {
      const items = this.flagged.map((item) => ({
        ...item,
        adjudication: this.store.adjudications.get(item.article_id) ?? null,
      }));
      return this.json(200, { items });
    }

    if (url.pathname === '/adjudication') {
      if (!this.flagged.some((f) => f.article_id === body.article_id)) {
        return this.json(404, { detail: `article ${body.article_id} is not flagged` });
      }
      if (this.store.adjudications.has(body.article_id)) {
        return this.json(409, { detail: `article ${body.article_id} already adjudicated` });
      }
      this.store.adjudications.set(body.article_id, body.decision);
      return this.json(200, {
        article_id: body.article_id,
        decision: body.decision,
        adjudicated_count: this.store.adjudications.size,
      });
    }

    return this.json(404, { detail: `no route ${url.pathname}` });
  };
}
