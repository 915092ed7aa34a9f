// Typed client for the review service. Everything the UI knows about the
// backend goes through here; tests swap fetchFn for a fixture-backed stub.

export interface BatchArticle {
  id: string;
  title: string;
  abstract: string | null;
}

export interface LabelsResponse {
  labeled_count: number;
  bin_counts: number[];
  stable: boolean;
}

export interface HistoryPoint {
  labeled_count: number;
  bins: number[];
}

export interface HistoryResponse {
  points: HistoryPoint[];
  stable: boolean;
}

export interface PolicyResponse {
  policy: string;
  auto_excluded: number;
  manual: number;
}

export interface FlaggedItem {
  article_id: string;
  file_name: string;
  article_title: string;
  answers: Record<string, string>;
  outcome_category: string;
  final_decision: string;
  verdict: string;
  reason: string;
  chunks_used: Record<string, number[]>;
  adjudication: string | null;
}

export type LabelValue = 'include' | 'exclude';

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private base: string = '',
    private fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep statusText
      }
      throw new ApiError(resp.status, detail);
    }
    return resp.json() as Promise<T>;
  }

  getBatch(n: number): Promise<{ articles: BatchArticle[] }> {
    return this.request(`/batch?n=${n}`);
  }

  postLabels(labels: { id: string; label: LabelValue }[]): Promise<LabelsResponse> {
    return this.request('/labels', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ labels }),
    });
  }

  getHistory(): Promise<HistoryResponse> {
    return this.request('/history');
  }

  postPolicy(name: 'A' | 'B'): Promise<PolicyResponse> {
    return this.request('/policy', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ name }),
    });
  }

  getFlagged(): Promise<{ items: FlaggedItem[] }> {
    return this.request('/flagged');
  }

  postAdjudication(articleId: string, decision: LabelValue): Promise<unknown> {
    return this.request('/adjudication', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ article_id: articleId, decision }),
    });
  }
}
