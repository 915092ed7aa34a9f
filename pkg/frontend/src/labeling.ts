// Labeling flow state machine: fetch a batch, collect one verdict per
// article (y/n), submit the whole batch at once. Pure of DOM concerns so
// the contract tests can drive it directly.

import { BatchArticle, LabelValue, LabelsResponse, ReviewApi } from './api.js';

export class LabelingSession {
  articles: BatchArticle[] = [];
  verdicts = new Map<string, LabelValue>();
  cursor = 0;

  constructor(private api: ReviewApi, public batchSize = 10) {}

  async loadBatch(): Promise<void> {
    const { articles } = await this.api.getBatch(this.batchSize);
    this.articles = articles;
    this.verdicts.clear();
    this.cursor = 0;
  }

  get current(): BatchArticle | undefined {
    return this.articles[this.cursor];
  }

  get done(): boolean {
    return this.articles.length > 0 && this.verdicts.size === this.articles.length;
  }

  label(value: LabelValue): void {
    const article = this.current;
    if (!article) return;
    this.verdicts.set(article.id, value);
    if (this.cursor < this.articles.length - 1) this.cursor += 1;
  }

  /** Submit the finished batch; the service answers with fresh bin counts. */
  async submit(): Promise<LabelsResponse> {
    if (!this.done) {
      throw new Error(`batch not fully labeled (${this.verdicts.size}/${this.articles.length})`);
    }
    const labels = this.articles.map((a) => ({
      id: a.id,
      label: this.verdicts.get(a.id)!,
    }));
    const resp = await this.api.postLabels(labels);
    this.articles = [];
    this.verdicts.clear();
    this.cursor = 0;
    return resp;
  }
}
