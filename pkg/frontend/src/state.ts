/** Labeling session state machine, independent of the DOM. */

import { ApiError, type LabelApi, type Progress, type WindowRecord } from "./api.js";

export type SessionStatus = "loading" | "ready" | "done" | "empty" | "unreachable";

export interface SessionView {
  status: SessionStatus;
  /** Window under the cursor, or null when there is nothing to show. */
  current: WindowRecord | null;
  /** Labels toggled on for the current window but not yet committed. */
  pending: readonly string[];
  /** 0-based cursor position within the session queue. */
  position: number;
  /** Number of windows in the session queue. */
  count: number;
  progress: Progress;
  /** Inline error from the last failed action, or null. */
  error: string | null;
}

const PAGE_LIMIT = 200;

function sortByVocabulary(labels: Iterable<string>, vocabulary: readonly string[]): string[] {
  const order = new Map(vocabulary.map((label, i) => [label, i]));
  return [...labels].sort((a, b) => (order.get(a) ?? 0) - (order.get(b) ?? 0));
}

/**
 * Walks the unlabeled windows in service order. Label edits are local until
 * `commit()`, which PUTs them and only advances the cursor once the service
 * has acknowledged the write; on failure the local copy is rolled back.
 */
export class LabelSession {
  private status: SessionStatus = "loading";
  private queue: WindowRecord[] = [];
  private cursor = 0;
  private pending = new Set<string>();
  private labels: string[] = [];
  private progressState: Progress = { total: 0, labeled: 0, other_fraction: 0 };
  private error: string | null = null;
  private committing = false;

  constructor(private readonly api: LabelApi) {}

  get vocabulary(): readonly string[] {
    return this.labels;
  }

  async load(): Promise<void> {
    this.status = "loading";
    this.error = null;
    try {
      this.labels = await this.api.vocabulary();
      this.queue = [];
      let offset = 0;
      for (;;) {
        const page = await this.api.windows("unlabeled", offset, PAGE_LIMIT);
        this.queue.push(...page.windows);
        offset += page.windows.length;
        if (page.windows.length === 0 || offset >= page.total) break;
      }
      this.progressState = await this.api.progress();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.cursor = 0;
    this.status = this.queue.length === 0 ? "empty" : "ready";
    this.syncPending();
  }

  view(): SessionView {
    return {
      status: this.status,
      current: this.current(),
      pending: sortByVocabulary(this.pending, this.labels),
      position: this.cursor,
      count: this.queue.length,
      progress: this.progressState,
      error: this.error,
    };
  }

  /** Toggles a vocabulary label on the current window's pending set. */
  toggle(label: string): void {
    if (this.status !== "ready" || this.committing) return;
    if (!this.labels.includes(label)) {
      this.error = `unknown label: ${label}`;
      return;
    }
    this.error = null;
    if (this.pending.has(label)) {
      this.pending.delete(label);
    } else {
      this.pending.add(label);
    }
  }

  /**
   * Persists the pending labels for the current window and advances.
   * Returns true once the service has acknowledged the write.
   */
  async commit(): Promise<boolean> {
    const record = this.current();
    if (record === null || this.committing) return false;
    const submitted = sortByVocabulary(this.pending, this.labels);
    const previous = record.labels;
    record.labels = submitted;
    this.committing = true;
    this.error = null;
    try {
      const ack = await this.api.putLabels(record.id, submitted);
      record.labels = ack.labels;
      record.version = ack.version;
    } catch (err) {
      record.labels = previous;
      this.fail(err);
      return false;
    } finally {
      this.committing = false;
    }
    this.cursor += 1;
    if (this.cursor >= this.queue.length) {
      this.status = "done";
    }
    this.syncPending();
    await this.refreshProgress();
    return true;
  }

  /** Steps the cursor back to revisit the previous window. */
  undo(): void {
    if (this.committing || this.cursor === 0) return;
    if (this.status !== "ready" && this.status !== "done") return;
    this.cursor -= 1;
    this.status = "ready";
    this.error = null;
    this.syncPending();
  }

  /** Re-runs the initial load after the service came back. */
  async retry(): Promise<void> {
    await this.load();
  }

  private current(): WindowRecord | null {
    if (this.status !== "ready") return null;
    return this.queue[this.cursor] ?? null;
  }

  private syncPending(): void {
    this.pending = new Set(this.current()?.labels ?? []);
  }

  private async refreshProgress(): Promise<void> {
    try {
      this.progressState = await this.api.progress();
    } catch {
      // keep the last known numbers; the next commit retries
    }
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      if (err.unreachable) {
        this.status = "unreachable";
      }
      this.error = err.message;
    } else {
      this.status = "unreachable";
      this.error = String(err);
    }
  }
}
