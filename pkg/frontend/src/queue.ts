/**
 * Review queue state machine.
 *
 * The controller mirrors the server's pending queue for one category:
 * the current item is always the queue head, a verdict optimistically
 * advances to the next pending item, and a failed POST rolls back so the
 * item is not silently skipped. One verdict request is in flight at most.
 */

import type { ReviewApi } from "./api.js";
import type { ReviewItem, Verdict } from "./types.js";

export interface QueueEvents {
  onItemChanged?: (item: ReviewItem | null) => void;
  onCountsChanged?: (remaining: number) => void;
  onError?: (message: string) => void;
}

export class QueueController {
  private queue: ReviewItem[] = [];
  private inFlight = false;
  category = "";
  reviewer = "reviewer";
  verdictsIssued = 0;

  constructor(
    private readonly api: ReviewApi,
    private readonly events: QueueEvents = {},
  ) {}

  get current(): ReviewItem | null {
    return this.queue[0] ?? null;
  }

  get remaining(): number {
    return this.queue.length;
  }

  /** Load the category's pending items, following cursors to the end. */
  async selectCategory(category: string): Promise<void> {
    this.category = category;
    const pending: ReviewItem[] = [];
    let cursor = "";
    do {
      const page = await this.api.items(category, cursor);
      pending.push(...page.items.filter((i) => i.status === "pending"));
      cursor = page.cursor;
    } while (cursor);
    this.queue = pending;
    this.notify();
  }

  /**
   * Submit a verdict for the current item. Both the button path and the
   * keyboard path call this, so the request body is identical for both.
   */
  async submit(verdict: Verdict, reason = ""): Promise<boolean> {
    const item = this.current;
    if (!item || this.inFlight) {
      return false;
    }
    this.inFlight = true;
    this.queue = this.queue.slice(1); // optimistic advance
    this.notify();
    try {
      await this.api.submitVerdict(item.pair_id, {
        verdict,
        reviewer: this.reviewer,
        ...(reason ? { reason } : {}),
      });
      this.verdictsIssued += 1;
      return true;
    } catch (err) {
      this.queue = [item, ...this.queue]; // roll back
      this.notify();
      this.events.onError?.(err instanceof Error ? err.message : String(err));
      return false;
    } finally {
      this.inFlight = false;
    }
  }

  private notify(): void {
    this.events.onItemChanged?.(this.current);
    this.events.onCountsChanged?.(this.remaining);
  }
}
