import type { FeedbackItem, QueryResponse } from "./api.js";

export const K_CHOICES = [3, 5, 7] as const;
export type KChoice = (typeof K_CHOICES)[number];

export function isKChoice(value: number): value is KChoice {
  return (K_CHOICES as readonly number[]).includes(value);
}

export function isValidRating(value: number): boolean {
  return Number.isInteger(value) && value >= 1 && value <= 5;
}

/**
 * Per-tab console session: the request being edited, the model and k
 * selection, the last response, and any ratings dialed in but not yet
 * submitted (keyed per panel so compare view keeps them apart).
 */
export class SessionState {
  text = "";
  modelTag: string | null = null;
  lastResponse: QueryResponse | null = null;

  private kValue: KChoice = 5;
  private readonly pending = new Map<string, number>();

  get k(): KChoice {
    return this.kValue;
  }

  setK(value: number): void {
    if (!isKChoice(value)) {
      throw new RangeError(`k must be one of ${K_CHOICES.join(", ")}, got ${value}`);
    }
    this.kValue = value;
  }

  canSubmit(): boolean {
    return this.text.trim().length > 0;
  }

  setPendingRating(panelId: string, rating: number): void {
    if (!isValidRating(rating)) {
      throw new RangeError(`rating must be an integer in [1, 5], got ${rating}`);
    }
    this.pending.set(panelId, rating);
  }

  pendingRating(panelId: string): number | null {
    const value = this.pending.get(panelId);
    return value === undefined ? null : value;
  }

  clearPendingRatings(): void {
    this.pending.clear();
  }
}

/** Posts one feedback item; resolves true on ack, false on rejection, throws when the server is unreachable. */
export type PostFeedback = (item: FeedbackItem) => Promise<boolean>;

export interface QueueCallbacks {
  /** Called after a successful post. */
  onStored?: (item: FeedbackItem) => void;
  /** Called when an item exhausted its attempts and was dropped from the queue. */
  onFailed?: (item: FeedbackItem) => void;
  /** Called whenever the queue length changes (for the queued indicator). */
  onChange?: () => void;
}

interface QueuedItem {
  item: FeedbackItem;
  rejections: number;
}

/**
 * FIFO feedback queue with at most one post in flight.
 *
 * A rejected item (the server answered but refused it) goes back to the
 * end of the queue once; a second rejection surfaces it through onFailed.
 * An unreachable server stops the drain with the item still at the front,
 * so nothing is lost; flush() retries once connectivity returns.
 */
export class FeedbackQueue {
  readonly failures: FeedbackItem[] = [];

  private readonly queue: QueuedItem[] = [];
  private draining = false;

  constructor(
    private readonly post: PostFeedback,
    private readonly callbacks: QueueCallbacks = {},
    private readonly maxRejections = 2,
  ) {}

  get size(): number {
    return this.queue.length;
  }

  get inFlight(): boolean {
    return this.draining;
  }

  enqueue(item: FeedbackItem): Promise<void> {
    if (!isValidRating(item.rating)) {
      throw new RangeError(`rating must be an integer in [1, 5], got ${item.rating}`);
    }
    this.queue.push({ item, rejections: 0 });
    this.callbacks.onChange?.();
    return this.drain();
  }

  /** Retry delivery of anything still queued (e.g. after the server comes back). */
  flush(): Promise<void> {
    return this.drain();
  }

  private async drain(): Promise<void> {
    if (this.draining) return;
    this.draining = true;
    try {
      while (this.queue.length > 0) {
        const head = this.queue[0];
        let stored: boolean;
        try {
          stored = await this.post(head.item);
        } catch {
          // Unreachable server: keep the item queued, give up for now.
          break;
        }
        this.queue.shift();
        if (stored) {
          this.callbacks.onStored?.(head.item);
        } else {
          head.rejections += 1;
          if (head.rejections < this.maxRejections) {
            this.queue.push(head);
          } else {
            this.failures.push(head.item);
            this.callbacks.onFailed?.(head.item);
          }
        }
        this.callbacks.onChange?.();
      }
    } finally {
      this.draining = false;
      this.callbacks.onChange?.();
    }
  }
}

export interface PanelResult {
  tag: string;
  response: QueryResponse | null;
  error: string | null;
}

/** Runs one query per model tag; a panel that fails carries its error instead of a response. */
export async function fanOutQuery(
  runQuery: (text: string, k: number, tag: string) => Promise<QueryResponse>,
  text: string,
  k: number,
  tags: readonly string[],
): Promise<PanelResult[]> {
  return Promise.all(
    tags.map(async (tag): Promise<PanelResult> => {
      try {
        return { tag, response: await runQuery(text, k, tag), error: null };
      } catch (err) {
        const message = err instanceof Error ? err.message : String(err);
        return { tag, response: null, error: message };
      }
    }),
  );
}
