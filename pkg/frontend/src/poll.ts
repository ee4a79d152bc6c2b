/** Status polling with a hard interval floor and at most one request in
 * flight, so a slow gateway never gets flooded. */

export const MIN_POLL_INTERVAL_MS = 1000;

export interface PollerOptions {
  intervalMs?: number;
  setTimeoutFn?: typeof setTimeout;
  clearTimeoutFn?: typeof clearTimeout;
}

export class Poller {
  readonly intervalMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private stopped = true;
  private readonly setTimeoutFn: typeof setTimeout;
  private readonly clearTimeoutFn: typeof clearTimeout;

  constructor(
    private readonly task: () => Promise<void>,
    options: PollerOptions = {},
  ) {
    this.intervalMs = Math.max(MIN_POLL_INTERVAL_MS, options.intervalMs ?? 2000);
    this.setTimeoutFn = options.setTimeoutFn ?? setTimeout;
    this.clearTimeoutFn = options.clearTimeoutFn ?? clearTimeout;
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    void this.runOnce();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      this.clearTimeoutFn(this.timer);
      this.timer = null;
    }
  }

  /** One poll cycle; overlapping calls are dropped, never queued. */
  async runOnce(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.task();
    } catch {
      // the task reports its own errors; polling always continues
    } finally {
      this.inFlight = false;
      if (!this.stopped) {
        this.timer = this.setTimeoutFn(() => void this.runOnce(), this.intervalMs);
      }
    }
  }
}
