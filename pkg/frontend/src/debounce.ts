/**
 * Trailing rate limiter for the threshold slider: at most one request in
 * flight, at most one send per `minIntervalMs`, and the newest pushed value
 * is always eventually sent. Intermediate values may be skipped.
 */
export class TrailingLimiter<T> {
  private pending: T | undefined;
  private hasPending = false;
  private inFlight = false;
  private lastSentAt = -Infinity;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly send: (value: T) => Promise<void>,
    private readonly minIntervalMs = 100,
  ) {}

  push(value: T): void {
    this.pending = value;
    this.hasPending = true;
    this.schedule();
  }

  get busy(): boolean {
    return this.inFlight || this.hasPending;
  }

  private schedule(): void {
    if (this.inFlight || this.timer !== null || !this.hasPending) {
      return;
    }
    const wait = Math.max(0, this.lastSentAt + this.minIntervalMs - Date.now());
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, wait);
  }

  private async fire(): Promise<void> {
    if (this.inFlight || !this.hasPending) {
      return;
    }
    const value = this.pending as T;
    this.hasPending = false;
    this.pending = undefined;
    this.inFlight = true;
    this.lastSentAt = Date.now();
    try {
      await this.send(value);
    } finally {
      this.inFlight = false;
      this.schedule();
    }
  }
}
