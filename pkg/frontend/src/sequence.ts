// Request pacing: a trailing-edge debouncer caps the request rate, and a
// sequence gate discards responses that complete out of order, so the
// displayed image always belongs to the newest request.

type Schedule = (fn: () => void, ms: number) => unknown;
type Cancel = (handle: unknown) => void;

export class Debouncer {
  private handle: unknown = null;

  constructor(
    private readonly intervalMs = 100, // <= 10 requests per second
    private readonly schedule: Schedule = (fn, ms) => setTimeout(fn, ms),
    private readonly cancel: Cancel = (h) => clearTimeout(h as number),
  ) {}

  run(fn: () => void): void {
    if (this.handle !== null) this.cancel(this.handle);
    this.handle = this.schedule(() => {
      this.handle = null;
      fn();
    }, this.intervalMs);
  }
}

export class LatestGate {
  private counter = 0;

  next(): number {
    return ++this.counter;
  }

  isCurrent(seq: number): boolean {
    return seq === this.counter;
  }
}
