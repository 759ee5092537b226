// Jog throttle: at most maxHz sends per second, always flushing the latest
// value (trailing edge), so the server sees the final slider position.

export class Throttle<T> {
  private lastSent = -Infinity;
  private pending: T | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly maxHz: number,
    private readonly emit: (value: T) => void,
    private readonly clock: () => number = () => Date.now(),
  ) {}

  get periodMs(): number {
    return 1000 / this.maxHz;
  }

  push(value: T): void {
    const now = this.clock();
    if (now - this.lastSent >= this.periodMs) {
      this.lastSent = now;
      this.emit(value);
      return;
    }
    this.pending = value;
    if (this.timer === null) {
      const wait = this.periodMs - (now - this.lastSent);
      this.timer = setTimeout(() => this.flush(), wait);
    }
  }

  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.pending !== null) {
      this.lastSent = this.clock();
      this.emit(this.pending);
      this.pending = null;
    }
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.pending = null;
  }
}
