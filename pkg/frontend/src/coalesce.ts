/** Request coalescing: at most one request in flight, the newest wins.
 *
 * Interactions during an in-flight request replace any queued one, so a
 * drag emits a single request at a time and stale work is skipped rather
 * than queued. Sequence numbers are assigned at submission; a response
 * whose submission has been superseded by a newer one is dropped at
 * commit time instead of being displayed.
 */

export class RequestCoalescer {
  private inFlight = false;
  private pending: (() => Promise<void>) | null = null;
  private issued = 0;
  private applied = 0;

  /** Total requests actually started (for tests and instrumentation). */
  started = 0;

  get busy(): boolean {
    return this.inFlight;
  }

  /**
   * Submit a unit of work. `run` receives this submission's sequence
   * number; pass it back to `commit` before applying the result.
   */
  submit(run: (seq: number) => Promise<void>): void {
    const seq = ++this.issued;
    const task = () => run(seq);
    if (this.inFlight) {
      this.pending = task; // newest wins; older queued work is discarded
      return;
    }
    void this.launch(task);
  }

  /** True when `seq` is the newest submission and not yet applied. */
  commit(seq: number): boolean {
    if (seq <= this.applied || seq < this.issued) return false;
    this.applied = seq;
    return true;
  }

  private async launch(task: () => Promise<void>): Promise<void> {
    this.inFlight = true;
    this.started += 1;
    try {
      await task();
    } finally {
      this.inFlight = false;
      const next = this.pending;
      this.pending = null;
      if (next) void this.launch(next);
    }
  }
}
