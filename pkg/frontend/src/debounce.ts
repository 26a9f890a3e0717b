/**
 * Trailing debounce with a max-wait ceiling. A plain trailing debounce would
 * starve the preview during a continuous drag, so once `maxWaitMs` has passed
 * since the first deferred call the pending operation fires even if events
 * keep arriving. Consecutive fires are therefore at least `delayMs` apart and
 * a drag of duration D issues at most ceil(D / delayMs) + 1 operations.
 */

export const MIN_RENDER_INTERVAL_MS = 150;

export interface Debouncer {
  schedule(op: () => void): void;
  /** Run the pending operation now, if any. */
  flush(): void;
  /** Drop the pending operation without running it. */
  cancel(): void;
  pending(): boolean;
}

export function createDebouncer(
  delayMs = MIN_RENDER_INTERVAL_MS,
  maxWaitMs = delayMs,
): Debouncer {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let op: (() => void) | null = null;
  let windowStart = 0;

  const fire = () => {
    timer = null;
    const run = op;
    op = null;
    if (run) run();
  };

  return {
    schedule(next: () => void): void {
      const now = Date.now();
      if (op === null) windowStart = now;
      op = next;
      if (timer !== null) clearTimeout(timer);
      const byMaxWait = windowStart + maxWaitMs - now;
      timer = setTimeout(fire, Math.max(0, Math.min(delayMs, byMaxWait)));
    },
    flush(): void {
      if (timer !== null) clearTimeout(timer);
      fire();
    },
    cancel(): void {
      if (timer !== null) clearTimeout(timer);
      timer = null;
      op = null;
    },
    pending(): boolean {
      return op !== null;
    },
  };
}
