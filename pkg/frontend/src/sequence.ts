/**
 * Sequence-numbered request reconciliation. Responses may resolve out of
 * order over a slow network; the preview must only move forward in issue
 * order, so a response is applied only while no later response has been.
 */

export interface Sequencer<T> {
  dispatch(request: () => Promise<T>): Promise<void>;
  /** Sequence number of the last applied response, 0 before any. */
  applied(): number;
  /** Sequence number of the last issued request, 0 before any. */
  issued(): number;
}

export function createSequencer<T>(
  apply: (value: T, seq: number) => void,
  onError?: (error: unknown, seq: number) => void,
): Sequencer<T> {
  let issued = 0;
  let applied = 0;

  return {
    async dispatch(request: () => Promise<T>): Promise<void> {
      issued += 1;
      const seq = issued;
      try {
        const value = await request();
        if (seq > applied) {
          applied = seq;
          apply(value, seq);
        }
      } catch (error) {
        // failures of already-superseded requests are not worth surfacing
        if (seq > applied && onError) onError(error, seq);
      }
    },
    applied: () => applied,
    issued: () => issued,
  };
}
