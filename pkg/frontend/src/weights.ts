/**
 * Slider weight math. Displayed weights always sum to 1: every edit pins one
 * slider and rescales the rest, so the payload never drifts from the simplex.
 */

export const WEIGHT_SUM_TOLERANCE = 1e-6;

/** Equal split over k sliders; k = 0 yields an empty list. */
export function uniformWeights(k: number): number[] {
  if (k <= 0) return [];
  return new Array<number>(k).fill(1 / k);
}

function clamp01(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

/**
 * Pin slider `index` to `value` (clamped to [0, 1]) and rescale the remaining
 * sliders proportionally so the total stays 1. When every other slider sits
 * at 0 the remainder is split equally among them instead, since proportions
 * of nothing are undefined. A single slider is always pinned to 1.
 */
export function adjustWeights(
  weights: readonly number[],
  index: number,
  value: number,
): number[] {
  if (index < 0 || index >= weights.length) {
    throw new RangeError(`slider index ${index} outside 0..${weights.length - 1}`);
  }
  if (weights.length === 1) return [1];

  const pinned = clamp01(value);
  const rest = 1 - pinned;
  let othersSum = 0;
  for (let i = 0; i < weights.length; i++) {
    if (i !== index) othersSum += Math.max(0, weights[i] ?? 0);
  }

  const next = new Array<number>(weights.length);
  for (let i = 0; i < weights.length; i++) {
    if (i === index) {
      next[i] = pinned;
    } else if (othersSum > 0) {
      next[i] = Math.max(0, weights[i] ?? 0) * (rest / othersSum);
    } else {
      next[i] = rest / (weights.length - 1);
    }
  }
  return next;
}

/**
 * Final renormalization before a payload leaves the client. Throws instead of
 * dispatching weights the service would reject.
 */
export function normalizeForDispatch(weights: readonly number[]): number[] {
  if (weights.length === 0) {
    throw new Error("no weights to dispatch");
  }
  let total = 0;
  for (const w of weights) {
    if (!Number.isFinite(w) || w < 0) {
      throw new Error(`weight ${w} is not a finite non-negative number`);
    }
    total += w;
  }
  if (total <= WEIGHT_SUM_TOLERANCE) {
    throw new Error("weights sum to zero");
  }
  return weights.map((w) => w / total);
}

/** True when the weights already sit on the simplex within tolerance. */
export function isNormalized(weights: readonly number[]): boolean {
  let total = 0;
  for (const w of weights) {
    if (!Number.isFinite(w) || w < 0) return false;
    total += w;
  }
  return Math.abs(total - 1) <= WEIGHT_SUM_TOLERANCE;
}
