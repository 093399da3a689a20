/** Color helpers: a cool-to-warm scale for difficulty badges and a
 * signed heat scale for token attributions.
 *
 * Difficulty color is computed from an example's rank position within
 * the page (cool = easy, warm = hard). Attribution heat normalizes per
 * example by max |score|, so intensity is comparable within an example
 * only; cross-example comparison is what the badge is for. */

/** Map t in [0, 1] (0 = easiest, 1 = hardest) to an HSL color running
 * blue -> red. */
export function difficultyColor(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const hue = 220 - 220 * clamped; // 220 (cool blue) down to 0 (warm red)
  return `hsl(${Math.round(hue)}, 85%, 55%)`;
}

/** Relative position of a value within [lo, hi]; 0.5 when degenerate. */
export function relativeRank(value: number, lo: number, hi: number): number {
  if (!(hi > lo)) return 0.5;
  return (value - lo) / (hi - lo);
}

/** Background color for one token: hue encodes the attribution sign
 * (teal pushes toward the predicted class, orange against), alpha
 * encodes |score| / max|score|. */
export function tokenHeatColor(score: number, maxAbsScore: number): string {
  const intensity = maxAbsScore > 0 ? Math.abs(score) / maxAbsScore : 0;
  const alpha = (0.85 * intensity).toFixed(3);
  return score >= 0
    ? `rgba(16, 130, 120, ${alpha})`
    : `rgba(220, 90, 30, ${alpha})`;
}

/** Shared formatter so badges and panels agree on significant digits. */
export function formatLambda(value: number): string {
  if (value === 0) return "0";
  if (value >= 0.01 && value < 1000) return value.toPrecision(4);
  return value.toExponential(3);
}

export function formatProb(value: number): string {
  return value.toFixed(4);
}
