/**
 * Weighted rubric arithmetic for the five quality dimensions.
 *
 * The weights mirror the published rubric exactly; the live preview shown
 * on step-2 cards must agree with the server-side composite to float
 * precision, so keep this the single place they are defined.
 */

export const DIMENSIONS = [
  "evidence_quality",
  "reasoning_clarity",
  "trait_understanding",
  "evidence_specificity",
  "conclusion_accuracy",
] as const;

export type Dimension = (typeof DIMENSIONS)[number];

export const DIMENSION_TITLES: Record<Dimension, string> = {
  evidence_quality: "Evidence Quality",
  reasoning_clarity: "Reasoning Clarity",
  trait_understanding: "Trait Understanding",
  evidence_specificity: "Evidence Specificity",
  conclusion_accuracy: "Conclusion Accuracy",
};

export const WEIGHTS: Record<Dimension, number> = {
  evidence_quality: 0.25,
  reasoning_clarity: 0.2,
  trait_understanding: 0.2,
  evidence_specificity: 0.15,
  conclusion_accuracy: 0.2,
};

export type DimensionValues = Record<Dimension, number>;

export function compositeScore(values: DimensionValues): number {
  let total = 0;
  for (const dim of DIMENSIONS) {
    const v = values[dim];
    if (!Number.isInteger(v) || v < 0 || v > 10) {
      throw new Error(`${dim} must be an integer in [0, 10], got ${v}`);
    }
    total += WEIGHTS[dim] * v;
  }
  return total;
}

export function weightsSumToOne(): boolean {
  const sum = DIMENSIONS.reduce((acc, d) => acc + WEIGHTS[d], 0);
  return Math.abs(sum - 1.0) < 1e-12;
}
