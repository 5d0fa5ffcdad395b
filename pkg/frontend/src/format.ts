/** Small display helpers shared by the views. */

/** Similarity scores are shown to exactly two decimals. */
export function formatSimilarity(value: number): string {
  return value.toFixed(2);
}

export function quoted(name: string): string {
  return `“${name}”`;
}
