/**
 * Vocabulary selection: the top-k features by total corpus count, ties
 * broken lexicographically so the mapping is deterministic for any input
 * order. Indices are dense in [0, k), most frequent first.
 */

import { RawDocument } from "./raw.js";

export function accumulateFrequencies(
  docs: Iterable<RawDocument>,
  into?: Map<string, number>,
): Map<string, number> {
  const freq = into ?? new Map<string, number>();
  for (const doc of docs) {
    for (const [feature, count] of doc.features) {
      freq.set(feature, (freq.get(feature) ?? 0) + count);
    }
  }
  return freq;
}

export function selectVocabulary(freq: Map<string, number>, topK: number): string[] {
  const entries = [...freq.entries()];
  entries.sort((a, b) => (b[1] - a[1]) || (a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0));
  return entries.slice(0, topK).map(([feature]) => feature);
}

export function vocabularyIndex(vocabulary: string[]): Map<string, number> {
  const index = new Map<string, number>();
  vocabulary.forEach((feature, i) => index.set(feature, i));
  return index;
}
