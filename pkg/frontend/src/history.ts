/** Query history strip: the last few submitted sketches, newest first. */

export interface HistoryEntry {
  thumbnail: string; // data URL of the rasterized query
  k: number;
  targetModality: string;
}

export const HISTORY_LIMIT = 5;

export function pushHistory(
  history: readonly HistoryEntry[],
  entry: HistoryEntry,
  limit: number = HISTORY_LIMIT,
): HistoryEntry[] {
  return [entry, ...history].slice(0, limit);
}
