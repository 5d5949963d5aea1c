/**
 * Confidence-guided inspection: which segments need a human look.
 *
 * A segment is flagged exactly when its confidence lies below the slider
 * threshold; nothing is stored, raising the slider can only grow the set.
 * Optionally a color gradation maps confidence onto an opacity ramp for
 * users who prefer more detail than the binary pattern.
 */

import type { SegmentDoc } from "./types";

export interface FlaggedView {
  /** Indices into the tier's segment array, ascending. */
  flagged: number[];
  threshold: number;
}

export function flaggedSegments(segments: SegmentDoc[], threshold: number): FlaggedView {
  const flagged: number[] = [];
  segments.forEach((segment, index) => {
    if (segment.conf < threshold) {
      flagged.push(index);
    }
  });
  return { flagged, threshold };
}

/** Binary pattern or gradated opacity, the two modes from the user study. */
export type HighlightMode = "binary" | "gradient";

export function highlightOpacity(segment: SegmentDoc, threshold: number,
                                 mode: HighlightMode): number {
  if (segment.conf >= threshold) {
    return 0;
  }
  if (mode === "binary") {
    return 1;
  }
  return threshold <= 0 ? 0 : Math.min(1, (threshold - segment.conf) / threshold);
}

/** Next flagged segment strictly after the playhead, wrapping around. */
export function nextFlagged(segments: SegmentDoc[], threshold: number,
                            playheadS: number): number | null {
  const { flagged } = flaggedSegments(segments, threshold);
  if (flagged.length === 0) {
    return null;
  }
  for (const index of flagged) {
    if (segments[index].from > playheadS + 1e-9) {
      return index;
    }
  }
  return flagged[0];
}

/** Previous flagged segment strictly before the playhead, wrapping around. */
export function previousFlagged(segments: SegmentDoc[], threshold: number,
                                playheadS: number): number | null {
  const { flagged } = flaggedSegments(segments, threshold);
  if (flagged.length === 0) {
    return null;
  }
  for (let i = flagged.length - 1; i >= 0; i--) {
    if (segments[flagged[i]].from < playheadS - 1e-9) {
      return flagged[i];
    }
  }
  return flagged[flagged.length - 1];
}
