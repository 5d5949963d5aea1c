/**
 * Timeline view state: zoom window, time/pixel mapping, hit testing.
 *
 * Pure geometry so the canvas renderer and the tests share one source of
 * truth. Rendered tiers always reflect either the latest store snapshot or
 * an explicit local edit, never a blend; the view model carries a dirty
 * flag so the renderer can say which one it is showing.
 */

import type { SegmentDoc } from "./types";

export interface ZoomWindow {
  startS: number;
  endS: number;
}

export class TimelineView {
  playheadS = 0;
  confidenceThreshold = 0.5;
  zoom: ZoomWindow;
  /** true while local edits have not been persisted yet */
  dirty = false;

  constructor(public durationS: number, public widthPx: number) {
    this.zoom = { startS: 0, endS: durationS };
  }

  timeToPixel(timeS: number): number {
    const span = this.zoom.endS - this.zoom.startS;
    return ((timeS - this.zoom.startS) / span) * this.widthPx;
  }

  pixelToTime(px: number): number {
    const span = this.zoom.endS - this.zoom.startS;
    return this.zoom.startS + (px / this.widthPx) * span;
  }

  /** Zoom by a factor around an anchor time, clamped to the session. */
  zoomBy(factor: number, anchorS: number): void {
    const span = (this.zoom.endS - this.zoom.startS) / factor;
    const clampedSpan = Math.min(this.durationS, Math.max(0.05, span));
    const ratio = (anchorS - this.zoom.startS) / (this.zoom.endS - this.zoom.startS);
    let start = anchorS - ratio * clampedSpan;
    start = Math.max(0, Math.min(start, this.durationS - clampedSpan));
    this.zoom = { startS: start, endS: start + clampedSpan };
  }

  visibleSegments(segments: SegmentDoc[]): number[] {
    const out: number[] = [];
    segments.forEach((segment, index) => {
      if (segment.to > this.zoom.startS && segment.from < this.zoom.endS) {
        out.push(index);
      }
    });
    return out;
  }
}

export type HitRegion =
  | { kind: "segment"; index: number }
  | { kind: "edge"; index: number; side: "left" | "right" }
  | { kind: "background" };

/** What the pointer is over, preferring edges within the grab tolerance. */
export function hitTest(segments: SegmentDoc[], timeS: number,
                        edgeToleranceS: number): HitRegion {
  for (let index = 0; index < segments.length; index++) {
    const segment = segments[index];
    if (Math.abs(timeS - segment.from) <= edgeToleranceS) {
      return { kind: "edge", index, side: "left" };
    }
    if (Math.abs(timeS - segment.to) <= edgeToleranceS) {
      return { kind: "edge", index, side: "right" };
    }
  }
  for (let index = 0; index < segments.length; index++) {
    const segment = segments[index];
    if (timeS >= segment.from && timeS < segment.to) {
      return { kind: "segment", index };
    }
  }
  return { kind: "background" };
}
