/**
 * Segment editing on a tier: create, resize, relabel, delete.
 *
 * Edits are applied locally first (pure functions, so undo is a snapshot)
 * and then persisted through the service. Editing a foreign tier
 * transparently switches to a personal copy (copy-on-load); editing a
 * locked tier surfaces the server's Locked error without changing local
 * state. Relabeling is hotkey-friendly: digit k assigns the scheme's k-th
 * class, which is faster than redrawing a segment from scratch.
 */

import { ApiError, ServiceClient } from "./api";
import type { SchemeDoc, SegmentDoc, Tier } from "./types";

export type EditAction =
  | { kind: "create"; from: number; to: number; classId: number }
  | { kind: "resize"; index: number; side: "left" | "right"; toTime: number }
  | { kind: "relabel"; index: number; classId: number }
  | { kind: "delete"; index: number };

const MIN_SEGMENT_S = 0.01;

function sorted(segments: SegmentDoc[]): SegmentDoc[] {
  return [...segments].sort((a, b) => a.from - b.from || a.to - b.to);
}

/** Apply one action to a segment list, keeping it sorted and non-overlapping. */
export function applyEdit(segments: SegmentDoc[], action: EditAction): SegmentDoc[] {
  switch (action.kind) {
    case "create": {
      const from = Math.min(action.from, action.to);
      const to = Math.max(action.from, action.to);
      if (to - from < MIN_SEGMENT_S) {
        throw new Error("segment too short");
      }
      for (const existing of segments) {
        if (from < existing.to && to > existing.from) {
          throw new Error("segments may not overlap");
        }
      }
      return sorted([...segments, { from, to, id: action.classId, conf: 1.0 }]);
    }
    case "resize": {
      const target = segments[action.index];
      if (!target) throw new Error("no such segment");
      let { from, to } = target;
      if (action.side === "left") {
        from = Math.min(action.toTime, to - MIN_SEGMENT_S);
      } else {
        to = Math.max(action.toTime, from + MIN_SEGMENT_S);
      }
      // clamp against neighbors instead of rejecting, so drags feel natural
      for (let i = 0; i < segments.length; i++) {
        if (i === action.index) continue;
        const other = segments[i];
        if (other.to <= target.from && from < other.to) from = other.to;
        if (other.from >= target.to && to > other.from) to = other.from;
      }
      const updated = [...segments];
      // a human moved the boundary, so the human vouches for the segment
      updated[action.index] = { ...target, from, to, conf: 1.0 };
      return sorted(updated);
    }
    case "relabel": {
      if (!segments[action.index]) throw new Error("no such segment");
      const updated = [...segments];
      updated[action.index] = { ...updated[action.index], id: action.classId, conf: 1.0 };
      return updated;
    }
    case "delete": {
      if (!segments[action.index]) throw new Error("no such segment");
      return segments.filter((_, i) => i !== action.index);
    }
  }
}

/** Map a pressed digit to a scheme class for hotkey relabeling. */
export function hotkeyClass(scheme: SchemeDoc, digit: number): number | null {
  const entry = scheme.classes[digit - 1];
  return entry ? entry.id : null;
}

export interface EditOutcome {
  tier: Tier;
  /** set when the edit landed on a personal copy of a foreign tier */
  switchedToCopy: boolean;
  /** server-side rejection surfaced to the user, local state unchanged */
  error: string | null;
}

export class TierEditor {
  constructor(private client: ServiceClient, private currentUser: string) {}

  /**
   * Apply an action and persist it. A foreign tier is first materialized
   * as the user's own copy; Locked/Forbidden come back as visible errors.
   */
  async edit(tier: Tier, action: EditAction): Promise<EditOutcome> {
    let target = tier;
    let switchedToCopy = false;
    if (tier.header.annotator !== this.currentUser) {
      const loaded = await this.client.loadForEditing(tier.id);
      target = { id: loaded.id, header: loaded.annotation, segments: loaded.data.segments };
      switchedToCopy = true;
    }
    let segments: SegmentDoc[];
    try {
      segments = applyEdit(target.segments, action);
    } catch (error) {
      return { tier: target, switchedToCopy, error: (error as Error).message };
    }
    try {
      await this.client.writeSegments(target.id, segments);
    } catch (error) {
      if (error instanceof ApiError) {
        return { tier: target, switchedToCopy, error: error.message };
      }
      throw error;
    }
    return { tier: { ...target, segments }, switchedToCopy, error: null };
  }
}
