/** Wire types mirroring the service's JSON documents. */

export interface SegmentDoc {
  from: number;
  to: number;
  id: number;
  conf: number;
}

export interface SchemeClass {
  id: number;
  label: string;
  color: string;
}

export interface SchemeDoc {
  name: string;
  classes: SchemeClass[];
  rest_class_id?: number;
}

export interface AnnotationHeader {
  session: string;
  role: string;
  scheme: string;
  annotator: string;
  is_finished: boolean;
  is_locked: boolean;
}

export interface AnnotationData {
  annotation: string;
  segments: SegmentDoc[];
  backup: SegmentDoc[] | null;
}

export interface Tier {
  id: string;
  header: AnnotationHeader;
  segments: SegmentDoc[];
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobState {
  id: string;
  type: string;
  status: JobStatus;
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
}

export interface EvaluationResult {
  class_ids: number[];
  labels: string[];
  counts: number[][];
  recalls: Record<string, number | null>;
  ua: number;
}
