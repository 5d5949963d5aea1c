/**
 * Client for the annotation service's HTTP/JSON API.
 *
 * Every number the UI shows comes from here; the client never computes
 * learning results locally. Errors carry the server's message so views can
 * surface them inline.
 */

import type {
  AnnotationData,
  AnnotationHeader,
  JobState,
  SchemeDoc,
  SegmentDoc,
  Tier,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export interface LoadResult {
  id: string;
  annotation: AnnotationHeader;
  data: AnnotationData;
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private db: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown,
                           headers: Record<string, string> = {}): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        ...headers,
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let message = `${response.status}`;
      try {
        const payload = await response.json();
        message = payload.error ?? payload.detail ?? message;
      } catch {
        /* not JSON */
      }
      throw new ApiError(response.status, message);
    }
    return (await response.json()) as T;
  }

  getDocument<T>(collection: string, id: string): Promise<T> {
    return this.request<T>("GET", `/db/${this.db}/${collection}/${id}`);
  }

  putDocument(collection: string, id: string, doc: unknown): Promise<{ id: string }> {
    return this.request("PUT", `/db/${this.db}/${collection}/${id}`, doc);
  }

  listIds(collection: string): Promise<string[]> {
    return this.request<{ ids: string[] }>("GET", `/db/${this.db}/${collection}`)
      .then((reply) => reply.ids);
  }

  scheme(id: string): Promise<SchemeDoc> {
    return this.getDocument<SchemeDoc>("schemes", id);
  }

  async tier(annotationId: string): Promise<Tier> {
    const header = await this.getDocument<AnnotationHeader>("annotations", annotationId);
    const data = await this.getDocument<AnnotationData>("annotationdata", annotationId);
    return { id: annotationId, header, segments: data.segments };
  }

  /** Load a tier for editing; foreign tiers come back as a personal copy. */
  loadForEditing(annotationId: string): Promise<LoadResult> {
    return this.request<LoadResult>(
      "POST", `/db/${this.db}/annotations/${annotationId}/load`, {});
  }

  writeSegments(annotationId: string, segments: SegmentDoc[]): Promise<{ id: string }> {
    return this.putDocument("annotationdata", annotationId, { segments });
  }

  setFlags(annotationId: string, flags: { is_finished?: boolean; is_locked?: boolean }) {
    return this.request<{ id: string; annotation: AnnotationHeader }>(
      "POST", `/db/${this.db}/annotations/${annotationId}/flags`, flags);
  }

  submitJob(type: string, params: Record<string, unknown>): Promise<{ id: string }> {
    return this.request("POST", "/jobs", { type, params: { db: this.db, ...params } });
  }

  jobStatus(jobId: string): Promise<JobState> {
    return this.request<JobState>("GET", `/jobs/${jobId}`);
  }

  /** Byte-range fetch of a stream payload, for waveform peak rendering. */
  async streamBytes(streamId: string, start?: number, end?: number): Promise<ArrayBuffer> {
    const headers: Record<string, string> = { Authorization: `Bearer ${this.token}` };
    if (start !== undefined) {
      headers.Range = `bytes=${start}-${end !== undefined ? end : ""}`;
    }
    const response = await this.fetchImpl(
      `${this.baseUrl}/streams/${streamId}/data`, { headers });
    if (!response.ok) {
      throw new ApiError(response.status, `stream fetch failed: ${response.status}`);
    }
    return response.arrayBuffer();
  }
}
