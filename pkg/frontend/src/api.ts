/**
 * Typed client for the annotation service JSON API. The fetch function is
 * injectable so tests can run without a browser or a live server.
 */

import { AnnotationDoc } from "./state.js";

export interface ImageEntry {
  id: string;
  filename: string;
  width: number;
  height: number;
  annotated_count: number;
}

export interface DatasetStats {
  images: number;
  total_points?: number;
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let message = `${res.status} ${res.statusText}`;
  let field: string | undefined;
  try {
    const body = (await res.json()) as { error?: string; field?: string };
    if (body.error) message = body.error;
    field = body.field;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(message, res.status, field);
}

export class ApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async listImages(): Promise<ImageEntry[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/images`);
    await raiseForStatus(res);
    return (await res.json()) as ImageEntry[];
  }

  async getAnnotations(id: string): Promise<AnnotationDoc> {
    const res = await this.fetchFn(`${this.baseUrl}/api/annotations/${id}`);
    await raiseForStatus(res);
    return (await res.json()) as AnnotationDoc;
  }

  async putAnnotations(id: string, doc: AnnotationDoc): Promise<AnnotationDoc> {
    const res = await this.fetchFn(`${this.baseUrl}/api/annotations/${id}`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
    await raiseForStatus(res);
    return (await res.json()) as AnnotationDoc;
  }

  async getStats(): Promise<DatasetStats> {
    const res = await this.fetchFn(`${this.baseUrl}/api/stats`);
    await raiseForStatus(res);
    return (await res.json()) as DatasetStats;
  }

  imageFileUrl(id: string): string {
    return `${this.baseUrl}/api/images/${id}/file`;
  }
}
