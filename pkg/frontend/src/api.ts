/** Typed client for the preview service; the UI's only data path. */

import type { MaterialValues, RenderParams, Segment } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Clamp a slider value into the unit interval the server validates. */
export function clamp01(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

/** Query string for GET /api/render, stable key order for cacheability. */
export function renderQuery(params: RenderParams): string {
  const q = new URLSearchParams({
    azimuth: String(params.azimuth),
    elevation: String(params.elevation),
    mode: params.mode,
    rig: params.rig,
  });
  return `/api/render?${q.toString()}`;
}

function revisionFrom(response: Response): number {
  const header = response.headers.get("X-Revision");
  return header === null ? -1 : Number(header);
}

async function failure(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export interface SegmentListing {
  segments: Segment[];
  revision: number;
}

export interface RenderedFrame {
  blob: Blob;
  revision: number;
}

export class PreviewClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  async listSegments(): Promise<SegmentListing> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/segments`);
    if (!response.ok) await failure(response);
    return {
      segments: (await response.json()) as Segment[],
      revision: revisionFrom(response),
    };
  }

  /** PUT one segment's values; always sends [0,1]-clamped numbers. */
  async updateSegment(id: number, values: MaterialValues): Promise<number> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/segments/${id}`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          roughness: clamp01(values.roughness),
          metalness: clamp01(values.metalness),
        }),
      },
    );
    if (!response.ok) await failure(response);
    const body = (await response.json()) as { revision: number };
    return body.revision;
  }

  async fetchRender(params: RenderParams): Promise<RenderedFrame> {
    const response = await this.fetchImpl(this.baseUrl + renderQuery(params));
    if (!response.ok) await failure(response);
    return { blob: await response.blob(), revision: revisionFrom(response) };
  }

  async exportAsset(): Promise<{ revision: number; paths: Record<string, string> }> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/export`, {
      method: "POST",
    });
    if (!response.ok) await failure(response);
    return (await response.json()) as {
      revision: number;
      paths: Record<string, string>;
    };
  }
}
