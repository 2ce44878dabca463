/** Typed client for the gateway's /v1 HTTP API. */

import type { Parsed } from "./geometry.js";

export interface SliceRecord {
  dataset: string;
  volume_name: string;
  slice_id: number;
  slice_index: number;
  slice_count: number;
  width: number;
  height: number;
  pixels_tumor?: number;
  [key: string]: unknown;
}

export interface SlicePage {
  items: SliceRecord[];
  total: number;
  page: number;
  page_size: number;
}

export interface GalleryFilters {
  dataset?: string;
  hasTumor?: boolean;
  minBboxRatio?: number;
  organ?: string;
}

export interface ChatResponse {
  raw_text: string;
  parsed: { kind: string; box?: number[]; repaired?: boolean; answer?: string; reason?: string };
  backend: string;
  latency_ms: number;
}

export interface SessionTurnWire {
  request: { task: "refer" | "vqa"; instruction: string; slice_id: number | null };
  response: ChatResponse;
}

export class GatewayError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (typeof body?.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new GatewayError(response.status, detail);
  }
  return (await response.json()) as T;
}

export function slicesUrl(base: string, filters: GalleryFilters, page: number, pageSize: number): string {
  const params = new URLSearchParams();
  if (filters.dataset) params.set("dataset", filters.dataset);
  if (filters.organ) params.set("organ", filters.organ);
  if (filters.hasTumor !== undefined) params.set("has_tumor", String(filters.hasTumor));
  if (filters.minBboxRatio !== undefined) params.set("min_bbox_ratio", String(filters.minBboxRatio));
  params.set("page", String(page));
  params.set("page_size", String(pageSize));
  return `${base}/v1/slices?${params.toString()}`;
}

export class GatewayClient {
  constructor(
    private base: string = "",
    private fetchImpl: typeof fetch = fetch.bind(globalThis),
  ) {}

  async health(): Promise<{ status: string; backend: string; slices: number }> {
    return asJson(await this.fetchImpl(`${this.base}/v1/health`));
  }

  async listSlices(filters: GalleryFilters, page: number, pageSize = 24): Promise<SlicePage> {
    return asJson(await this.fetchImpl(slicesUrl(this.base, filters, page, pageSize)));
  }

  async record(sliceId: number): Promise<SliceRecord> {
    return asJson(await this.fetchImpl(`${this.base}/v1/slices/${sliceId}/record`));
  }

  imageUrl(sliceId: number): string {
    return `${this.base}/v1/slices/${sliceId}/image`;
  }

  async chat(
    task: "refer" | "vqa",
    instruction: string,
    ref: { sliceId?: number; imageB64?: string },
    sessionId: string,
  ): Promise<ChatResponse> {
    const body: Record<string, unknown> = { task, instruction, session_id: sessionId };
    if (ref.sliceId !== undefined) body.slice_id = ref.sliceId;
    if (ref.imageB64 !== undefined) body.image_b64 = ref.imageB64;
    const response = await this.fetchImpl(`${this.base}/v1/chat`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return asJson(await Promise.resolve(response));
  }

  async session(sessionId: string): Promise<{ session_id: string; turns: SessionTurnWire[] }> {
    return asJson(await this.fetchImpl(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}`));
  }
}

/** Server parsed-echo payload -> the client's Parsed type. */
export function parsedFromWire(parsed: ChatResponse["parsed"]): Parsed {
  if (parsed.kind === "box" && parsed.box) {
    const [xLeft, yTop, xRight, yBottom] = parsed.box;
    return { kind: "box", box: { xLeft, yTop, xRight, yBottom }, repaired: Boolean(parsed.repaired) };
  }
  if (parsed.kind === "answer" && (parsed.answer === "yes" || parsed.answer === "no")) {
    return { kind: "answer", answer: parsed.answer };
  }
  return { kind: "failure", reason: parsed.reason ?? "unparseable answer" };
}
