/** Typed client for the retrieval service HTTP/JSON API. */

import { gridToBase64, RasterGrid } from "./strokes.js";

export interface ClassInfo {
  name: string;
  seen: boolean;
}

export interface ResultItem {
  id: string;
  label: string;
  distance: number;
  thumbnail_url?: string;
}

export interface RetrieveResponse {
  query_modality: string;
  target_modality: string;
  k: number;
  results: ResultItem[];
}

/** Server rejected the drawn query: the model has no pixel featurizer. */
export class DrawnQueryUnsupportedError extends Error {
  constructor() {
    super("model does not accept drawn queries");
  }
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

export const REQUEST_TIMEOUT_MS = 5000;

async function request(
  fetchFn: typeof fetch,
  url: string,
  init: RequestInit,
  timeoutMs: number,
): Promise<unknown> {
  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort(), timeoutMs);
  let response: Response;
  try {
    response = await fetchFn(url, { ...init, signal: controller.signal });
  } finally {
    clearTimeout(timer);
  }
  if (response.status === 409) throw new DrawnQueryUnsupportedError();
  if (!response.ok) {
    let detail = response.statusText;
    try {
      detail = JSON.stringify((await response.json()).detail);
    } catch {
      /* keep statusText */
    }
    throw new ApiError(response.status, detail);
  }
  return response.json();
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
    private readonly timeoutMs: number = REQUEST_TIMEOUT_MS,
  ) {}

  async classes(): Promise<ClassInfo[]> {
    const body = (await request(
      this.fetchFn,
      `${this.baseUrl}/classes`,
      { method: "GET" },
      this.timeoutMs,
    )) as { classes: ClassInfo[] };
    return body.classes;
  }

  async retrievePixels(
    grid: RasterGrid,
    k: number,
    targetModality: string,
  ): Promise<RetrieveResponse> {
    return (await request(
      this.fetchFn,
      `${this.baseUrl}/retrieve`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          pixels: {
            width: grid.width,
            height: grid.height,
            data_b64: gridToBase64(grid),
          },
          query_modality: "sketch",
          target_modality: targetModality,
          k,
        }),
      },
      this.timeoutMs,
    )) as RetrieveResponse;
  }

  async retrieveFeatures(
    features: number[],
    k: number,
    targetModality: string,
    queryModality: string = "sketch",
  ): Promise<RetrieveResponse> {
    return (await request(
      this.fetchFn,
      `${this.baseUrl}/retrieve`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          features,
          query_modality: queryModality,
          target_modality: targetModality,
          k,
        }),
      },
      this.timeoutMs,
    )) as RetrieveResponse;
  }
}
