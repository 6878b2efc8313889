/** Typed client for the inference service JSON API.
 *
 * Images travel as base64 PNG strings; every response carries back the
 * request id it was issued with, which the UI uses to drop stale
 * replies.
 */

export interface ImageResponse {
  images: string[];
  names?: string[];
  alphas?: number[];
  request_id: string;
  timing_ms: number;
}

export interface ServiceError {
  status: number;
  error: string;
  field?: string;
  fields?: string[];
  request_id?: string;
}

export interface StyleEntry {
  id: string;
  image: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

let counter = 0;

export function nextRequestId(): string {
  counter += 1;
  return `req-${Date.now()}-${counter}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async post(path: string, body: Record<string, unknown>): Promise<ImageResponse> {
    const request_id = (body.request_id as string) ?? nextRequestId();
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...body, request_id }),
    });
    const data = await res.json();
    if (!res.ok) {
      throw { status: res.status, ...data } as ServiceError;
    }
    return data as ImageResponse;
  }

  health(): Promise<Response> {
    return this.fetchFn(`${this.baseUrl}/health`);
  }

  async styles(): Promise<StyleEntry[]> {
    const res = await this.fetchFn(`${this.baseUrl}/styles`);
    const data = await res.json();
    return data.styles as StyleEntry[];
  }

  stylize(fontImg: string, textureRef: string, requestId?: string): Promise<ImageResponse> {
    return this.post("/stylize", {
      font_img: fontImg,
      texture_ref: textureRef,
      request_id: requestId,
    });
  }

  destylize(fontRef: string, requestId?: string): Promise<ImageResponse> {
    return this.post("/destylize", { font_ref: fontRef, request_id: requestId });
  }

  fontTransfer(content: string, fontImg: string, requestId?: string): Promise<ImageResponse> {
    return this.post("/font-transfer", {
      content,
      font_img: fontImg,
      request_id: requestId,
    });
  }

  generate(
    content: string,
    fontRef: string,
    textureRef: string,
    requestId?: string,
  ): Promise<ImageResponse> {
    return this.post("/generate", {
      content,
      font_ref: fontRef,
      texture_ref: textureRef,
      request_id: requestId,
    });
  }

  interpolate(
    fontImg: string,
    texA: string,
    texB: string,
    alphas: number[],
    requestId?: string,
  ): Promise<ImageResponse> {
    return this.post("/interpolate", {
      font_img: fontImg,
      tex_a: texA,
      tex_b: texB,
      alphas,
      request_id: requestId,
    });
  }

  blend(
    instance: string,
    texLeft: string,
    texRight: string,
    requestId?: string,
  ): Promise<ImageResponse> {
    return this.post("/blend", {
      instance,
      tex_left: texLeft,
      tex_right: texRight,
      request_id: requestId,
    });
  }
}
