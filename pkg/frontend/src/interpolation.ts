/** Live interpolation: a debounced slider (one request per quiet
 * window, >= 150 ms) plus a 5-frame strip view. Responses that arrive
 * for a superseded alpha are dropped by request-id comparison.
 */

import { ApiClient, nextRequestId } from "./api.js";

export const DEBOUNCE_MS = 150;
export const STRIP_ALPHAS = [0, 0.25, 0.5, 0.75, 1];

export interface StripFrame {
  alpha: number;
  image: string;
}

export class LiveInterpolation {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private latestRequestId: string | null = null;
  /** The currently displayed frame; null before the first response. */
  current: StripFrame | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly fontImg: string,
    private readonly texA: string,
    private readonly texB: string,
    private readonly onFrame: (frame: StripFrame) => void = () => {},
    private readonly debounceMs: number = DEBOUNCE_MS,
  ) {}

  /** Slider callback: schedules a request after the debounce window;
   * intermediate drags within the window are coalesced. */
  drag(alpha: number): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.request(alpha);
    }, this.debounceMs);
  }

  private async request(alpha: number): Promise<void> {
    const requestId = nextRequestId();
    this.latestRequestId = requestId;
    const res = await this.client.interpolate(
      this.fontImg,
      this.texA,
      this.texB,
      [alpha],
      requestId,
    );
    // a newer drag has been issued since; this response is stale
    if (res.request_id !== this.latestRequestId) return;
    this.current = { alpha, image: res.images[0] };
    this.onFrame(this.current);
  }

  /** Strip view: 5 evenly spaced alphas in a single request. */
  async strip(): Promise<StripFrame[]> {
    const res = await this.client.interpolate(
      this.fontImg,
      this.texA,
      this.texB,
      STRIP_ALPHAS,
    );
    return res.images.map((image, i) => ({ alpha: STRIP_ALPHAS[i], image }));
  }
}
