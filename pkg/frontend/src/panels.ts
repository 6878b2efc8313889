/** Generation dispatch: one call per mode, returning the panel model
 * the view renders. Every displayed image is a verbatim base64 string
 * from the service — the client never re-encodes pixels.
 */

import { ApiClient, ServiceError } from "./api.js";
import { HistoryEntry, Mode, SessionState, canGenerate, missingSlots } from "./state.js";

export interface Panel {
  images: { name: string; data: string }[];
  requestId: string;
  error?: { message: string; slot?: string };
}

function need(value: string | null, slot: string): string {
  if (!value) throw new Error(`missing ${slot}`);
  return value;
}

export async function runGeneration(
  state: SessionState,
  client: ApiClient,
): Promise<{ panel: Panel; historyEntry: HistoryEntry | null }> {
  if (!canGenerate(state)) {
    return {
      panel: {
        images: [],
        requestId: "",
        error: { message: `missing ${missingSlots(state)[0]}`, slot: missingSlots(state)[0] },
      },
      historyEntry: null,
    };
  }
  const { refs, mode } = state;
  try {
    let res;
    switch (mode) {
      case "stylize":
        res = await client.stylize(need(refs.font, "font_img"), need(refs.textureA, "texture_ref"));
        break;
      case "destylize":
        res = await client.destylize(need(refs.font, "font_ref"));
        break;
      case "font_transfer":
        res = await client.fontTransfer(need(refs.content, "content"), need(refs.font, "font_img"));
        break;
      case "end_to_end":
        res = await client.generate(
          need(refs.content, "content"),
          need(refs.font, "font_ref"),
          need(refs.textureA, "texture_ref"),
        );
        break;
      case "interpolate":
        res = await client.interpolate(
          need(refs.font, "font_img"),
          need(refs.textureA, "tex_a"),
          need(refs.textureB, "tex_b"),
          [state.alpha],
        );
        break;
      case "blend":
        res = await client.blend(
          need(refs.font, "instance"),
          need(refs.textureA, "tex_left"),
          need(refs.textureB, "tex_right"),
        );
        break;
    }
    const names = res.names ?? res.images.map((_, i) => `output_${i}`);
    const panel: Panel = {
      images: res.images.map((data, i) => ({ name: names[i], data })),
      requestId: res.request_id,
    };
    const historyEntry: HistoryEntry = {
      request: { mode },
      thumbnail: res.images[res.images.length - 1],
      name: names[names.length - 1],
    };
    return { panel, historyEntry };
  } catch (e) {
    const err = e as ServiceError;
    const slot = err.field ?? err.fields?.[0];
    return {
      panel: {
        images: [],
        requestId: err.request_id ?? "",
        error: { message: err.error ?? String(e), slot },
      },
      historyEntry: null,
    };
  }
}

export const MODES: Mode[] = [
  "stylize",
  "destylize",
  "font_transfer",
  "end_to_end",
  "interpolate",
  "blend",
];
