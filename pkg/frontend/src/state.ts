/** Session state and the disabled-state logic for the generate button.
 *
 * The required-slots table is shared JSON: it is the single source of
 * truth for which inputs each mode needs, mirroring the service's
 * request models field for field.
 */

import requiredSlots from "./required-slots.json";

export type Mode = keyof typeof requiredSlots;

export const REQUIRED_SLOTS: Record<Mode, string[]> = requiredSlots;

/** UI slot names onto the service body fields they fill, per mode. */
const SLOT_SOURCES: Record<Mode, Record<string, keyof SessionState["refs"]>> = {
  stylize: { font_img: "font", texture_ref: "textureA" },
  destylize: { font_ref: "font" },
  font_transfer: { content: "content", font_img: "font" },
  end_to_end: { content: "content", font_ref: "font", texture_ref: "textureA" },
  interpolate: { font_img: "font", tex_a: "textureA", tex_b: "textureB" },
  blend: { instance: "font", tex_left: "textureA", tex_right: "textureB" },
};

export interface HistoryEntry {
  request: { mode: Mode; [key: string]: unknown };
  thumbnail: string;
  name?: string;
}

export interface SessionState {
  mode: Mode;
  refs: {
    content: string | null;
    font: string | null;
    textureA: string | null;
    textureB: string | null;
  };
  alpha: number;
  history: HistoryEntry[];
}

export function newSession(): SessionState {
  return {
    mode: "stylize",
    refs: { content: null, font: null, textureA: null, textureB: null },
    alpha: 0,
    history: [],
  };
}

/** Service body fields the current mode still needs, in table order. */
export function missingSlots(state: SessionState): string[] {
  const sources = SLOT_SOURCES[state.mode];
  return REQUIRED_SLOTS[state.mode].filter(
    (slot) => !state.refs[sources[slot]],
  );
}

export function canGenerate(state: SessionState): boolean {
  return missingSlots(state).length === 0;
}

/** Tooltip text naming the first unfilled slot, or null when ready. */
export function disabledTooltip(state: SessionState): string | null {
  const missing = missingSlots(state);
  return missing.length ? `missing ${missing[0]}` : null;
}

export function pushHistory(state: SessionState, entry: HistoryEntry): SessionState {
  return { ...state, history: [...state.history, entry] };
}

/** History-as-palette: load a past output as a reference input. */
export function promoteFromHistory(
  state: SessionState,
  index: number,
  target: keyof SessionState["refs"],
): SessionState {
  const entry = state.history[index];
  if (!entry) throw new Error(`no history entry at ${index}`);
  return { ...state, refs: { ...state.refs, [target]: entry.thumbnail } };
}
