/** Single-page studio shell: mode tabs, reference pickers fed by the
 * service gallery (or upload), generate button with disabled-state
 * tooltip, interpolation slider, and click-to-promote history strip.
 */

import { ApiClient } from "./api.js";
import { LiveInterpolation } from "./interpolation.js";
import { MODES, runGeneration } from "./panels.js";
import {
  Mode,
  SessionState,
  canGenerate,
  disabledTooltip,
  newSession,
  promoteFromHistory,
  pushHistory,
} from "./state.js";

const SLOT_LABELS: Record<keyof SessionState["refs"], string> = {
  content: "Content glyph",
  font: "Font reference",
  textureA: "Texture A",
  textureB: "Texture B",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text) node.textContent = text;
  return node;
}

function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export function mount(root: HTMLElement, client: ApiClient): void {
  let state = newSession();
  let busy = false;

  const tabs = el("div", "tabs");
  const slots = el("div", "slots");
  const gallery = el("div", "gallery");
  const result = el("div", "result");
  const historyStrip = el("div", "history");
  const generateBtn = el("button", "generate", "Generate");
  const slider = el("input") as HTMLInputElement;
  slider.type = "range";
  slider.min = "0";
  slider.max = "1";
  slider.step = "0.01";

  root.append(tabs, slots, gallery, slider, generateBtn, result, historyStrip);

  let live: LiveInterpolation | null = null;

  function refresh(): void {
    generateBtn.disabled = busy || !canGenerate(state);
    generateBtn.title = disabledTooltip(state) ?? "";
    slider.hidden = state.mode !== "interpolate";
    tabs.querySelectorAll("button").forEach((b) => {
      b.classList.toggle("active", b.dataset.mode === state.mode);
    });
    slots.replaceChildren();
    (Object.keys(SLOT_LABELS) as (keyof SessionState["refs"])[]).forEach((key) => {
      const cell = el("div", "slot");
      cell.append(el("span", "", SLOT_LABELS[key]));
      const ref = state.refs[key];
      if (ref) {
        const img = el("img");
        img.src = pngSrc(ref);
        cell.append(img);
      }
      cell.onclick = () => {
        pendingSlot = key;
      };
      slots.append(cell);
    });
    historyStrip.replaceChildren();
    state.history.forEach((entry, i) => {
      const img = el("img", "thumb");
      img.src = pngSrc(entry.thumbnail);
      img.title = entry.name ?? entry.request.mode;
      img.onclick = () => {
        state = promoteFromHistory(state, i, pendingSlot);
        refresh();
      };
      historyStrip.append(img);
    });
  }

  let pendingSlot: keyof SessionState["refs"] = "textureA";

  MODES.forEach((mode: Mode) => {
    const b = el("button", "tab", mode.replace("_", " "));
    b.dataset.mode = mode;
    b.onclick = () => {
      state = { ...state, mode };
      live = null;
      refresh();
    };
    tabs.append(b);
  });

  slider.oninput = () => {
    state = { ...state, alpha: Number(slider.value) };
    if (state.mode !== "interpolate") return;
    if (!state.refs.font || !state.refs.textureA || !state.refs.textureB) return;
    live ??= new LiveInterpolation(
      client,
      state.refs.font,
      state.refs.textureA,
      state.refs.textureB,
      (frame) => {
        result.replaceChildren();
        const img = el("img");
        img.src = pngSrc(frame.image);
        result.append(img, el("span", "", `alpha=${frame.alpha.toFixed(2)}`));
      },
    );
    live.drag(state.alpha);
  };

  generateBtn.onclick = async () => {
    busy = true;
    refresh();
    const { panel, historyEntry } = await runGeneration(state, client);
    busy = false;
    result.replaceChildren();
    if (panel.error) {
      result.append(el("div", "error", panel.error.message));
    }
    panel.images.forEach(({ name, data }) => {
      const fig = el("figure");
      const img = el("img");
      img.src = pngSrc(data);
      fig.append(img, el("figcaption", "", name));
      result.append(fig);
    });
    if (historyEntry) state = pushHistory(state, historyEntry);
    refresh();
  };

  void client.styles().then((entries) => {
    entries.forEach(({ id, image }) => {
      const img = el("img", "thumb");
      img.src = pngSrc(image);
      img.title = id;
      img.onclick = () => {
        state = { ...state, refs: { ...state.refs, [pendingSlot]: image } };
        refresh();
      };
      gallery.append(img);
    });
  });

  refresh();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app")!, new ApiClient(""));
}
