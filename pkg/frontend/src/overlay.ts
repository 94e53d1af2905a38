// Clickable segment rectangles positioned over the design screenshot.

import type { Tree } from "./api.js";
import { overlayRects } from "./state.js";

const DEPTH_COLORS = ["#e63946", "#1da1f2", "#2ecc71", "#f1c40f", "#9b59b6"];

export type OverlayOptions = {
  onSelect: (segmentId: string) => void;
  selected?: string;
};

/**
 * Rebuild the overlay rectangles inside `container`, which must be
 * position:relative and sized to the displayed screenshot. Only leaves are
 * clickable; internal nodes render as hover outlines.
 */
export function renderOverlay(
  container: HTMLElement,
  tree: Tree,
  displayWidth: number,
  displayHeight: number,
  options: OverlayOptions,
): void {
  container.innerHTML = "";
  for (const rect of overlayRects(tree, displayWidth, displayHeight)) {
    const el = document.createElement("div");
    el.className = rect.isLeaf ? "seg-rect seg-leaf" : "seg-rect seg-node";
    el.dataset.segId = rect.id;
    el.style.position = "absolute";
    el.style.left = `${rect.left}px`;
    el.style.top = `${rect.top}px`;
    el.style.width = `${rect.width}px`;
    el.style.height = `${rect.height}px`;
    el.style.boxSizing = "border-box";
    el.style.border = `2px solid ${DEPTH_COLORS[rect.depth % DEPTH_COLORS.length]}`;
    if (rect.isLeaf) {
      el.style.cursor = "pointer";
      el.style.pointerEvents = "auto";
      if (rect.id === options.selected) el.classList.add("seg-selected");
      el.addEventListener("click", () => options.onSelect(rect.id));
    } else {
      // hover outline only; clicks fall through to the leaves
      el.style.pointerEvents = "none";
      el.style.opacity = "0.5";
    }
    container.appendChild(el);
  }
}
