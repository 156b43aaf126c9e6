// Hotspot geometry and coloring. Bounds arrive in screenshot pixels; the
// overlay scales them onto the displayed image, staying within one display
// pixel of the exact position.

import type { ElementBounds, ElementResult } from "./api";

export type ViewMode = "mismatches" | "all";

export interface DisplayScale {
  scaleX: number;
  scaleY: number;
}

export interface HotspotRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export function displayScale(naturalW: number, naturalH: number, shownW: number, shownH: number): DisplayScale {
  return { scaleX: shownW / naturalW, scaleY: shownH / naturalH };
}

export function hotspotRect(bounds: ElementBounds, scale: DisplayScale): HotspotRect {
  const left = bounds.x * scale.scaleX;
  const top = bounds.y * scale.scaleY;
  const right = (bounds.x + bounds.w) * scale.scaleX;
  const bottom = (bounds.y + bounds.h) * scale.scaleY;
  return {
    left: Math.round(left),
    top: Math.round(top),
    width: Math.max(1, Math.round(right) - Math.round(left)),
    height: Math.max(1, Math.round(bottom) - Math.round(top)),
  };
}

// Continuous cold-to-warm scale: 0 -> blue (hue 220), 1 -> red (hue 0).
export function probabilityColor(probability: number): string {
  const p = Math.min(1, Math.max(0, probability));
  const hue = Math.round(220 * (1 - p));
  return `hsl(${hue}, 85%, 55%)`;
}

export function visibleElements(elements: ElementResult[], mode: ViewMode): ElementResult[] {
  if (mode === "all") return elements;
  return elements.filter((el) => el.mismatch);
}
