/** Pure layout math for drawing GT boxes over a scaled image. */

export interface OverlayRect {
  left: number;
  top: number;
  width: number;
  height: number;
  colorIndex: number;
}

/** Distinct stroke colors so multi-instance pairs stay tellable apart. */
export const OVERLAY_COLORS = [
  "#ff3b30",
  "#34c759",
  "#0a84ff",
  "#ffd60a",
  "#bf5af2",
  "#ff9f0a",
];

/**
 * Scale image-space boxes into display-space rectangles. The image is
 * assumed to be letterboxed to fit (displayW, displayH) preserving aspect
 * ratio, which matches CSS object-fit: contain.
 */
export function layoutBoxes(
  boxes: [number, number, number, number][],
  naturalW: number,
  naturalH: number,
  displayW: number,
  displayH: number,
): OverlayRect[] {
  if (naturalW <= 0 || naturalH <= 0 || displayW <= 0 || displayH <= 0) {
    return [];
  }
  const scale = Math.min(displayW / naturalW, displayH / naturalH);
  const offsetX = (displayW - naturalW * scale) / 2;
  const offsetY = (displayH - naturalH * scale) / 2;
  return boxes.map(([x1, y1, x2, y2], k) => ({
    left: offsetX + x1 * scale,
    top: offsetY + y1 * scale,
    width: (x2 - x1) * scale,
    height: (y2 - y1) * scale,
    colorIndex: k % OVERLAY_COLORS.length,
  }));
}
