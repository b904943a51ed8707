import { describe, expect, it } from "vitest";

import { OVERLAY_COLORS, layoutBoxes } from "../src/overlay.js";

describe("layoutBoxes", () => {
  it("scales boxes into a same-aspect display", () => {
    const rects = layoutBoxes([[10, 10, 30, 20]], 100, 100, 50, 50);
    expect(rects).toHaveLength(1);
    expect(rects[0]).toMatchObject({ left: 5, top: 5, width: 10, height: 5 });
  });

  it("letterboxes a wide display with a horizontal offset", () => {
    const rects = layoutBoxes([[0, 0, 100, 100]], 100, 100, 200, 100);
    expect(rects[0]).toMatchObject({ left: 50, top: 0, width: 100, height: 100 });
  });

  it("assigns distinct colors to multi-instance boxes", () => {
    const boxes: [number, number, number, number][] = [
      [0, 0, 10, 10],
      [20, 20, 30, 30],
      [40, 40, 50, 50],
    ];
    const rects = layoutBoxes(boxes, 100, 100, 100, 100);
    const colors = rects.map((r) => OVERLAY_COLORS[r.colorIndex]);
    expect(new Set(colors).size).toBe(3);
  });

  it("returns nothing for degenerate dimensions", () => {
    expect(layoutBoxes([[0, 0, 1, 1]], 0, 100, 100, 100)).toEqual([]);
    expect(layoutBoxes([[0, 0, 1, 1]], 100, 100, 100, 0)).toEqual([]);
  });
});
