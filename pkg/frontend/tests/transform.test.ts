import { describe, expect, it } from "vitest";

import {
  MAX_ZOOM,
  MIN_ZOOM,
  clampZoom,
  fitImage,
  identityView,
  imageToScreen,
  panBy,
  screenToImage,
  zoomAt,
} from "../src/transform.js";

describe("view transform", () => {
  it("is the identity plus pan at zoom 1", () => {
    const t = { zoom: 1, panX: 40, panY: -10 };
    expect(imageToScreen(t, { x: 5, y: 7 })).toEqual({ x: 45, y: -3 });
  });

  it("round-trips screen->image->screen within 0.5px at key zooms", () => {
    for (const zoom of [0.5, 1, 4]) {
      const t = { zoom, panX: 123.4, panY: -56.7 };
      for (let i = 0; i < 50; i++) {
        const p = { x: (i * 37.3) % 900, y: (i * 91.7) % 700 };
        const back = imageToScreen(t, screenToImage(t, p));
        expect(Math.abs(back.x - p.x)).toBeLessThanOrEqual(0.5);
        expect(Math.abs(back.y - p.y)).toBeLessThanOrEqual(0.5);
      }
    }
  });

  it("marker screen position equals point*zoom + pan", () => {
    const t = { zoom: 2.5, panX: 11, panY: 22 };
    const s = imageToScreen(t, { x: 10, y: 20 });
    expect(s.x).toBeCloseTo(10 * 2.5 + 11, 12);
    expect(s.y).toBeCloseTo(20 * 2.5 + 22, 12);
  });

  it("zoomAt keeps the anchor fixed on screen", () => {
    let t = identityView();
    const anchor = { x: 300, y: 200 };
    const before = screenToImage(t, anchor);
    t = zoomAt(t, 3.7, anchor);
    const after = screenToImage(t, anchor);
    expect(after.x).toBeCloseTo(before.x, 9);
    expect(after.y).toBeCloseTo(before.y, 9);
  });

  it("clamps zoom to the configured range and stays there", () => {
    expect(clampZoom(0.01)).toBe(MIN_ZOOM);
    expect(clampZoom(100)).toBe(MAX_ZOOM);
    let t = identityView();
    for (let i = 0; i < 30; i++) t = zoomAt(t, 2, { x: 0, y: 0 });
    expect(t.zoom).toBe(MAX_ZOOM);
    t = zoomAt(t, 1.5, { x: 10, y: 10 });
    expect(t.zoom).toBe(MAX_ZOOM);
  });

  it("pans additively", () => {
    const t = panBy(panBy(identityView(), 5, -3), -2, 10);
    expect(t).toEqual({ zoom: 1, panX: 3, panY: 7 });
  });

  it("fits and centers the image", () => {
    const t = fitImage(100, 50, 400, 400);
    expect(t.zoom).toBe(4);
    expect(t.panX).toBe(0);
    expect(t.panY).toBe((400 - 50 * 4) / 2);
  });
});
