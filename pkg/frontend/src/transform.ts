/**
 * Affine view transform between image space and screen space.
 * screen = image * zoom + pan. Pure functions; the canvas layer applies
 * the same transform when drawing, so markers stay anchored to image
 * coordinates at every zoom level.
 */

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export interface Vec2 {
  x: number;
  y: number;
}

export const MIN_ZOOM = 0.25;
export const MAX_ZOOM = 16;

export function clampZoom(zoom: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

export function identityView(): ViewTransform {
  return { zoom: 1, panX: 0, panY: 0 };
}

export function imageToScreen(t: ViewTransform, p: Vec2): Vec2 {
  return { x: p.x * t.zoom + t.panX, y: p.y * t.zoom + t.panY };
}

export function screenToImage(t: ViewTransform, p: Vec2): Vec2 {
  return { x: (p.x - t.panX) / t.zoom, y: (p.y - t.panY) / t.zoom };
}

/** Rescale around a fixed screen-space anchor (the cursor under the wheel). */
export function zoomAt(t: ViewTransform, factor: number, anchor: Vec2): ViewTransform {
  const zoom = clampZoom(t.zoom * factor);
  const ratio = zoom / t.zoom;
  return {
    zoom,
    panX: anchor.x - (anchor.x - t.panX) * ratio,
    panY: anchor.y - (anchor.y - t.panY) * ratio,
  };
}

export function panBy(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { zoom: t.zoom, panX: t.panX + dx, panY: t.panY + dy };
}

/** Initial transform: center the image in the viewport, zoomed to fit. */
export function fitImage(
  imageW: number,
  imageH: number,
  viewW: number,
  viewH: number,
): ViewTransform {
  const zoom = clampZoom(Math.min(viewW / imageW, viewH / imageH));
  return {
    zoom,
    panX: (viewW - imageW * zoom) / 2,
    panY: (viewH - imageH * zoom) / 2,
  };
}
