/**
 * Editor state machine: the working point list, selection, dirty tracking,
 * and the view transform. All gestures arrive as screen coordinates and are
 * mapped through the current transform, so this module is the single place
 * where screen space meets image space. View changes never touch point
 * data; server I/O lives elsewhere (api.ts).
 */

import {
  ViewTransform,
  Vec2,
  identityView,
  imageToScreen,
  screenToImage,
  zoomAt,
  panBy,
} from "./transform.js";

export interface AnnotationPoint {
  x: number;
  y: number;
  difficult: boolean;
}

export interface AnnotationDoc {
  image: string;
  width: number;
  height: number;
  points: AnnotationPoint[];
}

export type AddResult =
  | { ok: true; index: number }
  | { ok: false; reason: "out-of-bounds" | "no-image" };

const clonePoints = (points: AnnotationPoint[]): AnnotationPoint[] =>
  points.map((p) => ({ ...p }));

const samePoints = (a: AnnotationPoint[], b: AnnotationPoint[]): boolean =>
  a.length === b.length &&
  a.every(
    (p, i) =>
      p.x === b[i].x && p.y === b[i].y && p.difficult === b[i].difficult,
  );

export class EditorState {
  imageId: string | null = null;
  imageName = "";
  width = 0;
  height = 0;
  points: AnnotationPoint[] = [];
  selected: number | null = null;
  view: ViewTransform = identityView();

  private savedPoints: AnnotationPoint[] = [];

  get dirty(): boolean {
    return this.imageId !== null && !samePoints(this.points, this.savedPoints);
  }

  get count(): number {
    return this.points.length;
  }

  load(imageId: string, doc: AnnotationDoc, view?: ViewTransform): void {
    this.imageId = imageId;
    this.imageName = doc.image;
    this.width = doc.width;
    this.height = doc.height;
    this.points = clonePoints(doc.points);
    this.savedPoints = clonePoints(doc.points);
    this.selected = null;
    if (view) this.view = view;
  }

  /** Snapshot in the annotation-document schema (for PUT bodies). */
  toDoc(): AnnotationDoc {
    return {
      image: this.imageName,
      width: this.width,
      height: this.height,
      points: clonePoints(this.points),
    };
  }

  markSaved(): void {
    this.savedPoints = clonePoints(this.points);
  }

  inBounds(p: Vec2): boolean {
    return p.x >= 0 && p.x < this.width && p.y >= 0 && p.y < this.height;
  }

  addPointAtScreen(screen: Vec2): AddResult {
    if (this.imageId === null) return { ok: false, reason: "no-image" };
    const img = screenToImage(this.view, screen);
    if (!this.inBounds(img)) return { ok: false, reason: "out-of-bounds" };
    this.points.push({ x: img.x, y: img.y, difficult: false });
    this.selected = this.points.length - 1;
    return { ok: true, index: this.selected };
  }

  /** Index of the marker within radiusPx of the screen point, or null. */
  hitTest(screen: Vec2, radiusPx: number): number | null {
    let best: number | null = null;
    let bestDist = radiusPx;
    this.points.forEach((p, i) => {
      const s = imageToScreen(this.view, p);
      const d = Math.hypot(s.x - screen.x, s.y - screen.y);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    });
    return best;
  }

  select(index: number | null): void {
    this.selected =
      index !== null && index >= 0 && index < this.points.length
        ? index
        : null;
  }

  /** Move the selected point to the screen position, clamped to bounds. */
  dragSelectedToScreen(screen: Vec2): boolean {
    if (this.selected === null) return false;
    const img = screenToImage(this.view, screen);
    const p = this.points[this.selected];
    p.x = Math.min(Math.max(img.x, 0), this.width - 1e-3);
    p.y = Math.min(Math.max(img.y, 0), this.height - 1e-3);
    return true;
  }

  deleteSelected(): boolean {
    if (this.selected === null) return false;
    this.points.splice(this.selected, 1);
    this.selected = null;
    return true;
  }

  toggleDifficultSelected(): boolean {
    if (this.selected === null) return false;
    const p = this.points[this.selected];
    p.difficult = !p.difficult;
    return true;
  }

  zoomAtScreen(factor: number, anchor: Vec2): void {
    this.view = zoomAt(this.view, factor, anchor);
  }

  panByScreen(dx: number, dy: number): void {
    this.view = panBy(this.view, dx, dy);
  }

  markerScreenPosition(index: number): Vec2 {
    return imageToScreen(this.view, this.points[index]);
  }
}
