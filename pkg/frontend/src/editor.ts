/**
 * Canvas renderer and gesture wiring around an EditorState.
 *
 * Gestures: click on empty space adds a point; click on a marker selects
 * it; dragging a marker moves it; dragging empty space pans; the wheel
 * zooms about the cursor. Keys: Delete/Backspace removes the selection,
 * "d" toggles its difficult flag. Markers are drawn at a fixed screen size
 * so dense scenes stay readable when zoomed out.
 */

import { ApiClient, ApiError } from "./api.js";
import { EditorState } from "./state.js";
import { Vec2, fitImage, imageToScreen } from "./transform.js";

const MARKER_HIT_RADIUS = 8; // px, screen space
const MARKER_ARM = 6; // cross half-extent, px
const DRAG_THRESHOLD = 3; // px before a press becomes a drag

type Gesture =
  | { kind: "idle" }
  | { kind: "press"; start: Vec2; onPoint: number | null }
  | { kind: "drag-point" }
  | { kind: "pan"; last: Vec2 };

export class Editor {
  readonly state = new EditorState();
  private image: HTMLImageElement | null = null;
  private gesture: Gesture = { kind: "idle" };
  private flashUntil = 0;
  private highlightIndex: number | null = null;
  private statusText = "";

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly api: ApiClient,
    private readonly onChange: () => void,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
    canvas.addEventListener("wheel", (e) => this.wheel(e), { passive: false });
    window.addEventListener("keydown", (e) => this.keyDown(e));
    window.addEventListener("beforeunload", (e) => {
      if (this.state.dirty) e.preventDefault();
    });
  }

  get status(): string {
    return this.statusText;
  }

  async open(imageId: string): Promise<void> {
    const doc = await this.api.getAnnotations(imageId);
    const img = new Image();
    img.src = this.api.imageFileUrl(imageId);
    await img.decode();
    this.image = img;
    this.state.load(
      imageId,
      doc,
      fitImage(doc.width, doc.height, this.canvas.width, this.canvas.height),
    );
    this.highlightIndex = null;
    this.statusText = "";
    this.render();
    this.onChange();
  }

  async save(): Promise<boolean> {
    const id = this.state.imageId;
    if (id === null || !this.state.dirty) return true;
    try {
      await this.api.putAnnotations(id, this.state.toDoc());
      this.state.markSaved();
      this.highlightIndex = null;
      this.statusText = "saved";
      this.render();
      this.onChange();
      return true;
    } catch (err) {
      if (err instanceof ApiError) {
        this.statusText = err.message;
        const m = err.field?.match(/^points\[(\d+)\]/);
        this.highlightIndex = m ? Number(m[1]) : null;
      } else {
        this.statusText = `save failed: ${String(err)} (changes kept)`;
      }
      this.render();
      this.onChange();
      return false;
    }
  }

  private canvasPos(e: PointerEvent | WheelEvent): Vec2 {
    const rect = this.canvas.getBoundingClientRect();
    return { x: e.clientX - rect.left, y: e.clientY - rect.top };
  }

  private pointerDown(e: PointerEvent): void {
    if (this.state.imageId === null) return;
    this.canvas.setPointerCapture(e.pointerId);
    const pos = this.canvasPos(e);
    const hit = this.state.hitTest(pos, MARKER_HIT_RADIUS);
    this.gesture = { kind: "press", start: pos, onPoint: hit };
    if (hit !== null) {
      this.state.select(hit);
      this.render();
      this.onChange();
    }
  }

  private pointerMove(e: PointerEvent): void {
    const pos = this.canvasPos(e);
    if (this.gesture.kind === "press") {
      const d = Math.hypot(
        pos.x - this.gesture.start.x,
        pos.y - this.gesture.start.y,
      );
      if (d < DRAG_THRESHOLD) return;
      this.gesture =
        this.gesture.onPoint !== null
          ? { kind: "drag-point" }
          : { kind: "pan", last: this.gesture.start };
    }
    if (this.gesture.kind === "drag-point") {
      this.state.dragSelectedToScreen(pos);
      this.render();
      this.onChange();
    } else if (this.gesture.kind === "pan") {
      this.state.panByScreen(
        pos.x - this.gesture.last.x,
        pos.y - this.gesture.last.y,
      );
      this.gesture.last = pos;
      this.render();
    }
  }

  private pointerUp(e: PointerEvent): void {
    const pos = this.canvasPos(e);
    if (this.gesture.kind === "press") {
      if (this.gesture.onPoint === null) {
        const added = this.state.addPointAtScreen(pos);
        if (!added.ok) {
          this.flashUntil = performance.now() + 350;
          this.statusText = "outside the image";
        } else {
          this.statusText = "";
        }
        this.render();
        this.onChange();
      }
    }
    this.gesture = { kind: "idle" };
  }

  private wheel(e: WheelEvent): void {
    if (this.state.imageId === null) return;
    e.preventDefault();
    const factor = Math.exp(-e.deltaY * 0.0015);
    this.state.zoomAtScreen(factor, this.canvasPos(e));
    this.render();
    this.onChange();
  }

  private keyDown(e: KeyboardEvent): void {
    if (this.state.imageId === null) return;
    if (e.key === "Delete" || e.key === "Backspace") {
      if (this.state.deleteSelected()) {
        e.preventDefault();
        this.render();
        this.onChange();
      }
    } else if (e.key === "d") {
      if (this.state.toggleDifficultSelected()) {
        this.render();
        this.onChange();
      }
    }
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.setTransform(1, 0, 0, 1, 0, 0);
    ctx.fillStyle = "#10151a";
    ctx.fillRect(0, 0, width, height);
    if (!this.image || this.state.imageId === null) return;

    const v = this.state.view;
    ctx.imageSmoothingEnabled = v.zoom < 1;
    ctx.setTransform(v.zoom, 0, 0, v.zoom, v.panX, v.panY);
    ctx.drawImage(this.image, 0, 0);
    ctx.setTransform(1, 0, 0, 1, 0, 0);

    if (performance.now() < this.flashUntil) {
      ctx.strokeStyle = "#ff5050";
      ctx.lineWidth = 3;
      ctx.strokeRect(1, 1, width - 2, height - 2);
      requestAnimationFrame(() => this.render());
    }

    this.state.points.forEach((p, i) => {
      const s = imageToScreen(v, p);
      ctx.strokeStyle =
        i === this.highlightIndex
          ? "#ff5050"
          : i === this.state.selected
            ? "#ffd24d"
            : p.difficult
              ? "#ff9f1c"
              : "#35e0a1";
      ctx.lineWidth = i === this.state.selected ? 2.5 : 1.5;
      ctx.beginPath();
      ctx.moveTo(s.x - MARKER_ARM, s.y);
      ctx.lineTo(s.x + MARKER_ARM, s.y);
      ctx.moveTo(s.x, s.y - MARKER_ARM);
      ctx.lineTo(s.x, s.y + MARKER_ARM);
      ctx.stroke();
      if (p.difficult) {
        ctx.beginPath();
        ctx.arc(s.x, s.y, MARKER_ARM + 2, 0, Math.PI * 2);
        ctx.stroke();
      }
    });
  }
}
