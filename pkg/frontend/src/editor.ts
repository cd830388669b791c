/** Canvas rendering and pointer interaction for the boundary editor. */

import { decodeRle } from "./geometry.js";
import type { EditorController, EditorViewState } from "./state.js";

const VERTEX_HIT_RADIUS_PX = 8;

export class EditorCanvas {
  private readonly ctx: CanvasRenderingContext2D;
  private image: ImageBitmap | null = null;
  private imageWidth = 0;
  private imageHeight = 0;
  private maskCanvas: HTMLCanvasElement | null = null;
  private lastMask: EditorViewState["maskRle"] = null;
  private dragging = false;
  private stroking = false;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly controller: EditorController,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("2d canvas context unavailable");
    }
    this.ctx = ctx;
    controller.subscribe((state) => this.render(state));
    canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    canvas.addEventListener("pointermove", (e) => this.onMove(e));
    canvas.addEventListener("pointerup", (e) => this.onUp(e));
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
  }

  async setImage(blob: Blob, width: number, height: number): Promise<void> {
    this.image = await createImageBitmap(blob);
    this.imageWidth = width;
    this.imageHeight = height;
    this.fitView();
    this.render(this.controller.view);
  }

  private fitView(): void {
    if (!this.imageWidth || !this.imageHeight) {
      return;
    }
    const zoom = Math.min(
      this.canvas.width / this.imageWidth,
      this.canvas.height / this.imageHeight,
    );
    this.controller.setView(
      zoom,
      (this.canvas.width - this.imageWidth * zoom) / 2,
      (this.canvas.height - this.imageHeight * zoom) / 2,
    );
  }

  private toImage(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const state = this.controller.view;
    const sx = ((e.clientX - rect.left) * this.canvas.width) / rect.width;
    const sy = ((e.clientY - rect.top) * this.canvas.height) / rect.height;
    return [(sx - state.panX) / state.zoom, (sy - state.panY) / state.zoom];
  }

  private hitVertex(state: EditorViewState, x: number, y: number): number | null {
    if (!state.polygon) {
      return null;
    }
    const tolerance = VERTEX_HIT_RADIUS_PX / state.zoom;
    let best: number | null = null;
    let bestDist = tolerance;
    state.polygon.forEach(([vx, vy], i) => {
      const d = Math.hypot(vx - x, vy - y);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    });
    return best;
  }

  private onDown(e: PointerEvent): void {
    const state = this.controller.view;
    const [x, y] = this.toImage(e);
    this.canvas.setPointerCapture(e.pointerId);
    if (state.tool === "seed") {
      void this.controller.tapSeed(x, y);
    } else if (state.tool === "drag") {
      const hit = this.hitVertex(state, x, y);
      if (hit !== null) {
        this.controller.beginDrag(hit);
        this.dragging = true;
      }
    } else if (state.tool === "redraw") {
      this.controller.beginStroke();
      this.controller.addStrokePoint(x, y);
      this.stroking = true;
    }
  }

  private onMove(e: PointerEvent): void {
    const [x, y] = this.toImage(e);
    if (this.dragging) {
      this.controller.moveDrag(x, y);
    } else if (this.stroking) {
      this.controller.addStrokePoint(x, y);
    }
  }

  private onUp(_e: PointerEvent): void {
    if (this.dragging) {
      this.dragging = false;
      void this.controller.endDrag();
    } else if (this.stroking) {
      this.stroking = false;
      void this.controller.endStroke();
    }
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    const state = this.controller.view;
    const factor = e.deltaY < 0 ? 1.1 : 1 / 1.1;
    const rect = this.canvas.getBoundingClientRect();
    const sx = ((e.clientX - rect.left) * this.canvas.width) / rect.width;
    const sy = ((e.clientY - rect.top) * this.canvas.height) / rect.height;
    const zoom = state.zoom * factor;
    // keep the cursor point fixed while zooming
    const panX = sx - ((sx - state.panX) / state.zoom) * zoom;
    const panY = sy - ((sy - state.panY) / state.zoom) * zoom;
    this.controller.setView(zoom, panX, panY);
  }

  private maskOverlay(state: EditorViewState): HTMLCanvasElement | null {
    if (!state.maskRle) {
      return null;
    }
    if (state.maskRle === this.lastMask && this.maskCanvas) {
      return this.maskCanvas;
    }
    const [h, w] = state.maskRle.shape;
    const mask = decodeRle(state.maskRle);
    const overlay = document.createElement("canvas");
    overlay.width = w;
    overlay.height = h;
    const octx = overlay.getContext("2d");
    if (!octx) {
      return null;
    }
    const img = octx.createImageData(w, h);
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) {
        img.data[i * 4] = 80;
        img.data[i * 4 + 1] = 220;
        img.data[i * 4 + 2] = 120;
        img.data[i * 4 + 3] = 90;
      }
    }
    octx.putImageData(img, 0, 0);
    this.maskCanvas = overlay;
    this.lastMask = state.maskRle;
    return overlay;
  }

  render(state: EditorViewState): void {
    const { ctx } = this;
    ctx.setTransform(1, 0, 0, 1, 0, 0);
    ctx.fillStyle = "#16181d";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.setTransform(state.zoom, 0, 0, state.zoom, state.panX, state.panY);

    if (this.image) {
      ctx.drawImage(this.image, 0, 0, this.imageWidth, this.imageHeight);
    }
    const overlay = this.maskOverlay(state);
    if (overlay) {
      ctx.drawImage(overlay, 0, 0, this.imageWidth, this.imageHeight);
    }

    const polygon = state.dragGhost ?? state.polygon;
    if (polygon) {
      ctx.beginPath();
      polygon.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.closePath();
      ctx.lineWidth = 2 / state.zoom;
      ctx.strokeStyle = state.dragGhost ? "#f5c542" : "#3ddc84";
      ctx.stroke();
      ctx.fillStyle = "#ffffff";
      for (const [x, y] of polygon) {
        ctx.beginPath();
        ctx.arc(x, y, 3 / state.zoom, 0, Math.PI * 2);
        ctx.fill();
      }
    }

    if (state.stroke && state.stroke.length > 1) {
      ctx.beginPath();
      state.stroke.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.lineWidth = 1.5 / state.zoom;
      ctx.strokeStyle = "#42a5f5";
      ctx.stroke();
    }

    if (state.seed) {
      const [x, y] = state.seed;
      ctx.beginPath();
      ctx.arc(x + 0.5, y + 0.5, 5 / state.zoom, 0, Math.PI * 2);
      ctx.strokeStyle = "#ff5252";
      ctx.lineWidth = 2 / state.zoom;
      ctx.stroke();
    }
  }
}
