import { ApiError } from "./api.js";
import type { GenerateResult, Preview, Rle, SessionApi, SlicerSettings } from "./api.js";
import { TrailingLimiter } from "./debounce.js";
import { resampleStroke } from "./geometry.js";

export type Tool = "seed" | "adjust" | "drag" | "redraw";

export interface ArtifactInfo {
  stlSize: number;
  gcodeSize: number;
  flatAreaCm2: number;
  meshAreaCm2: number;
}

export interface EditorViewState {
  zoom: number;
  panX: number;
  panY: number;
  tool: Tool;
  sessionId: string | null;
  /** last threshold acknowledged by the server */
  threshold: number;
  seed: [number, number] | null;
  /** last acknowledged boundary; never mutated locally */
  polygon: number[][] | null;
  maskRle: Rle | null;
  areaPx: number | null;
  /** local-only drag preview; discarded unless the server accepts */
  dragGhost: number[][] | null;
  dragIndex: number | null;
  stroke: number[][] | null;
  pending: boolean;
  toast: string | null;
  artifacts: ArtifactInfo | null;
}

export type ArtifactSink = (kind: "stl" | "gcode", data: ArrayBuffer) => void;

const MAX_THRESHOLD_RATE_MS = 100; // <= 10 requests per second

export class EditorController {
  private state: EditorViewState = {
    zoom: 1,
    panX: 0,
    panY: 0,
    tool: "seed",
    sessionId: null,
    threshold: 0.5,
    seed: null,
    polygon: null,
    maskRle: null,
    areaPx: null,
    dragGhost: null,
    dragIndex: null,
    stroke: null,
    pending: false,
    toast: null,
    artifacts: null,
  };
  private listeners = new Set<(s: EditorViewState) => void>();
  private inFlight = 0;
  private readonly limiter: TrailingLimiter<number>;
  private readonly artifactSink: ArtifactSink;

  constructor(
    private readonly api: SessionApi,
    options: { artifactSink?: ArtifactSink; thresholdIntervalMs?: number } = {},
  ) {
    this.artifactSink = options.artifactSink ?? (() => undefined);
    this.limiter = new TrailingLimiter(
      (value) => this.sendThreshold(value),
      options.thresholdIntervalMs ?? MAX_THRESHOLD_RATE_MS,
    );
  }

  get view(): EditorViewState {
    return { ...this.state };
  }

  subscribe(listener: (s: EditorViewState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(patch: Partial<EditorViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  private begin(): void {
    this.inFlight += 1;
    this.update({ pending: true });
  }

  private done(): void {
    this.inFlight -= 1;
    if (this.inFlight === 0) {
      this.update({ pending: false });
    }
  }

  private applyPreview(preview: Preview): void {
    this.update({
      threshold: preview.threshold,
      seed: preview.seed,
      polygon: preview.polygon,
      maskRle: preview.mask_rle,
      areaPx: preview.area_px,
      toast: null,
    });
  }

  private toastFrom(error: unknown): void {
    const message = error instanceof ApiError ? error.payload.message : String(error);
    this.update({ toast: message });
  }

  setTool(tool: Tool): void {
    this.update({ tool, dragGhost: null, dragIndex: null, stroke: null });
  }

  setView(zoom: number, panX: number, panY: number): void {
    this.update({ zoom, panX, panY });
  }

  async createSession(form: FormData): Promise<void> {
    this.begin();
    try {
      const created = await this.api.createSession(form);
      this.update({
        sessionId: created.session_id,
        threshold: created.threshold,
        seed: null,
        polygon: null,
        maskRle: null,
        areaPx: null,
        artifacts: null,
        toast: null,
      });
    } catch (error) {
      this.toastFrom(error);
      throw error;
    } finally {
      this.done();
    }
  }

  private requireSession(): string {
    if (!this.state.sessionId) {
      throw new Error("no active session");
    }
    return this.state.sessionId;
  }

  async tapSeed(x: number, y: number): Promise<boolean> {
    const sid = this.requireSession();
    this.begin();
    try {
      this.applyPreview(await this.api.setSeed(sid, Math.round(x), Math.round(y)));
      return true;
    } catch (error) {
      this.toastFrom(error);
      return false;
    } finally {
      this.done();
    }
  }

  /** Debounced: at most one in-flight request, newest value always lands. */
  slideThreshold(value: number): void {
    this.requireSession();
    this.limiter.push(value);
  }

  private async sendThreshold(value: number): Promise<void> {
    const sid = this.requireSession();
    this.begin();
    try {
      this.applyPreview(await this.api.setThreshold(sid, value));
    } catch (error) {
      this.toastFrom(error);
    } finally {
      this.done();
    }
  }

  /** Resolves once no threshold request is queued or in flight. */
  async thresholdSettled(pollMs = 10): Promise<void> {
    while (this.limiter.busy) {
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  beginDrag(vertexIndex: number): void {
    if (!this.state.polygon || vertexIndex < 0 || vertexIndex >= this.state.polygon.length) {
      return;
    }
    this.update({
      dragIndex: vertexIndex,
      dragGhost: this.state.polygon.map((v) => [...v]),
    });
  }

  moveDrag(x: number, y: number): void {
    if (this.state.dragIndex === null || !this.state.dragGhost) {
      return;
    }
    const ghost = this.state.dragGhost.map((v) => [...v]);
    ghost[this.state.dragIndex] = [x, y];
    this.update({ dragGhost: ghost });
  }

  /** Submit the dragged polygon; on rejection the vertex snaps back. */
  async endDrag(): Promise<boolean> {
    const ghost = this.state.dragGhost;
    this.update({ dragGhost: null, dragIndex: null });
    if (!ghost) {
      return false;
    }
    return this.submitBoundary(ghost);
  }

  beginStroke(): void {
    this.update({ stroke: [] });
  }

  addStrokePoint(x: number, y: number): void {
    if (!this.state.stroke) {
      return;
    }
    this.update({ stroke: [...this.state.stroke, [x, y]] });
  }

  async endStroke(): Promise<boolean> {
    const stroke = this.state.stroke;
    this.update({ stroke: null });
    if (!stroke) {
      return false;
    }
    let resampled: number[][];
    try {
      resampled = resampleStroke(stroke);
    } catch (error) {
      this.update({ toast: String(error instanceof Error ? error.message : error) });
      return false;
    }
    return this.submitBoundary(resampled);
  }

  private async submitBoundary(vertices: number[][]): Promise<boolean> {
    const sid = this.requireSession();
    this.begin();
    try {
      this.applyPreview(await this.api.putBoundary(sid, vertices));
      return true;
    } catch (error) {
      // acknowledged polygon stays: the UI snaps back automatically
      this.toastFrom(error);
      return false;
    } finally {
      this.done();
    }
  }

  async generateAndDownload(
    thicknessMm: number,
    slicer?: SlicerSettings,
  ): Promise<GenerateResult | null> {
    const sid = this.requireSession();
    this.begin();
    try {
      const result = await this.api.generate(sid, thicknessMm, slicer);
      this.update({
        artifacts: {
          stlSize: result.stl_size,
          gcodeSize: result.gcode_size,
          flatAreaCm2: result.flat_area_cm2,
          meshAreaCm2: result.mesh_area_cm2,
        },
        toast: null,
      });
      this.artifactSink("stl", await this.api.downloadArtifact(sid, "stl"));
      this.artifactSink("gcode", await this.api.downloadArtifact(sid, "gcode"));
      return result;
    } catch (error) {
      this.toastFrom(error);
      return null;
    } finally {
      this.done();
    }
  }
}
