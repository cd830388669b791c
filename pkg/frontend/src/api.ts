/** Typed client for the woundpatch session service. */

export interface Rle {
  shape: number[];
  runs: number[];
}

export interface Preview {
  session_id: string;
  threshold: number;
  seed: [number, number] | null;
  polygon: number[][] | null;
  mask_rle: Rle | null;
  area_px: number | null;
  accepted?: boolean;
}

export interface ServiceErrorPayload {
  stage: string;
  code: string;
  message: string;
}

export interface GenerateResult {
  stl_size: number;
  gcode_size: number;
  flat_area_cm2: number;
  mesh_area_cm2: number;
}

export interface SlicerSettings {
  layer_height?: number;
  extrusion_width?: number;
  filament_diameter?: number;
  perimeter_count?: number;
  infill_spacing?: number;
  feed_rate?: number;
}

export class ApiError extends Error {
  constructor(readonly payload: ServiceErrorPayload, readonly status: number) {
    super(payload.message);
    this.name = "ApiError";
  }
}

/** Surface the controller depends on; `HttpApi` is the real implementation. */
export interface SessionApi {
  createSession(form: FormData): Promise<{ session_id: string; threshold: number }>;
  setSeed(sessionId: string, x: number, y: number): Promise<Preview>;
  setThreshold(sessionId: string, value: number): Promise<Preview>;
  putBoundary(sessionId: string, vertices: number[][]): Promise<Preview>;
  generate(
    sessionId: string,
    thicknessMm: number,
    slicer?: SlicerSettings,
  ): Promise<GenerateResult>;
  downloadArtifact(sessionId: string, kind: "stl" | "gcode"): Promise<ArrayBuffer>;
}

export class HttpApi implements SessionApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      let payload: ServiceErrorPayload;
      try {
        payload = (await res.json()) as ServiceErrorPayload;
      } catch {
        payload = { stage: "service", code: `http_${res.status}`, message: res.statusText };
      }
      throw new ApiError(payload, res.status);
    }
    return (await res.json()) as T;
  }

  private json(body: unknown): RequestInit {
    return {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  createSession(form: FormData): Promise<{ session_id: string; threshold: number }> {
    return this.request("/sessions", { method: "POST", body: form });
  }

  setSeed(sessionId: string, x: number, y: number): Promise<Preview> {
    return this.request(`/sessions/${sessionId}/seed`, this.json({ x, y }));
  }

  setThreshold(sessionId: string, value: number): Promise<Preview> {
    return this.request(`/sessions/${sessionId}/threshold`, this.json({ value }));
  }

  putBoundary(sessionId: string, vertices: number[][]): Promise<Preview> {
    return this.request(`/sessions/${sessionId}/boundary`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ vertices }),
    });
  }

  generate(
    sessionId: string,
    thicknessMm: number,
    slicer: SlicerSettings = {},
  ): Promise<GenerateResult> {
    return this.request(
      `/sessions/${sessionId}/generate`,
      this.json({ thickness_mm: thicknessMm, slicer }),
    );
  }

  async downloadArtifact(sessionId: string, kind: "stl" | "gcode"): Promise<ArrayBuffer> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/artifacts/${kind}`);
    if (!res.ok) {
      throw new ApiError(
        { stage: "service", code: `http_${res.status}`, message: res.statusText },
        res.status,
      );
    }
    return res.arrayBuffer();
  }
}
