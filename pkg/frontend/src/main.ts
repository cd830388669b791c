import { HttpApi } from "./api.js";
import { EditorCanvas } from "./editor.js";
import { EditorController } from "./state.js";
import type { Tool } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function saveBlob(name: string, data: ArrayBuffer): void {
  const url = URL.createObjectURL(new Blob([data]));
  const a = document.createElement("a");
  a.href = url;
  a.download = name;
  a.click();
  URL.revokeObjectURL(url);
}

function boot(): void {
  const api = new HttpApi(
    (el<HTMLInputElement>("server-url").value || "http://127.0.0.1:8008").replace(/\/$/, ""),
  );
  const controller = new EditorController(api, {
    artifactSink: (kind, data) => saveBlob(`patch.${kind}`, data),
  });
  const canvas = new EditorCanvas(el<HTMLCanvasElement>("editor"), controller);

  const toast = el<HTMLDivElement>("toast");
  const status = el<HTMLDivElement>("status");
  controller.subscribe((state) => {
    toast.textContent = state.toast ?? "";
    toast.style.display = state.toast ? "block" : "none";
    const area = state.areaPx ? ` | region ${Math.round(state.areaPx)} px^2` : "";
    const busy = state.pending ? " | working..." : "";
    const art = state.artifacts
      ? ` | patch ${state.artifacts.flatAreaCm2.toFixed(2)} cm^2, ` +
        `stl ${state.artifacts.stlSize} B, gcode ${state.artifacts.gcodeSize} B`
      : "";
    status.textContent = `session ${state.sessionId ?? "-"} | threshold ${state.threshold.toFixed(2)}${area}${busy}${art}`;
    for (const tool of ["seed", "adjust", "drag", "redraw"] as Tool[]) {
      el<HTMLButtonElement>(`tool-${tool}`).classList.toggle("active", state.tool === tool);
    }
  });

  el<HTMLFormElement>("upload-form").addEventListener("submit", (e) => {
    e.preventDefault();
    void (async () => {
      const form = new FormData();
      const manifestFile = el<HTMLInputElement>("file-manifest").files?.[0];
      const rgbFile = el<HTMLInputElement>("file-rgb").files?.[0];
      const depthFile = el<HTMLInputElement>("file-depth").files?.[0];
      const scoreFile = el<HTMLInputElement>("file-score").files?.[0];
      if (!manifestFile || !rgbFile || !depthFile) {
        toast.textContent = "manifest, rgb and depth files are required";
        toast.style.display = "block";
        return;
      }
      form.append("manifest", manifestFile);
      form.append("rgb", rgbFile);
      form.append("depth", depthFile);
      if (scoreFile) {
        form.append("score", scoreFile);
      }
      await controller.createSession(form);
      const manifest = JSON.parse(await manifestFile.text()) as {
        width: number;
        height: number;
        default_threshold?: number;
      };
      await canvas.setImage(rgbFile, manifest.width, manifest.height);
      el<HTMLInputElement>("threshold").value = String(
        manifest.default_threshold ?? controller.view.threshold,
      );
    })();
  });

  for (const tool of ["seed", "adjust", "drag", "redraw"] as Tool[]) {
    el<HTMLButtonElement>(`tool-${tool}`).addEventListener("click", () =>
      controller.setTool(tool),
    );
  }

  el<HTMLInputElement>("threshold").addEventListener("input", (e) => {
    const value = Number((e.target as HTMLInputElement).value);
    if (controller.view.sessionId) {
      controller.slideThreshold(value);
    }
  });

  el<HTMLButtonElement>("generate").addEventListener("click", () => {
    const thickness = Number(el<HTMLInputElement>("thickness").value) || 2.0;
    void controller.generateAndDownload(thickness);
  });
}

window.addEventListener("DOMContentLoaded", boot);
