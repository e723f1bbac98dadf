/** DOM wiring for the explorer page served by `ndf serve`. */

import { ApiClient } from "./api.js";
import { Explorer, type RenderSink } from "./explorer.js";
import { pickDomainPoint } from "./picking.js";
import { TransferFunction } from "./transfer.js";
import type { Dims, SliceAxis, Vec3 } from "./types.js";

const DEFAULT_DIMS: Dims = [64, 64, 32];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class CanvasSink implements RenderSink {
  private canvases: HTMLCanvasElement[] = [];
  private markers: Vec3[] = [];

  constructor(
    private readonly grid: HTMLElement,
    private readonly status: HTMLElement,
    private readonly explorer: () => Explorer,
  ) {}

  layout(cellCount: number): void {
    this.grid.innerHTML = "";
    this.canvases = [];
    const side = Math.ceil(Math.sqrt(cellCount));
    this.grid.style.gridTemplateColumns = `repeat(${side}, 1fr)`;
    for (let i = 0; i < cellCount; i += 1) {
      const canvas = document.createElement("canvas");
      canvas.className = "cell";
      canvas.addEventListener("click", (ev) => this.onClick(canvas, ev));
      this.grid.appendChild(canvas);
      this.canvases.push(canvas);
    }
  }

  private onClick(canvas: HTMLCanvasElement, ev: MouseEvent): void {
    const exp = this.explorer();
    const rect = canvas.getBoundingClientRect();
    const scaleX = canvas.width / rect.width;
    const scaleY = canvas.height / rect.height;
    const p = pickDomainPoint(
      (ev.clientX - rect.left) * scaleX,
      (ev.clientY - rect.top) * scaleY,
      canvas.width, canvas.height, exp.dims, exp.sliceAxis, exp.sliceIndex,
    );
    exp.pickReference(p);
  }

  drawImage(slot: number, image: { width: number; height: number; pixels: Uint8ClampedArray }): void {
    const canvas = this.canvases[slot];
    if (!canvas) return;
    canvas.width = image.width;
    canvas.height = image.height;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const rgba = new Uint8ClampedArray(image.pixels); // pin to a plain ArrayBuffer
    ctx.putImageData(new ImageData(rgba, image.width, image.height), 0, 0);
    this.redrawMarkers();
  }

  drawMarkers(refs: Vec3[]): void {
    this.markers = refs;
    this.redrawMarkers();
    this.status.textContent = refs.length
      ? `reference: ${refs.map((r) => r.map((v) => v.toFixed(2)).join(", ")).join("  |  ")}`
      : "click a slice to pick a reference point";
  }

  private redrawMarkers(): void {
    const exp = this.explorer();
    for (const canvas of this.canvases) {
      const ctx = canvas.getContext("2d");
      if (!ctx) continue;
      for (const ref of this.markers) {
        const [u, v] = projectToSlice(ref, exp.sliceAxis);
        const x = ((u + 1) / 2) * (canvas.width - 1);
        const y = ((v + 1) / 2) * (canvas.height - 1);
        ctx.fillStyle = "#e0211d";
        ctx.beginPath();
        ctx.arc(x, y, Math.max(2, canvas.width / 48), 0, 2 * Math.PI);
        ctx.fill();
      }
    }
  }

  showError(message: string): void {
    this.status.textContent = `error: ${message}`;
    this.status.classList.add("error");
    setTimeout(() => this.status.classList.remove("error"), 2500);
  }
}

function projectToSlice(p: Vec3, axis: SliceAxis): [number, number] {
  if (axis === 2) return [p[0], p[1]];
  if (axis === 1) return [p[0], p[2]];
  return [p[1], p[2]];
}

async function boot(): Promise<void> {
  const grid = el<HTMLDivElement>("views");
  const status = el<HTMLDivElement>("status");
  let explorer: Explorer;
  const sink = new CanvasSink(grid, status, () => explorer);
  explorer = new Explorer({
    dims: DEFAULT_DIMS,
    api: new ApiClient(),
    sink,
  });
  sink.layout(1);

  const modelSelect = el<HTMLSelectElement>("model");
  const modeSelect = el<HTMLSelectElement>("mode");
  const axisSelect = el<HTMLSelectElement>("axis");
  const sliceRange = el<HTMLInputElement>("slice");
  const volumeToggle = el<HTMLInputElement>("volume");
  const tfReset = el<HTMLButtonElement>("tf-reset");
  const tfOpacity = el<HTMLInputElement>("tf-opacity");

  const models = await explorer.loadModels();
  for (const m of models) {
    const option = document.createElement("option");
    option.value = m.id;
    option.textContent = `${m.id} (${m.variables.join("-")}, ${m.measure})`;
    modelSelect.appendChild(option);
  }

  const syncSliceRange = () => {
    const n = explorer.dims[explorer.sliceAxis];
    sliceRange.max = String(n - 1);
    sliceRange.value = String(Math.min(explorer.sliceIndex, n - 1));
  };
  syncSliceRange();

  modelSelect.addEventListener("change", () => {
    explorer.selectModel(modelSelect.value);
    explorer.refresh();
  });
  modeSelect.addEventListener("change", () => {
    const mode = modeSelect.value as "single" | "difference" | "matrix";
    if (mode === "matrix") {
      const variables = [...new Set(models.flatMap((m) => m.variables))];
      explorer.setMode(mode, variables);
      sink.layout(variables.length * variables.length);
    } else {
      explorer.setMode(mode);
      sink.layout(1);
    }
    explorer.refresh();
  });
  axisSelect.addEventListener("change", () => {
    explorer.setSlice(Number(axisSelect.value) as SliceAxis,
                      Number(sliceRange.value));
    syncSliceRange();
  });
  sliceRange.addEventListener("input", () => {
    explorer.setSlice(explorer.sliceAxis, Number(sliceRange.value));
  });
  volumeToggle.addEventListener("change", () => {
    explorer.setVolumeRender(volumeToggle.checked);
  });
  tfReset.addEventListener("click", () => {
    const measure = explorer.activeModel?.measure ?? "pearson";
    explorer.setTransferFunction(measure === "ksg_mi"
      ? TransferFunction.sequentialDefault(1)
      : TransferFunction.divergingDefault());
    tfOpacity.value = "1";
  });
  tfOpacity.addEventListener("input", () => {
    // scale every control point's opacity; purely local re-render
    const scale = Number(tfOpacity.value);
    const base = explorer.transferFunction;
    let tf = base;
    base.points.forEach((p, i) => {
      const color = [...p.color] as [number, number, number, number];
      color[3] = Math.min(1, color[3] * scale);
      tf = tf.withPoint(i, { value: p.value, color });
    });
    explorer.setTransferFunction(tf);
  });

  status.textContent = models.length
    ? "click a slice to pick a reference point"
    : "no models loaded; start the server with --model";
}

void boot();
