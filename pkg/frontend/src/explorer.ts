/** Explorer core: view state, request coalescing, render scheduling.
 *
 * DOM-free by design; the UI layer supplies an ApiClient and a sink that
 * receives colorized images. Every interaction that needs new field data
 * goes through one coalescer (latest request wins); transfer-function
 * edits recolor the cached payloads without any network traffic.
 */

import { ApiClient } from "./api.js";
import { RequestCoalescer } from "./coalesce.js";
import { planMatrix, type MatrixCell } from "./matrix.js";
import { colorizeSlice, extractSlice, type SliceImage } from "./slice.js";
import { TransferFunction } from "./transfer.js";
import { raymarch } from "./volume.js";
import type {
  Dims,
  FieldPayload,
  ModelInfo,
  SliceAxis,
  Vec3,
  ViewMode,
} from "./types.js";

export interface RenderSink {
  /** Single/difference views render into slot 0; matrix cells into row*d+col. */
  drawImage(slot: number, image: SliceImage): void;
  /** Reference markers in domain coordinates, for overlays. */
  drawMarkers(refs: Vec3[]): void;
  showError(message: string): void;
}

export interface ExplorerOptions {
  dims: Dims;
  api: ApiClient;
  sink: RenderSink;
}

export class Explorer {
  readonly coalescer = new RequestCoalescer();
  mode: ViewMode = "single";
  sliceAxis: SliceAxis = 2;
  sliceIndex = 0;
  volumeRender = false;
  transferFunction: TransferFunction = TransferFunction.divergingDefault();
  refs: Vec3[] = [];

  private models: ModelInfo[] = [];
  private activeModelId: string | null = null;
  private matrixVariables: string[] = [];
  private payloads = new Map<number, FieldPayload>();

  constructor(private readonly options: ExplorerOptions) {
    this.sliceIndex = Math.floor(options.dims[2] / 2);
  }

  get dims(): Dims {
    return this.options.dims;
  }

  get activeModel(): ModelInfo | null {
    return this.models.find((m) => m.id === this.activeModelId) ?? null;
  }

  cachedPayload(slot = 0): FieldPayload | undefined {
    return this.payloads.get(slot);
  }

  async loadModels(): Promise<ModelInfo[]> {
    this.models = await this.options.api.listModels();
    if (this.models.length && this.activeModelId === null) {
      this.selectModel(this.models[0].id);
    }
    return this.models;
  }

  selectModel(id: string): void {
    const info = this.models.find((m) => m.id === id);
    if (!info) throw new Error(`unknown model ${id}`);
    this.activeModelId = id;
    this.transferFunction = info.measure === "ksg_mi"
      ? TransferFunction.sequentialDefault(1)
      : TransferFunction.divergingDefault();
  }

  setMode(mode: ViewMode, matrixVariables: string[] = []): void {
    this.mode = mode;
    this.matrixVariables = matrixVariables;
    if (mode !== "difference" && this.refs.length > 2) {
      this.refs = this.refs.slice(-1);
    }
  }

  /** Record a picked reference point and fetch the fields it implies. */
  pickReference(p: Vec3): void {
    if (this.mode === "difference") {
      this.refs = [...this.refs.slice(-1), p];
    } else {
      this.refs = [p];
    }
    this.refresh();
  }

  /** Local transfer-function edit: recolor cached payloads, no requests. */
  setTransferFunction(tf: TransferFunction): void {
    this.transferFunction = tf;
    this.renderCached();
  }

  setSlice(axis: SliceAxis, index: number): void {
    this.sliceAxis = axis;
    this.sliceIndex = index;
    this.renderCached();
  }

  setVolumeRender(on: boolean): void {
    this.volumeRender = on;
    this.renderCached();
  }

  /** Issue the reconstruction work for the current state (coalesced). */
  refresh(): void {
    const model = this.activeModel;
    if (!model) return;
    if (this.mode === "difference" && this.refs.length < 2) {
      // difference mode needs exactly two reference points; wait for them
      this.options.sink.drawMarkers(this.refs);
      return;
    }
    const { api, sink } = this.options;
    const dims = this.options.dims;
    const refs = [...this.refs];
    const mode = this.mode;
    this.coalescer.submit(async (seq) => {
      try {
        let fetched: Map<number, FieldPayload>;
        if (mode === "single") {
          const field = await api.reconstruct({
            model: model.id, ref: refs[refs.length - 1], dims,
          });
          fetched = new Map([[0, field]]);
        } else if (mode === "difference") {
          const field = await api.diff({
            model: model.id, refA: refs[0], refB: refs[1], dims,
          });
          fetched = new Map([[0, field]]);
        } else {
          fetched = await this.fetchMatrix(refs[refs.length - 1]);
        }
        if (!this.coalescer.commit(seq)) return; // stale: a newer pick won
        this.payloads = fetched;
        this.renderCached();
        sink.drawMarkers(refs);
      } catch (err) {
        sink.showError(err instanceof Error ? err.message : String(err));
      }
    });
  }

  private async fetchMatrix(ref: Vec3): Promise<Map<number, FieldPayload>> {
    const cells = this.matrixPlan();
    const d = this.matrixVariables.length;
    const out = new Map<number, FieldPayload>();
    const fields = await Promise.all(cells.map((cell) =>
      this.options.api.reconstruct({
        model: cell.modelId, ref, role: cell.role, dims: this.options.dims,
      })));
    cells.forEach((cell, i) => out.set(cell.row * d + cell.col, fields[i]));
    return out;
  }

  matrixPlan(): MatrixCell[] {
    return planMatrix(this.models, this.matrixVariables);
  }

  /** Recolor every cached payload through the current transfer function. */
  renderCached(): void {
    for (const [slot, field] of this.payloads) {
      const image = this.volumeRender
        ? raymarch(field, this.transferFunction, this.sliceAxis)
        : colorizeSlice(
            extractSlice(field, this.sliceAxis,
                         Math.min(this.sliceIndex,
                                  field.dims[this.sliceAxis] - 1)),
            this.transferFunction,
          );
      this.options.sink.drawImage(slot, image);
    }
  }
}
