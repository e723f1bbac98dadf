/** Typed client for the reconstruction service.
 *
 * JSON control plane, binary float32 data plane; the fetch implementation
 * is injectable so tests can run without a server.
 */

import type { Dims, FieldPayload, ModelInfo, Role, Vec3 } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ReconstructParams {
  model: string;
  ref: Vec3;
  role?: Role;
  dims: Dims;
  clamp?: boolean;
}

export interface DiffParams {
  model: string;
  refA: Vec3;
  refB: Vec3;
  dims: Dims;
}

async function parseFieldResponse(resp: Response): Promise<FieldPayload> {
  if (!resp.ok) {
    throw new Error(`reconstruction request failed: ${resp.status}`);
  }
  const dimsHeader = resp.headers.get("X-Dims");
  if (!dimsHeader) {
    throw new Error("response is missing the X-Dims header");
  }
  const dims = dimsHeader.split(",").map(Number) as Dims;
  const buffer = await resp.arrayBuffer();
  const values = new Float32Array(buffer);
  if (values.length !== dims[0] * dims[1] * dims[2]) {
    throw new Error(
      `payload holds ${values.length} values, dims say ${dims.join("x")}`,
    );
  }
  return {
    dims,
    min: Number(resp.headers.get("X-Value-Min") ?? NaN),
    max: Number(resp.headers.get("X-Value-Max") ?? NaN),
    values,
  };
}

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly base = "",
  ) {}

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async listModels(): Promise<ModelInfo[]> {
    const resp = await this.fetchImpl(this.base + "/api/models");
    if (!resp.ok) throw new Error(`model listing failed: ${resp.status}`);
    return (await resp.json()) as ModelInfo[];
  }

  async reconstruct(params: ReconstructParams): Promise<FieldPayload> {
    const resp = await this.post("/api/reconstruct", {
      model: params.model,
      ref: params.ref,
      role: params.role ?? "reference-is-mu",
      dims: params.dims,
      clamp: params.clamp ?? true,
    });
    return parseFieldResponse(resp);
  }

  async diff(params: DiffParams): Promise<FieldPayload> {
    const resp = await this.post("/api/diff", {
      model: params.model,
      ref_a: params.refA,
      ref_b: params.refB,
      dims: params.dims,
    });
    return parseFieldResponse(resp);
  }
}
