import type { Dims, Vec3 } from "../src/types.js";
import type { RenderSink } from "../src/explorer.js";
import type { SliceImage } from "../src/slice.js";

export function fieldResponse(dims: Dims, values: Float32Array): Response {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    min = Math.min(min, v);
    max = Math.max(max, v);
  }
  return new Response(values.buffer.slice(0), {
    status: 200,
    headers: {
      "Content-Type": "application/octet-stream",
      "X-Dims": dims.join(","),
      "X-Value-Min": String(min),
      "X-Value-Max": String(max),
    },
  });
}

export function constantField(dims: Dims, value: number): Float32Array {
  return new Float32Array(dims[0] * dims[1] * dims[2]).fill(value);
}

export class RecordingSink implements RenderSink {
  images = new Map<number, SliceImage>();
  markers: Vec3[][] = [];
  errors: string[] = [];
  drawCount = 0;

  drawImage(slot: number, image: SliceImage): void {
    this.drawCount += 1;
    this.images.set(slot, image);
  }

  drawMarkers(refs: Vec3[]): void {
    this.markers.push(refs.map((r) => [...r] as Vec3));
  }

  showError(message: string): void {
    this.errors.push(message);
  }
}

/** Fetch stub that records JSON bodies and serves queued responses. */
export class FetchStub {
  calls: { url: string; body: unknown }[] = [];
  private handlers: ((url: string, body: unknown) => Response | Promise<Response>)[] = [];
  defaultHandler: ((url: string, body: unknown) => Response | Promise<Response>) | null = null;

  push(handler: (url: string, body: unknown) => Response | Promise<Response>): void {
    this.handlers.push(handler);
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ url, body });
    const handler = this.handlers.shift() ?? this.defaultHandler;
    if (!handler) throw new Error(`no handler queued for ${url}`);
    return handler(url, body);
  };

  callsTo(path: string): { url: string; body: unknown }[] {
    return this.calls.filter((c) => c.url.endsWith(path));
  }
}
