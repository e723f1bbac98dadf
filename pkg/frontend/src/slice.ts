/** Slice extraction and colormapping of reconstructed volumes. */

import type { Dims, FieldPayload, SliceAxis } from "./types.js";
import type { TransferFunction } from "./transfer.js";

export interface SliceImage {
  width: number;
  height: number;
  /** RGBA bytes, row-major, top row first. */
  pixels: Uint8ClampedArray;
}

function index3(dims: Dims, x: number, y: number, z: number): number {
  return x + dims[0] * (y + dims[1] * z);
}

/** Extract one axis-aligned slice as a row-major Float32Array. */
export function extractSlice(
  field: FieldPayload,
  axis: SliceAxis,
  index: number,
): { width: number; height: number; values: Float32Array } {
  const [nx, ny, nz] = field.dims;
  const sizes = [nx, ny, nz];
  if (index < 0 || index >= sizes[axis]) {
    throw new Error(`slice index ${index} out of range for axis ${axis}`);
  }
  let width: number;
  let height: number;
  if (axis === 2) {
    [width, height] = [nx, ny];
  } else if (axis === 1) {
    [width, height] = [nx, nz];
  } else {
    [width, height] = [ny, nz];
  }
  const out = new Float32Array(width * height);
  for (let row = 0; row < height; row += 1) {
    for (let col = 0; col < width; col += 1) {
      let v: number;
      if (axis === 2) v = field.values[index3(field.dims, col, row, index)];
      else if (axis === 1) v = field.values[index3(field.dims, col, index, row)];
      else v = field.values[index3(field.dims, index, col, row)];
      out[row * width + col] = v;
    }
  }
  return { width, height, values: out };
}

/** Map slice values through a transfer function into RGBA pixels. */
export function colorizeSlice(
  slice: { width: number; height: number; values: Float32Array },
  tf: TransferFunction,
): SliceImage {
  const pixels = new Uint8ClampedArray(slice.width * slice.height * 4);
  for (let i = 0; i < slice.values.length; i += 1) {
    const [r, g, b, a] = tf.sample(slice.values[i]);
    pixels[4 * i] = Math.round(255 * r);
    pixels[4 * i + 1] = Math.round(255 * g);
    pixels[4 * i + 2] = Math.round(255 * b);
    pixels[4 * i + 3] = Math.round(255 * a);
  }
  return { width: slice.width, height: slice.height, pixels };
}
