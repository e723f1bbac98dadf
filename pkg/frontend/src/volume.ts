/** Minimal orthographic volume rendering: front-to-back compositing
 * along one axis, with the transfer function as emission and opacity.
 * Slices stay the exact primary view; this is the progressive
 * enhancement for a quick 3D impression without a graphics stack.
 */

import type { FieldPayload, SliceAxis } from "./types.js";
import type { TransferFunction } from "./transfer.js";
import type { SliceImage } from "./slice.js";

/**
 * March rays along `axis` (front = low coordinate unless `reverse`),
 * compositing color += (1 - accumulated alpha) * sample alpha * color.
 */
export function raymarch(
  field: FieldPayload,
  tf: TransferFunction,
  axis: SliceAxis = 2,
  reverse = false,
  opacityScale = 1.0,
): SliceImage {
  const [nx, ny, nz] = field.dims;
  const sizes: [number, number, number] = [nx, ny, nz];
  const depth = sizes[axis];
  let width: number;
  let height: number;
  if (axis === 2) [width, height] = [nx, ny];
  else if (axis === 1) [width, height] = [nx, nz];
  else [width, height] = [ny, nz];

  const value = (col: number, row: number, step: number): number => {
    const k = reverse ? depth - 1 - step : step;
    if (axis === 2) return field.values[col + nx * (row + ny * k)];
    if (axis === 1) return field.values[col + nx * (k + ny * row)];
    return field.values[k + nx * (col + ny * row)];
  };

  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let row = 0; row < height; row += 1) {
    for (let col = 0; col < width; col += 1) {
      let r = 0;
      let g = 0;
      let b = 0;
      let alpha = 0;
      for (let step = 0; step < depth && alpha < 0.995; step += 1) {
        const [sr, sg, sb, sa] = tf.sample(value(col, row, step));
        const a = Math.min(1, sa * opacityScale);
        const w = (1 - alpha) * a;
        r += w * sr;
        g += w * sg;
        b += w * sb;
        alpha += w;
      }
      const o = 4 * (row * width + col);
      pixels[o] = Math.round(255 * r);
      pixels[o + 1] = Math.round(255 * g);
      pixels[o + 2] = Math.round(255 * b);
      pixels[o + 3] = Math.round(255 * alpha);
    }
  }
  return { width, height, pixels };
}
