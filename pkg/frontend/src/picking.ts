/** Screen-to-domain coordinate mapping for reference-point picking. */

import type { Dims, SliceAxis, Vec3 } from "./types.js";

function axisCoord(index: number, nodes: number): number {
  return nodes > 1 ? (2 * index) / (nodes - 1) - 1 : 0;
}

/**
 * Map a click on a rendered slice to a domain point in [-1, 1]^3.
 *
 * `px`, `py` are pixel coordinates inside a canvas of `canvasW` x
 * `canvasH` showing the full slice; the slice axis keeps the coordinate
 * of `sliceIndex`.
 */
export function pickDomainPoint(
  px: number,
  py: number,
  canvasW: number,
  canvasH: number,
  dims: Dims,
  axis: SliceAxis,
  sliceIndex: number,
): Vec3 {
  const clamp01 = (v: number) => Math.min(Math.max(v, 0), 1);
  const u = clamp01(px / Math.max(canvasW - 1, 1)) * 2 - 1;
  const v = clamp01(py / Math.max(canvasH - 1, 1)) * 2 - 1;
  const w = axisCoord(sliceIndex, dims[axis]);
  if (axis === 2) return [u, v, w];
  if (axis === 1) return [u, w, v];
  return [w, u, v];
}

/** Nearest grid node of a domain point (for marker snapping). */
export function nearestNode(p: Vec3, dims: Dims): [number, number, number] {
  return [0, 1, 2].map((axis) => {
    const n = dims[axis];
    const idx = Math.round(((p[axis] + 1) / 2) * (n - 1));
    return Math.min(Math.max(idx, 0), n - 1);
  }) as [number, number, number];
}
