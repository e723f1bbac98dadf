/** Shared data shapes for the explorer. */

export type Vec3 = [number, number, number];

export type Dims = [number, number, number];

/** A reconstructed scalar volume: values in x-fastest order. */
export interface FieldPayload {
  dims: Dims;
  min: number;
  max: number;
  values: Float32Array;
}

export type ViewMode = "single" | "difference" | "matrix";

export type SliceAxis = 0 | 1 | 2; // x, y, z

export interface ModelInfo {
  id: string;
  variables: [string, string];
  measure: string;
  merge: string;
  shared: boolean;
  bytes: number;
}

export const ROLE_MU = "reference-is-mu";
export const ROLE_NU = "reference-is-nu";
export type Role = typeof ROLE_MU | typeof ROLE_NU;
