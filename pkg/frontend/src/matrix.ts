/** Correlation-volume-matrix layout: which model and role backs each cell.
 *
 * Cell (i, j) shows variable i against the reference in variable j. Only
 * models for unordered pairs are required; the mirrored cell reuses the
 * transposed model with the reference in the other slot, which is exact
 * for exchange-symmetric measures.
 */

import type { ModelInfo, Role } from "./types.js";
import { ROLE_MU, ROLE_NU } from "./types.js";

export interface MatrixCell {
  row: number;
  col: number;
  modelId: string;
  role: Role;
}

export function planMatrix(models: ModelInfo[], variables: string[]): MatrixCell[] {
  const byPair = new Map<string, string>();
  for (const m of models) {
    byPair.set(JSON.stringify(m.variables), m.id);
  }
  const lookup = (a: string, b: string) => byPair.get(JSON.stringify([a, b]));
  const missing: string[] = [];
  for (let i = 0; i < variables.length; i += 1) {
    for (let j = i; j < variables.length; j += 1) {
      if (
        lookup(variables[i], variables[j]) === undefined &&
        lookup(variables[j], variables[i]) === undefined
      ) {
        missing.push(`(${variables[i]}, ${variables[j]})`);
      }
    }
  }
  if (missing.length) {
    throw new Error(`no model for variable pairs: ${missing.join(", ")}`);
  }
  const cells: MatrixCell[] = [];
  for (let i = 0; i < variables.length; i += 1) {
    for (let j = 0; j < variables.length; j += 1) {
      const direct = lookup(variables[i], variables[j]);
      if (direct !== undefined) {
        cells.push({ row: i, col: j, modelId: direct, role: ROLE_NU });
      } else {
        const mirrored = lookup(variables[j], variables[i])!;
        cells.push({ row: i, col: j, modelId: mirrored, role: ROLE_MU });
      }
    }
  }
  return cells;
}

/** Distinct model ids backing a matrix plan. */
export function modelsUsed(cells: MatrixCell[]): string[] {
  return [...new Set(cells.map((c) => c.modelId))].sort();
}
