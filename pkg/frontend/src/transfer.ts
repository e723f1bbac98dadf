/** Transfer functions: scalar value to RGBA color, edited locally.
 *
 * Re-colorization never touches the network; the explorer re-renders the
 * last payload through the updated map.
 */

export type Rgba = [number, number, number, number]; // channels in [0, 1]

export interface ControlPoint {
  value: number;
  color: Rgba;
}

export interface TransferFunctionJson {
  lo: number;
  hi: number;
  points: { value: number; color: Rgba }[];
}

export class TransferFunction {
  readonly points: ControlPoint[];

  constructor(
    points: ControlPoint[],
    readonly lo: number,
    readonly hi: number,
  ) {
    if (points.length < 2) {
      throw new Error("transfer function needs at least two control points");
    }
    if (!(lo < hi)) {
      throw new Error(`invalid domain range [${lo}, ${hi}]`);
    }
    const sorted = [...points].sort((a, b) => a.value - b.value);
    this.points = sorted.map((p) => ({ value: p.value, color: [...p.color] as Rgba }));
  }

  /** Piecewise-linear color lookup; values are clamped to the domain. */
  sample(value: number): Rgba {
    const t = Math.min(Math.max(value, this.lo), this.hi);
    const pts = this.points;
    if (t <= pts[0].value) return [...pts[0].color] as Rgba;
    const last = pts[pts.length - 1];
    if (t >= last.value) return [...last.color] as Rgba;
    let i = 1;
    while (pts[i].value < t) i += 1;
    const a = pts[i - 1];
    const b = pts[i];
    const w = (t - a.value) / (b.value - a.value);
    return a.color.map((c, k) => c + w * (b.color[k] - c)) as Rgba;
  }

  /** Move one control point; returns a new instance (state stays immutable). */
  withPoint(index: number, point: ControlPoint): TransferFunction {
    const pts = this.points.map((p, i) => (i === index ? point : p));
    return new TransferFunction(pts, this.lo, this.hi);
  }

  toJSON(): TransferFunctionJson {
    return {
      lo: this.lo,
      hi: this.hi,
      points: this.points.map((p) => ({ value: p.value, color: [...p.color] as Rgba })),
    };
  }

  static fromJSON(json: TransferFunctionJson): TransferFunction {
    return new TransferFunction(json.points, json.lo, json.hi);
  }

  /** Symmetric blue-white-red map over [-1, 1]: the Pearson default. */
  static divergingDefault(): TransferFunction {
    return new TransferFunction(
      [
        { value: -1, color: [0.12, 0.25, 0.69, 1.0] },
        { value: 0, color: [0.97, 0.97, 0.97, 0.0] },
        { value: 1, color: [0.75, 0.08, 0.13, 1.0] },
      ],
      -1,
      1,
    );
  }

  /** Transparent-to-opaque sequential map over [0, max]: the MI default. */
  static sequentialDefault(max: number): TransferFunction {
    const hi = max > 0 ? max : 1;
    return new TransferFunction(
      [
        { value: 0, color: [1.0, 1.0, 0.85, 0.0] },
        { value: 0.5 * hi, color: [0.99, 0.55, 0.24, 0.55] },
        { value: hi, color: [0.5, 0.0, 0.15, 1.0] },
      ],
      0,
      hi,
    );
  }
}
