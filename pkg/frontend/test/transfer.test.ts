import { describe, expect, it } from "vitest";

import { TransferFunction } from "../src/transfer.js";

describe("TransferFunction", () => {
  it("interpolates linearly between control points", () => {
    const tf = new TransferFunction(
      [
        { value: 0, color: [0, 0, 0, 0] },
        { value: 1, color: [1, 0.5, 0, 1] },
      ],
      0,
      1,
    );
    expect(tf.sample(0.5)).toEqual([0.5, 0.25, 0, 0.5]);
  });

  it("clamps outside the domain", () => {
    const tf = TransferFunction.divergingDefault();
    expect(tf.sample(-5)).toEqual(tf.sample(-1));
    expect(tf.sample(5)).toEqual(tf.sample(1));
  });

  it("sorts control points on construction", () => {
    const tf = new TransferFunction(
      [
        { value: 1, color: [1, 1, 1, 1] },
        { value: -1, color: [0, 0, 0, 0] },
      ],
      -1,
      1,
    );
    expect(tf.points[0].value).toBe(-1);
  });

  it("rejects invalid configurations", () => {
    expect(() => new TransferFunction([{ value: 0, color: [0, 0, 0, 0] }], 0, 1))
      .toThrow(/two control points/);
    expect(() => TransferFunction.divergingDefault().withPoint(0, {
      value: 0, color: [0, 0, 0, 0],
    })).not.toThrow();
    expect(() => new TransferFunction(
      [
        { value: 0, color: [0, 0, 0, 0] },
        { value: 1, color: [1, 1, 1, 1] },
      ], 1, 1)).toThrow(/domain range/);
  });

  it("round-trips through JSON for session restore", () => {
    const tf = TransferFunction.sequentialDefault(0.8);
    const restored = TransferFunction.fromJSON(
      JSON.parse(JSON.stringify(tf.toJSON())),
    );
    expect(restored.lo).toBe(tf.lo);
    expect(restored.hi).toBe(tf.hi);
    expect(restored.points).toEqual(tf.points);
    for (const v of [0, 0.123, 0.5, 0.77]) {
      expect(restored.sample(v)).toEqual(tf.sample(v));
    }
  });

  it("reset defaults are the documented maps", () => {
    const diverging = TransferFunction.divergingDefault();
    expect(diverging.lo).toBe(-1);
    expect(diverging.hi).toBe(1);
    expect(diverging.sample(0)[3]).toBe(0); // transparent at no correlation
    const sequential = TransferFunction.sequentialDefault(2);
    expect(sequential.lo).toBe(0);
    expect(sequential.hi).toBe(2);
    expect(sequential.sample(0)[3]).toBe(0);
    expect(sequential.sample(2)[3]).toBe(1);
  });
});
