import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Explorer } from "../src/explorer.js";
import { planMatrix, modelsUsed } from "../src/matrix.js";
import { TransferFunction } from "../src/transfer.js";
import type { Dims, ModelInfo } from "../src/types.js";
import { FetchStub, RecordingSink, constantField, fieldResponse } from "./helpers.js";

const DIMS: Dims = [4, 4, 2];

const MODELS: ModelInfo[] = [
  { id: "aa", variables: ["a", "a"], measure: "pearson", merge: "multiply", shared: true, bytes: 100 },
  { id: "bb", variables: ["b", "b"], measure: "pearson", merge: "multiply", shared: true, bytes: 100 },
  { id: "ab", variables: ["a", "b"], measure: "pearson", merge: "multiply", shared: false, bytes: 180 },
];

function modelListResponse(): Response {
  return new Response(JSON.stringify(MODELS), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });
}

async function makeExplorer() {
  const stub = new FetchStub();
  const sink = new RecordingSink();
  const explorer = new Explorer({
    dims: DIMS,
    api: new ApiClient(stub.fetch),
    sink,
  });
  stub.push(() => modelListResponse());
  await explorer.loadModels();
  return { explorer, stub, sink };
}

const settle = () => new Promise((r) => setTimeout(r, 0));

describe("single-point picking", () => {
  it("issues exactly one reconstruct request and updates the view", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    stub.defaultHandler = () => fieldResponse(DIMS, constantField(DIMS, 0.5));

    explorer.pickReference([0, 0, 0]);
    await settle();

    const calls = stub.callsTo("/api/reconstruct");
    expect(calls.length).toBe(1);
    expect((calls[0].body as { model: string }).model).toBe("aa");
    expect(sink.images.has(0)).toBe(true);
    expect(sink.markers.at(-1)).toEqual([[0, 0, 0]]);
  });

  it("coalesces a drag into at most one in-flight request", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    let release!: () => void;
    const gate = new Promise<void>((r) => (release = r));
    stub.defaultHandler = async () => {
      await gate;
      return fieldResponse(DIMS, constantField(DIMS, 0.5));
    };

    // a drag: many picks while the first request is still in flight
    for (let i = 0; i < 8; i += 1) {
      explorer.pickReference([i / 10, 0, 0]);
    }
    expect(stub.callsTo("/api/reconstruct").length).toBe(1);
    release();
    await settle();
    await settle();

    // only the newest queued pick ran afterwards
    expect(stub.callsTo("/api/reconstruct").length).toBe(2);
    const last = stub.callsTo("/api/reconstruct")[1].body as { ref: number[] };
    expect(last.ref[0]).toBeCloseTo(0.7);
    expect(sink.errors).toEqual([]);
  });

  it("surfaces request failures as non-blocking errors", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    stub.defaultHandler = () => new Response("boom", { status: 500 });
    explorer.pickReference([0, 0, 0]);
    await settle();
    expect(sink.errors.length).toBe(1);
    expect(sink.images.size).toBe(0);
  });
});

describe("transfer-function edits", () => {
  it("recolor locally with zero network requests", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    stub.defaultHandler = () => fieldResponse(DIMS, constantField(DIMS, 1.0));
    explorer.pickReference([0, 0, 0]);
    await settle();

    const requestsBefore = stub.calls.length;
    const drawsBefore = sink.drawCount;
    const opaque = new TransferFunction(
      [
        { value: -1, color: [0, 1, 0, 1] },
        { value: 1, color: [0, 1, 0, 1] },
      ],
      -1,
      1,
    );
    explorer.setTransferFunction(opaque);

    expect(stub.calls.length).toBe(requestsBefore); // zero new requests
    expect(sink.drawCount).toBe(drawsBefore + 1);
    const image = sink.images.get(0)!;
    expect(image.pixels[1]).toBe(255);
    expect(image.pixels[3]).toBe(255);
  });
});

describe("difference mode", () => {
  it("requires two reference points before requesting", async () => {
    const { explorer, stub } = await makeExplorer();
    stub.defaultHandler = () => fieldResponse(DIMS, constantField(DIMS, 0));
    explorer.setMode("difference");
    explorer.pickReference([0.5, 0, 0]);
    await settle();
    expect(stub.callsTo("/api/diff").length).toBe(0);
    expect(stub.callsTo("/api/reconstruct").length).toBe(0);

    explorer.pickReference([-0.5, 0, 0]);
    await settle();
    const calls = stub.callsTo("/api/diff");
    expect(calls.length).toBe(1);
    const body = calls[0].body as { ref_a: number[]; ref_b: number[] };
    expect(body.ref_a[0]).toBeCloseTo(0.5);
    expect(body.ref_b[0]).toBeCloseTo(-0.5);
  });

  it("renders the subtraction payload it receives", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    const diffValues = constantField(DIMS, -0.25);
    stub.defaultHandler = () => fieldResponse(DIMS, diffValues);
    explorer.setMode("difference");
    explorer.pickReference([0.5, 0, 0]);
    explorer.pickReference([-0.5, 0, 0]);
    await settle();
    await settle();
    expect(explorer.cachedPayload(0)!.values[0]).toBeCloseTo(-0.25);
    expect(sink.images.has(0)).toBe(true);
  });
});

describe("matrix mode", () => {
  it("plans 4 cells backed by 3 models for d=2", () => {
    const cells = planMatrix(MODELS, ["a", "b"]);
    expect(cells.length).toBe(4);
    expect(modelsUsed(cells)).toEqual(["aa", "ab", "bb"]);
    // the mirrored cell reuses the (a,b) model with the other role
    const c01 = cells.find((c) => c.row === 0 && c.col === 1)!;
    const c10 = cells.find((c) => c.row === 1 && c.col === 0)!;
    expect(c01.modelId).toBe("ab");
    expect(c01.role).toBe("reference-is-nu");
    expect(c10.modelId).toBe("ab");
    expect(c10.role).toBe("reference-is-mu");
  });

  it("reports missing pairs", () => {
    expect(() => planMatrix(MODELS.slice(0, 2), ["a", "b"]))
      .toThrow(/no model for variable pairs/);
  });

  it("renders one request per cell and fills all four slots", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    stub.defaultHandler = () => fieldResponse(DIMS, constantField(DIMS, 0.3));
    explorer.setMode("matrix", ["a", "b"]);
    explorer.pickReference([0, 0, 0]);
    await settle();
    await settle();
    expect(stub.callsTo("/api/reconstruct").length).toBe(4);
    expect([...sink.images.keys()].sort()).toEqual([0, 1, 2, 3]);
  });
});

describe("stale responses", () => {
  it("a late response never overwrites a newer one", async () => {
    const { explorer, stub, sink } = await makeExplorer();
    let releaseFirst!: () => void;
    const firstGate = new Promise<void>((r) => (releaseFirst = r));
    stub.push(async () => {
      await firstGate;
      return fieldResponse(DIMS, constantField(DIMS, 111));
    });
    stub.push(() => fieldResponse(DIMS, constantField(DIMS, 222)));

    explorer.pickReference([0.1, 0, 0]);
    explorer.pickReference([0.9, 0, 0]); // queued behind the slow request
    releaseFirst();
    await settle();
    await settle();

    // the superseded first payload was dropped, never rendered
    expect(explorer.cachedPayload(0)!.values[0]).toBe(222);
    expect(sink.drawCount).toBe(1);
    expect(sink.errors).toEqual([]);
  });
});
