import { describe, expect, it } from "vitest";

import { RequestCoalescer } from "../src/coalesce.js";

function deferred<T>() {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((r) => (resolve = r));
  return { promise, resolve };
}

describe("RequestCoalescer", () => {
  it("keeps at most one request in flight and the newest pending", async () => {
    const coalescer = new RequestCoalescer();
    const first = deferred<void>();
    const ran: string[] = [];

    coalescer.submit(async () => {
      ran.push("first");
      await first.promise;
    });
    coalescer.submit(async () => {
      ran.push("second");
    });
    coalescer.submit(async () => {
      ran.push("third");
    });

    expect(coalescer.started).toBe(1);
    expect(coalescer.busy).toBe(true);
    first.resolve();
    await new Promise((r) => setTimeout(r, 0));

    expect(ran).toEqual(["first", "third"]); // "second" was coalesced away
    expect(coalescer.started).toBe(2);
    expect(coalescer.busy).toBe(false);
  });

  it("drops stale commits", async () => {
    const coalescer = new RequestCoalescer();
    const seqs: number[] = [];
    coalescer.submit(async (seq) => {
      seqs.push(seq);
    });
    await new Promise((r) => setTimeout(r, 0));
    coalescer.submit(async (seq) => {
      seqs.push(seq);
    });
    await new Promise((r) => setTimeout(r, 0));
    expect(coalescer.commit(seqs[1])).toBe(true);
    expect(coalescer.commit(seqs[0])).toBe(false); // older than applied
    expect(coalescer.commit(seqs[1])).toBe(false); // replay
  });

  it("a response superseded by a newer submission is not committed", async () => {
    const coalescer = new RequestCoalescer();
    const first = deferred<void>();
    const outcomes: boolean[] = [];
    coalescer.submit(async (seq) => {
      await first.promise;
      outcomes.push(coalescer.commit(seq)); // superseded meanwhile
    });
    coalescer.submit(async (seq) => {
      outcomes.push(coalescer.commit(seq));
    });
    first.resolve();
    await new Promise((r) => setTimeout(r, 0));
    await new Promise((r) => setTimeout(r, 0));
    expect(outcomes).toEqual([false, true]);
  });
});
