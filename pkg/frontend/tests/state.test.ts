import { describe, expect, it } from "vitest";

import {
  initialState,
  leafNodes,
  overlayRects,
  regenFailed,
  regenFinished,
  regenStarted,
  selectSegment,
} from "../src/state.js";
import { makeTree } from "./fixtures.js";

describe("leafNodes", () => {
  it("walks leaves in reading order", () => {
    const ids = leafNodes(makeTree()).map((n) => n.id);
    expect(ids).toEqual(["0.0", "0.1.0", "0.1.1"]);
  });
});

describe("initialState", () => {
  it("selects the first leaf", () => {
    const state = initialState("r1", makeTree(), { "0.0": 1 });
    expect(state.selected).toBe("0.0");
    expect(state.previewRevision).toBe(0);
    expect(state.regenInFlight).toBe(false);
  });
});

describe("selectSegment", () => {
  it("ignores unknown segment ids", () => {
    const state = initialState("r1", makeTree(), {});
    expect(selectSegment(state, "9.9")).toBe(state);
    expect(selectSegment(state, "0.1.1").selected).toBe("0.1.1");
  });
});

describe("regen transitions", () => {
  it("tracks in-flight and bumps versions on finish", () => {
    let state = initialState("r1", makeTree(), { "0.0": 1, final: 1 });
    state = regenStarted(state);
    expect(state.regenInFlight).toBe(true);

    state = regenFinished(state, ["0.0", "final"], 2);
    expect(state.regenInFlight).toBe(false);
    expect(state.fragmentVersions["0.0"]).toBe(2);
    expect(state.fragmentVersions["final"]).toBe(2);
    expect(state.previewRevision).toBe(1);
  });

  it("leaves versions alone on failure", () => {
    let state = initialState("r1", makeTree(), { "0.0": 1 });
    state = regenFailed(regenStarted(state));
    expect(state.regenInFlight).toBe(false);
    expect(state.fragmentVersions["0.0"]).toBe(1);
    expect(state.previewRevision).toBe(0);
  });
});

describe("overlayRects", () => {
  it("is exact at native scale", () => {
    const rects = overlayRects(makeTree(), 100, 80);
    const byId = new Map(rects.map((r) => [r.id, r]));
    const leaf = byId.get("0.1.0")!;
    expect(leaf.left).toBe(0);
    expect(leaf.top).toBe(30);
    expect(leaf.width).toBe(40);
    expect(leaf.height).toBe(50);
    expect(leaf.isLeaf).toBe(true);
    expect(byId.get("0")!.isLeaf).toBe(false);
  });

  it("scales with the displayed size", () => {
    const rects = overlayRects(makeTree(), 50, 160);
    const leaf = rects.find((r) => r.id === "0.1.1")!;
    expect(leaf.left).toBeCloseTo(20, 6);
    expect(leaf.top).toBeCloseTo(60, 6);
    expect(leaf.width).toBeCloseTo(30, 6);
    expect(leaf.height).toBeCloseTo(100, 6);
  });
});
