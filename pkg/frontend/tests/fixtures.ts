import type { Tree } from "../src/api.js";

/** Three-leaf tree: horizontal root split, then a vertical split below. */
export function makeTree(): Tree {
  return {
    schema: 1,
    root: "0",
    source_width: 100,
    source_height: 80,
    nodes: {
      "0": {
        id: "0",
        region: [0, 0, 100, 80],
        depth: 0,
        split_orientation: "horizontal",
        children: ["0.0", "0.1"],
      },
      "0.0": {
        id: "0.0",
        region: [0, 0, 100, 30],
        depth: 1,
        split_orientation: "none",
        children: [],
      },
      "0.1": {
        id: "0.1",
        region: [0, 30, 100, 80],
        depth: 1,
        split_orientation: "vertical",
        children: ["0.1.0", "0.1.1"],
      },
      "0.1.0": {
        id: "0.1.0",
        region: [0, 30, 40, 80],
        depth: 2,
        split_orientation: "none",
        children: [],
      },
      "0.1.1": {
        id: "0.1.1",
        region: [40, 30, 100, 80],
        depth: 2,
        split_orientation: "none",
        children: [],
      },
    },
  };
}
