// UI run state: a pure function of server responses plus user selections.

import type { Tree, TreeNode } from "./api.js";

export type RunState = {
  runId: string;
  tree: Tree;
  selected: string;
  fragmentVersions: Record<string, number>;
  previewRevision: number;
  regenInFlight: boolean;
};

export function leafNodes(tree: Tree): TreeNode[] {
  // depth-first reading order, matching the generator
  const out: TreeNode[] = [];
  const walk = (id: string) => {
    const node = tree.nodes[id];
    if (node.children.length === 0) out.push(node);
    else node.children.forEach(walk);
  };
  walk(tree.root);
  return out;
}

export function initialState(
  runId: string,
  tree: Tree,
  fragmentVersions: Record<string, number>,
): RunState {
  return {
    runId,
    tree,
    selected: leafNodes(tree)[0].id,
    fragmentVersions,
    previewRevision: 0,
    regenInFlight: false,
  };
}

export function selectSegment(state: RunState, segmentId: string): RunState {
  if (!(segmentId in state.tree.nodes)) return state;
  return { ...state, selected: segmentId };
}

export function regenStarted(state: RunState): RunState {
  return { ...state, regenInFlight: true };
}

export function regenFailed(state: RunState): RunState {
  return { ...state, regenInFlight: false };
}

/** A fragment changed: record new versions and bump the preview revision. */
export function regenFinished(
  state: RunState,
  changed: string[],
  version: number,
): RunState {
  const fragmentVersions = { ...state.fragmentVersions };
  for (const id of changed) {
    fragmentVersions[id] = id === state.selected ? version : (fragmentVersions[id] ?? 0) + 1;
  }
  return {
    ...state,
    fragmentVersions,
    previewRevision: state.previewRevision + 1,
    regenInFlight: false,
  };
}

export type OverlayRect = {
  id: string;
  left: number;
  top: number;
  width: number;
  height: number;
  depth: number;
  isLeaf: boolean;
};

/** Scale tree regions to the rendered size of the screenshot. */
export function overlayRects(
  tree: Tree,
  displayWidth: number,
  displayHeight: number,
): OverlayRect[] {
  const sx = displayWidth / tree.source_width;
  const sy = displayHeight / tree.source_height;
  return Object.values(tree.nodes).map((node) => {
    const [x0, y0, x1, y1] = node.region;
    return {
      id: node.id,
      left: x0 * sx,
      top: y0 * sy,
      width: (x1 - x0) * sx,
      height: (y1 - y0) * sy,
      depth: node.depth,
      isLeaf: node.children.length === 0,
    };
  });
}
