"""Separation-line detection, recursive subdivision, and tree utilities."""

from __future__ import annotations

import numpy as np

from .core import Raster, Region, SegmentNode, SegmentTree, SeparationConfig
from .kernels import scan_rows

# border colors cycled by depth when drawing overlays (RGB)
_OVERLAY_COLORS = [(230, 57, 70), (29, 161, 242), (46, 204, 113),
                   (241, 196, 15), (155, 89, 182)]


def detect_lines(gray_rows: np.ndarray, cfg: SeparationConfig) -> list:
    """Horizontal separation-line positions within a block of grayscale rows.

    Positions are row offsets relative to the block, strictly inside (0, h).
    Blocks not taller than window_size + 1 yield no lines.
    """
    positions = scan_rows(np.asarray(gray_rows, dtype=np.uint8),
                          cfg.window_size, cfg.var_thr, cfg.diff_thr,
                          cfg.portion_thr)
    return [int(p) for p in positions]


def detect_lines_horizontal(raster: Raster, region: Region,
                            cfg: SeparationConfig) -> list:
    block = raster.gray[region.y0:region.y1, region.x0:region.x1]
    return detect_lines(block, cfg)


def detect_lines_vertical(raster: Raster, region: Region,
                          cfg: SeparationConfig) -> list:
    """Vertical lines = horizontal lines of the transposed block."""
    block = raster.gray[region.y0:region.y1, region.x0:region.x1]
    return detect_lines(block.T, cfg)


def _split_region(region: Region, positions: list, horizontal: bool) -> list:
    """Cut a region at the given axis offsets, keeping reading order."""
    if horizontal:
        bounds = [region.y0] + [region.y0 + p for p in positions] + [region.y1]
        return [Region(region.x0, lo, region.x1, hi)
                for lo, hi in zip(bounds, bounds[1:])]
    bounds = [region.x0] + [region.x0 + p for p in positions] + [region.x1]
    return [Region(lo, region.y0, hi, region.y1)
            for lo, hi in zip(bounds, bounds[1:])]


def build_tree(raster: Raster, cfg: SeparationConfig) -> SegmentTree:
    """Alternating recursive subdivision into a SegmentTree.

    Horizontal cuts are scheduled at even depths and vertical at odd depths;
    if the scheduled orientation finds nothing the other is tried once. A node
    becomes a leaf when neither orientation yields lines or the depth cap is
    reached.
    """
    nodes = {}

    def subdivide(node_id: str, region: Region, depth: int):
        node = SegmentNode(id=node_id, region=region, depth=depth)
        nodes[node_id] = node
        if depth >= cfg.max_depth:
            return
        prefer_horizontal = depth % 2 == 0
        for horizontal in (prefer_horizontal, not prefer_horizontal):
            if horizontal:
                positions = detect_lines_horizontal(raster, region, cfg)
            else:
                positions = detect_lines_vertical(raster, region, cfg)
            if positions:
                node.split_orientation = "horizontal" if horizontal else "vertical"
                children = _split_region(region, positions, horizontal)
                for i, child_region in enumerate(children):
                    child_id = f"{node_id}.{i}"
                    node.children.append(child_id)
                    subdivide(child_id, child_region, depth + 1)
                return

    root_region = Region(0, 0, raster.width, raster.height)
    subdivide("0", root_region, 0)
    tree = SegmentTree(root="0", nodes=nodes,
                       source_width=raster.width, source_height=raster.height)
    tree.validate()
    return tree


def separation_rate(tree: SegmentTree) -> float:
    """1 - (largest leaf area) / (total image area)."""
    total = tree.source_width * tree.source_height
    b_max = max(leaf.region.area for leaf in tree.leaves())
    return 1.0 - b_max / total


def crop(raster: Raster, region: Region) -> Raster:
    if not Region(0, 0, raster.width, raster.height).contains(region):
        raise ValueError(f"region {region} outside raster "
                         f"{raster.width}x{raster.height}")
    return Raster.from_rgb(raster.rgb[region.y0:region.y1, region.x0:region.x1])


def render_overlay(raster: Raster, tree: SegmentTree) -> Raster:
    """Copy of the raster with 2-px leaf borders, color cycled by depth."""
    if (tree.source_width, tree.source_height) != (raster.width, raster.height):
        raise ValueError("tree dimensions do not match raster")
    out = raster.rgb.copy()

    def draw(region: Region, color):
        t = 2
        x0, y0, x1, y1 = region.x0, region.y0, region.x1, region.y1
        out[y0:min(y0 + t, y1), x0:x1] = color
        out[max(y1 - t, y0):y1, x0:x1] = color
        out[y0:y1, x0:min(x0 + t, x1)] = color
        out[y0:y1, max(x1 - t, x0):x1] = color

    for leaf in tree.leaves():
        draw(leaf.region, _OVERLAY_COLORS[leaf.depth % len(_OVERLAY_COLORS)])
    return Raster.from_rgb(out)
