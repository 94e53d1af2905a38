"""Evaluation suite: code similarity, IoU, Dice text overlap, CIEDE2000,
optimal block matching, and report aggregation."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Block, MetricsReport, Region, SegmentTree


class EvaluationError(ValueError):
    pass


def indel_distance(a: str, b: str) -> int:
    """Edit distance with insert/delete cost 1 and substitution cost 2,
    i.e. len(a) + len(b) - 2 * LCS(a, b)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    # one-row LCS DP, vectorized over the shorter string
    bs = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    prev = np.zeros(len(b) + 1, dtype=np.int64)
    for ch in a:
        code = ord(ch)
        cur = np.maximum(prev[1:], np.maximum.accumulate(
            np.where(bs == code, prev[:-1] + 1, 0)))
        # running max to enforce row monotonicity
        cur = np.maximum.accumulate(cur)
        prev[1:] = cur
    lcs = int(prev[-1])
    return len(a) + len(b) - 2 * lcs


def code_similarity(a: str, b: str) -> float:
    """1 - indel_distance / (l1 + l2); two empty strings count as identical."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 1.0 - indel_distance(a, b) / total


def _box(b):
    if isinstance(b, Region):
        return (b.x0, b.y0, b.x1, b.y1)
    x0, y0, x1, y1 = b
    return (x0, y0, x1, y1)


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = _box(a)
    bx0, by0, bx1, by1 = _box(b)
    if ax1 <= ax0 or ay1 <= ay0 or bx1 <= bx0 or by1 <= by0:
        raise EvaluationError("degenerate box")
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    inter = max(iw, 0) * max(ih, 0)
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def evaluate_segmentation(predicted: list, ground_truth: list) -> float:
    """Mean over predicted boxes of the max IoU against any ground-truth box."""
    if not predicted or not ground_truth:
        raise EvaluationError("both box lists must be non-empty")
    return float(np.mean([max(iou(p, g) for g in ground_truth)
                          for p in predicted]))


def dice_text(a: str, b: str) -> float:
    """Sorensen-Dice coefficient over character multisets."""
    if not a and not b:
        return 1.0
    ca, cb = Counter(a), Counter(b)
    overlap = sum((ca & cb).values())
    return 2 * overlap / (len(a) + len(b))


def ciede2000(lab1, lab2) -> float:
    """CIEDE2000 color difference with kL = kC = kH = 1."""
    L1, a1, b1 = lab1
    L2, a2, b2 = lab2
    C1 = math.hypot(a1, b1)
    C2 = math.hypot(a2, b2)
    C_bar = (C1 + C2) / 2
    G = 0.5 * (1 - math.sqrt(C_bar ** 7 / (C_bar ** 7 + 25.0 ** 7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p = math.hypot(a1p, b1)
    C2p = math.hypot(a2p, b2)
    h1p = math.degrees(math.atan2(b1, a1p)) % 360 if (a1p or b1) else 0.0
    h2p = math.degrees(math.atan2(b2, a2p)) % 360 if (a2p or b2) else 0.0

    dLp = L2 - L1
    dCp = C2p - C1p
    if C1p * C2p == 0:
        dhp = 0.0
    else:
        dh = h2p - h1p
        if dh > 180:
            dh -= 360
        elif dh < -180:
            dh += 360
        dhp = dh
    dHp = 2 * math.sqrt(C1p * C2p) * math.sin(math.radians(dhp) / 2)

    Lp_bar = (L1 + L2) / 2
    Cp_bar = (C1p + C2p) / 2
    if C1p * C2p == 0:
        hp_bar = h1p + h2p
    elif abs(h1p - h2p) <= 180:
        hp_bar = (h1p + h2p) / 2
    elif h1p + h2p < 360:
        hp_bar = (h1p + h2p + 360) / 2
    else:
        hp_bar = (h1p + h2p - 360) / 2

    T = (1 - 0.17 * math.cos(math.radians(hp_bar - 30))
         + 0.24 * math.cos(math.radians(2 * hp_bar))
         + 0.32 * math.cos(math.radians(3 * hp_bar + 6))
         - 0.20 * math.cos(math.radians(4 * hp_bar - 63)))
    d_theta = 30 * math.exp(-(((hp_bar - 275) / 25) ** 2))
    R_C = 2 * math.sqrt(Cp_bar ** 7 / (Cp_bar ** 7 + 25.0 ** 7))
    S_L = 1 + 0.015 * (Lp_bar - 50) ** 2 / math.sqrt(20 + (Lp_bar - 50) ** 2)
    S_C = 1 + 0.045 * Cp_bar
    S_H = 1 + 0.015 * Cp_bar * T
    R_T = -math.sin(math.radians(2 * d_theta)) * R_C

    return math.sqrt((dLp / S_L) ** 2 + (dCp / S_C) ** 2 + (dHp / S_H) ** 2
                     + R_T * (dCp / S_C) * (dHp / S_H))


def srgb_to_lab(rgb) -> tuple:
    """sRGB (0-255) to CIELAB under D65."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    c = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    xyz = m @ c / np.array([0.95047, 1.0, 1.08883])
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    L = 116 * f[1] - 16
    return (float(L), float(500 * (f[0] - f[1])), float(200 * (f[1] - f[2])))


class AssignmentResult:
    def __init__(self, pairs, total_cost, unmatched_ref, unmatched_gen):
        self.pairs = pairs
        self.total_cost = total_cost
        self.unmatched_ref = unmatched_ref
        self.unmatched_gen = unmatched_gen


def solve_assignment(cost) -> AssignmentResult:
    """Minimum-cost assignment of min(rows, cols) pairs of a rectangular
    cost matrix; excess rows/columns come back unmatched."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise EvaluationError("cost matrix must be non-empty and 2-D")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise EvaluationError("costs must be finite and non-negative")
    rows, cols = linear_sum_assignment(cost)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    total = float(cost[rows, cols].sum())
    return AssignmentResult(
        pairs=pairs,
        total_cost=total,
        unmatched_ref=sorted(set(range(cost.shape[0])) - set(rows.tolist())),
        unmatched_gen=sorted(set(range(cost.shape[1])) - set(cols.tolist())),
    )


def block_metrics(ref: list, gen: list) -> tuple:
    """(block_match, text_sim, position_sim, color_sim) for two block sets.

    Blocks are matched by minimizing 1 - dice_text over an optimal assignment;
    zero-overlap pairs are dropped. block_match is the character mass of the
    matched blocks over all character mass; the three similarity scores are
    size-weighted means over the matched pairs.
    """
    if not ref or not gen:
        return (0.0, 0.0, 0.0, 0.0)
    cost = np.array([[1.0 - dice_text(r.text, g.text) for g in gen]
                     for r in ref])
    result = solve_assignment(cost)
    matched = [(i, j) for i, j in result.pairs
               if dice_text(ref[i].text, gen[j].text) > 0]
    if not matched:
        return (0.0, 0.0, 0.0, 0.0)

    total_mass = sum(b.size for b in ref) + sum(b.size for b in gen)
    matched_mass = sum(ref[i].size + gen[j].size for i, j in matched)
    block_match = matched_mass / total_mass if total_mass else 0.0

    weights, texts, positions, colors = [], [], [], []
    for i, j in matched:
        r, g = ref[i], gen[j]
        weights.append(r.size + g.size)
        texts.append(dice_text(r.text, g.text))
        (rcx, rcy), (gcx, gcy) = r.center, g.center
        positions.append(1 - (abs(rcx - gcx) + abs(rcy - gcy)) / 2)
        de = ciede2000(srgb_to_lab(r.color), srgb_to_lab(g.color))
        colors.append(max(0.0, 1 - de / 100))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() == 0:
        weights = np.ones_like(weights)
    wmean = lambda v: float(np.average(v, weights=weights))
    return (block_match, wmean(texts), wmean(positions), wmean(colors))


def load_blocks(path) -> list:
    """Read a block annotation file: {"page": {...}, "blocks": [{text, bbox,
    color}, ...]} with bbox normalized to [0,1]."""
    data = json.loads(Path(path).read_text())
    return [Block(text=b["text"], bbox=tuple(b["bbox"]),
                  color=tuple(b.get("color", (0, 0, 0))))
            for b in data["blocks"]]


def load_boxes(path) -> list:
    """Read {"boxes": [[x0,y0,x1,y1], ...]} (normalized coordinates)."""
    data = json.loads(Path(path).read_text())
    return [tuple(b) for b in data["boxes"]]


def tree_leaf_boxes(tree: SegmentTree) -> list:
    """Leaf regions normalized by the source dimensions."""
    w, h = tree.source_width, tree.source_height
    return [(l.region.x0 / w, l.region.y0 / h, l.region.x1 / w, l.region.y1 / h)
            for l in tree.leaves()]


def build_report(original_html=None, generated_html=None, ref_blocks=None,
                 gen_blocks=None, gt_boxes=None, tree=None,
                 clip_score=None) -> MetricsReport:
    """Aggregate every metric whose inputs are present into a MetricsReport."""
    from .segment import separation_rate

    report = MetricsReport(clip_score=clip_score)
    if original_html is not None and generated_html is not None:
        report.code_similarity = code_similarity(original_html, generated_html)
    if ref_blocks is not None and gen_blocks is not None:
        (report.block_match, report.text_sim, report.position_sim,
         report.color_sim) = block_metrics(ref_blocks, gen_blocks)
    if tree is not None:
        report.separation_rate = separation_rate(tree)
        if gt_boxes is not None:
            report.mean_iou = evaluate_segmentation(tree_leaf_boxes(tree),
                                                    gt_boxes)
    return report


def write_report(report: MetricsReport, path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
