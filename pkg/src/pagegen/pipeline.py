"""Generation orchestration: agent-based and rule-based assembly, CSS-grid
scaffolding, run-directory persistence, and per-segment regeneration."""

from __future__ import annotations

import io
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from PIL import Image

from .core import (CodeFragment, HtmlDocument, Raster, SegmentTree,
                   tree_from_json, tree_to_json)
from .provider import ChatRequest, Provider
from .segment import crop

FINAL_FRAGMENT_ID = "final"  # rule-mode finalization slot, distinct from node ids


@dataclass(frozen=True)
class PromptSet:
    leaf: str
    node: str
    final: str


def load_prompts(prompt_dir=None) -> PromptSet:
    """Load leaf/node/final templates from a directory, falling back to the
    packaged defaults for any missing file."""
    texts = {}
    for name in ("leaf", "node", "final"):
        path = Path(prompt_dir) / f"{name}.txt" if prompt_dir else None
        if path is not None and path.exists():
            texts[name] = path.read_text()
        else:
            texts[name] = (resources.files("pagegen") / "prompts" / f"{name}.txt").read_text()
    return PromptSet(**texts)


@dataclass
class PipelineStats:
    total_calls: int = 0
    calls_per_depth: list = field(default_factory=list)
    sum_output_chars: list = field(default_factory=list)
    wall_time_ms: float = 0.0

    def record(self, depth: int, output_chars: int):
        while len(self.calls_per_depth) <= depth:
            self.calls_per_depth.append(0)
            self.sum_output_chars.append(0)
        self.calls_per_depth[depth] += 1
        self.sum_output_chars[depth] += output_chars
        self.total_calls += 1

    def to_dict(self):
        return {"total_calls": self.total_calls,
                "calls_per_depth": self.calls_per_depth,
                "sum_output_chars": self.sum_output_chars,
                "wall_time_ms": self.wall_time_ms}


@dataclass
class GridTemplate:
    column_tracks: list
    row_tracks: list
    placements: dict  # segment_id -> (col_start, col_end, row_start, row_end)
    scaffold_html: str


def build_grid_template(tree: SegmentTree, fragments: dict) -> GridTemplate:
    """Place every leaf fragment into a CSS grid whose lines are the union of
    all leaf cut coordinates, normalized by image size."""
    leaves = tree.leaves()
    missing = [l.id for l in leaves if l.id not in fragments]
    if missing:
        raise ValueError(f"missing fragment(s) for leaf segment(s): {missing}")

    w, h = tree.source_width, tree.source_height
    xs = sorted({c for l in leaves for c in (l.region.x0, l.region.x1)})
    ys = sorted({c for l in leaves for c in (l.region.y0, l.region.y1)})
    column_tracks = [(b - a) / w for a, b in zip(xs, xs[1:])]
    row_tracks = [(b - a) / h for a, b in zip(ys, ys[1:])]

    placements = {}
    cells = []
    for leaf in leaves:
        r = leaf.region
        place = (xs.index(r.x0), xs.index(r.x1), ys.index(r.y0), ys.index(r.y1))
        placements[leaf.id] = place
        c0, c1, r0, r1 = place
        cells.append(
            f'<div style="grid-area: {r0 + 1} / {c0 + 1} / {r1 + 1} / {c1 + 1};"'
            f' data-seg="{leaf.id}">\n{fragments[leaf.id]}\n</div>')

    cols = " ".join(f"{t:.6f}fr" for t in column_tracks)
    rows = " ".join(f"{t:.6f}fr" for t in row_tracks)
    scaffold = (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<style>\n"
        f".page-grid {{ display: grid; grid-template-columns: {cols}; "
        f"grid-template-rows: {rows}; width: 100%; }}\n"
        ".page-grid > div { overflow: hidden; }\n"
        "</style>\n</head>\n<body>\n<div class=\"page-grid\">\n"
        + "\n".join(cells)
        + "\n</div>\n</body>\n</html>\n")
    return GridTemplate(column_tracks=column_tracks, row_tracks=row_tracks,
                        placements=placements, scaffold_html=scaffold)


def _png_bytes(raster: Raster) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(raster.rgb).save(buf, format="PNG")
    return buf.getvalue()


class _FragmentStore:
    """Thread-safe in-memory fragment collection, mirrored to a sink."""

    def __init__(self, sink=None):
        self.fragments = {}
        self._lock = threading.Lock()
        self._sink = sink

    def put(self, fragment: CodeFragment):
        with self._lock:
            self.fragments[fragment.segment_id] = fragment
        if self._sink is not None:
            self._sink(fragment)


def _call(provider: Provider, role: str, prompt: str, raster: Raster,
          segment_id: str, child_code=None, grid_template=None) -> CodeFragment:
    req = ChatRequest(role=role, prompt_text=prompt, image=_png_bytes(raster),
                      segment_id=segment_id, child_code=child_code or [],
                      grid_template=grid_template)
    resp = provider.complete(req)
    meta = {"token_usage": resp.token_usage, "latency_ms": resp.latency_ms,
            "attempts": resp.attempts}
    if resp.truncated:
        meta["truncated"] = True
    return CodeFragment(segment_id=segment_id, html=resp.extracted_html,
                        role_used=role, provider_meta=meta)


def agent_generate(raster: Raster, tree: SegmentTree, provider: Provider,
                   prompts: PromptSet, fragment_sink=None):
    """Bottom-up assembly: leaves are solved with the leaf prompt, each
    internal node merges its children's extracted code under the node prompt,
    and the root's response is the final document. Siblings run in parallel
    threads; any provider error aborts the run (completed fragments are still
    delivered to the sink)."""
    store = _FragmentStore(fragment_sink)
    stats = PipelineStats()
    stats_lock = threading.Lock()
    start = time.perf_counter()

    def generate(node_id: str) -> str:
        node = tree.node(node_id)
        segment = crop(raster, node.region)
        if node.is_leaf:
            fragment = _call(provider, "leaf", prompts.leaf, segment, node_id)
        else:
            child_code = _parallel([(generate, (c,)) for c in node.children])
            prompt = prompts.node.replace("{CHILD_CODE}",
                                          "\n\n".join(child_code))
            fragment = _call(provider, "node", prompt, segment, node_id,
                             child_code=child_code)
        with stats_lock:
            stats.record(node.depth, len(fragment.html))
        store.put(fragment)
        return fragment.html

    final_html = generate(tree.root)
    stats.wall_time_ms = (time.perf_counter() - start) * 1000
    return HtmlDocument(html=final_html), stats, store.fragments


def rule_generate(raster: Raster, tree: SegmentTree, provider: Provider,
                  prompts: PromptSet, fragment_sink=None):
    """Leaf-only generation followed by deterministic CSS-grid scaffolding and
    one finalization call on the full screenshot."""
    store = _FragmentStore(fragment_sink)
    stats = PipelineStats()
    stats_lock = threading.Lock()
    start = time.perf_counter()
    leaves = tree.leaves()

    def solve_leaf(leaf):
        fragment = _call(provider, "leaf", prompts.leaf,
                         crop(raster, leaf.region), leaf.id)
        with stats_lock:
            stats.record(leaf.depth, len(fragment.html))
        store.put(fragment)

    _parallel([(solve_leaf, (leaf,)) for leaf in leaves])
    grid = build_grid_template(
        tree, {sid: f.html for sid, f in store.fragments.items()})
    prompt = prompts.final.replace("{GRID_TEMPLATE}", grid.scaffold_html)
    final = _call(provider, "final", prompt, raster, FINAL_FRAGMENT_ID,
                  grid_template=grid.scaffold_html)
    with stats_lock:
        stats.record(0, len(final.html))
    store.put(final)
    stats.wall_time_ms = (time.perf_counter() - start) * 1000
    return HtmlDocument(html=final.html), stats, store.fragments, grid


def _parallel(tasks):
    """Run (fn, args) pairs in one thread each; return results in task order,
    re-raising the first exception."""
    results = [None] * len(tasks)
    errors = []

    def run(i, fn, args):
        try:
            results[i] = fn(*args)
        except BaseException as exc:  # noqa: BLE001 - propagated below
            errors.append(exc)

    threads = [threading.Thread(target=run, args=(i, fn, args))
               for i, (fn, args) in enumerate(tasks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return results


# ---------------------------------------------------------------------------
# Run persistence

class RunDir:
    """Filesystem layout for one generation run.

    manifest.json, input.png, tree.json, segments/{id}.png,
    fragments/{id}.html (later versions as {id}.v2.html, ...), scaffold.html,
    final.html, stats.json. Fragment history is append-only; the manifest
    tracks the live version of each fragment.
    """

    def __init__(self, path):
        self.path = Path(path)

    @classmethod
    def create(cls, runs_root, mode: str, config_snapshot: dict,
               run_id: str | None = None) -> "RunDir":
        run_id = run_id or str(uuid.uuid4())
        run = cls(Path(runs_root) / run_id)
        run.path.mkdir(parents=True)
        (run.path / "segments").mkdir()
        (run.path / "fragments").mkdir()
        run.write_manifest({
            "run_id": run_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "mode": mode,
            "config": config_snapshot,
            "status": "running",
            "failure": None,
            "fragment_versions": {},
        })
        return run

    @property
    def run_id(self) -> str:
        return self.path.name

    def _atomic_write(self, rel: str, data):
        target = self.path / rel
        tmp = target.with_name(target.name + ".tmp")
        if isinstance(data, bytes):
            tmp.write_bytes(data)
        else:
            tmp.write_text(data)
        os.replace(tmp, target)

    def manifest(self) -> dict:
        return json.loads((self.path / "manifest.json").read_text())

    def write_manifest(self, manifest: dict):
        self._atomic_write("manifest.json", json.dumps(manifest, indent=2))

    def update_manifest(self, **changes) -> dict:
        manifest = self.manifest()
        manifest.update(changes)
        self.write_manifest(manifest)
        return manifest

    def write_input(self, raster: Raster):
        self._atomic_write("input.png", _png_bytes(raster))

    def load_input(self) -> Raster:
        from .core import load_raster
        return load_raster(self.path / "input.png")

    def write_tree(self, tree: SegmentTree):
        self._atomic_write("tree.json", tree_to_json(tree))

    def load_tree(self) -> SegmentTree:
        return tree_from_json((self.path / "tree.json").read_text())

    def write_segment_image(self, segment_id: str, raster: Raster):
        self._atomic_write(f"segments/{segment_id}.png", _png_bytes(raster))

    def segment_image_path(self, segment_id: str) -> Path:
        return self.path / "segments" / f"{segment_id}.png"

    def fragment_version(self, segment_id: str) -> int:
        return self.manifest()["fragment_versions"].get(segment_id, 0)

    def fragment_path(self, segment_id: str, version: int) -> Path:
        name = f"{segment_id}.html" if version == 1 else f"{segment_id}.v{version}.html"
        return self.path / "fragments" / name

    def write_fragment(self, fragment: CodeFragment) -> int:
        manifest = self.manifest()
        version = manifest["fragment_versions"].get(fragment.segment_id, 0) + 1
        self._atomic_write(
            str(self.fragment_path(fragment.segment_id, version)
                .relative_to(self.path)),
            fragment.html)
        manifest["fragment_versions"][fragment.segment_id] = version
        self.write_manifest(manifest)
        return version

    def load_fragment(self, segment_id: str) -> tuple[str, int]:
        version = self.fragment_version(segment_id)
        if version == 0:
            raise FileNotFoundError(f"no fragment for segment {segment_id}")
        return self.fragment_path(segment_id, version).read_text(), version

    def write_scaffold(self, html: str):
        self._atomic_write("scaffold.html", html)

    def write_final(self, html: str):
        self._atomic_write("final.html", html)

    def final_html(self) -> str:
        return (self.path / "final.html").read_text()

    def write_stats(self, stats: PipelineStats):
        self._atomic_write("stats.json", json.dumps(stats.to_dict(), indent=2))


def execute_run(run: RunDir, raster: Raster, tree: SegmentTree,
                provider: Provider, prompts: PromptSet, mode: str):
    """Run generation into a persisted run directory; the manifest moves to
    complete/failed and partial fragments survive a failure."""
    run.write_input(raster)
    run.write_tree(tree)
    for leaf in tree.leaves():
        run.write_segment_image(leaf.id, crop(raster, leaf.region))
    lock = threading.Lock()

    def sink(fragment: CodeFragment):
        with lock:
            run.write_fragment(fragment)

    try:
        if mode == "agent":
            doc, stats, _ = agent_generate(raster, tree, provider, prompts,
                                           fragment_sink=sink)
        elif mode == "rule":
            doc, stats, _, grid = rule_generate(raster, tree, provider,
                                                prompts, fragment_sink=sink)
            run.write_scaffold(grid.scaffold_html)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    except Exception as exc:
        run.update_manifest(status="failed", failure=str(exc))
        raise
    doc.source_run = run.run_id
    run.write_final(doc.html)
    run.write_stats(stats)
    run.update_manifest(status="complete")
    return doc, stats


def regenerate_segment(run: RunDir, segment_id: str, provider: Provider,
                       prompts: PromptSet):
    """Re-issue the provider call for one segment of a persisted run.

    Rule mode rebuilds the scaffold from the latest fragments and re-issues
    the finalization call; agent mode re-issues every ancestor up to the root.
    Untouched fragments are reused verbatim. Returns (document, changed ids).
    """
    manifest = run.manifest()
    tree = run.load_tree()
    if segment_id not in tree.nodes:
        raise KeyError(f"unknown segment id {segment_id!r}")
    raster = run.load_input()
    mode = manifest["mode"]
    changed = []

    def redo(node_id: str, role: str, prompt: str, child_code=None,
             grid_template=None, image=None) -> CodeFragment:
        fragment = _call(provider, role, prompt,
                         image if image is not None
                         else crop(raster, tree.node(node_id).region),
                         node_id, child_code=child_code,
                         grid_template=grid_template)
        run.write_fragment(fragment)
        changed.append(node_id)
        return fragment

    if mode == "rule":
        if not tree.node(segment_id).is_leaf:
            raise KeyError(f"segment {segment_id} is not a leaf")
        redo(segment_id, "leaf", prompts.leaf)
        fragments = {l.id: run.load_fragment(l.id)[0] for l in tree.leaves()}
        grid = build_grid_template(tree, fragments)
        run.write_scaffold(grid.scaffold_html)
        prompt = prompts.final.replace("{GRID_TEMPLATE}", grid.scaffold_html)
        final = redo(FINAL_FRAGMENT_ID, "final", prompt,
                     grid_template=grid.scaffold_html, image=raster)
        final_html = final.html
    else:
        node = tree.node(segment_id)
        if node.is_leaf:
            fragment = redo(segment_id, "leaf", prompts.leaf)
        else:
            child_code = [run.load_fragment(c)[0]
                          for c in node.children]
            prompt = prompts.node.replace("{CHILD_CODE}", "\n\n".join(child_code))
            fragment = redo(segment_id, "node", prompt, child_code=child_code)
        for ancestor in tree.ancestors(segment_id):
            child_code = [run.load_fragment(c)[0]
                          for c in tree.node(ancestor).children]
            prompt = prompts.node.replace("{CHILD_CODE}", "\n\n".join(child_code))
            fragment = redo(ancestor, "node", prompt, child_code=child_code)
        final_html = fragment.html

    run.write_final(final_html)
    return HtmlDocument(html=final_html, source_run=run.run_id), changed
