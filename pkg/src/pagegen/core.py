"""Shared domain types, config loading and tree (de)serialization."""

from __future__ import annotations

import json

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

TREE_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised when a config file or override violates a field constraint."""


class RasterError(ValueError):
    """Raised for undecodable or degenerate image input."""


@dataclass(frozen=True)
class Raster:
    """Decoded screenshot: RGB pixels plus a derived grayscale plane.

    ``rgb`` has shape (height, width, 3) and ``gray`` shape (height, width),
    both uint8. Grayscale is BT.601 luma with round-half-up so repeated loads
    of the same file are bit-identical.
    """

    width: int
    height: int
    rgb: np.ndarray
    gray: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise RasterError("raster dimensions must be >= 1")
        if self.rgb.shape != (self.height, self.width, 3):
            raise RasterError("rgb shape mismatch")
        if self.gray.shape != (self.height, self.width):
            raise RasterError("gray shape mismatch")
        self.rgb.setflags(write=False)
        self.gray.setflags(write=False)

    @classmethod
    def from_rgb(cls, rgb: np.ndarray) -> "Raster":
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
            raise RasterError("expected a HxWx3 uint8 array with positive dims")
        gray = rgb_to_luma(rgb)
        return cls(width=rgb.shape[1], height=rgb.shape[0], rgb=rgb, gray=gray)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma, round-half-up, clipped to [0, 255]."""
    f = rgb.astype(np.float64)
    luma = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def load_raster(path) -> Raster:
    """Decode a PNG/JPEG file into a Raster. Alpha is dropped."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise RasterError(f"cannot decode image {path}: {exc}") from exc
    if rgb.size == 0:
        raise RasterError(f"image {path} has a zero dimension")
    return Raster.from_rgb(rgb)


@dataclass(frozen=True, order=True)
class Region:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate region {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "Region") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def to_list(self):
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class SeparationConfig:
    """Parameters of the separation-line scan and recursion depth."""

    window_size: int = 50
    var_thr: float = 50.0
    diff_thr: float = 45.0
    portion_thr: float = 0.9
    max_depth: int = 2

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.var_thr < 0:
            raise ConfigError("var_thr must be >= 0")
        if self.diff_thr < 0:
            raise ConfigError("diff_thr must be >= 0")
        if not (0 < self.portion_thr <= 1):
            raise ConfigError("portion_thr must be in (0, 1]")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    """Provider endpoint and request-shaping parameters."""

    endpoint: str = ""
    model_name: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 8192
    api_key_env: str = "PAGEGEN_API_KEY"
    concurrency_limit: int = 8
    retry_budget: int = 3
    retry_backoff_base: float = 1.0
    image_size_limit: int = 20 * 1024 * 1024

    def __post_init__(self):
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.retry_budget < 1:
            raise ConfigError("retry_budget must be >= 1")
        if self.max_output_tokens < 1:
            raise ConfigError("max_output_tokens must be >= 1")
        if self.retry_backoff_base < 0:
            raise ConfigError("retry_backoff_base must be >= 0")


@dataclass(frozen=True)
class PipelineOptions:
    """Pipeline-level switches not tied to separation or the provider."""

    mode: str = "agent"
    prompt_dir: str = ""

    def __post_init__(self):
        if self.mode not in ("agent", "rule"):
            raise ConfigError("mode must be 'agent' or 'rule'")


@dataclass
class SegmentNode:
    """One rectangle of the hierarchical division.

    ``id`` is the path from the root ("0", "0.1", "0.1.2"), so ids are stable
    across runs with identical input and config. ``children`` are ordered
    top-to-bottom for horizontal splits, left-to-right for vertical.
    """

    id: str
    region: Region
    depth: int
    split_orientation: str = "none"
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class SegmentTree:
    root: str
    nodes: dict
    source_width: int
    source_height: int

    def node(self, node_id: str) -> SegmentNode:
        return self.nodes[node_id]

    def leaves(self) -> list:
        """Leaf nodes in depth-first reading order."""
        out = []

        def walk(nid):
            node = self.nodes[nid]
            if node.is_leaf:
                out.append(node)
            else:
                for c in node.children:
                    walk(c)

        walk(self.root)
        return out

    def internal_nodes(self) -> list:
        return [n for n in self.nodes.values() if not n.is_leaf]

    def ancestors(self, node_id: str) -> list:
        """Ids from the node's parent up to the root."""
        parts = node_id.split(".")
        return [".".join(parts[:i]) for i in range(len(parts) - 1, 0, -1)]

    def validate(self):
        root = self.nodes[self.root]
        if root.region != Region(0, 0, self.source_width, self.source_height):
            raise ValueError("root region must cover the whole image")
        seen = set()

        def walk(nid):
            if nid in seen:
                raise ValueError(f"node {nid} reachable more than once")
            seen.add(nid)
            node = self.nodes[nid]
            if node.children:
                kids = [self.nodes[c] for c in node.children]
                for k in kids:
                    if k.depth != node.depth + 1:
                        raise ValueError(f"bad depth at {k.id}")
                    if not node.region.contains(k.region):
                        raise ValueError(f"child {k.id} escapes parent")
                if sum(k.region.area for k in kids) != node.region.area:
                    raise ValueError(f"children of {nid} do not tile the parent")
                for c in node.children:
                    walk(c)

        walk(self.root)
        if seen != set(self.nodes):
            raise ValueError("unreachable nodes present")


def tree_to_dict(tree: SegmentTree) -> dict:
    return {
        "schema": TREE_SCHEMA_VERSION,
        "root": tree.root,
        "source_width": tree.source_width,
        "source_height": tree.source_height,
        "nodes": {
            nid: {
                "id": n.id,
                "region": n.region.to_list(),
                "depth": n.depth,
                "split_orientation": n.split_orientation,
                "children": list(n.children),
            }
            for nid, n in tree.nodes.items()
        },
    }


def tree_from_dict(data: dict) -> SegmentTree:
    if data.get("schema") != TREE_SCHEMA_VERSION:
        raise ValueError(f"unsupported tree schema {data.get('schema')!r}")
    nodes = {}
    for nid, nd in data["nodes"].items():
        x0, y0, x1, y1 = nd["region"]
        nodes[nid] = SegmentNode(
            id=nd["id"],
            region=Region(x0, y0, x1, y1),
            depth=nd["depth"],
            split_orientation=nd["split_orientation"],
            children=list(nd["children"]),
        )
    tree = SegmentTree(
        root=data["root"],
        nodes=nodes,
        source_width=data["source_width"],
        source_height=data["source_height"],
    )
    tree.validate()
    return tree


def tree_to_json(tree: SegmentTree) -> str:
    """Canonical serialization: key-sorted, fixed separators, so identical
    trees produce byte-identical output."""
    return json.dumps(tree_to_dict(tree), sort_keys=True, separators=(",", ":"))


def tree_from_json(text: str) -> SegmentTree:
    return tree_from_dict(json.loads(text))


@dataclass
class CodeFragment:
    """Generated HTML for one segment plus provider bookkeeping."""

    segment_id: str
    html: str
    role_used: str  # leaf | node | final
    provider_meta: dict = field(default_factory=dict)


@dataclass
class HtmlDocument:
    html: str
    source_run: str = ""


@dataclass(frozen=True)
class Block:
    """A text block for the fine-grained metrics: text, normalized bbox,
    sRGB color. Size is the character count of the text."""

    text: str
    bbox: tuple  # (x0, y0, x1, y1) in [0,1]
    color: tuple  # (r, g, b) 0-255

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (0 <= x0 <= x1 <= 1 and 0 <= y0 <= y1 <= 1):
            raise ValueError(f"bbox {self.bbox} outside unit square")

    @property
    def size(self) -> int:
        return len(self.text)

    @property
    def center(self):
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2, (y0 + y1) / 2)


@dataclass
class MetricsReport:
    code_similarity: float | None = None
    block_match: float | None = None
    text_sim: float | None = None
    position_sim: float | None = None
    color_sim: float | None = None
    mean_iou: float | None = None
    separation_rate: float | None = None
    clip_score: float | None = None

    def to_dict(self) -> dict:
        return {k: round(v, 6) for k, v in asdict(self).items() if v is not None}


# ---------------------------------------------------------------------------
# Config loading

_SEPARATION_KEYS = {"window_size": int, "var_thr": float, "diff_thr": float,
                    "portion_thr": float, "max_depth": int}
_MODEL_KEYS = {"endpoint": str, "model_name": str, "temperature": float,
               "max_output_tokens": int, "api_key_env": str,
               "concurrency_limit": int, "retry_budget": int,
               "retry_backoff_base": float, "image_size_limit": int}
_PIPELINE_KEYS = {"mode": str, "prompt_dir": str}


def _coerce(section: str, key: str, value, caster):
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: cannot interpret {value!r}") from exc


def _build_section(name: str, keys: dict, file_values: dict, overrides: dict, ctor):
    merged = {}
    for key, caster in keys.items():
        if key in overrides:
            merged[key] = _coerce(name, key, overrides[key], caster)
        elif key in file_values:
            merged[key] = _coerce(name, key, file_values[key], caster)
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    try:
        return ctor(**merged)
    except ConfigError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_config(path=None, overrides: dict | None = None):
    """Load (SeparationConfig, ModelConfig, PipelineOptions) from a TOML file.

    ``overrides`` maps dotted keys ("separation.max_depth") or bare keys (the
    first section defining the key wins) to values; overrides beat file values
    which beat defaults. Validation errors name the offending key.
    """
    data = {}
    if path is not None:
        raw = Path(path).read_bytes()
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc

    ov = {"separation": {}, "model": {}, "pipeline": {}}
    for key, value in (overrides or {}).items():
        if "." in key:
            section, bare = key.split(".", 1)
            if section not in ov or bare not in {
                "separation": _SEPARATION_KEYS, "model": _MODEL_KEYS,
                "pipeline": _PIPELINE_KEYS,
            }[section]:
                raise ConfigError(f"unknown override key {key!r}")
            ov[section][bare] = value
        elif key in _SEPARATION_KEYS:
            ov["separation"][key] = value
        elif key in _MODEL_KEYS:
            ov["model"][key] = value
        elif key in _PIPELINE_KEYS:
            ov["pipeline"][key] = value
        else:
            raise ConfigError(f"unknown override key {key!r}")

    for section in data:
        if section not in ("separation", "model", "pipeline"):
            raise ConfigError(f"unknown config section [{section}]")

    sep = _build_section("separation", _SEPARATION_KEYS,
                         data.get("separation", {}), ov["separation"],
                         SeparationConfig)
    model = _build_section("model", _MODEL_KEYS,
                           data.get("model", {}), ov["model"], ModelConfig)
    pipe = _build_section("pipeline", _PIPELINE_KEYS,
                          data.get("pipeline", {}), ov["pipeline"],
                          PipelineOptions)
    return sep, model, pipe
