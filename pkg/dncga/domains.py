# dncga/domains.py
"""Benchmark domains: graph coloring (DIMACS .col) and bin packing.

Gene ranges: coloring uses V (one possible color per vertex), bin packing
uses L (one possible bin per item).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from dncga.config import DIMACS_URL, InvalidMode
from dncga.errors import ConfigError, DataError, ParseError
from dncga.ga import NEGATIVE_INFINITY, Genome, Individual, Problem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphColoringInstance:
    vertex_count: int
    edges: np.ndarray  # [E, 2] int64, 0-indexed, u < v, unique, sorted
    name: str = ""


@dataclass(frozen=True)
class BinPackingInstance:
    weights: np.ndarray  # [L] positive int64
    capacity: int
    name: str = ""

    @property
    def item_count(self) -> int:
        return int(self.weights.shape[0])


# -------------------------------------------------------------------
# Graph coloring
# -------------------------------------------------------------------
def parse_dimacs(text: str, name: str = "") -> GraphColoringInstance:
    """DIMACS .col: "c" comments, one "p edge V E" line, "e u v" lines (1-indexed)."""
    vertex_count: int | None = None
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        tag = parts[0]
        if tag == "p":
            if vertex_count is not None:
                raise ParseError("duplicate p-line", lineno)
            if len(parts) != 4 or parts[1] not in ("edge", "col"):
                raise ParseError(f"malformed p-line {raw.strip()!r}", lineno)
            try:
                vertex_count = int(parts[2])
                int(parts[3])
            except ValueError as exc:
                raise ParseError(f"non-integer count in {raw.strip()!r}", lineno) from exc
            if vertex_count < 1:
                raise ParseError(f"vertex count must be positive, got {vertex_count}", lineno)
        elif tag == "e":
            if vertex_count is None:
                raise ParseError("edge before p-line", lineno)
            if len(parts) != 3:
                raise ParseError(f"malformed edge line {raw.strip()!r}", lineno)
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ParseError(f"non-integer vertex in {raw.strip()!r}", lineno) from exc
            for x in (u, v):
                if not 1 <= x <= vertex_count:
                    raise ParseError(f"vertex {x} out of range 1..{vertex_count}", lineno)
            if u != v:
                edges.add((min(u, v) - 1, max(u, v) - 1))
        else:
            raise ParseError(f"unexpected line {raw.strip()!r}", lineno)
    if vertex_count is None:
        raise ParseError("missing p-line")
    edge_array = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return GraphColoringInstance(vertex_count=vertex_count, edges=edge_array, name=name)


def coloring_conflicts(instance: GraphColoringInstance, genome: Genome) -> int:
    g = np.asarray(genome)
    return int(np.count_nonzero(g[instance.edges[:, 0]] == g[instance.edges[:, 1]]))


def coloring_fitness(
    instance: GraphColoringInstance, genome: Genome, invalid_mode: InvalidMode = "strict"
) -> float:
    """-(colors used) for proper colorings; NEGATIVE_INFINITY otherwise (strict mode).

    Graded mode scores an improper coloring as -(conflicts * V + colors).
    """
    genome = np.asarray(genome)
    if genome.shape != (instance.vertex_count,):
        raise DataError(f"genome length {genome.shape} does not match {instance.vertex_count} vertices")
    colors = int(np.unique(genome).size)
    conflicts = coloring_conflicts(instance, genome)
    if conflicts == 0:
        return -float(colors)
    if invalid_mode == "graded":
        return -float(conflicts * instance.vertex_count + colors)
    return NEGATIVE_INFINITY


def fetch_dimacs(name: str, out_dir: str | Path, base_url: str = DIMACS_URL, timeout: float = 30.0) -> Path:
    """Download a public DIMACS .col benchmark into out_dir.

    The text must parse before anything is written.
    """
    filename = name if name.endswith(".col") else f"{name}.col"
    url = f"{base_url.rstrip('/')}/{filename}"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise DataError(f"could not fetch {url}: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise DataError(f"could not fetch {url}: HTTP {resp.status_code}")
    try:
        instance = parse_dimacs(resp.text, name=filename)
    except ParseError as exc:
        raise ParseError(f"{url}: {exc}") from exc

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    path.write_text(resp.text, encoding="utf-8")
    logger.info("fetched %s (%d vertices, %d edges) -> %s", url, instance.vertex_count, len(instance.edges), path)
    return path


# -------------------------------------------------------------------
# Bin packing
# -------------------------------------------------------------------
def _bpp_instance(weights: list[int], capacity: int, name: str, weight_lines: list[int]) -> BinPackingInstance:
    for w, lineno in zip(weights, weight_lines):
        if w <= 0:
            raise ParseError(f"item weight must be positive, got {w}", lineno)
        if w > capacity:
            raise ParseError(f"item weight {w} exceeds capacity {capacity}", lineno)
    if not weights:
        raise ParseError("instance has no items")
    return BinPackingInstance(weights=np.array(weights, dtype=np.int64), capacity=capacity, name=name)


def _int_token(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError as exc:
        raise ParseError(f"non-integer {what} {token!r}", lineno) from exc


def parse_bpp(text: str) -> BinPackingInstance:
    """Canonical format: name line, "L C" line, then L lines with one weight each."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln]
    if len(lines) < 2:
        raise ParseError("expected a name line and an 'L C' header")
    name = lines[0][1]
    header_no, header = lines[1]
    parts = header.split()
    if len(parts) != 2:
        raise ParseError(f"header must be 'L C', got {header!r}", header_no)
    count = _int_token(parts[0], header_no, "item count")
    capacity = _int_token(parts[1], header_no, "capacity")
    if count < 1 or capacity < 1:
        raise ParseError(f"item count and capacity must be positive, got {count} {capacity}", header_no)

    body = lines[2:]
    if len(body) != count:
        raise ParseError(f"header declares {count} items, found {len(body)}", body[-1][0] if body else header_no)
    weights = []
    for lineno, ln in body:
        tokens = ln.split()
        if len(tokens) != 1:
            raise ParseError(f"expected one weight per line, got {ln!r}", lineno)
        weights.append(_int_token(tokens[0], lineno, "weight"))
    return _bpp_instance(weights, capacity, name, [i for i, _ in body])


def parse_bpplib(text: str, name: str = "") -> BinPackingInstance:
    """BPPLIB layout used by the Hard28 set: L, then C, then L weights."""
    tokens = [(i, tok) for i, ln in enumerate(text.splitlines(), start=1) for tok in ln.split()]
    if len(tokens) < 2:
        raise ParseError("expected item count and capacity")
    count = _int_token(tokens[0][1], tokens[0][0], "item count")
    capacity = _int_token(tokens[1][1], tokens[1][0], "capacity")
    body = tokens[2:]
    if len(body) != count:
        raise ParseError(f"header declares {count} items, found {len(body)}", body[-1][0] if body else tokens[1][0])
    weights = [_int_token(tok, i, "weight") for i, tok in body]
    return _bpp_instance(weights, capacity, name, [i for i, _ in body])


def format_bpp(instance: BinPackingInstance) -> str:
    lines = [instance.name or "unnamed", f"{instance.item_count} {instance.capacity}"]
    lines.extend(str(int(w)) for w in instance.weights)
    return "\n".join(lines) + "\n"


def generate_bpp(
    n_items: int,
    weight_low: int,
    weight_high: int,
    capacity: int,
    rng: np.random.Generator,
    name: str = "",
) -> BinPackingInstance:
    """Integer weights uniform on [weight_low, weight_high] (both inclusive)."""
    if n_items < 1:
        raise ConfigError(f"n_items must be positive, got {n_items}")
    if not 1 <= weight_low <= weight_high <= capacity:
        raise ConfigError(
            f"need 1 <= low <= high <= capacity, got low={weight_low} high={weight_high} capacity={capacity}"
        )
    weights = rng.integers(weight_low, weight_high, size=n_items, endpoint=True)
    return BinPackingInstance(weights=weights.astype(np.int64), capacity=capacity, name=name)


def bin_fills(instance: BinPackingInstance, genome: Genome) -> np.ndarray:
    return np.bincount(np.asarray(genome), weights=instance.weights, minlength=instance.item_count)


def bpp_fitness(
    instance: BinPackingInstance, genome: Genome, invalid_mode: InvalidMode = "strict"
) -> float:
    """sum over used bins of (fill/C)^2, divided by the number of used bins.

    Overfull bins give NEGATIVE_INFINITY, or -(overflow/C + bins used) in graded mode.
    """
    genome = np.asarray(genome)
    if genome.shape != (instance.item_count,):
        raise DataError(f"genome length {genome.shape} does not match {instance.item_count} items")
    fills = bin_fills(instance, genome)
    used = fills[fills > 0]
    overflow = float(np.clip(used - instance.capacity, 0, None).sum())
    if overflow > 0:
        if invalid_mode == "graded":
            return -(overflow / instance.capacity + used.size)
        return NEGATIVE_INFINITY
    ratios = used / instance.capacity
    return float(np.sum(ratios**2) / used.size)


# -------------------------------------------------------------------
# Problem adapters
# -------------------------------------------------------------------
class GraphColoringProblem(Problem):
    direction = "minimize"

    def __init__(self, instance: GraphColoringInstance, invalid_mode: InvalidMode = "strict"):
        self.instance = instance
        self.invalid_mode = invalid_mode
        self.name = instance.name

    @property
    def genome_length(self) -> int:
        return self.instance.vertex_count

    @property
    def gene_range(self) -> int:
        return self.instance.vertex_count

    def fitness(self, genome: Genome) -> float:
        return coloring_fitness(self.instance, genome, self.invalid_mode)

    def is_valid(self, genome: Genome) -> bool:
        return coloring_conflicts(self.instance, genome) == 0

    def report(self, individual: Individual) -> float:
        """Positive color count; +inf when the coloring is improper."""
        if not self.is_valid(individual.genome):
            return float("inf")
        return float(np.unique(individual.genome).size)


class BinPackingProblem(Problem):
    direction = "maximize"

    def __init__(self, instance: BinPackingInstance, invalid_mode: InvalidMode = "strict"):
        self.instance = instance
        self.invalid_mode = invalid_mode
        self.name = instance.name

    @property
    def genome_length(self) -> int:
        return self.instance.item_count

    @property
    def gene_range(self) -> int:
        return self.instance.item_count

    def fitness(self, genome: Genome) -> float:
        return bpp_fitness(self.instance, genome, self.invalid_mode)

    def is_valid(self, genome: Genome) -> bool:
        return bool(np.all(bin_fills(self.instance, genome) <= self.instance.capacity))

    def report(self, individual: Individual) -> float:
        if not self.is_valid(individual.genome):
            return NEGATIVE_INFINITY
        return bpp_fitness(self.instance, individual.genome)


def load_problem(path: str | Path, invalid_mode: InvalidMode = "strict") -> Problem:
    """Pick the parser by extension: .col DIMACS, .bpp canonical, .txt BPPLIB."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"instance file not found: {path}") from exc
    suffix = path.suffix.lower()
    try:
        if suffix == ".col":
            return GraphColoringProblem(parse_dimacs(text, name=path.name), invalid_mode)
        if suffix == ".bpp":
            return BinPackingProblem(parse_bpp(text), invalid_mode)
        if suffix == ".txt":
            return BinPackingProblem(parse_bpplib(text, name=path.name), invalid_mode)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    raise DataError(f"unknown instance type {suffix!r} for {path} (expected .col, .bpp or .txt)")
