"""Near-neighbor graph construction over unit-sphere datasets.

An edge i -> j exists iff ``coin(seed, i, j) < p(i, j)`` where the retention
probability p depends on the edge model and on whether <p_i, p_j> reaches the
threshold alpha_tau:

    exact        1 inside the cap, 0 outside
    uniform      delta inside, 0 outside
    adaptive     1 - theta_ij / pi inside, 0 outside
    twosided     delta1 inside, delta2 outside

Because the coins are shared, models built from one seed are coupled: the
uniform graph at delta is a subgraph of the one at any larger delta, and
``uniform:1`` reproduces ``exact`` bit for bit.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .coins import coin_block
from .geometry import DensityParams, alpha_fn, sample_sphere

KINDS = ("exact", "uniform", "adaptive", "twosided")
MODEL_GRAMMAR = "exact | uniform:DELTA | adaptive | twosided:DELTA1,DELTA2"

_ROW_BLOCK = 128


class ModelError(ValueError):
    pass


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else $ANNG_THREADS, else the number of available cores."""
    if threads is None:
        env = os.environ.get("ANNG_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(f"ANNG_THREADS must be an integer, got {env!r}") from None
        else:
            threads = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    return max(1, int(threads or 1))


@dataclass(frozen=True)
class EdgeModel:
    """Edge-retention rule applied on top of the alpha_tau threshold.

    ``saturate`` lets tau exceed 2^omega: the threshold is then clamped to 0
    (hemisphere neighborhoods) instead of raising.
    """

    kind: str
    tau: float
    delta: float | None = None
    delta2: float | None = None
    saturate: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown edge model {self.kind!r}; expected {MODEL_GRAMMAR}")
        if not self.tau > 1.0:
            raise ModelError(f"tau must exceed 1, got {self.tau}")
        needs = {"exact": (), "adaptive": (), "uniform": ("delta",), "twosided": ("delta", "delta2")}[self.kind]
        for name in ("delta", "delta2"):
            value = getattr(self, name)
            if name in needs:
                if value is None or not 0.0 <= value <= 1.0:
                    raise ModelError(f"{self.kind}: {name} must be a probability in [0, 1], got {value}")
            elif value is not None:
                raise ModelError(f"{self.kind} model takes no {name}")
        if self.kind == "twosided" and not self.delta > self.delta2:
            raise ModelError(f"twosided needs delta1 > delta2, got {self.delta} <= {self.delta2}")

    @classmethod
    def exact(cls, tau, saturate=False):
        return cls("exact", tau, saturate=saturate)

    @classmethod
    def uniform(cls, tau, delta, saturate=False):
        return cls("uniform", tau, delta, saturate=saturate)

    @classmethod
    def adaptive(cls, tau, saturate=False):
        return cls("adaptive", tau, saturate=saturate)

    @classmethod
    def twosided(cls, tau, delta1, delta2, saturate=False):
        return cls("twosided", tau, delta1, delta2, saturate=saturate)

    def threshold(self, omega: float) -> float:
        return alpha_fn(self.tau, omega, saturate=self.saturate)

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.delta:g}"
        if self.kind == "twosided":
            return f"twosided:{self.delta:g},{self.delta2:g}"
        return self.kind

    def retention(self, alpha_tau: float) -> float:
        """Effective in-cap retention probability used by the failure-bound formulas."""
        if self.kind == "exact":
            return 1.0
        if self.kind == "adaptive":
            return 1.0 - math.acos(min(1.0, max(-1.0, alpha_tau))) / math.pi
        return float(self.delta)


def parse_model(text: str, tau: float, saturate: bool = False) -> EdgeModel:
    """Parse ``exact``, ``uniform:D``, ``adaptive`` or ``twosided:D1,D2``."""
    raw = text.strip()
    name, sep, args = raw.partition(":")
    name = name.strip().lower()
    if name not in KINDS:
        raise ModelError(f"bad model token {name!r} in {raw!r}; expected {MODEL_GRAMMAR}")
    values = []
    if sep:
        for tok in args.split(","):
            try:
                values.append(float(tok))
            except ValueError:
                raise ModelError(f"bad probability {tok.strip()!r} in {raw!r}; expected {MODEL_GRAMMAR}") from None
    arity = {"exact": 0, "adaptive": 0, "uniform": 1, "twosided": 2}[name]
    if len(values) != arity:
        raise ModelError(f"{name} takes {arity} parameter(s), got {len(values)} in {raw!r}; expected {MODEL_GRAMMAR}")
    return EdgeModel(name, tau, *values, saturate=saturate)


def _pair_probability(model: EdgeModel, dots: np.ndarray, alpha_tau: float) -> np.ndarray:
    in_cap = dots >= alpha_tau
    if model.kind == "exact":
        return in_cap.astype(np.float64)
    if model.kind == "uniform":
        return np.where(in_cap, model.delta, 0.0)
    if model.kind == "adaptive":
        theta = np.arccos(np.clip(dots, -1.0, 1.0))
        return np.where(in_cap, 1.0 - theta / math.pi, 0.0)
    return np.where(in_cap, model.delta, model.delta2)


def edge_probability(model: EdgeModel, theta_ij: float, alpha_tau: float) -> float:
    """Probability that the edge between two points at angle ``theta_ij`` is kept."""
    if not 0.0 <= theta_ij <= math.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta_ij}")
    dots = np.array([math.cos(theta_ij)])
    if model.kind == "adaptive":
        # use theta directly rather than arccos(cos(theta))
        inside = dots[0] >= alpha_tau
        return 1.0 - theta_ij / math.pi if inside else 0.0
    return float(_pair_probability(model, dots, alpha_tau)[0])


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    params: DensityParams

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape != (self.params.n, self.params.d):
            raise ValueError(f"points must have shape ({self.params.n}, {self.params.d}), got {pts.shape}")
        norms = np.sqrt(np.einsum("ij,ij->i", pts, pts))
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > 1e-12:
            raise ValueError(f"dataset points must be unit vectors (max | |p| - 1 | = {worst:.3g})")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def omega(self) -> float:
        return self.params.omega


def generate_dataset(n: int, d: int, seed: int, allow_boundary: bool = False) -> Dataset:
    params = DensityParams(n, d, allow_boundary=allow_boundary)
    rng = np.random.default_rng(seed)
    return Dataset(sample_sphere(n, d, rng), params)


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Directed graph in CSR form: out-neighbors of p are ``indices[offsets[p]:offsets[p+1]]``."""

    n: int
    d: int
    offsets: np.ndarray
    indices: np.ndarray
    model: EdgeModel
    seed: int
    edge_count: int = field(init=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if offsets.shape != (self.n + 1,) or offsets[0] != 0 or offsets[-1] != indices.size:
            raise ValueError("malformed CSR offsets")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("CSR offsets must be non-decreasing")
        offsets.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "edge_count", int(indices.size))

    def __eq__(self, other):
        if not isinstance(other, NeighborGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and self.model == other.model
            and self.seed == other.seed
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None

    def adjacency(self) -> list[list[int]]:
        return [self.indices[self.offsets[p] : self.offsets[p + 1]].tolist() for p in range(self.n)]

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def check_structure(self) -> None:
        """Assert no self-loops and strictly ascending (hence duplicate-free) rows."""
        for p in range(self.n):
            row = self.indices[self.offsets[p] : self.offsets[p + 1]]
            if row.size and (row[0] < 0 or row[-1] >= self.n):
                raise ValueError(f"vertex {p} has out-of-range neighbors")
            if np.any(row == p):
                raise ValueError(f"self-loop at vertex {p}")
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"adjacency of vertex {p} is not strictly ascending")


def pair_inner_products(points: np.ndarray, rows) -> np.ndarray:
    # einsum keeps a fixed per-element summation order, so a row's values do
    # not depend on how rows are grouped into blocks or threads.
    return np.einsum("id,jd->ij", points[rows], points)


def neighbor_rows(data: Dataset, model: EdgeModel, seed: int, rows, alpha_tau: float | None = None) -> list[np.ndarray]:
    """Out-neighbor arrays for the given source rows; the building block of ``build_graph``."""
    rows = np.asarray(rows, dtype=np.int64)
    if alpha_tau is None:
        alpha_tau = model.threshold(data.omega)
    dots = pair_inner_products(data.points, rows)
    probs = _pair_probability(model, dots, alpha_tau)
    keep = coin_block(seed, rows, np.arange(data.n)) < probs
    keep[np.arange(rows.size), rows] = False
    return [np.flatnonzero(k) for k in keep]


def build_graph(data: Dataset, model: EdgeModel, seed: int, threads: int | None = None) -> NeighborGraph:
    """Brute-force O(n^2 d) construction; identical output for any thread count."""
    alpha_tau = model.threshold(data.omega)
    n = data.n
    blocks = [np.arange(lo, min(lo + _ROW_BLOCK, n)) for lo in range(0, n, _ROW_BLOCK)]
    workers = min(resolve_threads(threads), len(blocks))

    def work(rows):
        return neighbor_rows(data, model, seed, rows, alpha_tau)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    rows = [r for part in parts for r in part]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([r.size for r in rows], out=offsets[1:])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return NeighborGraph(n, data.d, offsets, indices, model, int(seed) & ((1 << 64) - 1))


def neighbors(graph: NeighborGraph, p: int) -> np.ndarray:
    """Read-only view of the out-neighbors of ``p``."""
    if not 0 <= p < graph.n:
        raise IndexError(f"vertex {p} out of range for graph with n={graph.n}")
    return graph.indices[graph.offsets[p] : graph.offsets[p + 1]]


class DegreeStats(NamedTuple):
    mean: float
    min: int
    max: int
    variance: float
    edge_count: int


def degree_stats(graph: NeighborGraph) -> DegreeStats:
    deg = graph.degrees()
    return DegreeStats(
        mean=float(deg.mean()),
        min=int(deg.min()),
        max=int(deg.max()),
        variance=float(deg.var()),
        edge_count=graph.edge_count,
    )
