"""Greedy search over a neighbor graph, plus planted-query generation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import check_unit, sin_from_inner
from .graph import Dataset, NeighborGraph, neighbors


class Status(str, enum.Enum):
    SUCCESS = "Success"
    FAIL_NO_PROGRESS = "FailNoProgress"


class SearchInvariantError(RuntimeError):
    """The greedy loop exceeded n iterations, which strict progress rules out."""


@dataclass(frozen=True)
class QuerySpec:
    q: np.ndarray
    r: float
    r0: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", check_unit(self.q, "query"))
        if self.r0 is not None and not self.r0 > self.r:
            raise ValueError(f"warm-start radius r0={self.r0} must exceed r={self.r}")
        if self.epsilon is not None:
            if self.r0 is None:
                raise ValueError("epsilon requires r0")
            if not 0.0 < self.epsilon < self.r0 - self.r:
                raise ValueError(f"epsilon must lie in (0, r0 - r) = (0, {self.r0 - self.r:g})")

    def validate(self, omega: float) -> None:
        upper = 2.0**omega
        if not 1.0 < self.r < upper:
            raise ValueError(f"r-NN search requires r in (1, 2^omega) = (1, {upper:.6g}); got r={self.r}")


@dataclass(frozen=True)
class RandomStart:
    seed: int


@dataclass(frozen=True)
class FixedStart:
    index: int


def parse_start(text: str):
    kind, _, arg = text.partition(":")
    try:
        value = int(arg)
    except ValueError:
        raise ValueError(f"bad start {text!r}; expected random:SEED or fixed:IDX") from None
    if kind == "random":
        return RandomStart(value)
    if kind == "fixed":
        return FixedStart(value)
    raise ValueError(f"bad start {text!r}; expected random:SEED or fixed:IDX")


@dataclass
class GreedyOutcome:
    status: Status
    terminal: int
    steps: int
    comparisons: int
    path: list[int] = field(default_factory=list)
    sin_theta_terminal: float = 0.0
    inner_terminal: float = 0.0

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "terminal": self.terminal,
            "steps": self.steps,
            "comparisons": self.comparisons,
            "sin_theta_terminal": self.sin_theta_terminal,
            "path": list(self.path),
        }


def inner_with(points: np.ndarray, idx, q: np.ndarray) -> np.ndarray:
    return np.einsum("ij,j->i", points[idx], q)


def within_radius(inner, radius: float):
    """Success test: sin(theta) <= radius on the near side (<p, q> > 0).

    The sign condition rules out near-antipodal points, whose sine is small too.
    """
    return (sin_from_inner(inner) <= radius) & (np.asarray(inner) > 0.0)


def _step(graph: NeighborGraph, points: np.ndarray, p: int, q: np.ndarray, inner_p: float):
    nbrs = neighbors(graph, p)
    if nbrs.size == 0:
        return None, inner_p, 0
    vals = inner_with(points, nbrs, q)
    k = int(np.argmax(vals))  # first maximum = lowest index, rows are ascending
    if vals[k] > inner_p:
        return int(nbrs[k]), float(vals[k]), nbrs.size
    return None, inner_p, nbrs.size


def greedy_step(graph: NeighborGraph, data: Dataset, p: int, q) -> int | None:
    """Move to the best out-neighbor if it strictly beats ``p``; ``None`` means fail."""
    q = np.asarray(q, dtype=np.float64)
    inner_p = float(inner_with(data.points, [p], q)[0])
    nxt, _, _ = _step(graph, data.points, p, q, inner_p)
    return nxt


def _check_pair(graph: NeighborGraph, data: Dataset) -> None:
    if graph.n != data.n or graph.d != data.d:
        raise ValueError(f"graph (n={graph.n}, d={graph.d}) does not match dataset (n={data.n}, d={data.d})")


def greedy_query(graph: NeighborGraph, data: Dataset, spec: QuerySpec, start) -> GreedyOutcome:
    """Greedy walk from ``start`` until the success radius r * 2^-omega is reached or no neighbor improves."""
    _check_pair(graph, data)
    spec.validate(data.omega)
    if isinstance(start, RandomStart):
        p = int(np.random.default_rng(start.seed).integers(data.n))
    elif isinstance(start, FixedStart):
        p = start.index
    else:
        p = int(start)
    if not 0 <= p < data.n:
        raise IndexError(f"start vertex {p} out of range for n={data.n}")
    radius = spec.r * 2.0 ** (-data.omega)
    q = spec.q
    points = data.points
    inner_p = float(inner_with(points, [p], q)[0])
    path = [p]
    comparisons = 0
    status = Status.FAIL_NO_PROGRESS
    for _ in range(data.n + 1):
        if within_radius(inner_p, radius):
            status = Status.SUCCESS
            break
        nxt, inner_next, cost = _step(graph, points, p, q, inner_p)
        comparisons += cost
        if nxt is None:
            break
        p, inner_p = nxt, inner_next
        path.append(p)
    else:
        raise SearchInvariantError(f"greedy search exceeded {data.n} iterations")
    return GreedyOutcome(
        status=status,
        terminal=p,
        steps=len(path) - 1,
        comparisons=comparisons,
        path=path,
        sin_theta_terminal=float(sin_from_inner(inner_p)),
        inner_terminal=inner_p,
    )


def tangent_direction(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector in the tangent space of the sphere at ``p``."""
    while True:
        g = rng.standard_normal(p.shape[0])
        t = g - np.dot(g, p) * p
        norm = np.linalg.norm(t)
        if norm > 1e-12:
            return t / norm


def rotate_from(p: np.ndarray, sin_theta: float, rng: np.random.Generator) -> np.ndarray:
    """Point at angle arcsin(sin_theta) < pi/2 from ``p`` in a uniform tangent direction."""
    if not 0.0 <= sin_theta <= 1.0:
        raise ValueError(f"sine must lie in [0, 1], got {sin_theta}")
    theta = math.asin(sin_theta)
    q = math.cos(theta) * p + math.sin(theta) * tangent_direction(p, rng)
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class PlantedQuery:
    q: np.ndarray
    planted: int


def plant_query(data: Dataset, rng: np.random.Generator, r_target: float, u: float | None = None) -> PlantedQuery:
    """Query within sine distance ``u * r_target * 2^-omega`` of a uniformly chosen point.

    ``u`` is drawn from [0, 1) unless given.
    """
    radius = r_target * 2.0 ** (-data.omega)
    if radius > 1.0:
        raise ValueError(f"r_target * 2^-omega = {radius:.6g} exceeds 1")
    i = int(rng.integers(data.n))
    if u is None:
        u = float(rng.random())
    p = data.points[i]
    if u == 0.0:
        return PlantedQuery(p.copy(), i)
    return PlantedQuery(rotate_from(p, u * radius, rng), i)


def warm_start(data: Dataset, q: np.ndarray, r: float, r0: float, rng: np.random.Generator) -> int:
    """Brute-force pick of a start vertex inside the r0 radius but outside the r radius.

    Falls back to any vertex inside r0 (and then to the overall best vertex)
    when the annulus is empty.
    """
    inner = inner_with(data.points, slice(None), q)
    scale = 2.0 ** (-data.omega)
    inside_r0 = within_radius(inner, r0 * scale)
    annulus = np.flatnonzero(inside_r0 & ~within_radius(inner, r * scale))
    if annulus.size:
        return int(annulus[rng.integers(annulus.size)])
    pool = np.flatnonzero(inside_r0)
    if pool.size:
        return int(pool[rng.integers(pool.size)])
    return int(np.argmax(inner))
