"""Unit-sphere geometry: sampling, angles, the alpha threshold and cap/wedge volumes.

All volumes are relative to the surface of S^{d-1}, so they live in [0, 1].
Randomized estimators take an explicit ``numpy.random.Generator`` and carry
their sample count so downstream reports are self-describing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

UNIT_NORM_TOL = 1e-12

# Monte Carlo draws are generated in chunks to bound memory at large d.
_MC_CHUNK = 1 << 16


class GeometryError(ValueError):
    """Raised when a geometric quantity is requested outside its domain."""


@dataclass(frozen=True)
class DensityParams:
    """Size/dimension pair of a dense dataset, with ``omega = log2(n) / d``.

    ``allow_boundary`` admits the limiting case ``omega == 1`` (e.g. n=512,
    d=9), which the desk-scale reference experiments live on. Anything below
    1 is always rejected.
    """

    n: int
    d: int
    allow_boundary: bool = False

    def __post_init__(self):
        if self.d < 2:
            raise GeometryError(f"dimension must be >= 2, got d={self.d}")
        if self.n < 2:
            raise GeometryError(f"dataset needs at least 2 points, got n={self.n}")
        omega = self.omega
        if omega < 1.0 or (omega == 1.0 and not self.allow_boundary):
            raise GeometryError(
                f"dataset is not dense: omega = log2({self.n})/{self.d} = {omega:.6g}, need omega > 1"
            )

    @property
    def omega(self) -> float:
        return math.log2(self.n) / self.d

    @property
    def scale(self) -> float:
        """2^-omega, the unit of sine distance."""
        return 2.0 ** (-self.omega)


@dataclass(frozen=True)
class CapSpec:
    gamma: float
    d: int

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise GeometryError(f"cap height must lie in [0, 1], got {self.gamma}")
        if self.d < 2:
            raise GeometryError(f"dimension must be >= 2, got d={self.d}")


@dataclass(frozen=True)
class WedgeSpec:
    beta: float
    gamma: float
    theta: float

    def __post_init__(self):
        for name in ("beta", "gamma"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise GeometryError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 <= self.theta <= math.pi:
            raise GeometryError(f"theta must lie in [0, pi], got {self.theta}")


class Estimate(NamedTuple):
    mean: float
    stderr: float
    samples: int


def _check_dim(d: int) -> None:
    if d < 2:
        raise GeometryError(f"dimension must be >= 2, got d={d}")


def sample_sphere(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform points on S^{d-1} as an ``(n, d)`` array."""
    _check_dim(d)
    x = rng.standard_normal((n, d))
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    # A zero Gaussian draw has probability zero; redraw defensively anyway.
    bad = norms == 0.0
    while bad.any():
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.sqrt(np.einsum("ij,ij->i", x, x))
        bad = norms == 0.0
    return x / norms[:, None]


def sample_unit_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    return sample_sphere(1, d, rng)[0]


def check_unit(x, name: str = "vector") -> np.ndarray:
    """Return ``x`` as a float array after asserting it has unit norm."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise GeometryError(f"{name} must be a 1-d vector of length >= 2")
    err = abs(float(np.linalg.norm(v)) - 1.0)
    if err > UNIT_NORM_TOL:
        raise GeometryError(f"{name} is not a unit vector (| |v| - 1 | = {err:.3g})")
    return v


def angle(x, y) -> float:
    """Angle in [0, pi] between two unit vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise GeometryError(f"dimension mismatch: {x.shape} vs {y.shape}")
    c = min(1.0, max(-1.0, float(np.dot(x, y))))
    return math.acos(c)


def sin_from_inner(inner):
    """sin(theta) from cos(theta) = inner, clamped into [-1, 1] first."""
    c = np.clip(inner, -1.0, 1.0)
    return np.sqrt(np.maximum(0.0, 1.0 - c * c))


def alpha_fn(x: float, omega: float, saturate: bool = False) -> float:
    """Inner-product threshold ``sqrt(1 - x^2 * 2^(-2 omega))`` at sine scale ``x``.

    With ``saturate=True`` a negative radicand (``x * 2^-omega > 1``) is
    clamped to zero, i.e. the threshold bottoms out at the hemisphere.
    """
    if x < 0:
        raise GeometryError(f"alpha is defined for x >= 0, got x={x}")
    radicand = 1.0 - x * x * 2.0 ** (-2.0 * omega)
    if radicand < 0.0:
        if not saturate:
            raise GeometryError(
                f"alpha undefined at x={x}, omega={omega}: 1 - x^2 * 2^(-2 omega) = {radicand:.6g} < 0"
            )
        radicand = 0.0
    return math.sqrt(radicand)


def cap_volume_lower_bound(spec: CapSpec, c_lb: float = 1.0) -> float:
    """``c_lb * d^(-1/2) * (1 - gamma^2)^(d/2)``."""
    if c_lb <= 0:
        raise GeometryError("c_lb must be positive")
    return c_lb * spec.d ** -0.5 * (1.0 - spec.gamma**2) ** (spec.d / 2.0)


def _betacf(a: float, b: float, x: float, eps: float = 1e-16, max_iter: int = 20000) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    dd = 1.0 - qab * x / qap
    if abs(dd) < tiny:
        dd = tiny
    dd = 1.0 / dd
    h = dd
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        dd = tiny if abs(dd) < tiny else dd
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        dd = 1.0 / dd
        h *= dd * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        dd = tiny if abs(dd) < tiny else dd
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0."""
    if a <= 0 or b <= 0:
        raise GeometryError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def cap_volume_exact(spec: CapSpec) -> float:
    """Relative volume of the cap {y : <x, y> >= gamma} on S^{d-1}.

    Uses Vol = I_{1 - gamma^2}((d-1)/2, 1/2) / 2, which reduces to
    arccos(gamma)/pi on the circle.
    """
    g = spec.gamma
    if g == 0.0:
        return 0.5
    if g == 1.0:
        return 0.0
    if spec.d == 2:
        return math.acos(g) / math.pi
    return 0.5 * betainc_regularized((spec.d - 1) / 2.0, 0.5, 1.0 - g * g)


def angular_mass(alpha: float, d: int, weight=None, nodes: int = 400) -> float:
    """Sphere-relative mass of the cap {<x, y> >= alpha}, optionally weighted.

    Integrates ``weight(theta) * sin(theta)^(d-2)`` over ``[0, arccos(alpha)]``
    with Gauss-Legendre quadrature, normalized by the same integral over
    ``[0, pi]``. ``weight=None`` gives the plain cap volume.
    """
    _check_dim(d)
    alpha = min(1.0, max(-1.0, alpha))
    upper = math.acos(alpha)
    if upper == 0.0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)

    def integral(lo, hi, f):
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        vals = np.sin(t) ** (d - 2)
        if f is not None:
            vals = vals * f(t)
        return 0.5 * (hi - lo) * float(np.dot(w, vals))

    total = integral(0.0, math.pi, None)
    return integral(0.0, upper, weight) / total


def calibrate_cap_constant(d: int, gammas=None) -> float:
    """Largest ``c_lb`` for which the cap lower bound stays below the exact volume.

    Takes the minimum ratio ``exact / (d^-1/2 (1-gamma^2)^(d/2))`` over a grid
    of heights in [0, 1), shaved by a relative 1e-12 so the bound is strict
    under rounding.
    """
    _check_dim(d)
    if gammas is None:
        gammas = np.linspace(0.0, 0.99, 100)
    ratios = []
    for g in gammas:
        g = float(g)
        if g >= 1.0:
            continue
        spec = CapSpec(g, d)
        ratios.append(cap_volume_exact(spec) / cap_volume_lower_bound(spec, 1.0))
    return min(ratios) * (1.0 - 1e-12)


def _binomial_estimate(hits: int, samples: int) -> Estimate:
    mean = hits / samples
    return Estimate(mean, math.sqrt(mean * (1.0 - mean) / samples), samples)


def cap_volume_mc(spec: CapSpec, samples: int, rng: np.random.Generator) -> Estimate:
    """Fraction of uniform sphere samples y with <e1, y> >= gamma."""
    if samples < 1:
        raise GeometryError("samples must be >= 1")
    hits = 0
    remaining = samples
    while remaining:
        m = min(remaining, _MC_CHUNK)
        y = sample_sphere(m, spec.d, rng)
        hits += int(np.count_nonzero(y[:, 0] >= spec.gamma))
        remaining -= m
    return _binomial_estimate(hits, samples)


def wedge_volume_mc(spec: WedgeSpec, d: int, samples: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo volume of C_x(beta) n C_y(gamma) with x = e1, y = cos(t) e1 + sin(t) e2."""
    _check_dim(d)
    if samples < 1:
        raise GeometryError("samples must be >= 1")
    ct, st = math.cos(spec.theta), math.sin(spec.theta)
    hits = 0
    remaining = samples
    while remaining:
        m = min(remaining, _MC_CHUNK)
        y = sample_sphere(m, d, rng)
        in_x = y[:, 0] >= spec.beta
        in_y = ct * y[:, 0] + st * y[:, 1] >= spec.gamma
        hits += int(np.count_nonzero(in_x & in_y))
        remaining -= m
    return _binomial_estimate(hits, samples)


def wedge_lb(tau: float, s: float, eps: float, params: DensityParams) -> float:
    """Lower bound ``s^d / (n sqrt(d))`` on the progress wedge volume.

    Only valid when s > 1, eps > 0 and tau >= sqrt(2) (s + eps); each failed
    condition is named in the error.
    """
    if not s > 1.0:
        raise GeometryError(f"wedge bound needs s > 1, got s={s}")
    if not eps > 0.0:
        raise GeometryError(f"wedge bound needs eps > 0, got eps={eps}")
    need = math.sqrt(2.0) * (s + eps)
    if tau < need:
        raise GeometryError(f"wedge bound needs tau >= sqrt(2)*(s+eps) = {need:.6g}, got tau={tau}")
    return s**params.d / (params.n * math.sqrt(params.d))
