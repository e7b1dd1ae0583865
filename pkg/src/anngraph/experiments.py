"""Monte Carlo harness: progress probability, query sweeps, two-sided sweeps and
degree/edge concentration, each emitted as an :class:`ExperimentReport`.

Hidden constants in the asymptotic bounds are taken as 1 and every predicted
column says so in ``report.sources``; nothing in here asserts those values.
What the suites do check (and the audit re-derives) are constant-free
quantities: binomial standard errors, Chebyshev tail bounds and bands.

Randomness: trial ``t`` draws from ``default_rng([seed, t])``, so results do
not depend on how trials are spread over worker threads.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import (
    CapSpec,
    DensityParams,
    WedgeSpec,
    alpha_fn,
    angular_mass,
    cap_volume_exact,
    cap_volume_mc,
    sample_sphere,
    wedge_lb,
    wedge_volume_mc,
)
from .graph import Dataset, EdgeModel, ModelError, build_graph, generate_dataset, neighbor_rows, parse_model, resolve_threads
from .report import AuditError, ExperimentReport, check_close, proportion_stderr
from .search import FixedStart, QuerySpec, greedy_query, inner_with, plant_query, rotate_from, warm_start, within_radius

SUITES = ("progress", "query-sweep", "twosided", "concentration")
BAND_SIGMAS = 4.0
CHEBYSHEV_SLACK_SE = 3.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    d: int
    tau: float
    suites: tuple[str, ...] = ("query-sweep",)
    models: tuple[EdgeModel, ...] = ()
    r: float | None = None
    r0: float | None = None
    epsilon: float | None = None
    s: float | None = None
    trials: int = 100
    dataset_seed: int = 0
    graph_seed: int = 0
    query_seed: int = 0
    mc_samples: int = 100_000
    graph_seeds: int = 50
    delta1: tuple[float, ...] = ()
    saturate: bool = False
    allow_boundary: bool = False

    def __post_init__(self):
        try:
            self.params
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        for suite in self.suites:
            if suite not in SUITES:
                raise ConfigError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
        for m in self.models:
            if m.tau != self.tau:
                raise ConfigError(f"model {m.label} has tau={m.tau}, config has tau={self.tau}")
        if self.r is not None:
            upper = 2.0**self.omega
            if not 1.0 < self.r < upper:
                raise ConfigError(f"r must lie in (1, 2^omega) = (1, {upper:.6g}), got {self.r}")
            if self.r0 is not None and not self.r0 > self.r:
                raise ConfigError(f"r0 must exceed r, got r0={self.r0}, r={self.r}")
        if self.r0 is not None and self.epsilon is not None and self.r is not None:
            if not 0.0 < self.epsilon < self.r0 - self.r:
                raise ConfigError(f"epsilon must lie in (0, r0 - r) = (0, {self.r0 - self.r:g})")

    @property
    def params(self) -> DensityParams:
        return DensityParams(self.n, self.d, allow_boundary=self.allow_boundary)

    @property
    def omega(self) -> float:
        return self.params.omega

    @property
    def alpha_tau(self) -> float:
        return alpha_fn(self.tau, self.omega, saturate=self.saturate)

    def model(self, text: str) -> EdgeModel:
        return parse_model(text, self.tau, saturate=self.saturate)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["suites"] = list(self.suites)
        out["models"] = [m.label for m in self.models]
        out["delta1"] = list(self.delta1)
        out["omega"] = self.omega
        return out


# --------------------------------------------------------------------------
# config files

_SCALARS = {
    "n": int,
    "d": int,
    "tau": float,
    "r": float,
    "r0": float,
    "epsilon": float,
    "s": float,
    "trials": int,
    "dataset_seed": int,
    "graph_seed": int,
    "query_seed": int,
    "mc_samples": int,
    "graph_seeds": int,
}
_FLAGS = ("saturate", "allow_boundary")
_LISTS = ("suite", "model", "delta1")
REQUIRED_KEYS = ("suite", "n", "d", "tau", "trials")
SUITE_KEYS = {
    "progress": ("model", "s", "epsilon"),
    "query-sweep": ("model", "r", "r0", "epsilon"),
    "twosided": ("delta1", "r", "r0", "epsilon"),
    "concentration": ("model",),
}


def _parse_flag(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {value!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``suite``, ``model`` and ``delta1`` may repeat.

    Unknown keys, duplicate scalar keys and missing required keys are errors.
    """
    scalars: dict = {}
    lists: dict[str, list[str]] = {k: [] for k in _LISTS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key in _LISTS:
            parts = [value] if key == "model" else value.split(",")
            lists[key].extend(p.strip() for p in parts if p.strip())
        elif key in _SCALARS or key in _FLAGS:
            if key in scalars:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            if key in _FLAGS:
                scalars[key] = _parse_flag(key, value)
            else:
                try:
                    scalars[key] = _SCALARS[key](value)
                except ValueError:
                    raise ConfigError(f"line {lineno}: {key} expects {_SCALARS[key].__name__}, got {value!r}") from None
        else:
            known = sorted(set(_SCALARS) | set(_FLAGS) | set(_LISTS))
            raise ConfigError(f"line {lineno}: unknown key {key!r}; known keys: {', '.join(known)}")

    present = {k for k in scalars} | {k for k, v in lists.items() if v}
    missing = [k for k in REQUIRED_KEYS if k not in present]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)} (required: {', '.join(REQUIRED_KEYS)})")
    for suite in lists["suite"]:
        if suite not in SUITES:
            raise ConfigError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
        need = [k for k in SUITE_KEYS[suite] if k not in present]
        if need:
            raise ConfigError(f"suite {suite!r} needs keys: {', '.join(need)}")

    saturate = scalars.get("saturate", False)
    try:
        models = tuple(parse_model(m, scalars["tau"], saturate=saturate) for m in lists["model"])
        delta1 = tuple(float(x) for x in lists["delta1"])
    except (ModelError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(suites=tuple(dict.fromkeys(lists["suite"])), models=models, delta1=delta1, **scalars)


# --------------------------------------------------------------------------
# predictions

def derive_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1, dtype=np.uint64)[0])


def pair_edge_probability(model: EdgeModel, alpha_tau: float, d: int) -> float:
    """Probability that a fixed ordered pair of i.i.d. uniform points is an edge."""
    vol = cap_volume_exact(CapSpec(alpha_tau, d))
    if model.kind == "exact":
        return vol
    if model.kind == "uniform":
        return model.delta * vol
    if model.kind == "adaptive":
        return angular_mass(alpha_tau, d, lambda t: 1.0 - t / math.pi)
    return model.delta2 + (model.delta - model.delta2) * vol


def predicted_steps(cfg: ExperimentConfig) -> float:
    return (cfg.r0 - cfg.r) * 2.0**cfg.omega / cfg.epsilon


def failure_bound(steps: float, r: float, d: int, retention: float) -> tuple[float, float, bool]:
    """(raw, clipped, vacuous) for steps * exp(-r^d * retention / sqrt(d))."""
    raw = steps * math.exp(-(r**d) * retention / math.sqrt(d))
    return raw, min(1.0, max(0.0, raw)), raw >= 1.0


def query_cost(cfg: ExperimentConfig) -> float:
    return 2.0**cfg.omega / cfg.epsilon * math.sqrt(cfg.d) * cfg.tau**cfg.d


def twosided_delta2(cfg: ExperimentConfig) -> float:
    """delta2 = d^-1/2 * tau^d * 2^(-d omega), the regime that keeps exact-graph query time."""
    return cfg.d**-0.5 * cfg.tau**cfg.d * 2.0 ** (-cfg.d * cfg.omega)


def _map_trials(fn, count: int, threads: int | None):
    workers = min(resolve_threads(threads), count)
    if workers <= 1:
        return [fn(t) for t in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count), chunksize=max(1, count // (4 * workers))))


def _geometry_columns(cfg: ExperimentConfig) -> dict:
    alpha = cfg.alpha_tau
    est = cap_volume_mc(CapSpec(alpha, cfg.d), cfg.mc_samples, np.random.default_rng([cfg.dataset_seed, 0xCA9]))
    return {
        "alpha_tau": alpha,
        "vol_c_exact": cap_volume_exact(CapSpec(alpha, cfg.d)),
        "vol_c_mc_mean": est.mean,
        "vol_c_mc_stderr": est.stderr,
        "mc_samples": est.samples,
    }


_CONFIG_COLUMNS = ["suite", "model", "n", "d", "omega", "tau"]
_GEOMETRY_COLUMNS = ["alpha_tau", "vol_c_exact", "vol_c_mc_mean", "vol_c_mc_stderr", "mc_samples"]
_GEOMETRY_SOURCES = {
    "alpha_tau": "sqrt(1 - tau^2 * 2^(-2 omega)), clamped at 0 when saturated",
    "vol_c_exact": "I_{1-alpha^2}((d-1)/2, 1/2) / 2",
    "vol_c_mc_mean": "fraction of uniform sphere samples in the cap",
}


# --------------------------------------------------------------------------
# progress probability

PROGRESS_COLUMNS = _CONFIG_COLUMNS + [
    "s",
    "epsilon",
    "trials",
    "retention",
    "successes",
    "rate_mean",
    "rate_stderr",
    "pred_rate_lower",
    "pred_wedge_lb",
    "wedge_mc_mean",
    "wedge_mc_stderr",
] + _GEOMETRY_COLUMNS
PROGRESS_SOURCES = {
    "pred_rate_lower": "1 - exp(-s^d * delta / sqrt(d)), up to constants",
    "pred_wedge_lb": "s^d / (n sqrt(d))",
    "wedge_mc_mean": "MC volume of the wedge (alpha_tau, alpha_s, arcsin((s+eps) 2^-omega))",
    **_GEOMETRY_SOURCES,
}


def progress_outcomes(cfg: ExperimentConfig, models=None, s=None, eps=None, threads=None) -> np.ndarray:
    """Boolean matrix (trials x models): did p1 have a neighbor within s * 2^-omega of q?

    Every trial draws a fresh dataset; p1 is point 0 and q sits at sine
    distance exactly (s + eps) * 2^-omega from it. All models in one trial
    share the dataset, the query and the coins.
    """
    models = tuple(models if models is not None else cfg.models)
    s = cfg.s if s is None else s
    eps = cfg.epsilon if eps is None else eps
    if not s > 1.0:
        raise ConfigError(f"progress trials need s > 1, got s={s}")
    need = math.sqrt(2.0) * (s + eps)
    if not eps > 0.0 or cfg.tau < need:
        raise ConfigError(f"progress trials need eps > 0 and tau >= sqrt(2)(s+eps) = {need:.6g}; got tau={cfg.tau}, eps={eps}")
    scale = 2.0 ** (-cfg.omega)
    if (s + eps) * scale > 1.0:
        raise ConfigError(f"(s+eps) * 2^-omega = {(s + eps) * scale:.6g} exceeds 1")
    params = cfg.params
    alpha = cfg.alpha_tau

    def trial(t):
        points = sample_sphere(cfg.n, cfg.d, np.random.default_rng([cfg.dataset_seed, t]))
        data = Dataset(points, params)
        q = rotate_from(points[0], (s + eps) * scale, np.random.default_rng([cfg.query_seed, t]))
        gseed = derive_seed(cfg.graph_seed, t)
        out = []
        for m in models:
            nbrs = neighbor_rows(data, m, gseed, [0], alpha)[0]
            out.append(bool(np.any(within_radius(inner_with(points, nbrs, q), s * scale))))
        return out

    return np.array(_map_trials(trial, cfg.trials, threads), dtype=bool).reshape(cfg.trials, len(models))


def progress_oracle(cfg: ExperimentConfig, s=None, eps=None) -> np.ndarray:
    """Per trial: does any dataset point other than p1 lie within s * 2^-omega of q?"""
    s = cfg.s if s is None else s
    eps = cfg.epsilon if eps is None else eps
    scale = 2.0 ** (-cfg.omega)
    out = []
    for t in range(cfg.trials):
        points = sample_sphere(cfg.n, cfg.d, np.random.default_rng([cfg.dataset_seed, t]))
        q = rotate_from(points[0], (s + eps) * scale, np.random.default_rng([cfg.query_seed, t]))
        out.append(bool(np.any(within_radius(points[1:] @ q, s * scale))))
    return np.array(out)


def run_progress_trial(cfg: ExperimentConfig, s=None, eps=None, threads=None) -> ExperimentReport:
    s = cfg.s if s is None else s
    eps = cfg.epsilon if eps is None else eps
    start = time.perf_counter()
    hits = progress_outcomes(cfg, s=s, eps=eps, threads=threads)
    report = ExperimentReport("progress", PROGRESS_COLUMNS, sources=dict(PROGRESS_SOURCES), config=cfg.to_dict())
    geo = _geometry_columns(cfg)
    scale = 2.0 ** (-cfg.omega)
    wedge = wedge_volume_mc(
        WedgeSpec(cfg.alpha_tau, alpha_fn(s, cfg.omega), math.asin((s + eps) * scale)),
        cfg.d,
        cfg.mc_samples,
        np.random.default_rng([cfg.dataset_seed, 0xED9E]),
    )
    for k, m in enumerate(cfg.models):
        successes = int(hits[:, k].sum())
        retention = m.retention(cfg.alpha_tau)
        report.add_row({
            "suite": "progress", "model": m.label, "n": cfg.n, "d": cfg.d, "omega": cfg.omega, "tau": cfg.tau,
            "s": s, "epsilon": eps, "trials": cfg.trials, "retention": retention,
            "successes": successes,
            "rate_mean": successes / cfg.trials,
            "rate_stderr": proportion_stderr(successes, cfg.trials),
            "pred_rate_lower": 1.0 - math.exp(-(s**cfg.d) * retention / math.sqrt(cfg.d)),
            "pred_wedge_lb": wedge_lb(cfg.tau, s, eps, cfg.params),
            "wedge_mc_mean": wedge.mean, "wedge_mc_stderr": wedge.stderr,
            **geo,
        })
    report.timing["total"] = time.perf_counter() - start
    audit(report)
    return report


# --------------------------------------------------------------------------
# query sweeps

QUERY_COLUMNS = _CONFIG_COLUMNS + [
    "regime",
    "delta1",
    "delta2",
    "r",
    "r0",
    "epsilon",
    "trials",
    "retention",
    "successes",
    "fails",
    "success_rate_mean",
    "success_rate_stderr",
    "steps_mean",
    "steps_median",
    "steps_max",
    "comparisons_total",
    "comparisons_mean",
    "comparisons_stderr",
    "edge_count",
    "degree_mean",
    "pair_probability",
    "pred_T",
    "pred_failure_bound_raw",
    "pred_failure_bound",
    "pred_bound_vacuous",
    "pred_query_cost",
    "pred_query_cost_delta",
    "pred_degree_mean",
    "pred_edge_count",
    "pred_edge_band_lo",
    "pred_edge_band_hi",
    "edge_in_binomial_band",
    "pred_edge_coarse_lo",
    "pred_edge_coarse_hi",
    "edge_in_coarse_band",
] + _GEOMETRY_COLUMNS
QUERY_SOURCES = {
    "pred_T": "(r0 - r) * 2^omega / epsilon",
    "pred_failure_bound_raw": "T * exp(-r^d * delta / sqrt(d)), up to constants",
    "pred_failure_bound": "pred_failure_bound_raw clipped to [0, 1]; vacuous when raw >= 1",
    "pred_query_cost": "2^omega * epsilon^-1 * d^(1/2) * tau^d, up to constants",
    "pred_query_cost_delta": "2^omega * epsilon^-1 * d^(1/2) * tau^d * delta, up to constants",
    "pair_probability": "per ordered pair: delta2 + (delta1 - delta2) * Vol_c(alpha_tau) (delta * Vol_c for uniform)",
    "pred_degree_mean": "(n - 1) * pair_probability",
    "pred_edge_count": "n (n - 1) * pair_probability",
    "pred_edge_band_lo": "pred_edge_count - 4 * sqrt(n (n-1) b (1-b))",
    "pred_edge_band_hi": "pred_edge_count + 4 * sqrt(n (n-1) b (1-b))",
    "pred_edge_coarse_lo": "1/4 * n (n - 1) * pair_probability (coarse two-sided band)",
    "pred_edge_coarse_hi": "3/4 * n (n - 1) * pair_probability (coarse two-sided band)",
    **_GEOMETRY_SOURCES,
}


@dataclass(frozen=True)
class _Query:
    q: np.ndarray
    planted: int
    start: int


def planted_queries(cfg: ExperimentConfig, data: Dataset, threads=None) -> list[_Query]:
    """One planted query and warm start per trial; shared by every model of a sweep."""

    def make(t):
        rng = np.random.default_rng([cfg.query_seed, t])
        pq = plant_query(data, rng, cfg.r)
        return _Query(pq.q, pq.planted, warm_start(data, pq.q, cfg.r, cfg.r0, rng))

    return _map_trials(make, cfg.trials, threads)


def _query_row(cfg, data, model, queries, threads, regime=None):
    graph = build_graph(data, model, cfg.graph_seed, threads=threads)

    def run(t):
        query = queries[t]
        spec = QuerySpec(query.q, cfg.r, cfg.r0, cfg.epsilon)
        return greedy_query(graph, data, spec, FixedStart(query.start))

    outcomes = _map_trials(run, len(queries), threads)
    n, trials = cfg.n, len(queries)
    successes = sum(o.success for o in outcomes)
    steps = np.array([o.steps for o in outcomes], dtype=np.int64)
    comps = np.array([o.comparisons for o in outcomes], dtype=np.int64)
    alpha = cfg.alpha_tau
    b = pair_edge_probability(model, alpha, cfg.d)
    retention = model.retention(alpha)
    T = predicted_steps(cfg)
    raw, clipped, vacuous = failure_bound(T, cfg.r, cfg.d, retention)
    cost = query_cost(cfg)
    pairs = n * (n - 1)
    sd = math.sqrt(pairs * b * (1.0 - b))
    row = {
        "suite": "query-sweep", "model": model.label, "n": n, "d": cfg.d, "omega": cfg.omega, "tau": cfg.tau,
        "regime": regime,
        "delta1": model.delta if model.kind == "twosided" else None,
        "delta2": model.delta2 if model.kind == "twosided" else None,
        "r": cfg.r, "r0": cfg.r0, "epsilon": cfg.epsilon, "trials": trials,
        "retention": retention,
        "successes": int(successes),
        "fails": int(trials - successes),
        "success_rate_mean": successes / trials,
        "success_rate_stderr": proportion_stderr(successes, trials),
        "steps_mean": float(steps.mean()),
        "steps_median": float(np.median(steps)),
        "steps_max": int(steps.max()),
        "comparisons_total": int(comps.sum()),
        "comparisons_mean": float(comps.mean()),
        "comparisons_stderr": float(comps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        "edge_count": graph.edge_count,
        "degree_mean": graph.edge_count / n,
        "pair_probability": b,
        "pred_T": T,
        "pred_failure_bound_raw": raw,
        "pred_failure_bound": clipped,
        "pred_bound_vacuous": vacuous,
        "pred_query_cost": cost,
        "pred_query_cost_delta": cost * retention,
        "pred_degree_mean": (n - 1) * b,
        "pred_edge_count": pairs * b,
        "pred_edge_band_lo": pairs * b - BAND_SIGMAS * sd,
        "pred_edge_band_hi": pairs * b + BAND_SIGMAS * sd,
        "edge_in_binomial_band": abs(graph.edge_count - pairs * b) <= BAND_SIGMAS * sd,
        "pred_edge_coarse_lo": 0.25 * pairs * b,
        "pred_edge_coarse_hi": 0.75 * pairs * b,
        "edge_in_coarse_band": 0.25 * pairs * b <= graph.edge_count <= 0.75 * pairs * b,
    }
    return row


def _require_query_keys(cfg):
    missing = [k for k in ("r", "r0", "epsilon") if getattr(cfg, k) is None]
    if missing:
        raise ConfigError(f"query sweeps need {', '.join(missing)}")


def run_query_sweep(cfg: ExperimentConfig, models=None, threads=None) -> ExperimentReport:
    """Build each model's graph once, then run ``trials`` planted warm-start queries on it."""
    _require_query_keys(cfg)
    models = tuple(models if models is not None else cfg.models)
    if not models:
        raise ConfigError("query sweep needs at least one model")
    start = time.perf_counter()
    data = generate_dataset(cfg.n, cfg.d, cfg.dataset_seed, allow_boundary=cfg.allow_boundary)
    queries = planted_queries(cfg, data, threads)
    geo = _geometry_columns(cfg)
    report = ExperimentReport("query-sweep", QUERY_COLUMNS, sources=dict(QUERY_SOURCES), config=cfg.to_dict())
    for m in models:
        t0 = time.perf_counter()
        report.add_row({**_query_row(cfg, data, m, queries, threads), **geo})
        report.timing[m.label] = time.perf_counter() - t0
    report.timing["total"] = time.perf_counter() - start
    audit(report)
    return report


def twosided_models(cfg: ExperimentConfig) -> list[tuple[str, EdgeModel]]:
    if not cfg.delta1:
        raise ConfigError("twosided sweep needs at least one delta1")
    d2 = twosided_delta2(cfg)
    if d2 > 1.0:
        raise ConfigError(f"delta2 = d^-1/2 tau^d 2^(-d omega) = {d2:.6g} exceeds 1 for this (n, d, tau)")
    out = []
    for d1 in cfg.delta1:
        if not d1 > d2:
            raise ConfigError(f"delta1 = {d1} must exceed delta2 = {d2:.6g}")
        out.append(("delta2=0", EdgeModel.twosided(cfg.tau, d1, 0.0, saturate=cfg.saturate)))
        out.append(("delta2=d^-1/2*tau^d*2^-d*omega", EdgeModel.twosided(cfg.tau, d1, d2, saturate=cfg.saturate)))
    return out


def run_twosided_sweep(cfg: ExperimentConfig, threads=None) -> ExperimentReport:
    """Query sweep over both delta2 regimes for every configured delta1.

    ``pred_query_cost_delta`` carries the delta1 factor predicted when
    delta2 = 0; ``pred_query_cost`` is the form predicted for the other regime.
    """
    _require_query_keys(cfg)
    pairs = twosided_models(cfg)
    start = time.perf_counter()
    data = generate_dataset(cfg.n, cfg.d, cfg.dataset_seed, allow_boundary=cfg.allow_boundary)
    queries = planted_queries(cfg, data, threads)
    geo = _geometry_columns(cfg)
    report = ExperimentReport("twosided", QUERY_COLUMNS, sources=dict(QUERY_SOURCES), config=cfg.to_dict())
    for regime, m in pairs:
        t0 = time.perf_counter()
        row = _query_row(cfg, data, m, queries, threads, regime=regime)
        row["suite"] = "twosided"
        report.add_row({**row, **geo})
        report.timing[m.label] = time.perf_counter() - t0
    report.timing["total"] = time.perf_counter() - start
    audit(report)
    return report


# --------------------------------------------------------------------------
# concentration

CONCENTRATION_COLUMNS = _CONFIG_COLUMNS + [
    "graph_seeds",
    "pair_probability",
    "vacuous",
    "degree_observations",
    "degree_mean",
    "pred_degree_mean",
    "degree_binomial_sd",
    "degree_mean_z",
    "degree_outside",
    "degree_outside_freq",
    "degree_cheb_bound",
    "degree_cheb_pass",
    "edge_mean",
    "pred_edge_count",
    "edge_binomial_sd",
    "edge_mean_z",
    "edge_outside",
    "edge_outside_freq",
    "edge_cheb_bound",
    "edge_cheb_pass",
    "degree_in_stated_band_freq",
    "degree_in_derived_band_freq",
    "edge_in_coarse_band_freq",
] + _GEOMETRY_COLUMNS
CONCENTRATION_SOURCES = {
    "pred_degree_mean": "(n - 1) * b, b = per-pair edge probability",
    "pred_edge_count": "n (n - 1) * b",
    "degree_binomial_sd": "sqrt((n-1) b (1-b))",
    "edge_binomial_sd": "sqrt(n (n-1) b (1-b))",
    "degree_outside": "count of |N(p) - (n-1) b| >= (n-1) b / 2",
    "degree_cheb_bound": "4 / ((n-1) b)",
    "edge_outside": "count of |E - n(n-1) b| >= n(n-1) b / 2",
    "edge_cheb_bound": "4 / (n (n-1) b)",
    "degree_in_stated_band_freq": "share of degrees in [1 - delta/2, 3/2] (n-1) Vol_c (uniform/exact); [1/2, 3/2] (n-1) b (twosided)",
    "degree_in_derived_band_freq": "share of degrees in [delta - 1/2, 3/2] (n-1) Vol_c (uniform/exact)",
    "edge_in_coarse_band_freq": "share of edge counts in [1/4, 3/4] n (n-1) b (twosided)",
    **_GEOMETRY_SOURCES,
}


def _cheb_pass(outside: int, obs: int, bound: float | None) -> bool:
    if bound is None:
        return True
    freq = outside / obs
    return freq <= bound + CHEBYSHEV_SLACK_SE * math.sqrt(freq * (1.0 - freq) / obs)


def concentration_samples(cfg: ExperimentConfig, model: EdgeModel, threads=None):
    """Per-seed (degrees, edge_count); seed k regenerates both dataset and coins."""
    params = cfg.params

    def one(k):
        points = sample_sphere(cfg.n, cfg.d, np.random.default_rng([cfg.dataset_seed, k]))
        g = build_graph(Dataset(points, params), model, derive_seed(cfg.graph_seed, k), threads=1)
        return g.degrees(), g.edge_count

    results = _map_trials(one, cfg.graph_seeds, threads)
    degrees = np.concatenate([r[0] for r in results])
    edges = np.array([r[1] for r in results], dtype=np.int64)
    return degrees, edges


def run_concentration_suite(cfg: ExperimentConfig, threads=None) -> ExperimentReport:
    if not cfg.models:
        raise ConfigError("concentration suite needs at least one model")
    start = time.perf_counter()
    geo = _geometry_columns(cfg)
    report = ExperimentReport("concentration", CONCENTRATION_COLUMNS, sources=dict(CONCENTRATION_SOURCES), config=cfg.to_dict())
    n = cfg.n
    vol = geo["vol_c_exact"]
    for m in cfg.models:
        degrees, edges = concentration_samples(cfg, m, threads)
        b = pair_edge_probability(m, cfg.alpha_tau, cfg.d)
        vacuous = b == 0.0
        mu_deg, mu_edge = (n - 1) * b, n * (n - 1) * b
        sd_deg = math.sqrt((n - 1) * b * (1.0 - b))
        sd_edge = math.sqrt(n * (n - 1) * b * (1.0 - b))
        deg_out = int(np.count_nonzero(np.abs(degrees - mu_deg) >= mu_deg / 2.0))
        edge_out = int(np.count_nonzero(np.abs(edges - mu_edge) >= mu_edge / 2.0))
        deg_bound = None if vacuous else 4.0 / ((n - 1) * b)
        edge_bound = None if vacuous else 4.0 / (n * (n - 1) * b)
        deg_mean = float(degrees.mean())
        edge_mean = float(edges.mean())
        stated = derived = coarse = None
        if m.kind in ("exact", "uniform"):
            delta = m.retention(cfg.alpha_tau)
            base = (n - 1) * vol
            stated = float(np.mean((degrees >= (1 - 0.5 * delta) * base) & (degrees <= 1.5 * base)))
            derived = float(np.mean((degrees >= (delta - 0.5) * base) & (degrees <= 1.5 * base)))
        elif m.kind == "twosided":
            stated = float(np.mean((degrees >= 0.5 * mu_deg) & (degrees <= 1.5 * mu_deg)))
            coarse = float(np.mean((edges >= 0.25 * mu_edge) & (edges <= 0.75 * mu_edge)))
        report.add_row({
            "suite": "concentration", "model": m.label, "n": n, "d": cfg.d, "omega": cfg.omega, "tau": cfg.tau,
            "graph_seeds": cfg.graph_seeds,
            "pair_probability": b,
            "vacuous": vacuous,
            "degree_observations": int(degrees.size),
            "degree_mean": deg_mean,
            "pred_degree_mean": mu_deg,
            "degree_binomial_sd": sd_deg,
            "degree_mean_z": None if vacuous else (deg_mean - mu_deg) / (sd_deg / math.sqrt(degrees.size)),
            "degree_outside": deg_out,
            "degree_outside_freq": deg_out / degrees.size,
            "degree_cheb_bound": deg_bound,
            "degree_cheb_pass": _cheb_pass(deg_out, degrees.size, deg_bound),
            "edge_mean": edge_mean,
            "pred_edge_count": mu_edge,
            "edge_binomial_sd": sd_edge,
            "edge_mean_z": None if vacuous else (edge_mean - mu_edge) / (sd_edge / math.sqrt(edges.size)),
            "edge_outside": edge_out,
            "edge_outside_freq": edge_out / edges.size,
            "edge_cheb_bound": edge_bound,
            "edge_cheb_pass": _cheb_pass(edge_out, edges.size, edge_bound),
            "degree_in_stated_band_freq": stated,
            "degree_in_derived_band_freq": derived,
            "edge_in_coarse_band_freq": coarse,
            **geo,
        })
    report.timing["total"] = time.perf_counter() - start
    audit(report)
    return report


def chebyshev_binomial_check(n: int, p: float, draws: int, rng: np.random.Generator, b: float | None = None) -> dict:
    """Tail frequency of |x - np| >= nb/2 over binomial draws, against the 4/(nb) bound."""
    b = p if b is None else b
    x = rng.binomial(n, p, size=draws)
    outside = int(np.count_nonzero(np.abs(x - n * p) >= n * b / 2.0))
    return {"n": n, "p": p, "b": b, "draws": draws, "outside": outside, "freq": outside / draws, "bound": 4.0 / (n * b)}


# --------------------------------------------------------------------------
# self-audit

def audit(report: ExperimentReport) -> None:
    """Recompute every derived column from the raw counts and parameters in its row."""
    for row in report.rows:
        if report.suite == "progress":
            _audit_progress(row)
        elif report.suite in ("query-sweep", "twosided"):
            _audit_query(row)
        elif report.suite == "concentration":
            _audit_concentration(row)
        else:
            raise AuditError(f"unknown suite {report.suite!r}")


def _audit_progress(row):
    trials, k = row["trials"], row["successes"]
    check_close(row, "rate_mean", k / trials)
    check_close(row, "rate_stderr", proportion_stderr(k, trials))
    check_close(row, "pred_rate_lower", 1.0 - math.exp(-(row["s"] ** row["d"]) * row["retention"] / math.sqrt(row["d"])))
    check_close(row, "pred_wedge_lb", row["s"] ** row["d"] / (row["n"] * math.sqrt(row["d"])))


def _audit_query(row):
    trials, k, n = row["trials"], row["successes"], row["n"]
    check_close(row, "fails", trials - k)
    check_close(row, "success_rate_mean", k / trials)
    check_close(row, "success_rate_stderr", proportion_stderr(k, trials))
    check_close(row, "comparisons_mean", row["comparisons_total"] / trials)
    check_close(row, "degree_mean", row["edge_count"] / n)
    T = (row["r0"] - row["r"]) * 2.0 ** row["omega"] / row["epsilon"]
    check_close(row, "pred_T", T)
    raw = T * math.exp(-(row["r"] ** row["d"]) * row["retention"] / math.sqrt(row["d"]))
    check_close(row, "pred_failure_bound_raw", raw)
    check_close(row, "pred_failure_bound", min(1.0, max(0.0, raw)))
    check_close(row, "pred_bound_vacuous", raw >= 1.0)
    cost = 2.0 ** row["omega"] / row["epsilon"] * math.sqrt(row["d"]) * row["tau"] ** row["d"]
    check_close(row, "pred_query_cost", cost)
    check_close(row, "pred_query_cost_delta", cost * row["retention"])
    b, pairs = row["pair_probability"], n * (n - 1)
    check_close(row, "pred_degree_mean", (n - 1) * b)
    check_close(row, "pred_edge_count", pairs * b)
    sd = math.sqrt(pairs * b * (1.0 - b))
    check_close(row, "pred_edge_band_lo", pairs * b - BAND_SIGMAS * sd)
    check_close(row, "pred_edge_band_hi", pairs * b + BAND_SIGMAS * sd)
    check_close(row, "edge_in_binomial_band", abs(row["edge_count"] - pairs * b) <= BAND_SIGMAS * sd)
    check_close(row, "edge_in_coarse_band", 0.25 * pairs * b <= row["edge_count"] <= 0.75 * pairs * b)
    if row["delta1"] is not None:
        expect = row["delta2"] + (row["delta1"] - row["delta2"]) * row["vol_c_exact"]
        check_close(row, "pair_probability", expect)


def _audit_concentration(row):
    n, b = row["n"], row["pair_probability"]
    check_close(row, "pred_degree_mean", (n - 1) * b)
    check_close(row, "pred_edge_count", n * (n - 1) * b)
    check_close(row, "degree_binomial_sd", math.sqrt((n - 1) * b * (1.0 - b)))
    check_close(row, "edge_binomial_sd", math.sqrt(n * (n - 1) * b * (1.0 - b)))
    check_close(row, "degree_outside_freq", row["degree_outside"] / row["degree_observations"])
    check_close(row, "edge_outside_freq", row["edge_outside"] / row["graph_seeds"])
    if row["vacuous"]:
        check_close(row, "degree_cheb_bound", None)
        check_close(row, "edge_cheb_bound", None)
    else:
        check_close(row, "degree_cheb_bound", 4.0 / ((n - 1) * b))
        check_close(row, "edge_cheb_bound", 4.0 / (n * (n - 1) * b))
    check_close(row, "degree_cheb_pass", _cheb_pass(row["degree_outside"], row["degree_observations"], row["degree_cheb_bound"]))
    check_close(row, "edge_cheb_pass", _cheb_pass(row["edge_outside"], row["graph_seeds"], row["edge_cheb_bound"]))


RUNNERS = {
    "progress": run_progress_trial,
    "query-sweep": run_query_sweep,
    "twosided": run_twosided_sweep,
    "concentration": run_concentration_suite,
}


def run_suites(cfg: ExperimentConfig, threads=None) -> list[ExperimentReport]:
    return [RUNNERS[suite](cfg, threads=threads) for suite in cfg.suites]
