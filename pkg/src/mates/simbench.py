"""Scenario generators and a Monte Carlo size/power harness.

The catalog covers five null settings (matched marginals for both groups)
and five alternative families crossed with four difference patterns:

* null-a .. null-e: standard normal, vector-level Gaussian mixture,
  generalized normal (shape 3), Student t (df 15), gamma (shape 2, rate 2).
* alt-I .. alt-V: t vs moment-matched normal, scalar Gaussian mixture vs
  matched normal, generalized normal vs matched normal, lognormal vs
  moment-matched gamma, and standardized t5 vs standardized t with a
  different df.
* patterns: (i) every dimension differs, (ii) the first ceil(d/3)
  dimensions differ, (iii) every dimension differs and the second group is
  correlated through the symmetric square root of rho^|i-j|, (iv) the
  difference strength is redrawn per dimension each replication.

Default parameter values exist for d in {200, 500, 1000}; other dimensions
require explicit parameter overrides. Within a replication the draw order
is fixed: per-dimension parameters first (pattern iv), then the X block,
then the Y block, then the correlation transform (pattern iii).

Experiments are embarrassingly parallel: replication r uses the RNG stream
keyed by (seed, r), so results are bit-identical for any thread count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .dissim import SampleMatrix
from .errors import DataError, DegenerateStatisticError
from .graphs import ViewSpec, default_view_specs
from .inference import mates_test

__all__ = [
    "ScenarioSpec",
    "ExperimentResult",
    "NULL_SCENARIOS",
    "ALT_SCENARIOS",
    "PATTERNS",
    "CATALOG_DIMS",
    "catalog_entries",
    "default_params",
    "make_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario_config",
    "save_scenario_config",
    "generate",
    "run_experiment",
    "EXPERIMENT_CSV_HEADER",
]

NULL_SCENARIOS = ("null-a", "null-b", "null-c", "null-d", "null-e")
ALT_SCENARIOS = ("alt-I", "alt-II", "alt-III", "alt-IV", "alt-V")
PATTERNS = ("i", "ii", "iii", "iv")
CATALOG_DIMS = (200, 500, 1000)

# Fraction of degenerate replications tolerated before the experiment aborts.
MAX_FAILURE_RATE = 1e-3

# Per-(scenario, pattern) defaults for the cataloged dimensions.
_NULL_PARAMS = {
    "null-a": {},
    "null-b": {"mix_mean": 0.5},
    "null-c": {"beta": 3.0},
    "null-d": {"df": 15.0},
    "null-e": {"shape": 2.0, "rate": 2.0},
}

_ALT_PARAMS = {
    ("alt-I", "i"): {200: {"df": 15.0}, 500: {"df": 25.0}, 1000: {"df": 35.0}},
    ("alt-I", "ii"): {200: {"df": 5.0}, 500: {"df": 7.5}, 1000: {"df": 10.0}},
    ("alt-I", "iii"): {
        200: {"df": 15.0, "rho": 0.1},
        500: {"df": 25.0, "rho": 0.1},
        1000: {"df": 35.0, "rho": 0.1},
    },
    ("alt-I", "iv"): {
        200: {"df_low": 5.0, "df_high": 40.0},
        500: {"df_low": 8.0, "df_high": 60.0},
        1000: {"df_low": 15.0, "df_high": 80.0},
    },
    ("alt-II", "i"): {200: {"mix_mean": 0.78}, 500: {"mix_mean": 0.65}, 1000: {"mix_mean": 0.6}},
    ("alt-II", "ii"): {200: {"mix_mean": 1.15}, 500: {"mix_mean": 0.95}, 1000: {"mix_mean": 0.85}},
    ("alt-II", "iii"): {
        200: {"mix_mean": 0.8, "rho": 0.1},
        500: {"mix_mean": 0.66, "rho": 0.1},
        1000: {"mix_mean": 0.6, "rho": 0.1},
    },
    ("alt-II", "iv"): {
        200: {"mix_mean_low": 0.0, "mix_mean_high": 1.18},
        500: {"mix_mean_low": 0.0, "mix_mean_high": 1.0},
        1000: {"mix_mean_low": 0.0, "mix_mean_high": 0.9},
    },
    ("alt-III", "i"): {200: {"beta": 2.4}, 500: {"beta": 2.2}, 1000: {"beta": 2.15}},
    ("alt-III", "ii"): {200: {"beta": 3.2}, 500: {"beta": 2.7}, 1000: {"beta": 2.5}},
    ("alt-III", "iii"): {
        200: {"beta": 2.4, "rho": 0.1},
        500: {"beta": 2.2, "rho": 0.1},
        1000: {"beta": 2.15, "rho": 0.1},
    },
    ("alt-III", "iv"): {
        200: {"beta_low": 2.0, "beta_high": 2.9},
        500: {"beta_low": 2.0, "beta_high": 2.5},
        1000: {"beta_low": 2.0, "beta_high": 2.3},
    },
    ("alt-IV", "i"): {200: {"sigma": 0.24}, 500: {"sigma": 0.19}, 1000: {"sigma": 0.14}},
    ("alt-IV", "ii"): {200: {"sigma": 0.5}, 500: {"sigma": 0.42}, 1000: {"sigma": 0.3}},
    ("alt-IV", "iii"): {
        200: {"sigma": 0.3, "rho": 0.005},
        500: {"sigma": 0.23, "rho": 0.005},
        1000: {"sigma": 0.19, "rho": 0.005},
    },
    ("alt-IV", "iv"): {
        200: {"sigma_low": 0.01, "sigma_high": 0.45},
        500: {"sigma_low": 0.01, "sigma_high": 0.32},
        1000: {"sigma_low": 0.01, "sigma_high": 0.22},
    },
    ("alt-V", "i"): {
        200: {"df_x": 5.0, "df_y": 6.8},
        500: {"df_x": 5.0, "df_y": 6.2},
        1000: {"df_x": 5.0, "df_y": 5.8},
    },
    ("alt-V", "ii"): {
        200: {"df_x": 5.0, "df_y": 100.0},
        500: {"df_x": 5.0, "df_y": 13.0},
        1000: {"df_x": 5.0, "df_y": 9.0},
    },
    ("alt-V", "iii"): {
        200: {"df_x": 5.0, "df_y": 6.8, "rho": 0.1},
        500: {"df_x": 5.0, "df_y": 6.1, "rho": 0.1},
        1000: {"df_x": 5.0, "df_y": 5.8, "rho": 0.1},
    },
    ("alt-V", "iv"): {
        200: {"df_x": 5.0, "df_y_low": 5.0, "df_y_high": 9.0},
        500: {"df_x": 5.0, "df_y_low": 5.0, "df_y_high": 7.4},
        1000: {"df_x": 5.0, "df_y_low": 5.0, "df_y_high": 6.7},
    },
}


@dataclass(frozen=True)
class ScenarioSpec:
    """One fully parameterized generator from the catalog."""

    scenario: str
    pattern: Optional[str]
    d: int
    m: int
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in NULL_SCENARIOS + ALT_SCENARIOS:
            raise DataError(f"unknown scenario {self.scenario!r}")
        if self.scenario in NULL_SCENARIOS:
            if self.pattern is not None:
                raise DataError(f"null scenario {self.scenario} takes no pattern")
        elif self.pattern not in PATTERNS:
            raise DataError(f"alternative {self.scenario} needs a pattern from {PATTERNS}")
        if self.d < 1 or self.m < 2 or self.n < 2:
            raise DataError(f"invalid sizes d={self.d}, m={self.m}, n={self.n}")

    @property
    def label(self) -> str:
        return self.scenario if self.pattern is None else f"{self.scenario}({self.pattern})"

    @property
    def is_null(self) -> bool:
        return self.scenario in NULL_SCENARIOS


def default_params(scenario: str, pattern: Optional[str], d: int) -> dict:
    """Catalog defaults for one cell; raises if the cell is not cataloged."""
    if scenario in NULL_SCENARIOS:
        return dict(_NULL_PARAMS[scenario])
    try:
        return dict(_ALT_PARAMS[(scenario, pattern)][d])
    except KeyError:
        raise DataError(
            f"no default parameters for {scenario}({pattern}) at d={d}; "
            f"cataloged dimensions are {CATALOG_DIMS}"
        ) from None


def catalog_entries() -> list[tuple[str, Optional[str], int]]:
    """Every (scenario, pattern, d) cell with catalog defaults."""
    cells: list[tuple[str, Optional[str], int]] = []
    for scenario in NULL_SCENARIOS:
        for d in CATALOG_DIMS:
            cells.append((scenario, None, d))
    for scenario in ALT_SCENARIOS:
        for pattern in PATTERNS:
            for d in CATALOG_DIMS:
                cells.append((scenario, pattern, d))
    return cells


def make_scenario(
    scenario: str,
    pattern: Optional[str] = None,
    d: int = 200,
    m: int = 50,
    n: int = 50,
    **overrides,
) -> ScenarioSpec:
    """Build a spec from catalog defaults plus type-checked overrides."""
    defaults_known = scenario in NULL_SCENARIOS or d in CATALOG_DIMS
    if defaults_known:
        params = default_params(scenario, pattern, d)
    elif not overrides:
        raise DataError(
            f"d={d} is not cataloged for {scenario}; pass explicit parameter overrides"
        )
    else:
        params = {}
    for key, value in overrides.items():
        if defaults_known and key not in params:
            raise DataError(
                f"unknown parameter {key!r} for {scenario}"
                f"{'' if pattern is None else '(' + pattern + ')'}; expected {sorted(params)}"
            )
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise DataError(f"parameter {key!r} must be numeric, got {value!r}")
        params[key] = float(value)
    return ScenarioSpec(scenario=scenario, pattern=pattern, d=d, m=m, n=n, params=params)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "scenario": spec.scenario,
        "pattern": spec.pattern,
        "d": spec.d,
        "m": spec.m,
        "n": spec.n,
        "params": dict(spec.params),
    }


def scenario_from_dict(data: dict) -> ScenarioSpec:
    known = {"scenario", "pattern", "d", "m", "n", "params"}
    extra = set(data) - known
    if extra:
        raise DataError(f"unknown scenario-config keys {sorted(extra)}")
    if "scenario" not in data:
        raise DataError("scenario config needs a 'scenario' key")
    return make_scenario(
        data["scenario"],
        pattern=data.get("pattern"),
        d=int(data.get("d", 200)),
        m=int(data.get("m", 50)),
        n=int(data.get("n", 50)),
        **data.get("params", {}),
    )


def save_scenario_config(spec: ScenarioSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(scenario_to_dict(spec), handle, indent=2)
        handle.write("\n")


def load_scenario_config(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as handle:
        return scenario_from_dict(json.load(handle))


# ---------------------------------------------------------------------------
# samplers


def sample_t_standardized(rng: np.random.Generator, df: float, size) -> np.ndarray:
    """Student t scaled to unit variance; needs df > 2."""
    if df <= 2:
        raise DataError(f"t standardization needs df > 2, got df={df}")
    return rng.standard_t(df, size=size) / math.sqrt(df / (df - 2.0))


def sample_normal_matched_t(rng: np.random.Generator, df: float, size) -> np.ndarray:
    """Normal with the mean and variance of a t with the given df."""
    if df <= 2:
        raise DataError(f"matching a t distribution needs df > 2, got df={df}")
    return rng.standard_normal(size=size) * math.sqrt(df / (df - 2.0))


def sample_scalar_mixture(rng: np.random.Generator, mix_mean, size) -> np.ndarray:
    """Per-entry two-component mixture N(+-mix_mean, 1) with equal weights."""
    signs = rng.choice([-1.0, 1.0], size=size)
    return signs * mix_mean + rng.standard_normal(size=size)


def sample_generalized_normal(rng: np.random.Generator, beta, size, alpha: float = 1.0) -> np.ndarray:
    """Generalized normal with density proportional to exp(-(|x|/alpha)^beta).

    Sampled exactly as sign * alpha * G^(1/beta) with G ~ Gamma(1/beta, 1).
    """
    beta = np.asarray(beta, dtype=float)
    if (beta <= 0).any():
        raise DataError("generalized normal shape must be positive")
    g = rng.gamma(shape=np.broadcast_to(1.0 / beta, size), scale=1.0, size=size)
    signs = rng.choice([-1.0, 1.0], size=size)
    return signs * alpha * g ** (1.0 / beta)


def generalized_normal_variance(beta, alpha: float = 1.0):
    beta = np.asarray(beta, dtype=float)
    from scipy.special import gamma as gamma_fn

    return alpha**2 * gamma_fn(3.0 / beta) / gamma_fn(1.0 / beta)


def sample_gamma_matched_lognormal(rng: np.random.Generator, sigma, size) -> np.ndarray:
    """Gamma with the mean and variance of a lognormal(0, sigma)."""
    sigma = np.asarray(sigma, dtype=float)
    es = np.exp(sigma**2)
    shape = 1.0 / (es - 1.0)
    scale = (es - 1.0) * np.exp(sigma**2 / 2.0)
    return rng.gamma(shape=np.broadcast_to(shape, size), scale=np.broadcast_to(scale, size))


@lru_cache(maxsize=8)
def _correlation_sqrt(d: int, rho: float) -> np.ndarray:
    """Symmetric square root of the correlation matrix rho^|i-j|."""
    idx = np.arange(d)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    eigvals, eigvecs = np.linalg.eigh(corr)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def _partial_split(d: int) -> int:
    return math.ceil(d / 3)


def _require(params: dict, *keys: str) -> list[float]:
    missing = [k for k in keys if k not in params]
    if missing:
        raise DataError(f"missing scenario parameters {missing}")
    return [params[k] for k in keys]


def generate(spec: ScenarioSpec, seed) -> SampleMatrix:
    """Draw one pooled sample; rows 0..m-1 are X, the rest Y.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    rng = np.random.default_rng(seed)
    m, n, d = spec.m, spec.n, spec.d
    p = spec.params
    scenario, pattern = spec.scenario, spec.pattern

    if scenario == "null-a":
        x = rng.standard_normal((m, d))
        y = rng.standard_normal((n, d))
    elif scenario == "null-b":
        (mu,) = _require(p, "mix_mean")
        x = rng.choice([-1.0, 1.0], size=(m, 1)) * mu + rng.standard_normal((m, d))
        y = rng.choice([-1.0, 1.0], size=(n, 1)) * mu + rng.standard_normal((n, d))
    elif scenario == "null-c":
        (beta,) = _require(p, "beta")
        x = sample_generalized_normal(rng, beta, (m, d))
        y = sample_generalized_normal(rng, beta, (n, d))
    elif scenario == "null-d":
        (df,) = _require(p, "df")
        x = rng.standard_t(df, size=(m, d))
        y = rng.standard_t(df, size=(n, d))
    elif scenario == "null-e":
        shape, rate = _require(p, "shape", "rate")
        x = rng.gamma(shape=shape, scale=1.0 / rate, size=(m, d))
        y = rng.gamma(shape=shape, scale=1.0 / rate, size=(n, d))
    elif scenario == "alt-I":
        x, y = _generate_alt_t_vs_normal(rng, pattern, m, n, d, p)
    elif scenario == "alt-II":
        x, y = _generate_alt_mixture_vs_normal(rng, pattern, m, n, d, p)
    elif scenario == "alt-III":
        x, y = _generate_alt_gennorm_vs_normal(rng, pattern, m, n, d, p)
    elif scenario == "alt-IV":
        x, y = _generate_alt_lognormal_vs_gamma(rng, pattern, m, n, d, p)
    elif scenario == "alt-V":
        x, y = _generate_alt_t_vs_t(rng, pattern, m, n, d, p)
    else:  # pragma: no cover - guarded by ScenarioSpec
        raise DataError(f"unknown scenario {scenario!r}")

    return SampleMatrix(values=np.vstack([x, y]), m=m, n=n)


def _generate_alt_t_vs_normal(rng, pattern, m, n, d, p):
    if pattern == "iv":
        df_low, df_high = _require(p, "df_low", "df_high")
        df = rng.uniform(df_low, df_high, size=d)
    else:
        (df,) = _require(p, "df")
        df = np.full(d, float(df))
    x = rng.standard_t(df, size=(m, d))
    scale = np.sqrt(df / (df - 2.0))
    if pattern == "ii":
        split = _partial_split(d)
        y = np.empty((n, d))
        y[:, :split] = rng.standard_normal((n, split)) * scale[:split]
        y[:, split:] = rng.standard_t(df[split:], size=(n, d - split))
    else:
        y = rng.standard_normal((n, d)) * scale
        if pattern == "iii":
            (rho,) = _require(p, "rho")
            y = y @ _correlation_sqrt(d, float(rho))
    return x, y


def _generate_alt_mixture_vs_normal(rng, pattern, m, n, d, p):
    if pattern == "iv":
        lo, hi = _require(p, "mix_mean_low", "mix_mean_high")
        mu = rng.uniform(lo, hi, size=d)
    else:
        (mu_scalar,) = _require(p, "mix_mean")
        mu = np.full(d, float(mu_scalar))
    x = sample_scalar_mixture(rng, mu, (m, d))
    scale = np.sqrt(1.0 + mu**2)
    if pattern == "ii":
        split = _partial_split(d)
        y = np.empty((n, d))
        y[:, :split] = rng.standard_normal((n, split)) * scale[:split]
        y[:, split:] = sample_scalar_mixture(rng, mu[split:], (n, d - split))
    else:
        y = rng.standard_normal((n, d)) * scale
        if pattern == "iii":
            (rho,) = _require(p, "rho")
            y = y @ _correlation_sqrt(d, float(rho))
    return x, y


def _generate_alt_gennorm_vs_normal(rng, pattern, m, n, d, p):
    if pattern == "iv":
        lo, hi = _require(p, "beta_low", "beta_high")
        beta = rng.uniform(lo, hi, size=d)
    else:
        (beta_scalar,) = _require(p, "beta")
        beta = np.full(d, float(beta_scalar))
    x = sample_generalized_normal(rng, beta, (m, d))
    scale = np.sqrt(generalized_normal_variance(beta))
    if pattern == "ii":
        split = _partial_split(d)
        y = np.empty((n, d))
        y[:, :split] = rng.standard_normal((n, split)) * scale[:split]
        y[:, split:] = sample_generalized_normal(rng, beta[split:], (n, d - split))
    else:
        y = rng.standard_normal((n, d)) * scale
        if pattern == "iii":
            (rho,) = _require(p, "rho")
            y = y @ _correlation_sqrt(d, float(rho))
    return x, y


def _generate_alt_lognormal_vs_gamma(rng, pattern, m, n, d, p):
    if pattern == "iv":
        lo, hi = _require(p, "sigma_low", "sigma_high")
        sigma = rng.uniform(lo, hi, size=d)
    else:
        (sigma_scalar,) = _require(p, "sigma")
        sigma = np.full(d, float(sigma_scalar))
    x = rng.lognormal(mean=0.0, sigma=np.broadcast_to(sigma, (m, d)))
    if pattern == "ii":
        split = _partial_split(d)
        y = np.empty((n, d))
        y[:, :split] = sample_gamma_matched_lognormal(rng, sigma[:split], (n, split))
        y[:, split:] = rng.lognormal(mean=0.0, sigma=np.broadcast_to(sigma[split:], (n, d - split)))
    else:
        y = sample_gamma_matched_lognormal(rng, sigma, (n, d))
        if pattern == "iii":
            (rho,) = _require(p, "rho")
            y = y @ _correlation_sqrt(d, float(rho))
    return x, y


def _generate_alt_t_vs_t(rng, pattern, m, n, d, p):
    (df_x,) = _require(p, "df_x")
    if pattern == "iv":
        lo, hi = _require(p, "df_y_low", "df_y_high")
        df_y = rng.uniform(lo, hi, size=d)
    else:
        (df_y_scalar,) = _require(p, "df_y")
        df_y = np.full(d, float(df_y_scalar))
    x = sample_t_standardized(rng, df_x, (m, d))
    scale_y = np.sqrt(df_y / (df_y - 2.0))
    if pattern == "ii":
        split = _partial_split(d)
        y = np.empty((n, d))
        y[:, :split] = rng.standard_t(df_y[:split], size=(n, split)) / scale_y[:split]
        y[:, split:] = sample_t_standardized(rng, df_x, (n, d - split))
    else:
        y = rng.standard_t(df_y, size=(n, d)) / scale_y
        if pattern == "iii":
            (rho,) = _require(p, "rho")
            y = y @ _correlation_sqrt(d, float(rho))
    return x, y


# ---------------------------------------------------------------------------
# experiment runner


EXPERIMENT_CSV_HEADER = "scenario,d,m,n,reps,alpha,rejection_rate,failures,seed"


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregated outcome of one Monte Carlo experiment."""

    scenario: ScenarioSpec
    replications: int
    alpha: float
    rejection_rate: float
    t_stats: np.ndarray
    p_values: np.ndarray
    failures: int
    seed: int
    wall_time: float

    def csv_row(self) -> str:
        spec = self.scenario
        return (
            f"{spec.label},{spec.d},{spec.m},{spec.n},{self.replications},"
            f"{self.alpha!r},{self.rejection_rate!r},{self.failures},{self.seed}"
        )


def _one_replication(args) -> tuple[int, Optional[tuple[float, float]]]:
    spec, rep, seed, view_specs, method, permutations = args
    sample = generate(spec, np.random.SeedSequence([seed, rep]))
    try:
        result = mates_test(
            sample,
            view_specs=view_specs,
            method=method,
            permutations=permutations,
            seed=seed + rep if method != "asymptotic" else 0,
            diagnostics=False,
        )
    except DegenerateStatisticError:
        return rep, None
    p = result.p_permutation if method == "permutation" else result.p_asymptotic
    return rep, (result.t_stat, p)


def run_experiment(
    spec: ScenarioSpec,
    replications: int,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int = 1,
    view_specs: Sequence[ViewSpec] | None = None,
    method: str = "asymptotic",
    permutations: int = 1000,
    progress=None,
) -> ExperimentResult:
    """Monte Carlo rejection rate of the test under one scenario.

    Replication r generates a fresh sample from the stream (seed, r), runs
    the default pipeline (or ``view_specs``) and records (T, p). Degenerate
    replications are counted and excluded; more than 0.1% of them aborts
    the experiment. ``progress`` is an optional callable taking the number
    of completed replications.
    """
    if replications < 1:
        raise DataError(f"need at least one replication, got {replications}")
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    specs = list(view_specs) if view_specs is not None else default_view_specs()

    start = time.perf_counter()
    args = [(spec, rep, seed, specs, method, permutations) for rep in range(replications)]
    outcomes: list[Optional[tuple[float, float]]] = [None] * replications
    if threads <= 1:
        for i, a in enumerate(args):
            rep, outcome = _one_replication(a)
            outcomes[rep] = outcome
            if progress is not None:
                progress(i + 1)
    else:
        done = 0
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, replications // (8 * threads))
            for rep, outcome in pool.map(_one_replication, args, chunksize=chunk):
                outcomes[rep] = outcome
                done += 1
                if progress is not None:
                    progress(done)
    wall = time.perf_counter() - start

    records = [o for o in outcomes if o is not None]
    failures = replications - len(records)
    if failures > MAX_FAILURE_RATE * replications:
        raise DegenerateStatisticError(
            f"{failures}/{replications} replications had a degenerate statistic"
        )
    t_stats = np.array([t for t, _ in records])
    p_values = np.array([p for _, p in records])
    rejection_rate = float((p_values <= alpha).sum() / len(records))
    return ExperimentResult(
        scenario=spec,
        replications=replications,
        alpha=alpha,
        rejection_rate=rejection_rate,
        t_stats=t_stats,
        p_values=p_values,
        failures=failures,
        seed=seed,
        wall_time=wall,
    )
