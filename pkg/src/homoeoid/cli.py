"""Command-line front end: seeded experiments with CSV/JSON artifacts.

Each experiment maps a :class:`RunConfig` to a fixed-schema table plus a
metrics dictionary and a pass flag, written as ``results.csv`` and
``summary.json`` under ``<out>/<experiment>-seed<seed>/``.  CSV bodies are a
pure function of the configuration — floats are serialised with ``repr`` and
all Monte-Carlo reductions are order-fixed — so re-running a configuration
(under any ``HOMOEOID_THREADS`` setting) reproduces the bytes exactly;
timestamps and the worker count live only in the summary.  Exit codes: 0 all
thresholds met, 1 a threshold was violated, 2 the configuration was invalid
or artifacts could not be written.

``report`` merges the summaries under an output directory into a single
``report.json`` (ordered by experiment then seed, corrupt entries skipped
with a warning count) and one ``report-<experiment>.csv`` per experiment
with a leading seed column, so external plotting needs no per-run parsing.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import geometry as geo
from .fibres import trace_fibre
from .identities import contact_jacobian_check, identity_suite, nondeg_bounds_scan
from .knapp import g_lp_norm, knapp_exponent, sample_tangency_set, shell_partial_sums
from .maximal import bump_mixture_family, l2_growth_scan
from .mc import derive_stream, fit_power_law, rng_stream, worker_count
from .multiplicity import multiplicity_scan
from .volumes import (
    banded_intersection_scan,
    intersection_volume,
    low_jacobian_cluster,
    pair_volume_bound,
    seeded_cluster_configs,
    volume_bound_scan,
)

__all__ = ["RunConfig", "RunResult", "run_experiment", "emit_report", "main"]


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Inputs an experiment is a deterministic function of."""

    experiment: str
    n: int = 3
    seed: int = 0
    deltas: Optional[tuple] = None
    samples: Optional[int] = None
    p: float = 2.0
    out: str = "runs"
    overrides: tuple = ()

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n < 2:
            raise ValueError("dimension must be >= 2")
        if self.deltas is not None:
            ds = tuple(float(d) for d in self.deltas)
            if any(b >= a for a, b in zip(ds, ds[1:])):
                raise ValueError("delta grid must be strictly decreasing")
            object.__setattr__(self, "deltas", ds)
        if self.samples is not None and self.samples <= 0:
            raise ValueError("samples must be positive")
        object.__setattr__(self, "overrides", tuple(self.overrides))
        dict(self.overrides)


@dataclasses.dataclass(frozen=True)
class RunResult:
    experiment: str
    columns: tuple
    rows: tuple
    metrics: dict
    passed: bool


class _Overrides:
    """Typed access to ``key=value`` overrides; unknown keys are an error."""

    def __init__(self, config: RunConfig):
        self._left = dict(config.overrides)

    def pull(self, key: str, default):
        if key not in self._left:
            return default
        raw = self._left.pop(key)
        kind = type(default) if default is not None else float
        return kind(raw) if kind in (int, float) else float(raw)

    def done(self) -> None:
        if self._left:
            raise ValueError(f"unknown overrides: {sorted(self._left)}")


def _deltas(config: RunConfig, default: Sequence[float]) -> tuple:
    return config.deltas if config.deltas is not None else tuple(default)


def _drift(values: Sequence[float]) -> float:
    lo, hi = min(values), max(values)
    return math.inf if lo <= 0 else hi / lo


# --------------------------------------------------------------------------
# experiments


def _exp_identities(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    rational_trials = ov.pull("rational_trials", 50)
    ov.done()
    trials = config.samples or 1000
    rows = []
    worst = 0.0
    for report in identity_suite(config.n, trials, seed=config.seed):
        worst = max(worst, report.max_relative_residual)
        rows.append(
            {
                "mode": "float",
                "name": report.name,
                "trials": report.trials,
                "max_relative_residual": report.max_relative_residual,
                "threshold": report.threshold,
            }
        )
    passed = worst < 1e-9
    worst_rational = None
    if config.n <= 4:
        worst_rational = 0.0
        for report in identity_suite(config.n, min(trials, rational_trials), seed=config.seed, rational=True):
            worst_rational = max(worst_rational, report.max_relative_residual)
            rows.append(
                {
                    "mode": "rational",
                    "name": report.name,
                    "trials": report.trials,
                    "max_relative_residual": report.max_relative_residual,
                    "threshold": 0.0,
                }
            )
        passed = passed and worst_rational == 0.0
    metrics = {"max_relative_residual": worst, "rational_residual": worst_rational}
    columns = ("mode", "name", "trials", "max_relative_residual", "threshold")
    return RunResult(config.experiment, columns, tuple(rows), metrics, passed)


def _exp_nondeg(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    generic = ov.pull("generic_per_n", 20)
    bound_trials = ov.pull("bound_trials", 300)
    ov.done()
    n_list = tuple(range(2, max(config.n, 3) + 1))
    report = contact_jacobian_check(n_list=n_list, seed=config.seed, generic_per_n=generic)
    rows = []
    min_abs_det = math.inf
    for n in n_list:
        d = report.details[n]
        min_abs_det = min(min_abs_det, abs(d["det_at_three_halves"]))
        rows.append(
            {
                "n": n,
                "isotropic_measured": d["isotropic_measured"],
                "isotropic_closed_form": d["isotropic_closed_form"],
                "isotropic_spread": d["isotropic_spread"],
                "det_at_three_halves": d["det_at_three_halves"],
                "alternate_ratio": d["alternate_ratio"],
                "variant_diagonal_max_gap": d["variant_diagonal_max_gap"],
            }
        )
    scan = nondeg_bounds_scan(config.n, trials=bound_trials, seed=config.seed)
    metrics = {
        "max_relative_residual": report.max_relative_residual,
        "min_abs_det_at_three_halves": min_abs_det,
        "min_scaled_determinant": scan.min_scaled_determinant,
        "max_scaled_inverse_norm": scan.max_scaled_inverse_norm,
    }
    passed = (
        report.max_relative_residual <= report.threshold
        and min_abs_det > 0.01
        and scan.min_scaled_determinant > 0.0
    )
    columns = tuple(rows[0])
    return RunResult(config.experiment, columns, tuple(rows), metrics, passed)


def _exp_volume_bound(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    axis = ov.pull("axis", 0)
    pairs = ov.pull("pairs", 10)
    ov.done()
    deltas = _deltas(config, (2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9))
    ts = (2.0**-4, 2.0**-3, 2.0**-2, 2.0**-1, 1.0)
    m = config.samples or 20_000
    raw = volume_bound_scan(
        axis=axis, deltas=deltas, ts=ts, pairs=pairs, m=m, seed=config.seed, n=config.n
    )
    rows = [
        {
            "delta": r["delta"],
            "t": r["t"],
            "seed": r["trial"],
            "measured": r["measured"],
            "std_error": r["std_error"],
            "bound": r["bound"],
            "ratio": r["ratio"],
        }
        for r in raw
    ]
    worst = {d: max(r["ratio"] for r in rows if r["delta"] == d) for d in deltas}
    metrics = {"worst_ratio_per_delta": worst, "drift": _drift(list(worst.values()))}
    columns = ("delta", "t", "seed", "measured", "std_error", "bound", "ratio")
    return RunResult(config.experiment, columns, tuple(rows), metrics, metrics["drift"] <= 4.0)


def _exp_bands(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    axis = ov.pull("axis", 0)
    t_lo = ov.pull("t_lo", 0.5)
    t_hi = ov.pull("t_hi", 1.0)
    ov.done()
    deltas = _deltas(config, (2.0**-5, 2.0**-6, 2.0**-7))
    m = config.samples or (1 << 16)
    rows = []
    worst_z = 0.0
    per_delta_max = {}
    for delta in deltas:
        for t in (t_lo, t_hi):
            rng = rng_stream(config.seed, derive_stream("bands-radii", delta, t))
            radii = 0.8 + 0.5 * rng.random(config.n)
            band = banded_intersection_scan(
                axis=axis, t=t, radii=radii, delta=delta, m=m, seed=config.seed
            )
            envelope = delta * delta / t
            parts = [("tang", band.tang)] + [
                (f"band_{i}", est) for i, est in enumerate(band.bands)
            ] + [("trans", band.trans), ("total", band.total)]
            for name, est in parts:
                ratio = est.value / envelope
                rows.append(
                    {
                        "delta": delta,
                        "t": t,
                        "part": name,
                        "value": est.value,
                        "std_error": est.std_error,
                        "bound": envelope,
                        "ratio": ratio,
                    }
                )
                if name != "total":
                    per_delta_max[delta] = max(per_delta_max.get(delta, 0.0), ratio)
            combined = math.hypot(band.parts_std_error, band.total.std_error)
            gap = abs(band.parts_sum - band.total.value)
            worst_z = max(worst_z, gap / combined if combined > 0 else 0.0)
    metrics = {
        "worst_partition_z": worst_z,
        "max_part_ratio_per_delta": per_delta_max,
        "drift": _drift(list(per_delta_max.values())),
    }
    passed = worst_z <= 3.0 and metrics["drift"] <= 4.0
    columns = ("delta", "t", "part", "value", "std_error", "bound", "ratio")
    return RunResult(config.experiment, columns, tuple(rows), metrics, passed)


def _exp_clusters(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    configs = ov.pull("configs", 20)
    delta = ov.pull("delta", 2.0**-9)
    ov.done()
    if config.n != 3:
        raise ValueError("the clusters experiment is specific to n=3")
    m = config.samples or (1 << 20)
    rows = []
    max_count = 0
    constants = {}
    for factor in (1.0, 0.5):
        worst = 0.0
        for i, (t, radii) in enumerate(seeded_cluster_configs(config.seed, configs)):
            rho = factor * t / 16.0
            report = low_jacobian_cluster(
                axis=0,
                t=t,
                radii=radii,
                rho=rho,
                delta=delta,
                m=m,
                seed=derive_stream("cluster-run", config.seed, i),
            )
            max_diam = max(report.diameters) if report.diameters else 0.0
            max_count = max(max_count, report.cluster_count)
            worst = max(worst, max_diam * t / rho)
            rows.append(
                {
                    "config": i,
                    "t": t,
                    "rho": rho,
                    "accepted": report.accepted,
                    "cluster_count": report.cluster_count,
                    "max_diameter": max_diam,
                    "scaled_diameter": max_diam * t / rho,
                }
            )
        constants[factor] = worst
    if min(constants.values()) > 0:
        halving = max(constants.values()) / min(constants.values())
    else:
        halving = 1.0 if max(constants.values()) == 0 else math.inf
    metrics = {
        "max_cluster_count": max_count,
        "diameter_constant": constants[1.0],
        "halved_constant": constants[0.5],
        "halving_ratio": halving,
    }
    passed = max_count <= 16 and halving <= 2.0
    columns = (
        "config",
        "t",
        "rho",
        "accepted",
        "cluster_count",
        "max_diameter",
        "scaled_diameter",
    )
    return RunResult(config.experiment, columns, tuple(rows), metrics, passed)


def _fibre_config(seed: int, trial: int, n: int):
    """A seeded level-set configuration whose fibre is non-empty."""

    for attempt in range(25):
        rng = rng_stream(seed, derive_stream("fibre-config", trial, attempt))
        x = rng.uniform(-0.2, 0.2, n)
        radii = rng.uniform(0.9, 1.35, n)
        levels = rng.uniform(-0.05, 0.05, 2)
        try:
            return trace_fibre(x, radii, levels, step=0.01, seed=trial)
        except ValueError:
            continue
    raise ValueError("could not find a non-empty fibre configuration")


def _exp_fibre(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    trials = ov.pull("trials", 12)
    rho0 = ov.pull("rho", 0.2)
    ov.done()
    if config.n != 3:
        raise ValueError("fibre tracing is implemented for dimension 3")
    calibration = trace_fibre(np.zeros(3), np.array([1.2, 1.0, 1.0]), np.zeros(2), step=0.01, seed=3)
    rows = []
    ratios = []
    for trial in range(trials):
        trace = _fibre_config(config.seed, trial, config.n)
        centre = trace.points[trace.points.shape[0] // 3]
        for rho in (rho0, rho0 / 2.0):
            length = trace.length_in_ball(centre, rho)
            ratio = length / rho
            ratios.append(ratio)
            rows.append({"seed": trial, "rho": rho, "length": length, "ratio": ratio})
    metrics = {
        "calibration_length": calibration.length,
        "ratio_drift": _drift(ratios),
        "max_ratio": max(ratios),
    }
    passed = abs(calibration.length - 2.0 * math.pi) <= 1e-6 and metrics["ratio_drift"] <= 4.0
    columns = ("seed", "rho", "length", "ratio")
    return RunResult(config.experiment, columns, tuple(rows), metrics, passed)


def _exp_multiplicity(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    axis = ov.pull("axis", 0)
    trials = ov.pull("trials", 3)
    ov.done()
    deltas = _deltas(config, (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8))
    m = config.samples or 4096
    scan = multiplicity_scan(axis, deltas, trials=trials, m=m, seed=config.seed, n=config.n)
    columns = ("delta", "trial_seed", "N", "norm", "std_error", "bound", "C", "refined")
    metrics = {
        "worst_refined": scan.worst,
        "worst_plain": scan.worst_plain,
        "drift": scan.drift,
    }
    return RunResult(config.experiment, columns, scan.rows, metrics, scan.drift <= 4.0)


def _exp_l2_growth(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    family_size = ov.pull("family_size", 2)
    x_samples = ov.pull("x_samples", 16)
    components = ov.pull("components", 6)
    ov.done()
    deltas = _deltas(config, (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8))
    m = config.samples or 512
    family = bump_mixture_family(config.n, components=components, seed=config.seed)
    region = (np.full(config.n, -0.5), np.full(config.n, 0.5))
    scan = l2_growth_scan(
        family,
        deltas,
        x_region=region,
        family_size=family_size,
        x_samples=x_samples,
        m=m,
        seed=config.seed,
    )
    metrics = {"slope": scan.fit.slope, "intercept": scan.fit.intercept}
    columns = ("delta", "field_id", "norm_estimate", "std_error")
    return RunResult(config.experiment, columns, tuple(scan.rows), metrics, scan.fit.slope <= 0.15)


_KNAPP_TARGETS = {1.5: (-1.0 / 3.0, 0.1), 2.0: (0.0, 0.05), 3.0: (1.0 / 3.0, 0.1)}


def _knapp_target(p: float):
    """Expected slope and tolerance at the calibrated exponents, else None."""

    for key, target in _KNAPP_TARGETS.items():
        if abs(p - key) < 1e-12:
            return target
    return None


def _exp_knapp_exponent(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    m_x = ov.pull("m_x", 64)
    rho = ov.pull("rho", 0.1)
    ov.done()
    deltas = _deltas(config, tuple(2.0**-k for k in range(4, 11)))
    m_s = config.samples or 8192
    scan = knapp_exponent(deltas, config.p, m_x=m_x, m_s=m_s, seed=config.seed, n=config.n, rho=rho)
    target = _knapp_target(config.p)
    metrics = {"slope": scan.fit.slope, "p": config.p}
    passed = True
    if target is not None:
        expected, tol = target
        metrics["expected_slope"] = expected
        metrics["tolerance"] = tol
        passed = abs(scan.fit.slope - expected) <= tol
    columns = ("delta", "p", "ratio", "std_error")
    return RunResult(config.experiment, columns, tuple(scan.rows), metrics, passed)


def _radial_l2_oracle(n: int, C: float) -> float:
    """Midpoint-rule radial quadrature for the squared profile mass.

    Substituting ``u = log2(1/|x'|)`` flattens the profile integrand into
    ``u^(-2n/(n+1))`` on ``[1, inf)``; a fine midpoint rule on ``[1, 1e4]``
    plus the exact power-law tail gives an oracle independent of the
    windowed-quadrature route.
    """

    beta = 2.0 * n / (n + 1.0)
    u_max = 1e4
    grid = np.linspace(1.0, u_max, 1_000_001)
    mids = 0.5 * (grid[1:] + grid[:-1])
    integral = float(np.sum(mids**-beta) * (grid[1] - grid[0]))
    integral += u_max ** (1.0 - beta) / (beta - 1.0)
    area = 2.0 * math.pi ** ((n - 1) / 2.0) / math.gamma((n - 1) / 2.0)
    return math.sqrt(2.0 * C * area * math.log(2.0) * integral)


def _dyadic_partial_sums(series) -> tuple:
    sums = series.partial_sums
    errors = series.partial_sum_errors
    exponents = range(2, int(math.log2(len(series))) + 1)
    return tuple((2**j, sums[2**j - 1], errors[2**j - 1]) for j in exponents)


def _exp_divergence(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    length = ov.pull("L", 4096)
    C = ov.pull("C", 4.0)
    ov.done()
    m = config.samples or 256
    xs, rs = sample_tangency_set(1, seed=config.seed, n=config.n)
    series = shell_partial_sums(xs[0], rs[0], length, m, seed=config.seed, C=C)
    dyadic = _dyadic_partial_sums(series)
    top = dyadic[-3:]
    fit = fit_power_law([row[0] for row in top], [row[1] for row in top])
    offset_slope = _offset_power_fit(dyadic)
    l2 = g_lp_norm(2.0, n=config.n, C=C)
    oracle = _radial_l2_oracle(config.n, C)
    divergent = math.isinf(g_lp_norm(2.5, n=config.n, C=C))
    sums = series.partial_sums
    errors = series.partial_sum_errors
    rows = tuple(
        {
            "shell": ell + 1,
            "term": series.terms[ell],
            "std_error": series.std_errors[ell],
            "partial_sum": sums[ell],
            "partial_sum_error": errors[ell],
        }
        for ell in range(len(series))
    )
    metrics = {
        "slope_top_window": fit.slope,
        "slope_offset_fit": offset_slope,
        "l2_norm": l2,
        "l2_oracle": oracle,
        "l2_relative_gap": abs(l2 - oracle) / oracle,
        "divergent_at_2_5": divergent,
    }
    passed = (
        0.20 <= fit.slope <= 0.30
        and metrics["l2_relative_gap"] <= 0.01
        and divergent
    )
    columns = ("shell", "term", "std_error", "partial_sum", "partial_sum_error")
    return RunResult(config.experiment, columns, rows, metrics, passed)


def _offset_power_fit(dyadic: tuple) -> float:
    """Growth exponent of ``a * L**b + c`` fitted to the dyadic sums."""

    from scipy.optimize import curve_fit

    ls = np.array([row[0] for row in dyadic], dtype=float)
    ss = np.array([row[1] for row in dyadic])
    try:
        params, _ = curve_fit(
            lambda L, a, b, c: a * np.power(L, b) + c,
            ls,
            ss,
            p0=[1.0, 0.25, -1.0],
            maxfev=20_000,
        )
    except RuntimeError:
        return math.nan
    return float(params[1])


def _exp_glpnorm(config: RunConfig) -> RunResult:
    ov = _Overrides(config)
    C = ov.pull("C", 4.0)
    ov.done()
    quad_points = config.samples or 20_000
    norm = g_lp_norm(config.p, quad_points, n=config.n, C=C)
    finite = math.isfinite(norm)
    rows = ({"p": config.p, "norm": norm, "finite": finite},)
    metrics = {"p": config.p, "norm": norm, "finite": finite}
    passed = True
    if abs(config.p - 2.0) < 1e-12 and config.n == 3:
        exact = math.sqrt(8.0 * math.pi * C * math.log(2.0))
        metrics["exact"] = exact
        passed = abs(norm - exact) <= 0.01 * exact
    return RunResult(config.experiment, ("p", "norm", "finite"), rows, metrics, passed)


def _exp_explore_unrefined(config: RunConfig) -> RunResult:
    """Search for plain-shell pairs that overflow the refined envelope.

    Exploratory by design: removing the axis refinement allows internal
    near-tangencies whose intersections exceed ``log(1/delta) *
    delta^2 / (delta + t)``; this scan documents how large the ratio gets but
    never gates CI, so the pass flag is always true.
    """

    ov = _Overrides(config)
    axis = ov.pull("axis", 0)
    pairs = ov.pull("pairs", 12)
    ov.done()
    deltas = _deltas(config, (2.0**-5, 2.0**-6))
    m = config.samples or (1 << 16)
    lo, hi = geo.restricted_radii_box(config.n)
    rows = []
    for delta in deltas:
        for t in (delta / 2.0, delta, 4.0 * delta, 2.0**-4, 2.0**-2):
            for trial in range(pairs):
                rng = rng_stream(config.seed, derive_stream("explore-radii", delta, t, trial))
                r1 = lo + (hi - lo) * rng.random(config.n)
                r2 = lo + (hi - lo) * rng.random(config.n)
                dtilde = geo.perturbed_axis_direction(axis, r1)
                spec_a = geo.AnnulusSpec(geo.Ellipsoid(np.zeros(config.n), np.ones(config.n)), delta)
                spec_b = geo.AnnulusSpec(geo.Ellipsoid(t * dtilde, r2 / r1), delta)
                est = intersection_volume(
                    spec_a, spec_b, m, config.seed, stream=derive_stream("explore", delta, t, trial)
                )
                bound = pair_volume_bound(delta, t)
                rows.append(
                    {
                        "delta": delta,
                        "t": t,
                        "seed": trial,
                        "measured": est.value,
                        "std_error": est.std_error,
                        "bound": bound,
                        "ratio": est.value / bound,
                    }
                )
    rows.sort(key=lambda r: (-r["ratio"], r["delta"], r["t"], r["seed"]))
    metrics = {"max_ratio": rows[0]["ratio"] if rows else 0.0, "exploratory": True}
    columns = ("delta", "t", "seed", "measured", "std_error", "bound", "ratio")
    return RunResult(config.experiment, columns, tuple(rows), metrics, True)


EXPERIMENTS: dict = {
    "identities": _exp_identities,
    "nondeg": _exp_nondeg,
    "volume-bound": _exp_volume_bound,
    "bands": _exp_bands,
    "clusters": _exp_clusters,
    "fibre": _exp_fibre,
    "multiplicity": _exp_multiplicity,
    "l2-growth": _exp_l2_growth,
    "knapp-exponent": _exp_knapp_exponent,
    "divergence": _exp_divergence,
    "glpnorm": _exp_glpnorm,
    "explore-unrefined": _exp_explore_unrefined,
}


def run_experiment(config: RunConfig) -> RunResult:
    return EXPERIMENTS[config.experiment](config)


# --------------------------------------------------------------------------
# artifacts


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def write_artifacts(config: RunConfig, result: RunResult) -> Path:
    run_dir = Path(config.out) / f"{config.experiment}-seed{config.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(run_dir / "results.csv", result.columns, result.rows)
    summary = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config": _json_safe(dataclasses.asdict(config)),
        "columns": list(result.columns),
        "rows_written": len(result.rows),
        "metrics": _json_safe(result.metrics),
        "pass": bool(result.passed),
        "version": __version__,
        "workers": worker_count(),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(run_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return run_dir


def emit_report(directory: Path) -> tuple[dict, int]:
    """Merge run artifacts under ``directory`` into a consolidated report.

    Returns the report dictionary and the number of skipped (corrupt or
    incomplete) entries; raises ``ValueError`` when no artifact loads.
    """

    directory = Path(directory)
    entries = []
    warnings = 0
    candidates = sorted(p for p in directory.iterdir() if p.is_dir())
    for sub in candidates:
        summary_path = sub / "summary.json"
        if not summary_path.exists():
            continue
        try:
            with open(summary_path, encoding="utf-8") as fh:
                summary = json.load(fh)
            key = (str(summary["experiment"]), int(summary["seed"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            print(f"warning: skipping {summary_path}: {exc}", file=sys.stderr)
            warnings += 1
            continue
        entries.append((key, sub, summary))
    if not entries:
        raise ValueError(f"no run artifacts found under {directory}")
    entries.sort(key=lambda item: item[0])
    report = {
        "version": __version__,
        "warnings": warnings,
        "runs": [summary for _, _, summary in entries],
    }
    with open(directory / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    by_experiment: dict = {}
    for (experiment, seed), sub, _ in entries:
        by_experiment.setdefault(experiment, []).append((seed, sub))
    for experiment, runs in by_experiment.items():
        merged_path = directory / f"report-{experiment}.csv"
        with open(merged_path, "w", encoding="utf-8", newline="") as out:
            writer = csv.writer(out, lineterminator="\n")
            header_written = False
            for seed, sub in runs:
                with open(sub / "results.csv", encoding="utf-8", newline="") as fh:
                    reader = csv.reader(fh)
                    header = next(reader)
                    if not header_written:
                        writer.writerow(["seed"] + header)
                        header_written = True
                    for row in reader:
                        writer.writerow([str(seed)] + row)
    return report, warnings


# --------------------------------------------------------------------------
# argument handling


def _parse_overrides(pairs: Sequence[str]) -> tuple:
    out = []
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        key, _, raw = pair.partition("=")
        try:
            value = float(raw)
        except ValueError as exc:
            raise ValueError(f"override {pair!r} has a non-numeric value") from exc
        out.append((key.strip(), value))
    return tuple(out)


def _parse_delta_grid(raw: Optional[str]) -> Optional[tuple]:
    if raw is None:
        return None
    values = [float(tok) for tok in raw.split(",") if tok.strip()]
    if not values:
        raise ValueError("empty delta grid")
    return tuple(sorted(set(values), reverse=True))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homoeoid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a named experiment and write artifacts")
    run.add_argument("--experiment", required=True, choices=sorted(EXPERIMENTS))
    run.add_argument("--n", type=int, default=3)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--delta-grid", default=None, help="comma-separated shell widths")
    run.add_argument("--samples", type=int, default=None)
    run.add_argument("--p", type=float, default=2.0)
    run.add_argument("--out", default="runs")
    run.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE", help="repeatable"
    )
    report = sub.add_parser("report", help="merge run artifacts into a consolidated report")
    report.add_argument("directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.command == "report":
        try:
            report, warnings = emit_report(Path(args.directory))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"report.json: {len(report['runs'])} runs, {warnings} warnings")
        return 0
    try:
        config = RunConfig(
            experiment=args.experiment,
            n=args.n,
            seed=args.seed,
            deltas=_parse_delta_grid(args.delta_grid),
            samples=args.samples,
            p=args.p,
            out=args.out,
            overrides=_parse_overrides(args.override),
        )
        result = run_experiment(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        run_dir = write_artifacts(config, result)
    except OSError as exc:
        print(f"error: cannot write artifacts: {exc}", file=sys.stderr)
        return 2
    status = "pass" if result.passed else "FAIL"
    print(f"{config.experiment}: {status} ({run_dir})")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
