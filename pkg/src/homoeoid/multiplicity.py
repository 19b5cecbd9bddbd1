"""Overlap multiplicity of separated shell families along an axis line.

A family places ``N`` ellipsoidal shells with centres ``t_i * d_k`` on the
line through the axis direction ``d_k`` (the all-ones vector with a zero in
slot ``k``), parameters ``t_i`` in ``[-1, 1]`` pairwise separated by at least
``delta`` and radii drawn from the restricted box.  The square of the
L2 norm of the counting function ``sum_i chi_{E_i}`` expands into pairwise
intersection volumes; :func:`overlap_l2` estimates the off-diagonal part by
Monte Carlo with per-pair sample budgets that shrink dyadically in the
parameter distance (distant pairs overlap little and need fewer samples),
while the diagonal is evaluated in closed form.  :func:`multiplicity_scan`
normalises the norm by ``log(1/delta) * delta^(1/2) * N^(1/2)`` and tracks
the worst constant across seeded trials, which is the quantity that must stay
bounded as ``delta`` shrinks.

:func:`direct_overlap_l2` evaluates the same norm by sampling a bounding box
in physical space and averaging the squared counting function; it is kept as
an independent oracle for small families rather than collapsed into the
pairwise route.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc

from . import geometry as geo
from .mc import MCEstimate, derive_stream, mc_mean, rng_stream
from .volumes import reference_shell_sampler, shell_volume

Array = np.ndarray

__all__ = [
    "EllipsoidFamily",
    "MultiplicityScan",
    "generate_family",
    "refined_shell_volume",
    "overlap_l2",
    "direct_overlap_l2",
    "neighbour_counts",
    "multiplicity_scan",
]


@dataclasses.dataclass(frozen=True)
class EllipsoidFamily:
    """Shells with centres ``offsets[i] * axis_direction(n, axis)``.

    ``offsets`` is nondecreasing with consecutive gaps of at least ``delta``
    (up to an absolute slack of 1e-12 for rounding), all values in
    ``[-1, 1]``; the member count can therefore never exceed
    ``floor(2 / delta) + 1``.  ``radii`` holds one row per member, inside the
    restricted box for the given ``cut``.
    """

    axis: int
    delta: float
    offsets: Array
    radii: Array
    cut: Optional[float] = None

    def __post_init__(self) -> None:
        t = np.asarray(self.offsets, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if t.ndim != 1 or t.shape[0] == 0:
            raise ValueError("offsets must be a non-empty 1-d array")
        if r.ndim != 2 or r.shape[0] != t.shape[0]:
            raise ValueError("radii must have one row per offset")
        n = r.shape[1]
        if not 0 <= self.axis < n:
            raise ValueError(f"axis {self.axis} out of range for dimension {n}")
        d = float(self.delta)
        if not 0.0 < d <= geo.MAX_SHELL_WIDTH:
            raise ValueError(f"delta must be in (0, {geo.MAX_SHELL_WIDTH}], got {d}")
        if t.shape[0] > math.floor(2.0 / d) + 1:
            raise ValueError("too many members for a delta-separated family in [-1, 1]")
        if np.any(np.abs(t) > 1.0 + 1e-12):
            raise ValueError("offsets must lie in [-1, 1]")
        if t.shape[0] > 1 and np.min(np.diff(t)) < d - 1e-12:
            raise ValueError("offsets must be nondecreasing with gaps >= delta")
        c = geo.default_refinement_cut(n) if self.cut is None else float(self.cut)
        if c <= 0:
            raise ValueError("cut must be positive")
        lo, hi = geo.restricted_radii_box(n, c)
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            raise ValueError("radii must lie in the restricted box")
        object.__setattr__(self, "offsets", t)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "cut", c)

    @property
    def n(self) -> int:
        return self.radii.shape[1]

    def __len__(self) -> int:
        return self.offsets.shape[0]

    @property
    def centres(self) -> Array:
        return self.offsets[:, None] * geo.axis_direction(self.n, self.axis)

    def member(self, i: int) -> geo.Ellipsoid:
        return geo.Ellipsoid(self.centres[i], self.radii[i])

    def spec(self, i: int, refined: bool = True):
        base = geo.AnnulusSpec(self.member(i), self.delta)
        if not refined:
            return base
        return geo.RefinedAnnulusSpec(base, self.axis, self.cut)


def generate_family(
    axis: int,
    delta: float,
    count: int,
    seed: int = 0,
    *,
    n: int = 3,
    cut: Optional[float] = None,
) -> EllipsoidFamily:
    """Draw a family uniformly over the admissible configurations.

    Writing ``t_i = -1 + i*delta + z_i`` turns the separation and range
    constraints into ``0 <= z_0 <= ... <= z_{count-1} <= 2 - (count-1)*delta``,
    so sorted uniforms on that interval sample the configuration set
    uniformly.  When the slack ``2 - (count-1)*delta`` is zero (a maximal
    family) the offsets collapse to the exact lattice ``-1 + i*delta``.
    Radii are drawn i.i.d. uniformly from the restricted box.
    """

    if count < 1:
        raise ValueError("count must be >= 1")
    d = float(delta)
    if not 0.0 < d <= geo.MAX_SHELL_WIDTH:
        raise ValueError(f"delta must be in (0, {geo.MAX_SHELL_WIDTH}], got {d}")
    if count > math.floor(2.0 / d) + 1:
        raise ValueError("count exceeds the delta-separated capacity of [-1, 1]")
    rng = rng_stream(seed, derive_stream("family", axis, d, count))
    slack = 2.0 - (count - 1) * d
    if slack <= 1e-12:
        z = np.zeros(count)
    else:
        z = np.sort(rng.uniform(0.0, slack, count))
    offsets = np.minimum(-1.0 + d * np.arange(count) + z, 1.0)
    lo, hi = geo.restricted_radii_box(n, cut)
    radii = lo + (hi - lo) * rng.random((count, n))
    return EllipsoidFamily(axis=axis, delta=d, offsets=offsets, radii=radii, cut=cut)


def refined_shell_volume(
    radii: Array, delta: float, axis: int, cut: Optional[float] = None
) -> float:
    """Volume of an axis-refined shell, by one-dimensional quadrature.

    In reference coordinates the shell is ``{ s in (sqrt(1-delta),
    sqrt(1+delta)) }`` with uniform directions, and the refinement keeps
    ``|omega_axis| >= (2*cut)^(1/3)``, i.e. directions with ``|u_axis| >=
    (2*cut)^(1/3) / s``.  The direction fraction at height ``h`` is the
    two-sided cap mass ``I_{1-h^2}((n-1)/2, 1/2)`` of the symmetric Beta law
    of ``u_axis^2``, leaving a single radial integral; the physical volume
    scales by ``prod(radii)``.
    """

    r = np.asarray(radii, dtype=float)
    n = r.shape[0]
    if not 0 <= axis < n:
        raise ValueError(f"axis {axis} out of range for dimension {n}")
    d = float(delta)
    if not 0.0 < d <= geo.MAX_SHELL_WIDTH:
        raise ValueError(f"delta must be in (0, {geo.MAX_SHELL_WIDTH}], got {d}")
    c = geo.default_refinement_cut(n) if cut is None else float(cut)
    if c <= 0:
        raise ValueError("cut must be positive")
    height = (2.0 * c) ** (1.0 / 3.0)
    area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)

    def integrand(s: float) -> float:
        h = height / s
        if h >= 1.0:
            return 0.0
        return area * s ** (n - 1) * float(betainc((n - 1) / 2.0, 0.5, 1.0 - h * h))

    value, _ = quad(integrand, math.sqrt(1.0 - d), math.sqrt(1.0 + d), epsabs=0.0, epsrel=1e-11, limit=200)
    return float(np.prod(r)) * value


def _member_volumes(family: EllipsoidFamily, refined: bool) -> Array:
    if refined:
        return np.array(
            [refined_shell_volume(r, family.delta, family.axis, family.cut) for r in family.radii]
        )
    return np.array([shell_volume(r, family.delta) for r in family.radii])


def overlap_l2(
    family: EllipsoidFamily,
    m: int = 4096,
    *,
    seed: int = 0,
    refined: bool = True,
) -> MCEstimate:
    """L2 norm of the counting function of the family's (refined) shells.

    The squared norm is the sum of all pairwise intersection volumes.
    Diagonal terms are evaluated in closed form.  For the off-diagonal part,
    each member ``i`` groups the others into dyadic distance classes
    ``2^a * delta <= |t_j - t_i| < 2^(a+1) * delta`` and scores one shared
    reference-shell batch of ``max(64, m >> a)`` points against every member
    of the class, so nearby (large-overlap) pairs receive the most samples.
    Batch totals over a class keep the within-batch correlation between
    members, and independent streams across ``(member, class)`` batches make
    the quadrature combination of their errors exact.

    The stream derivation does not depend on ``refined``, so the refined and
    plain estimates for the same ``seed`` share batches and the plain norm
    dominates the refined one exactly, not just in expectation.  A
    single-member family returns the exact root volume with zero error.
    """

    if m < 64:
        raise ValueError("m must be >= 64")
    count = len(family)
    delta = family.delta
    diag = _member_volumes(family, refined)
    total = float(np.sum(diag))
    variance = 0.0
    drawn = 0
    sampler = reference_shell_sampler(delta, family.n)
    centres = family.centres
    specs = [family.spec(j, refined) for j in range(count)]
    for i in range(count):
        gaps = np.abs(family.offsets - family.offsets[i])
        gaps[i] = np.nan
        others = np.flatnonzero(~np.isnan(gaps))
        if others.size == 0:
            continue
        classes = np.floor(np.log2(np.maximum(gaps[others] / delta, 1.0))).astype(int)
        base_volume = shell_volume(family.radii[i], delta)
        for a in np.unique(classes):
            batch = max(64, m >> int(a))
            rng = rng_stream(seed, derive_stream("overlap", i, int(a)))
            omega = sampler(rng, batch)
            y = geo.affine_map(centres[i], family.radii[i], omega)
            if refined:
                keep = geo.refinement_indicator(omega, family.axis, family.cut)
            else:
                keep = np.ones(batch, dtype=bool)
            hits = np.zeros(batch)
            for j in others[classes == a]:
                hits += keep & geo.annulus_contains(specs[j], y)
            total += base_volume * float(np.mean(hits))
            variance += (base_volume * float(np.std(hits, ddof=1)) / math.sqrt(batch)) ** 2
            drawn += batch
    norm = math.sqrt(total)
    return MCEstimate(norm, math.sqrt(variance) / (2.0 * norm), drawn, seed)


def direct_overlap_l2(
    family: EllipsoidFamily,
    m: int = 1 << 21,
    *,
    seed: int = 0,
    refined: bool = True,
) -> MCEstimate:
    """Same norm as :func:`overlap_l2`, by bounding-box space sampling.

    Draws uniform points from an axis-aligned box containing every member and
    averages the squared counting function.  Every pairwise product is scored
    simultaneously, so the estimate is a genuinely independent cross-check of
    the pairwise route; the cost grows with the box volume over the occupied
    volume, which keeps this practical only for small families.
    """

    count = len(family)
    specs = [family.spec(j, refined) for j in range(count)]
    pad = np.sqrt(1.0 + family.delta) * family.radii
    lo = np.min(family.centres - pad, axis=0)
    hi = np.max(family.centres + pad, axis=0)
    box_volume = float(np.prod(hi - lo))

    def values(rng: np.random.Generator, k: int) -> Array:
        y = lo + (hi - lo) * rng.random((k, family.n))
        counts = np.zeros(k)
        for spec in specs:
            counts += geo.annulus_contains(spec, y)
        return box_volume * counts**2

    est = mc_mean(values, m, seed=seed, stream=derive_stream("direct-overlap", int(refined)))
    assert isinstance(est, MCEstimate)
    if est.value <= 0.0:
        return MCEstimate(0.0, math.sqrt(est.std_error), est.n_samples, seed)
    return MCEstimate(
        math.sqrt(est.value), est.std_error / (2.0 * math.sqrt(est.value)), est.n_samples, seed
    )


def neighbour_counts(family: EllipsoidFamily, tau: float) -> Array:
    """Number of *other* members within parameter distance ``tau`` of each.

    Separation caps these counts at ``2 * floor(tau / delta)``: each side of
    a member can hold at most one offset per length ``delta``.
    """

    if tau <= 0:
        raise ValueError("tau must be positive")
    gaps = np.abs(family.offsets[:, None] - family.offsets[None, :])
    within = gaps <= tau
    return np.sum(within, axis=1) - 1


@dataclasses.dataclass(frozen=True)
class MultiplicityScan:
    """Worst-case overlap constants across trials, per shell width.

    ``rows`` holds one record per (delta, trial, variant) with the measured
    norm, the envelope ``log(1/delta) * delta^(1/2) * N^(1/2)`` and their
    ratio ``C``; ``worst`` and ``worst_plain`` map each delta to the largest
    ratio over trials for the refined and plain variants.  A uniform overlap
    bound corresponds to ``worst`` values of bounded drift as delta shrinks.
    """

    rows: tuple[dict, ...]
    worst: dict
    worst_plain: dict

    @property
    def drift(self) -> float:
        values = list(self.worst.values())
        return max(values) / min(values)


def multiplicity_scan(
    axis: int,
    deltas: Sequence[float],
    count_rule: Optional[Callable[[float], int]] = None,
    trials: int = 4,
    m: int = 4096,
    *,
    seed: int = 0,
    n: int = 3,
) -> MultiplicityScan:
    """Measure the overlap constant ``C(delta)`` over seeded random families.

    For each ``delta`` the member count is ``count_rule(delta)`` (default
    ``floor(1/delta)``); every trial draws a fresh family and estimates the
    counting-function norm both refined and plain, recording ``C = norm /
    (log(1/delta) * sqrt(delta) * sqrt(N))``.  Each row carries the derived
    ``trial_seed`` that reproduces its family and estimate in isolation.
    """

    ds = [float(d) for d in deltas]
    if len(ds) < 3:
        raise ValueError("need at least three shell widths")
    if any(b >= a for a, b in zip(ds, ds[1:])):
        raise ValueError("shell widths must be strictly decreasing")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rule = count_rule if count_rule is not None else lambda d: int(math.floor(1.0 / d))
    rows = []
    worst: dict = {}
    worst_plain: dict = {}
    for i_delta, delta in enumerate(ds):
        count = int(rule(delta))
        bound = math.log(1.0 / delta) * math.sqrt(delta) * math.sqrt(count)
        for trial in range(trials):
            trial_seed = derive_stream("multiplicity-trial", seed, i_delta, trial)
            family = generate_family(axis, delta, count, trial_seed, n=n)
            for refined in (True, False):
                est = overlap_l2(family, m, seed=trial_seed, refined=refined)
                ratio = est.value / bound
                rows.append(
                    {
                        "delta": delta,
                        "trial_seed": int(trial_seed),
                        "N": count,
                        "norm": est.value,
                        "std_error": est.std_error,
                        "bound": bound,
                        "C": ratio,
                        "refined": refined,
                    }
                )
                table = worst if refined else worst_plain
                table[delta] = max(table.get(delta, 0.0), ratio)
    return MultiplicityScan(rows=tuple(rows), worst=worst, worst_plain=worst_plain)
