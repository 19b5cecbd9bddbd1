"""Discretised maximal averages over restricted radii nets.

The operator under test takes a field ``f``, a point ``x`` and a shell width
``delta``, and returns the largest average of ``|f|`` over the shells
``E^delta(x, r)`` as the semi-axis vector ``r`` runs over a finite net inside
the restricted box ``[1, 1 + cut**2]**n``.  Refined companions restrict each
average to the part of the shell whose reference coordinate along one axis
stays large (``|w_axis|**3 >= 2*cut``) while keeping the *plain* shell volume
as normaliser, so that the pointwise covering of the shell by the refined
pieces makes ``max-average <= sum of refined max-averages`` a deterministic
statement about shared sample batches, not a statistical one.

Randomness discipline: every annulus average derives its stream from the
values ``(delta, centre, radii)``, never from loop indices, so an average is
a pure function of its inputs — evaluation order, worker count and the
plain/refined flavour (which shares the base batch) cannot change results.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import geometry as geo
from .mc import MCEstimate, ScalingFit, derive_stream, fit_power_law, mc_mean, rng_stream
from .volumes import reference_shell_sampler

Array = np.ndarray

__all__ = [
    "Field",
    "RadiiNet",
    "annulus_average",
    "discretised_maximal",
    "domination_check",
    "lp_norm",
    "GrowthScan",
    "l2_growth_scan",
    "bump_mixture_family",
]


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Field:
    """A real field on R^n, forced to zero outside an axis-parallel box.

    ``evaluator`` must accept a ``(..., n)`` array of points and return the
    matching batch of values; :meth:`__call__` applies the bounding-box mask
    on top.  ``kind`` records whether the field is closure-backed (exact) or
    grid-backed (multilinear interpolation) — resolution-sensitive
    experiments should always use closures.
    """

    evaluator: Callable[[Array], Array]
    lo: Array
    hi: Array
    kind: str = "closure"

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("bounding box corners must be matching vectors")
        if np.any(hi <= lo):
            raise ValueError("bounding box must have positive widths")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    def __call__(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        inside = np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)
        values = np.asarray(self.evaluator(pts), dtype=float)
        return np.where(inside, values, 0.0)

    @classmethod
    def from_callable(cls, fn: Callable[[Array], Array], lo, hi) -> "Field":
        return cls(fn, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), "closure")

    @classmethod
    def from_grid(cls, values: Array, lo, hi) -> "Field":
        """Multilinear interpolation of ``values`` sampled on the regular grid
        spanning the box; zero outside."""
        values = np.asarray(values, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        axes = [np.linspace(lo[i], hi[i], values.shape[i]) for i in range(values.ndim)]
        interp = RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=0.0)

        def evaluator(pts: Array) -> Array:
            flat = pts.reshape(-1, pts.shape[-1])
            return interp(flat).reshape(pts.shape[:-1])

        return cls(evaluator, lo, hi, "grid")


# ---------------------------------------------------------------------------
# radii nets
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RadiiNet:
    """A finite grid of semi-axis vectors covering an axis-parallel box.

    Each axis is subdivided with spacing at most ``step`` (endpoints
    included), and the net is the Cartesian product.  The net sup is the
    object under test here; refining the net can only increase it.
    """

    lo: Array
    hi: Array
    step: float

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("net domain must be a box with positive widths")
        if not self.step > 0:
            raise ValueError("step must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        axes = [
            np.linspace(lo[i], hi[i], int(math.ceil((hi[i] - lo[i]) / self.step)) + 1)
            for i in range(lo.shape[0])
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        object.__setattr__(self, "points", np.stack([m.reshape(-1) for m in mesh], axis=-1))

    points: Array = dataclasses.field(init=False, repr=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def for_delta(cls, n: int, delta: float, cut: float | None = None) -> "RadiiNet":
        """Net over the restricted radii box with step ``min(delta, width)/4``.

        The annulus indicator moves by ``O(step)`` under a radii step, so a
        ``delta``-scale net resolves the sup up to constants; for widths
        below ``delta`` the box width binds instead.
        """
        lo, hi = geo.restricted_radii_box(n, cut)
        width = float(hi[0] - lo[0])
        return cls(lo, hi, min(float(delta), width) / 4.0)


# ---------------------------------------------------------------------------
# averages and the maximal operator
# ---------------------------------------------------------------------------


def _average_stream(base: geo.AnnulusSpec) -> int:
    return derive_stream("annulus-avg", base.delta, base.ellipsoid.centre, base.ellipsoid.radii)


def annulus_average(f: Field, spec, m: int, *, seed: int, signed: bool = False) -> MCEstimate:
    """Average of ``|f|`` over the shell, refined pieces zero-extended.

    Plain specs give the mean of ``|f|`` over uniform shell samples.  Refined
    specs keep the *same* sample batch (the stream is derived from the base
    shell only) and multiply by the refinement indicator, so the normaliser
    stays the plain shell volume and a refined average never exceeds the
    plain one on the same inputs.  ``signed=True`` drops the absolute value;
    it exists only for symmetry diagnostics, not for the operator itself.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    base, axis, cut = geo._spec_parts(spec)
    ell = base.ellipsoid
    sampler = reference_shell_sampler(base.delta, base.n)

    def sample_fn(rng: np.random.Generator, k: int) -> Array:
        omega = sampler(rng, k)
        values = f(geo.affine_map(ell.centre, ell.radii, omega))
        if not signed:
            values = np.abs(values)
        if axis is not None:
            values = values * geo.refinement_indicator(omega, axis, cut)
        return values

    return mc_mean(sample_fn, m, seed=seed, stream=_average_stream(base))


def _spec_at(x: Array, r: Array, delta: float, axis: int | None):
    base = geo.AnnulusSpec(geo.Ellipsoid(x, r), delta)
    if axis is None:
        return base
    return geo.RefinedAnnulusSpec(base, axis)


def discretised_maximal(
    f: Field,
    x: Array,
    delta: float,
    net: RadiiNet,
    *,
    m: int,
    seed: int,
    axis: int | None = None,
) -> float:
    """Largest annulus average over the radii net at the point ``x``.

    ``axis=None`` is the plain operator; an integer axis selects the refined
    companion (zero-extended, plain normaliser).  Every net point draws its
    own value-derived stream, so the sup is independent of enumeration order
    and dominates each individual :func:`annulus_average` exactly.
    """
    x = np.asarray(x, dtype=float)
    if len(net) == 0:
        raise ValueError("net must be non-empty")
    best = -np.inf
    for r in net.points:
        est = annulus_average(f, _spec_at(x, r, delta, axis), m, seed=seed)
        if est.value > best:
            best = est.value
    return best


def domination_check(
    f: Field,
    x_samples: Array,
    delta: float,
    net: RadiiNet,
    *,
    m: int,
    seed: int,
) -> float:
    """Max over sampled points of ``plain max-average - sum of refined ones``.

    Under the shared-batch discipline this is non-positive deterministically:
    every shell sample satisfies the covering inequality along some axis, so
    the refined indicators sum to at least one sample-by-sample.
    """
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    n = xs.shape[1]
    worst = -np.inf
    for x in xs:
        plain = discretised_maximal(f, x, delta, net, m=m, seed=seed)
        refined = sum(
            discretised_maximal(f, x, delta, net, m=m, seed=seed, axis=k) for k in range(n)
        )
        worst = max(worst, plain - refined)
    return worst


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def lp_norm(f: Field, p: float, region, m: int, *, seed: int) -> MCEstimate:
    """``(|region| * mean |f|^p)**(1/p)`` over uniform samples of a box.

    The standard error is propagated through the root by the delta method.
    The stream is derived from ``(p, region)`` only, so rescaling the field
    reuses identical samples and the norm scales exactly.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("region must be a box with positive widths")
    volume = float(np.prod(hi - lo))

    def sample_fn(rng: np.random.Generator, k: int) -> Array:
        pts = lo + rng.random((k, lo.shape[0])) * (hi - lo)
        return np.abs(f(pts)) ** p

    est = mc_mean(sample_fn, m, seed=seed, stream=derive_stream("lp-norm", p, lo, hi))
    integral = volume * est.value
    se_integral = volume * est.std_error
    if integral <= 0.0:
        # values are non-negative, so a zero mean forces zero variance too
        return MCEstimate(0.0, 0.0, m, seed)
    norm = integral ** (1.0 / p)
    return MCEstimate(norm, (norm / (p * integral)) * se_integral, m, seed)


# ---------------------------------------------------------------------------
# L^2 growth scan
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GrowthScan:
    """Fitted growth of the maximal operator's L^2 norm in ``log(1/delta)``,
    with the per-(delta, field) rows behind the fit."""

    fit: ScalingFit
    rows: tuple[dict, ...]


def _batched_maximal(
    f: Field,
    xs: Array,
    delta: float,
    net: RadiiNet,
    *,
    m: int,
    seed: int,
    stream_tag,
) -> Array:
    """Plain max-averages at a batch of points, one shared shell batch.

    A single reference-shell sample serves every point and every net radius
    (the shell law depends only on ``delta``), which slashes the cost of the
    scan and, because the max is taken over averages of one shared batch,
    keeps sub-net monotonicity exact.  Statistically this is an ordinary
    common-random-numbers scheme: each average stays unbiased.
    """
    sampler = reference_shell_sampler(delta, xs.shape[1])
    omega = sampler(rng_stream(seed, derive_stream("scan-shell", delta, stream_tag)), m)
    best = np.full(xs.shape[0], -np.inf)
    for r in net.points:
        pts = xs[:, None, :] + omega[None, :, :] * r[None, None, :]
        best = np.maximum(best, np.mean(np.abs(f(pts)), axis=1))
    return best


def l2_growth_scan(
    field_family: Callable[[int], Field],
    delta_list: Sequence[float],
    *,
    x_region,
    family_size: int = 2,
    x_samples: int = 64,
    m: int = 1024,
    seed: int = 0,
    net_policy: Callable[[float], RadiiNet] | None = None,
) -> GrowthScan:
    """Fit ``log ||max-average f||_2`` against ``log(1/delta)``.

    For each width the scan draws points of ``x_region``, evaluates the
    plain operator over ``net_policy(delta)`` for every member of the
    (L^2-normalised) field family, and records the Monte Carlo ``L^2(x region)``
    norm; the per-width figure entering the fit is the worst norm across the
    family, an operator-norm proxy.  Small positive slopes are consistent
    with sub-polynomial growth; the acceptance threshold is 0.15.
    """
    deltas = [float(d) for d in delta_list]
    if len(deltas) < 3:
        raise ValueError("need at least 3 shell widths")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("shell widths must be strictly decreasing")
    if x_samples < 2:
        raise ValueError("x_samples must be at least 2")
    lo = np.asarray(x_region[0], dtype=float)
    hi = np.asarray(x_region[1], dtype=float)
    n = lo.shape[0]
    volume = float(np.prod(hi - lo))
    if net_policy is None:
        net_policy = lambda d: RadiiNet.for_delta(n, d)

    rows = []
    worst_per_delta = []
    for delta in deltas:
        net = net_policy(delta)
        worst = -np.inf
        for idx in range(family_size):
            f = field_family(idx)
            rng_x = rng_stream(seed, derive_stream("scan-x", delta, idx))
            xs = lo + rng_x.random((x_samples, n)) * (hi - lo)
            values = _batched_maximal(f, xs, delta, net, m=m, seed=seed, stream_tag=idx)
            squares = values**2
            mean_sq = float(np.mean(squares))
            se_sq = float(np.std(squares, ddof=1) / np.sqrt(x_samples))
            norm = math.sqrt(volume * mean_sq)
            se = volume * se_sq / (2.0 * norm) if norm > 0 else np.inf
            rows.append(
                {"delta": delta, "field_id": idx, "norm_estimate": norm, "std_error": se}
            )
            worst = max(worst, norm)
        worst_per_delta.append(worst)
    fit = fit_power_law(1.0 / np.asarray(deltas), np.asarray(worst_per_delta))
    return GrowthScan(fit=fit, rows=tuple(rows))


# ---------------------------------------------------------------------------
# bump mixtures
# ---------------------------------------------------------------------------


def bump_mixture_family(
    n: int,
    *,
    components: int = 6,
    seed: int = 0,
    centre_box: tuple = None,
    scale_range: tuple = (0.08, 0.35),
) -> Callable[[int], Field]:
    """Seeded generator of L^2-normalised Gaussian bump mixtures.

    Normalisation uses the closed-form pairwise inner products
    ``(2 pi s1^2 s2^2 / (s1^2 + s2^2))**(n/2) * exp(-|c1-c2|^2 / (2(s1^2+s2^2)))``
    rather than quadrature, so the unit norm is exact up to the (negligible,
    ``exp(-40)``-sized) truncation at the nine-sigma bounding box.
    """
    if components < 1:
        raise ValueError("components must be at least 1")
    if centre_box is None:
        centre_box = (np.full(n, -1.5), np.full(n, 1.5))
    c_lo = np.asarray(centre_box[0], dtype=float)
    c_hi = np.asarray(centre_box[1], dtype=float)

    def make(index: int) -> Field:
        rng = rng_stream(seed, derive_stream("bumps", n, components, index))
        centres = c_lo + rng.random((components, n)) * (c_hi - c_lo)
        scales = rng.uniform(scale_range[0], scale_range[1], components)
        amps = rng.uniform(0.5, 1.5, components)
        s2 = scales**2
        pair = s2[:, None] + s2[None, :]
        dist2 = np.sum((centres[:, None, :] - centres[None, :, :]) ** 2, axis=-1)
        gram = (2.0 * np.pi * np.outer(s2, s2) / pair) ** (n / 2.0) * np.exp(-dist2 / (2.0 * pair))
        coeff = amps / math.sqrt(float(amps @ gram @ amps))

        def evaluator(pts: Array) -> Array:
            diff = pts[..., None, :] - centres
            expo = np.sum(diff * diff, axis=-1) / (2.0 * s2)
            return np.sum(coeff * np.exp(-expo), axis=-1)

        lo = np.min(centres - 9.0 * scales[:, None], axis=0)
        hi = np.max(centres + 9.0 * scales[:, None], axis=0)
        return Field.from_callable(evaluator, lo, hi)

    return make
