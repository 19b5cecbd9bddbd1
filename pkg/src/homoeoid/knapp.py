"""Necessity-side experiments: slab scaling exponents and the divergent series.

Two constructions live here.  The first is the classical slab example — an
indicator of a ``delta x sqrt(delta) x ... x sqrt(delta)`` box tangent to the
diagonal direction — whose averages against tangency-configured shells scale
like ``delta**((n-1)/2)``; comparing with the slab's own L^p norm produces
scaling exponents that change sign across p = (n+1)/(n-1).  The second is the
counterexample profile ``g``: a tangentially singular function, finite in L^p
up to the critical exponent, whose surface integrals over dyadic tangential
shells of a tangency configuration form a divergent series.

The shell series needs care at depth: shell ``l`` lives at tangential distance
``2**(-l/2)`` from the tangency point, far below float range once ``l`` is in
the thousands.  All shell computations therefore run in rescaled tangential
coordinates ``w = 2**(l/2) * v``; the ``2**(+-l(n-1)/2)`` factors between the
profile's growth and the shell's measure cancel symbolically, so every stored
intermediate stays O(1) for every ``l``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc, betaincinv

from . import geometry as geo
from .maximal import Field
from .mc import ScalingFit, derive_stream, fit_power_law, rng_stream
from .volumes import ball_volume, sample_surface, sphere_area

Array = np.ndarray

__all__ = [
    "KnappSlab",
    "ExponentScan",
    "CounterexampleField",
    "ShellSeries",
    "diagonal_frame",
    "knapp_slab",
    "sample_tangency_set",
    "slab_shell_average",
    "knapp_exponent",
    "counterexample_field",
    "profile_value",
    "g_lp_norm",
    "shell_partial_sums",
]


def diagonal_frame(n: int) -> Array:
    """Orthonormal frame adapted to the diagonal: rows 0..n-2 span the
    hyperplane orthogonal to ``(1,...,1)``, the last row is ``(1,...,1)/sqrt(n)``.

    Built by Gram-Schmidt of the standard basis against the diagonal, so the
    construction is deterministic (no RNG, no eigensolver sign ambiguity).
    """
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    normal = np.full(n, 1.0 / math.sqrt(n))
    rows = [normal]
    for i in range(n - 1):
        v = np.zeros(n)
        v[i] = 1.0
        for u in rows:
            v -= np.dot(v, u) * u
        v /= np.linalg.norm(v)
        rows.append(v)
    return np.stack(rows[1:] + [normal])


@dataclasses.dataclass(frozen=True)
class KnappSlab:
    """Axis-tangent box of thickness ``delta`` and tangential width ``sqrt(delta)``.

    Centred at the origin, thin direction along the diagonal ``(1,...,1)/sqrt(n)``.
    The exact volume ``delta**((n+1)/2)`` is exposed so L^p norms of the
    indicator never rely on Monte Carlo.
    """

    delta: float
    n: int = 3

    def __post_init__(self) -> None:
        d = float(self.delta)
        if not 0.0 < d <= 0.5:
            raise ValueError(f"delta must be in (0, 1/2], got {d}")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "frame", diagonal_frame(self.n))

    frame: Array = dataclasses.field(init=False, repr=False)

    @property
    def volume(self) -> float:
        return self.delta ** ((self.n + 1) / 2.0)

    def contains(self, points: Array) -> Array:
        coords = np.asarray(points, dtype=float) @ self.frame.T
        half_width = 0.5 * math.sqrt(self.delta)
        tangential = np.all(np.abs(coords[..., : self.n - 1]) <= half_width, axis=-1)
        return tangential & (np.abs(coords[..., self.n - 1]) <= 0.5 * self.delta)

    def indicator(self) -> Field:
        half_diag = 0.5 * math.sqrt((self.n - 1) * self.delta + self.delta**2)
        return Field.from_callable(
            lambda pts: self.contains(pts).astype(float),
            np.full(self.n, -half_diag),
            np.full(self.n, half_diag),
        )


def knapp_slab(delta: float, n: int = 3) -> Field:
    """Indicator field of :class:`KnappSlab`; see the class for conventions."""
    return KnappSlab(delta, n).indicator()


def sample_tangency_set(
    m: int, *, seed: int = 0, rho: float = 0.1, n: int = 3
) -> tuple[Array, Array]:
    """Draw tangency configurations (x, r) with the shell tangent to 0.

    Radii are uniform in the box ``(3/2)*1 +- rho`` (kept inside ``(1, 2)^n``),
    and ``x = contact_point(r)``, which places the origin on the ellipsoid
    ``E(x, r)`` with tangent plane orthogonal to the diagonal.  Returns the
    pair of ``(m, n)`` arrays.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0.0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2) so the box stays inside (1,2)^n")
    rng = rng_stream(seed, derive_stream("tangency-set", n, rho))
    radii = 1.5 + rho * (2.0 * rng.random((m, n)) - 1.0)
    return geo.contact_point(radii), radii


@dataclasses.dataclass(frozen=True)
class ExponentScan:
    """Power-law fit of slab-average ratios plus the per-width table."""

    fit: ScalingFit
    rows: tuple


def slab_shell_average(
    slab: KnappSlab, x: Array, r: Array, delta: float, m: int, *, seed: int = 0
) -> tuple[float, float]:
    """Shell average of the slab indicator at a tangency configuration.

    Equal in expectation to ``annulus_average`` of the indicator over
    ``E^delta(x, r)``, but the directions are drawn inside the spherical cap
    that provably contains the slab's preimage (the indicator vanishes off the
    cap, so scaling the cap-restricted mean by the exact cap fraction changes
    nothing but the variance).  Uniform shell sampling would land
    ``O(delta^{(n-1)/2})`` of its points in the slab — fractions of a hit per
    batch at small widths, whose noise biases p-th moments upward — whereas
    the cap keeps the hit rate width-independent.  Returns (value, std_error).
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    n = x.shape[0]
    if m < 2:
        raise ValueError("m must be at least 2")
    if abs(float(geo.defining_value(x, r, np.zeros(n)))) > 1e-9:
        raise ValueError("(x, r) must be a tangency configuration")
    rng = rng_stream(seed, derive_stream("knapp-cap", delta, x, r))
    # radial law of the uniform shell measure (independent of direction)
    lo = (1.0 - delta) ** (n / 2.0)
    hi = (1.0 + delta) ** (n / 2.0)
    mags = (lo + rng.random(m) * (hi - lo)) ** (1.0 / n)

    # any shell point landing in the slab has direction within chord_max of
    # the tangency direction: |omega - u0| <= |y|/min(r) on the slab, plus
    # the radial slack | |omega| - 1 | < 0.6*delta; 5% safety margin on top.
    u0 = -x / r
    u0 /= np.linalg.norm(u0)
    half_diag = 0.5 * math.sqrt((n - 1) * delta + delta**2)
    chord = 1.05 * (half_diag / float(np.min(r)) + 0.6 * delta)
    if chord**2 >= 1.8:
        dirs = rng.standard_normal((m, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        fraction = 1.0
    else:
        cos_cap = 1.0 - 0.5 * chord**2
        sin_sq = 1.0 - cos_cap**2
        a = (n - 1) / 2.0
        mass = float(betainc(a, 0.5, sin_sq))
        fraction = 0.5 * mass  # P(<u, u0> >= cos_cap) for a uniform direction
        t = betaincinv(a, 0.5, rng.random(m) * mass)
        heights = np.sqrt(1.0 - t)
        g = rng.standard_normal((m, n))
        g -= (g @ u0)[:, None] * u0
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        dirs = heights[:, None] * u0 + np.sqrt(t)[:, None] * g
    points = x + r * (mags[:, None] * dirs)
    vals = slab.contains(points).astype(float)
    value = fraction * float(np.mean(vals))
    std_error = fraction * float(np.std(vals, ddof=1) / math.sqrt(m))
    return value, std_error


def knapp_exponent(
    delta_list: Sequence[float],
    p: float,
    m_x: int = 64,
    m_s: int = 8192,
    *,
    seed: int = 0,
    n: int = 3,
    rho: float = 0.1,
) -> ExponentScan:
    """Scaling exponent of slab averages against the slab's own L^p norm.

    For each width the ratio is ``R(delta) = ||A f_delta||_p / ||f_delta||_p``
    where ``f_delta`` is the matched slab indicator and ``A f_delta(x)`` is the
    shell average at a sampled tangency configuration — a direct lower bound
    for the maximal operator, no sup search.  The L^p norm on the sample side
    uses the uniform probability measure on the tangency patch (constant
    factors cancel in the slope).  The returned fit is of ``log R`` against
    ``log delta``: negative slopes mean the averages beat the norm as the
    shells thin (unbounded operator), positive slopes mean decay.

    Shell-sample streams are derived from values only, so calls with
    different ``p`` at the same seed share identical average estimates.
    """
    deltas = [float(d) for d in delta_list]
    if len(deltas) < 3:
        raise ValueError("need at least 3 shell widths")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("shell widths must be strictly decreasing")
    if p < 1.0:
        raise ValueError("p must be at least 1")
    if m_x < 2 or m_s < 1:
        raise ValueError("need m_x >= 2 tangency samples and m_s >= 1 shell samples")

    xs, rs = sample_tangency_set(m_x, seed=seed, rho=rho, n=n)
    rows = []
    ratios = []
    for delta in deltas:
        slab = KnappSlab(delta, n)
        values = np.array(
            [
                slab_shell_average(slab, xs[i], rs[i], delta, m_s, seed=seed)[0]
                for i in range(m_x)
            ]
        )
        powers = values**p
        mean_pow = float(np.mean(powers))
        se_pow = float(np.std(powers, ddof=1) / math.sqrt(m_x))
        slab_norm = KnappSlab(delta, n).volume ** (1.0 / p)
        if mean_pow > 0.0:
            ratio = mean_pow ** (1.0 / p) / slab_norm
            std_error = se_pow * mean_pow ** (1.0 / p - 1.0) / (p * slab_norm)
        else:
            ratio = 0.0
            std_error = math.inf
        rows.append({"delta": delta, "p": p, "ratio": ratio, "std_error": std_error})
        ratios.append(ratio)
    fit = fit_power_law(np.asarray(deltas), np.asarray(ratios))
    return ExponentScan(fit=fit, rows=tuple(rows))


def profile_value(t, n: int = 3) -> Array:
    """Tangential profile ``t**-(n-1) * log2(1/t)**(-n/(n+1))`` on ``(0, 1/2]``.

    Zero outside that range (including t = 0: the singularity sits on a
    measure-zero set and every sampler here avoids it).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mask = (t > 0.0) & (t <= 0.5)
    tm = t[mask]
    out[mask] = tm ** (-(n - 1)) * np.log2(1.0 / tm) ** (-n / (n + 1.0))
    return out


@dataclasses.dataclass(frozen=True)
class CounterexampleField:
    """The tangentially singular field ``f = g o U``.

    ``g(x', x_n) = profile(|x'|)`` on the opening ``{|x_n| <= C |x'|**2}``, and
    ``U`` is the diagonal frame, so the singular direction is the diagonal.
    ``C`` must be large enough that the opening swallows the quadratic bending
    of the tangency-configured shells; the shell-series diagnostics check that
    empirically rather than assuming it.
    """

    C: float
    n: int = 3

    def __post_init__(self) -> None:
        if self.C < 1.0:
            raise ValueError("opening constant C must be >= 1")
        object.__setattr__(self, "frame", diagonal_frame(self.n))

    frame: Array = dataclasses.field(init=False, repr=False)

    def __call__(self, points: Array) -> Array:
        coords = np.asarray(points, dtype=float) @ self.frame.T
        tangential = np.linalg.norm(coords[..., : self.n - 1], axis=-1)
        normal = coords[..., self.n - 1]
        opening = np.abs(normal) <= self.C * tangential**2
        return profile_value(tangential, self.n) * opening

    def field(self) -> Field:
        half_width = math.sqrt(0.25 + self.C**2 / 16.0)
        return Field.from_callable(
            self.__call__, np.full(self.n, -half_width), np.full(self.n, half_width)
        )


def counterexample_field(C: float = 4.0, *, n: int = 3, seed: int = 0) -> CounterexampleField:
    """Construct :class:`CounterexampleField`; ``seed`` is accepted for
    interface uniformity but unused — the frame is deterministic."""
    del seed
    return CounterexampleField(float(C), n)


def g_lp_norm(
    p: float, quad_points: int = 20_000, *, n: int = 3, C: float = 4.0
) -> float:
    """L^p norm of the counterexample profile, or ``inf`` when divergent.

    The slab-opening geometry reduces ``int g**p`` to a radial integral which,
    after substituting ``t = 2**-u``, becomes

        2*C * area(S^{n-2}) * ln2 * int_1^inf 2**(-alpha*u) * u**(-beta) du

    with ``alpha = n + 1 - (n-1)*p`` and ``beta = n*p/(n+1)``.  The integral is
    evaluated over doubling windows ``[2^j, 2^(j+1)]`` (the image of halving
    the inner radial cutoff repeatedly): growing window contributions mean the
    cutoff integrals blow up and the result is ``inf``; decaying windows are
    summed with a geometric tail extrapolation, which is exact in the critical
    case ``alpha = 0`` (pure power integrand) and conservative otherwise.  Two
    consecutive window counts must agree to 1e-8 relative before the sum is
    accepted (a Richardson-style stopping check).
    """
    if p < 1.0:
        raise ValueError("p must be at least 1")
    if quad_points < 100:
        raise ValueError("quad_points must be at least 100")
    alpha = n + 1 - (n - 1) * p
    beta = n * p / (n + 1.0)
    limit = max(50, quad_points // 100)

    def integrand(u: float) -> float:
        return math.exp(-alpha * u * math.log(2.0)) * u**-beta

    scale = 2.0 * C * sphere_area(n - 1) * math.log(2.0)
    total_prev = None
    partial = 0.0
    window_prev = None
    for j in range(60):
        lo, hi = 2.0**j, 2.0 ** (j + 1)
        if alpha < 0.0 and -alpha * hi * math.log(2.0) > 500.0:
            return math.inf  # integrand overflows float range: certainly divergent
        window, _ = quad(integrand, lo, hi, limit=limit, epsabs=0.0, epsrel=1e-12)
        if window_prev is not None and window_prev > 0.0:
            ratio = window / window_prev
            if ratio >= 0.98 and window > 1e-300:
                return math.inf
        else:
            ratio = 0.0
        partial += window
        tail = window * ratio / (1.0 - ratio) if 0.0 < ratio < 1.0 else 0.0
        total = partial + tail
        if total_prev is not None and abs(total - total_prev) <= 1e-8 * abs(total):
            return (scale * total) ** (1.0 / p)
        total_prev = total
        window_prev = window
        if window == 0.0:
            break
    return (scale * total_prev) ** (1.0 / p)


@dataclasses.dataclass(frozen=True)
class ShellSeries:
    """Per-shell surface integrals of ``|f|`` and their running sums.

    ``terms[l-1]`` is the integral of ``|f|`` over the l-th dyadic tangential
    shell of the configured surface, normalised by the total surface measure
    (estimated once, ``surface_measure``).  ``survivors`` counts samples inside
    the support of ``f``; shells below the survivor threshold are flagged
    rather than dropped.  ``normal_extent[l-1]`` is the largest ``|<omega, N>|``
    seen on shell ``l`` in curvature units (rescaled by ``2**l``) — bounded
    values certify that the opening constant of the field swallows the shell.
    """

    terms: Array
    std_errors: Array
    survivors: Array
    low_confidence: Array
    normal_extent: Array
    surface_measure: float
    m: int

    @property
    def partial_sums(self) -> Array:
        return np.cumsum(self.terms)

    @property
    def partial_sum_errors(self) -> Array:
        return np.sqrt(np.cumsum(self.std_errors**2))

    def __len__(self) -> int:
        return self.terms.shape[0]


def shell_partial_sums(
    x: Array,
    r_x: Array,
    L: int,
    m: int,
    *,
    seed: int = 0,
    C: float = 4.0,
    min_survivors: Optional[int] = None,
) -> ShellSeries:
    """Partial sums of the shell series for the counterexample field.

    ``(x, r_x)`` must be a tangency configuration (surface through 0, tangent
    plane orthogonal to the diagonal — e.g. a :func:`sample_tangency_set`
    draw).  Shell ``l`` is the band of the surface at tangential distance
    ``2**-(l+1)/2 < |proj_V omega| <= 2**(-l/2)`` from the tangency point; the
    term is the mean of ``|f|`` over the band against surface measure, divided
    by the total surface measure.

    Sampling parameterises each band over its tangential annulus: draw ``v``
    uniform in the annulus, solve the shell's quadratic for the normal offset
    ``s(v)`` (small root, in the stable form), and weight by the graph area
    element ``|grad F| / |<grad F, N>|``.  Everything runs in the rescaled
    coordinates ``w = 2**(l/2) v``; the quadratic's constant term is replaced
    by its curvature part, the piece that survives exact tangency — the
    dropped terms vanish identically there and would otherwise be amplified
    by ``2**l`` into garbage.  Per-shell streams are independent of ``L``, so
    extending a series re-produces its prefix exactly.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r_x, dtype=float)
    n = x.shape[0]
    if r.shape != (n,):
        raise ValueError("x and r_x must be vectors of matching dimension")
    if L < 4:
        raise ValueError("need at least 4 shells")
    if m < 16:
        raise ValueError("need at least 16 samples per shell")
    residual = float(abs(geo.defining_value(x, r, np.zeros(n))))
    if residual > 1e-9:
        raise ValueError(
            f"(x, r_x) is not a tangency configuration: |F(0)| = {residual:.3e}"
        )
    if min_survivors is None:
        min_survivors = max(4, m // 16)

    frame = diagonal_frame(n)
    tangent_rows = frame[: n - 1]
    normal = frame[n - 1]
    beta = n / (n + 1.0)

    # total surface measure, one Monte Carlo estimate shared by every term
    _, weights = sample_surface(r, 1 << 16, seed, derive_stream("shell-series-area", x, r))
    surface_measure = float(np.mean(weights))

    inner = 2.0 ** (-(n - 1) / 2.0)  # annulus inner radius to the n-1 power
    prefactor = ball_volume(n - 1) * (1.0 - inner) / surface_measure
    quad_coeff = float(np.sum(normal**2 / r**2))
    b0 = -2.0 * float(np.sum(normal * x / r**2))

    terms = np.zeros(L)
    std_errors = np.zeros(L)
    survivors = np.zeros(L, dtype=int)
    normal_extent = np.zeros(L)
    for ell in range(1, L + 1):
        rng = rng_stream(seed, derive_stream("shell-series", ell, x, r))
        gauss = rng.standard_normal((m, n - 1))
        gauss /= np.linalg.norm(gauss, axis=1, keepdims=True)
        radius = (inner + rng.random(m) * (1.0 - inner)) ** (1.0 / (n - 1))
        w = gauss * radius[:, None]

        v_dir = w @ tangent_rows  # unscaled tangential vectors, |v_dir| = |w|
        curvature = np.sum(v_dir**2 / r**2, axis=1)
        b = b0 + 2.0 ** (-ell / 2.0) * 2.0 * np.sum(v_dir * normal / r**2, axis=1)
        disc = np.sqrt(b**2 - 4.0 * (2.0**-ell) * quad_coeff * curvature)
        s_scaled = 2.0 * curvature / (disc - b)  # small root of the shell quadratic

        level = ell / 2.0 + np.log2(1.0 / radius)
        in_support = (level >= 1.0) & (np.abs(s_scaled) <= C * radius**2)
        offset = (2.0 ** (-ell / 2.0)) * v_dir + (2.0**-ell) * s_scaled[:, None] * normal - x
        grad = 2.0 * offset / r**2
        secant = np.linalg.norm(grad, axis=1) / np.abs(grad @ normal)
        values = np.where(
            in_support, radius ** (-(n - 1)) * level**-beta * secant, 0.0
        )
        values *= prefactor
        terms[ell - 1] = float(np.mean(values))
        std_errors[ell - 1] = float(np.std(values, ddof=1) / math.sqrt(m))
        survivors[ell - 1] = int(np.count_nonzero(in_support))
        normal_extent[ell - 1] = float(np.max(np.abs(s_scaled)))

    return ShellSeries(
        terms=terms,
        std_errors=std_errors,
        survivors=survivors,
        low_confidence=survivors < min_survivors,
        normal_extent=normal_extent,
        surface_measure=surface_measure,
        m=m,
    )
