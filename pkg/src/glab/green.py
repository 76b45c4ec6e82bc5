"""Finite-volume Green functions, infinite-volume extrapolation and Green lattice sums."""

from __future__ import annotations

import itertools
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DivergenceError, InvalidParameterError, NonConvergenceError
from .lattice import BoxGeometry, ScalarField
from .spectral import HeatKernelQuadrature, SpectralPlan, solve_poisson_array


def a_d(d: int) -> float:
    """Constant in G(0, x) ~ a_d |x|^{2-d}."""
    if d < 3:
        raise InvalidParameterError("a_d is defined for d >= 3")
    return d / 2 * math.gamma(d / 2 - 1) * math.pi ** (-d / 2)


def green_1d(N: int, x: int, y: int) -> float:
    """Exact G_N(x, y) in d = 1; G_N(0, x) = N + 1 - |x|."""
    i, j = x + N + 1, y + N + 1
    return 2.0 * min(i, j) * (2 * N + 2 - max(i, j)) / (2 * N + 2)


class GreenAccessor:
    """Exact G_N(x, y) with an LRU cache of Green columns keyed by source site.

    Each column G_N(x, .) costs one Poisson solve. The cache is guarded by a lock
    so concurrent readers are safe.
    """

    def __init__(self, plan: SpectralPlan, max_columns: int = 64):
        self.plan = plan
        self.max_columns = max_columns
        self._cache: OrderedDict[tuple[int, ...], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    @property
    def geometry(self) -> BoxGeometry:
        return self.plan.geometry

    def column(self, x: Sequence[int]) -> ScalarField:
        geom = self.geometry
        key = geom.check_site(x)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return ScalarField(geom, self._cache[key])
        rhs = np.zeros(geom.shape)
        rhs[geom.array_position(key)] = 1.0
        col = solve_poisson_array(self.plan, rhs)
        with self._lock:
            self._cache[key] = col
            self._cache.move_to_end(key)
            while len(self._cache) > self.max_columns:
                self._cache.popitem(last=False)
        return ScalarField(geom, col)

    def __call__(self, x: Sequence[int], y: Sequence[int]) -> float:
        return green_finite(self, x, y)


def green_finite(acc: GreenAccessor, x: Sequence[int], y: Sequence[int]) -> float:
    geom = acc.geometry
    x, y = geom.check_site(x), geom.check_site(y)
    if geom.d == 1:
        return green_1d(geom.N, x[0], y[0])
    return acc.column(x)[y]


@dataclass(frozen=True)
class InfiniteGreenEstimate:
    """G(0, x) on Z^d: ``value`` +/- ``error_bound``; ``lower_bound`` is G_N at the largest radius."""

    value: float
    error_bound: float
    box_radius_used: int
    lower_bound: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.value - self.error_bound, self.value + self.error_bound)


def infinite_green_table(
    d: int,
    points,
    tol: float = 1e-7,
    start_radius: int | None = None,
    max_radius: int = 4096,
):
    """G(0, x) for every row of ``points`` by box doubling and Richardson extrapolation.

    G - G_N has an expansion in powers N^{2-d}, N^{1-d}, ...; a Romberg table over
    doubled radii removes them one at a time. The reported error is the change of
    the extrapolated value between the last two table rows, and refinement stops
    once it is below ``tol`` for every point (at least three radii are used).

    Returns (values, errors, lower_bounds, radius), where the lower bounds are the
    finite-box values at the largest radius (G_N increases to G).
    """
    if d < 3:
        raise InvalidParameterError("the infinite-volume Green function needs d >= 3")
    points = np.atleast_2d(np.asarray(points, dtype=np.int64))
    span = int(np.abs(points).max()) if points.size else 0
    radius = start_radius or max(8, 2 * span + 4)
    rows: list[list[np.ndarray]] = []
    while True:
        if radius > max_radius:
            best = rows[-1][-1] if rows else None
            raise NonConvergenceError(
                f"radius cap {max_radius} reached before tolerance {tol}", best=best
            )
        g = HeatKernelQuadrature(d, radius).entries((0,) * d, points)
        row = [g]
        if rows:
            for j in range(1, len(rows) + 1):
                factor = 2.0 ** (d - 3 + j)
                row.append(row[j - 1] + (row[j - 1] - rows[-1][j - 1]) / (factor - 1.0))
        rows.append(row)
        if len(rows) >= 3:
            err = np.abs(rows[-1][-1] - rows[-2][-1])
            err = np.maximum(err, 1e-14 * np.abs(rows[-1][-1]))
            if np.all(err <= tol):
                return rows[-1][-1], err, g, radius
        radius *= 2


def green_infinite(d: int, x: Sequence[int], tol: float = 1e-7, **kwargs) -> InfiniteGreenEstimate:
    """Certified-by-bracket estimate of G(0, x) on Z^d, d >= 3."""
    if d < 3:
        raise InvalidParameterError("green_infinite requires d >= 3 (the walk must be transient)")
    if len(x) != d:
        raise InvalidParameterError("site dimension does not match d")
    vals, errs, lows, radius = infinite_green_table(d, [tuple(x)], tol, **kwargs)
    return InfiniteGreenEstimate(float(vals[0]), float(errs[0]), int(radius), float(lows[0]))


def g_star(d: int, tol: float = 1e-7) -> InfiniteGreenEstimate:
    return green_infinite(d, (0,) * d, tol)


def symmetry_classes(d: int, L: int, shell_only: bool = False):
    """Representatives 0 <= a_1 <= ... <= a_d <= L of Lambda_L under the hyperoctahedral group.

    Returns (representatives, multiplicities). With ``shell_only`` only |x|_inf = L is kept.
    """
    reps, mult = [], []
    fact_d = math.factorial(d)
    for combo in itertools.combinations_with_replacement(range(L + 1), d):
        if shell_only and combo[-1] != L:
            continue
        counts = np.bincount(combo)
        perms = fact_d // math.prod(math.factorial(int(c)) for c in counts if c)
        nonzero = sum(1 for c in combo if c)
        reps.append(combo)
        mult.append(perms * 2**nonzero)
    return np.array(reps, dtype=np.int64).reshape(-1, d), np.array(mult, dtype=np.int64)


def epstein_zeta(d: int, p: float) -> float:
    """sum over nonzero x in Z^d of |x|_2^{-p}, for p > d, by the theta-function splitting."""
    if p <= d:
        raise DivergenceError(f"lattice sum of |x|^-{p} diverges in d={d}")
    n = np.arange(-12, 13)

    def theta_minus_one(t):
        return np.sum(np.exp(-np.pi * n**2 * t)) ** d - 1.0

    # theta - 1 ~ 2d e^{-pi t}, so nothing past t = 60 is visible in double precision
    a, _ = integrate.quad(lambda t: t ** (p / 2 - 1) * theta_minus_one(t), 1, 60, epsabs=0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(lambda t: t ** ((d - p) / 2 - 1) * theta_minus_one(t), 1, 60, epsabs=0, epsrel=1e-12, limit=200)
    return math.pi ** (p / 2) / math.gamma(p / 2) * (a + b + 2 / (p - d) - 2 / p)


def _power_tail(d: int, p: float, L: int) -> float:
    """sum over |x|_inf > L of |x|_2^{-p}."""
    reps, mult = symmetry_classes(d, L)
    r = np.sqrt(np.sum(reps.astype(float) ** 2, axis=1))
    keep = r > 0
    return epstein_zeta(d, p) - float(np.sum(mult[keep] * r[keep] ** (-p)))


@dataclass(frozen=True)
class LatticeSum:
    value: float
    error: float
    L: int | None
    partial: float = float("nan")
    tail_low: float = 0.0
    tail_high: float = 0.0


def conjugate_exponent(alpha: float) -> float:
    return alpha / (alpha - 1.0)


def g_star_alpha_sum(d: int, alpha: float, L: int | None, tol: float = 1e-3, max_L: int = 16) -> LatticeSum:
    """sum of G(0, x)^{alpha/(alpha-1)} over Lambda_L, or over Z^d when ``L`` is None.

    For the full lattice the sum over Lambda_L is completed with the envelope
    G_- |x|^{2-d} <= G(0, x) <= G_+ |x|^{2-d}, the constants taken from the
    outermost computed shell together with the asymptotic constant a_d; L grows
    until the resulting bracket is narrower than ``tol``.
    """
    if not 1.0 < alpha <= 2.0:
        raise InvalidParameterError(f"alpha must lie in (1, 2], got {alpha}")
    if d < 3:
        raise InvalidParameterError("Green lattice sums need d >= 3")
    ab = conjugate_exponent(alpha)
    if L is not None:
        return _finite_sum(d, ab, L)
    if d <= 2 * alpha:
        raise DivergenceError(f"G*_(alpha) diverges unless d > 2 alpha (d={d}, alpha={alpha})")
    p = (d - 2) * ab
    Lc = 4
    while True:
        reps, mult = symmetry_classes(d, Lc)
        vals, errs, _, _ = infinite_green_table(d, reps, tol=min(1e-7, tol * 1e-3))
        partial = float(np.sum(mult * vals**ab))
        partial_err = float(np.sum(mult * ab * vals ** (ab - 1) * errs))
        shell = reps.max(axis=1) == Lc
        rad = np.sqrt(np.sum(reps[shell].astype(float) ** 2, axis=1))
        scaled = vals[shell] * rad ** (d - 2)
        g_hi = max(a_d(d), float(scaled.max()))
        g_lo = min(a_d(d), float(scaled.min()))
        tail = _power_tail(d, p, Lc)
        lo, hi = g_lo**ab * tail, g_hi**ab * tail
        err = 0.5 * (hi - lo) + partial_err
        if err <= tol:
            return LatticeSum(partial + 0.5 * (lo + hi), err, None, partial, lo, hi)
        if Lc >= max_L:
            best = LatticeSum(partial + 0.5 * (lo + hi), err, None, partial, lo, hi)
            raise NonConvergenceError(f"G*_(alpha) bracket {err:.3g} above tol {tol} at L={Lc}", best=best)
        Lc = min(2 * Lc, max_L)


def _finite_sum(d: int, ab: float, L: int) -> LatticeSum:
    reps, mult = symmetry_classes(d, L)
    vals, errs, _, _ = infinite_green_table(d, reps)
    total = float(np.sum(mult * vals**ab))
    err = float(np.sum(mult * ab * vals ** (ab - 1) * errs))
    return LatticeSum(total, err, L, total)


def g_star_alpha(d: int, alpha: float, L: int | float | None, tol: float = 1e-3) -> float:
    """G*_{L,(alpha)} for finite L, or G*_{(alpha)} for L = infinity (``None`` or ``math.inf``)."""
    if L is not None and math.isinf(L):
        L = None
    return g_star_alpha_sum(d, alpha, None if L is None else int(L), tol).value


def inverse_square_at_origin(plan: SpectralPlan) -> float:
    """(-Delta_N)^{-2}(0, 0) = sum_k psi_k(0)^2 / nu_k^2, from the spectral side."""
    d, N = plan.d, plan.N
    return float(HeatKernelQuadrature(d, N, power=2).entries((0,) * d, [(0,) * d])[0])
