"""Closed-form limit constants and a random-walk estimate of discrete capacity.

The constants depend on the disorder tail through four regimes:

* stretched-exponential tails with alpha <= 1, governed by G* alone;
* 1 < alpha < 2, governed by the lattice sum G*_(alpha) = sum_x G(0, x)^{alpha/(alpha-1)};
* alpha = 2, where the field and the disorder compete on the same scale;
* super-Gaussian tails (bounded disorder), where the free field wins.

Every Green-function input carries an error bar; since each constant is
monotone in its inputs, intervals propagate by evaluating at the endpoints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .disorder import TailClass, tail_to_dict
from .errors import DivergenceError, InvalidParameterError
from .green import a_d, g_star, g_star_alpha_sum

from .rng import generator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Bound:
    value: float
    error: float = 0.0

    @property
    def lo(self) -> float:
        return self.value - self.error

    @property
    def hi(self) -> float:
        return self.value + self.error

    def to_dict(self) -> dict:
        return {"value": self.value, "error": self.error}


def _regime(tail: TailClass) -> str:
    if tail.alpha is None:
        return "super-gaussian"
    if tail.alpha <= 1.0:
        return "alpha<=1"
    if tail.alpha < 2.0:
        return "1<alpha<2"
    return "alpha=2"


def _monotone(f, *bounds: Bound, increasing=True) -> Bound:
    value = f(*(b.value for b in bounds))
    lo = f(*(max(b.lo, 0.0) for b in bounds))
    hi = f(*(b.hi for b in bounds))
    if not increasing:
        lo, hi = hi, lo
    return Bound(value, max(abs(value - lo), abs(hi - value)))


def needs_g_alpha(tail: TailClass) -> bool:
    return _regime(tail) in ("1<alpha<2", "alpha=2")


def check_dimension(d: int, tail: TailClass) -> None:
    if needs_g_alpha(tail) and d <= 2 * tail.alpha:
        raise DivergenceError(f"G*_(alpha) is infinite for d={d} <= 2 alpha = {2 * tail.alpha}")
    if d < 5:
        log.warning("d=%d is outside the d >= 5 range of the limit theorem; exploratory use only", d)


def compute_M_star(d: int, tail: TailClass, gs: Bound, g_alpha: Bound | None = None) -> Bound:
    """Leading constant of max phi / (log N)^{1/(alpha ^ 2)}."""
    check_dimension(d, tail)
    regime = _regime(tail)
    if regime == "super-gaussian":
        return _monotone(lambda g: math.sqrt(2 * d * g), gs)
    a, c = tail.alpha, tail.c_alpha
    if regime == "alpha<=1":
        return _monotone(lambda g: (d / c) ** (1 / a) * g, gs)
    if g_alpha is None:
        raise InvalidParameterError("G*_(alpha) is required for alpha in (1, 2]")
    if regime == "1<alpha<2":
        return _monotone(lambda ga: (d / c) ** (1 / a) * ga ** ((a - 1) / a), g_alpha)
    return _monotone(lambda g, ga: math.sqrt(2 * d * g + d / c * ga), gs, g_alpha)


def compute_K(d: int, tail: TailClass, gs: Bound, g_alpha_L: Bound | None = None) -> Bound | None:
    """Deviation-rate constant of Green-weighted sums; ``None`` for super-Gaussian tails.

    For alpha in (1, 2] pass G*_{L,(alpha)} (finite L) or G*_(alpha) (L = infinity).
    """
    regime = _regime(tail)
    if regime == "super-gaussian":
        return None
    a, c = tail.alpha, tail.c_alpha
    if regime == "alpha<=1":
        return _monotone(lambda g: c / g**a, gs, increasing=False)
    if g_alpha_L is None:
        raise InvalidParameterError("G*_{L,(alpha)} is required for alpha in (1, 2]")
    return _monotone(lambda ga: c / ga ** (a - 1), g_alpha_L, increasing=False)


def compute_R_star(d: int, tail: TailClass, gs: Bound, g_alpha: Bound | None = None) -> Bound:
    """Constant in front of the capacity in the hard-wall decay rate."""
    check_dimension(d, tail)
    regime = _regime(tail)
    if regime == "super-gaussian":
        return _monotone(lambda g: 2 * g, gs)
    a, c = tail.alpha, tail.c_alpha
    pref = 0.5 * (2 / c) ** (2 / a)
    if regime == "alpha<=1":
        return _monotone(lambda g: pref * g**2, gs)
    if g_alpha is None:
        raise InvalidParameterError("G*_(alpha) is required for alpha in (1, 2]")
    if regime == "1<alpha<2":
        return _monotone(lambda ga: pref * ga ** ((2 * a - 2) / a), g_alpha)
    return _monotone(lambda g, ga: 2 * g + ga / c, gs, g_alpha)


@dataclass
class CapacityEstimate:
    eps: float
    n: int
    box_radius: int
    value: float
    se: float
    rescaled: float
    rescaled_se: float
    walkers: int
    truncation_radius: int
    unresolved: int = 0


def _outer_edge_starts(d: int, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws of y = a + e with a on a face of Lambda_k and y outside it.

    The box has 2d (2k+1)^{d-1} such boundary edges, one per (face, face site).
    """
    axis = rng.integers(0, d, count)
    sign = rng.integers(0, 2, count) * 2 - 1
    pos = rng.integers(-k, k + 1, (count, d))
    pos[np.arange(count), axis] = sign * (k + 1)
    return pos


def escape_walks(starts: np.ndarray, k: int, R: int, rng: np.random.Generator, max_steps: int):
    """Run walks from ``starts`` until they enter Lambda_k or reach |x|_2 >= R.

    Returns (escaped mask, exit radii, unresolved count); walkers still running
    after ``max_steps`` are reported as unresolved.
    """
    W, d = starts.shape
    pos = starts.copy()
    active = np.arange(W)
    escaped = np.zeros(W, dtype=bool)
    exit_radius = np.full(W, np.nan)
    R2 = R * R
    for _ in range(max_steps):
        if active.size == 0:
            break
        p = pos[active]
        inside = np.abs(p).max(axis=1) <= k
        r2 = np.einsum("ij,ij->i", p, p)
        out = r2 >= R2
        escaped[active[out]] = True
        exit_radius[active[out]] = np.sqrt(r2[out])
        active = active[~(inside | out)]
        axis = rng.integers(0, d, active.size)
        step = rng.integers(0, 2, active.size) * 2 - 1
        pos[active, axis] += step
    return escaped, exit_radius, int(active.size)


def discrete_capacity(
    d: int, k: int, walkers: int, seed: int, R: int | None = None, max_steps: int | None = None
) -> tuple[float, float, int, int]:
    """Capacity of Lambda_k in Z^d from escape probabilities of random walks.

    Cap(A) = sum_{a in A} P_a(no return to A) = (1/2d) sum over boundary edges
    (a, y) of P_y(never hit A); walkers start at the outer endpoints y, whose
    escape probabilities are of order one. Walks stop at Euclidean radius R.
    A walker stopped at distance r still hits A later with probability about
    Cap * a_d r^{2-d}, so the truncated sum T obeys Cap = T (1 - Cap * g), g the
    mean of a_d r^{2-d} over exit points. Unresolved walkers (step budget
    exhausted) count as failures and their share is added to the SE.
    Returns (capacity, standard error, R, unresolved walkers).
    """
    if d < 3:
        raise InvalidParameterError("capacity of finite sets is zero for recurrent walks (d < 3)")
    R = R or 4 * k + 12
    max_steps = max_steps or 200 * R * R
    rng = generator(seed, "capacity", d, k)
    starts = _outer_edge_starts(d, k, walkers, rng)
    escaped, radii, unresolved = escape_walks(starts, k, R, rng, max_steps)
    edges = float((2 * k + 1) ** (d - 1))  # 2d faces x (2k+1)^{d-1} sites, weight 1/2d
    p = escaped.mean()
    T = edges * p
    T_se = edges * (math.sqrt(p * (1 - p) / walkers) + unresolved / walkers)
    g = float(np.mean(a_d(d) * radii[escaped] ** (2 - d))) if escaped.any() else a_d(d) * R ** (2 - d)
    cap = T / (1 + T * g)
    se = T_se / (1 + T * g) ** 2
    return cap, se, R, unresolved


def estimate_capacity(
    d: int,
    eps: float,
    n_values=(8, 16),
    walkers: int = 20000,
    seed: int = 0,
    max_steps: int | None = None,
) -> tuple[list[CapacityEstimate], Bound]:
    """Capacity of Lambda_{floor((1-eps)n)} rescaled by n^{-(d-2)}, plus a linear-in-1/n extrapolation.

    The normalisation is that of the walk Green function (G(0,0) counts the
    visit at time zero), so a single site has capacity 1/G*. How this compares
    with a continuum Newtonian capacity depends on conventions that are not
    fixed here; the rescaled numbers are reported as they are.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError("eps must lie in (0, 1)")
    rows = []
    for n in n_values:
        k = int(math.floor((1 - eps) * n + 1e-9))
        cap, se, R, unresolved = discrete_capacity(d, k, walkers, seed + n, max_steps=max_steps)
        if unresolved:
            log.warning("walk budget exhausted for %d walkers at n=%d; SE widened", unresolved, n)
        scale = float(n) ** (d - 2)
        rows.append(CapacityEstimate(eps, n, k, cap, se, cap / scale, se / scale, walkers, R, unresolved))
    if len(rows) >= 2:
        design = np.column_stack([np.ones(len(rows)), [1.0 / r.n for r in rows]])
        coef = np.linalg.pinv(design)[0]  # intercept as a linear map of the data
        y = np.array([r.rescaled for r in rows])
        se = np.array([r.rescaled_se for r in rows])
        extrap = Bound(float(coef @ y), float(np.sqrt(np.sum((coef * se) ** 2))))
    else:
        extrap = Bound(rows[0].rescaled, rows[0].rescaled_se)
    return rows, extrap


@dataclass
class ConstantsReport:
    d: int
    tail: TailClass
    G_star: Bound
    G_star_alpha: Bound | None
    G_star_L_alpha: dict[int, Bound]
    K: Bound | None
    K_L: dict[int, Bound]
    M_star: Bound
    R_star: Bound
    capacity: list[CapacityEstimate] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "tail": tail_to_dict(self.tail),
            "G_star": self.G_star.to_dict(),
            "G_star_alpha": self.G_star_alpha.to_dict() if self.G_star_alpha else None,
            "G_star_L_alpha": {str(L): b.to_dict() for L, b in self.G_star_L_alpha.items()},
            "K": self.K.to_dict() if self.K else None,
            "K_L": {str(L): b.to_dict() for L, b in self.K_L.items()},
            "M_star": self.M_star.to_dict(),
            "R_star": self.R_star.to_dict(),
            "capacity": [
                {"eps": c.eps, "n": c.n, "value": c.rescaled, "se": c.rescaled_se, "raw": c.value, "raw_se": c.se}
                for c in self.capacity
            ],
            "warnings": list(self.warnings),
        }


def constants_report(
    d: int,
    tail: TailClass,
    L_values=(),
    tol: float = 1e-7,
    alpha_tol: float = 1e-3,
    capacity_eps=(),
    capacity_walkers: int = 20000,
    seed: int = 0,
) -> ConstantsReport:
    warnings = []
    if d < 5:
        warnings.append(f"d={d} < 5: outside the scope of the limit theorems")
    est = g_star(d, tol)
    gs = Bound(est.value, est.error_bound)
    g_alpha = None
    g_L: dict[int, Bound] = {}
    K_L: dict[int, Bound] = {}
    if needs_g_alpha(tail):
        s = g_star_alpha_sum(d, tail.alpha, None, alpha_tol)
        g_alpha = Bound(s.value, s.error)
        for L in L_values:
            sL = g_star_alpha_sum(d, tail.alpha, int(L))
            g_L[int(L)] = Bound(sL.value, sL.error)
            K_L[int(L)] = compute_K(d, tail, gs, g_L[int(L)])
    elif _regime(tail) == "alpha<=1":
        for L in L_values:
            K_L[int(L)] = compute_K(d, tail, gs)
    caps = []
    for eps in capacity_eps:
        rows, _ = estimate_capacity(d, eps, walkers=capacity_walkers, seed=seed)
        caps.extend(rows)
    return ConstantsReport(
        d=d,
        tail=tail,
        G_star=gs,
        G_star_alpha=g_alpha,
        G_star_L_alpha=g_L,
        K=compute_K(d, tail, gs, g_alpha),
        K_L=K_L,
        M_star=compute_M_star(d, tail, gs, g_alpha),
        R_star=compute_R_star(d, tail, gs, g_alpha),
        capacity=caps,
        warnings=warnings,
    )
