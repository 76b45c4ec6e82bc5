"""I.i.d. symmetric disorder fields and the Green-weighted sums they generate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np
from scipy.special import log_ndtr, ndtri

from .errors import InvalidParameterError, OutOfBoxError
from .green import GreenAccessor
from .lattice import BoxGeometry, ScalarField, SubBox
from .rng import site_uniforms
from .spectral import SpectralPlan, solve_poisson_array


@dataclass(frozen=True)
class StretchedExp:
    """Two-sided law with P(eta >= r) = exp(-c r^alpha) / 2 exactly, r >= 0."""

    alpha: float
    c_alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise InvalidParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.c_alpha > 0.0:
            raise InvalidParameterError(f"c_alpha must be positive, got {self.c_alpha}")

    @property
    def rate(self) -> tuple[float, float]:
        return self.alpha, self.c_alpha

    @property
    def variance(self) -> float:
        return self.c_alpha ** (-2.0 / self.alpha) * math.gamma(1.0 + 2.0 / self.alpha)

    def log_tail(self, r: float) -> float:
        return math.log(0.5) - self.c_alpha * r**self.alpha

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        lower = u < 0.5
        w = np.where(lower, 2.0 * u, 2.0 * (1.0 - u))
        mag = (-np.log(w) / self.c_alpha) ** (1.0 / self.alpha)
        return np.where(lower, -mag, mag)


@dataclass(frozen=True)
class Gaussian:
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise InvalidParameterError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def alpha(self) -> float:
        return 2.0

    @property
    def c_alpha(self) -> float:
        return 1.0 / (2.0 * self.sigma2)

    @property
    def rate(self) -> tuple[float, float]:
        return 2.0, self.c_alpha

    @property
    def variance(self) -> float:
        return self.sigma2

    def log_tail(self, r: float) -> float:
        return float(log_ndtr(-r / math.sqrt(self.sigma2)))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return math.sqrt(self.sigma2) * ndtri(u)


@dataclass(frozen=True)
class BoundedSymmetric:
    """Uniform on [-a, a] or a times a random sign; tails are super-Gaussian."""

    range: float = 1.0
    kind: Literal["uniform", "rademacher"] = "uniform"

    def __post_init__(self):
        if not self.range > 0.0:
            raise InvalidParameterError(f"range must be positive, got {self.range}")
        if self.kind not in ("uniform", "rademacher"):
            raise InvalidParameterError(f"unknown bounded law {self.kind!r}")

    @property
    def alpha(self) -> None:
        return None

    @property
    def rate(self) -> None:
        return None

    @property
    def variance(self) -> float:
        return self.range**2 / 3.0 if self.kind == "uniform" else self.range**2

    def log_tail(self, r: float) -> float:
        if r >= self.range and not (self.kind == "rademacher" and r == self.range):
            return -math.inf
        if self.kind == "rademacher":
            return math.log(0.5)
        return math.log((self.range - r) / (2.0 * self.range))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "uniform":
            return self.range * (2.0 * u - 1.0)
        return np.where(u < 0.5, -self.range, self.range)


TailClass = Union[StretchedExp, Gaussian, BoundedSymmetric]

_VARIANTS = {"stretched_exp": StretchedExp, "gaussian": Gaussian, "bounded": BoundedSymmetric}


def normalized_exponent(tail: TailClass) -> float:
    """alpha wedge 2, read as 2 for super-Gaussian (bounded) tails."""
    return 2.0 if tail.alpha is None else min(tail.alpha, 2.0)


def tail_to_dict(tail: TailClass) -> dict:
    if isinstance(tail, StretchedExp):
        return {"variant": "stretched_exp", "alpha": tail.alpha, "c_alpha": tail.c_alpha}
    if isinstance(tail, Gaussian):
        return {"variant": "gaussian", "sigma2": tail.sigma2, "alpha": 2.0, "c_alpha": tail.c_alpha}
    return {"variant": "bounded", "range": tail.range, "kind": tail.kind}


def tail_from_dict(spec: dict) -> TailClass:
    spec = dict(spec)
    variant = spec.pop("variant", None)
    if variant not in _VARIANTS:
        raise InvalidParameterError(f"unknown tail variant {variant!r}; expected one of {sorted(_VARIANTS)}")
    if variant == "stretched_exp":
        return StretchedExp(float(spec["alpha"]), float(spec.get("c_alpha", 1.0)))
    if variant == "gaussian":
        return Gaussian(float(spec.get("sigma2", 1.0)))
    return BoundedSymmetric(float(spec.get("range", 1.0)), spec.get("kind", "uniform"))


def tail_log_rate(tail: TailClass, r: float) -> float:
    """(1/r^alpha) log P(eta >= r); alpha = 2 is used for bounded laws."""
    if not r > 0:
        raise InvalidParameterError("r must be positive")
    lt = tail.log_tail(r)
    if math.isinf(lt):
        return -math.inf
    return lt / r ** normalized_exponent(tail)


def draw(tail: TailClass, rng: np.random.Generator, shape) -> np.ndarray:
    """Bulk i.i.d. draws for annealed replicates (no site keying)."""
    if isinstance(tail, Gaussian):
        return math.sqrt(tail.sigma2) * rng.standard_normal(shape)
    return tail.from_uniform(rng.random(shape))


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    geometry: BoxGeometry
    values: ScalarField
    tail: TailClass | None
    seed: int | None


def sample_disorder(geom: BoxGeometry, tail: TailClass, seed: int) -> DisorderRealization:
    """eta(x) drawn from a stream keyed by (seed, x), so nested boxes see the same values."""
    u = site_uniforms(seed, "disorder", geom.coordinates())
    vals = tail.from_uniform(u).reshape(geom.shape)
    return DisorderRealization(geom, ScalarField(geom, vals), tail, int(seed))


def fixed_disorder(geom: BoxGeometry, values) -> DisorderRealization:
    """Wrap an explicit field (e.g. eta = 0 or a unit mass) as a realization."""
    field = values if isinstance(values, ScalarField) else ScalarField(geom, values)
    return DisorderRealization(geom, field, None, None)


def mean_field(plan: SpectralPlan, eta: DisorderRealization) -> ScalarField:
    """m_N = (-Delta_N)^{-1} eta."""
    eta.values.require(plan.geometry)
    return ScalarField(plan.geometry, solve_poisson_array(plan, eta.values.values))


Region = Literal["near", "far", "full"]


def weighted_sum(
    acc: GreenAccessor,
    x: Sequence[int],
    region: Region,
    eta: DisorderRealization,
    L: int | None = None,
) -> float:
    """S_A(x) = sum_{y in A} G_N(x, y) eta(y) for A = Lambda_L(x), its complement, or the box."""
    geom = acc.geometry
    if not geom.contains(x):
        raise OutOfBoxError(f"site {tuple(x)} is outside the box")
    eta.values.require(geom)
    terms = acc.column(x).values * eta.values.values
    if region == "full":
        return float(terms.sum())
    if L is None or L < 0 or L > geom.N:
        raise InvalidParameterError("near/far regions need 0 <= L <= N")
    mask = SubBox(tuple(x), L, geom).mask()
    if region == "near":
        return float(terms[mask].sum())
    if region == "far":
        return float(terms[~mask].sum())
    raise InvalidParameterError(f"unknown region {region!r}")
