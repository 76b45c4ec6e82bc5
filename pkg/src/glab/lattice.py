"""Box geometry, sub-boxes and scalar fields on the Dirichlet box [-N, N]^d."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import GeometryMismatchError, InvalidParameterError, OutOfBoxError, VolumeCapError

DEFAULT_VOLUME_CAP = 2**27

Site = tuple[int, ...]


def volume_cap() -> int:
    """Current site cap; the ``GLAB_VOLUME_CAP`` environment variable overrides the default."""
    raw = os.environ.get("GLAB_VOLUME_CAP")
    if raw is None:
        return DEFAULT_VOLUME_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise InvalidParameterError(f"GLAB_VOLUME_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise InvalidParameterError("GLAB_VOLUME_CAP must be positive")
    return cap


@dataclass(frozen=True)
class BoxGeometry:
    """The box Lambda_N = [-N, N]^d with row-major linear indexing.

    Coordinate ``x_i`` is stored at array position ``x_i + N`` along axis ``i``.
    """

    d: int
    N: int

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def volume(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(-self.N <= int(c) <= self.N for c in x)

    def check_site(self, x: Sequence[int]) -> Site:
        if not self.contains(x):
            raise OutOfBoxError(f"site {tuple(x)} is outside Lambda_{self.N} in d={self.d}")
        return tuple(int(c) for c in x)

    def index(self, x: Sequence[int]) -> int:
        x = self.check_site(x)
        return int(np.ravel_multi_index(tuple(c + self.N for c in x), self.shape))

    def site(self, i: int) -> Site:
        if not 0 <= i < self.volume:
            raise OutOfBoxError(f"index {i} outside [0, {self.volume})")
        return tuple(int(c) - self.N for c in np.unravel_index(i, self.shape))

    def array_position(self, x: Sequence[int]) -> tuple[int, ...]:
        return tuple(c + self.N for c in self.check_site(x))

    def coordinates(self) -> np.ndarray:
        """All sites as an integer array of shape (volume, d), in index order."""
        axes = [np.arange(-self.N, self.N + 1)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def sites(self) -> Iterator[Site]:
        for i in range(self.volume):
            yield self.site(i)


def make_box(d: int, N: int) -> BoxGeometry:
    """Build Lambda_N in dimension d, refusing boxes above the volume cap."""
    if int(d) != d or d < 1:
        raise InvalidParameterError(f"dimension must be a positive integer, got {d}")
    if int(N) != N or N < 0:
        raise InvalidParameterError(f"radius must be a non-negative integer, got {N}")
    d, N = int(d), int(N)
    cap = volume_cap()
    # log comparison avoids building huge integers for absurd d
    if d * math.log(2 * N + 1) > math.log(cap) + 1e-12:
        raise VolumeCapError(f"(2N+1)^d = {2 * N + 1}^{d} exceeds the volume cap {cap}")
    return BoxGeometry(d, N)


def neighbors(geom: BoxGeometry, x: Sequence[int]) -> list[Site]:
    """Nearest neighbours of ``x`` that lie inside the box (Dirichlet sites are omitted)."""
    x = geom.check_site(x)
    out = []
    for axis in range(geom.d):
        for step in (-1, 1):
            y = list(x)
            y[axis] += step
            if -geom.N <= y[axis] <= geom.N:
                out.append(tuple(y))
    return out


def inner_radius(N: int, eps: float) -> int:
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps}")
    # the small offset keeps e.g. (1 - 0.1) * 10 = 8.999... from flooring to 8
    return int(math.floor((1.0 - eps) * N + 1e-9))


def inner_box_sites(geom: BoxGeometry, eps: float) -> list[Site]:
    """Sites of Lambda_{floor((1-eps)N)}, the region carrying the hard wall."""
    r = inner_radius(geom.N, eps)
    return list(SubBox((0,) * geom.d, r, geom).sites())


def inner_box_mask(geom: BoxGeometry, eps: float) -> np.ndarray:
    return SubBox((0,) * geom.d, inner_radius(geom.N, eps), geom).mask()


@dataclass(frozen=True)
class SubBox:
    """Lambda_L(x) = x + Lambda_L intersected with the parent box."""

    center: Site
    radius: int
    parent: BoxGeometry

    def __post_init__(self):
        if len(self.center) != self.parent.d:
            raise InvalidParameterError("center has the wrong dimension")
        if self.radius < 0:
            raise InvalidParameterError("sub-box radius must be non-negative")

    def contains(self, y: Sequence[int]) -> bool:
        return self.parent.contains(y) and all(
            abs(int(a) - int(c)) <= self.radius for a, c in zip(y, self.center)
        )

    def _ranges(self) -> list[range]:
        N = self.parent.N
        return [
            range(max(c - self.radius, -N), min(c + self.radius, N) + 1) for c in self.center
        ]

    def sites(self) -> Iterator[Site]:
        ranges = self._ranges()
        if any(len(r) == 0 for r in ranges):
            return
        for idx in np.ndindex(*(len(r) for r in ranges)):
            yield tuple(r[i] for r, i in zip(ranges, idx))

    def slices(self) -> tuple[slice, ...]:
        N = self.parent.N
        return tuple(slice(r.start + N, r.stop + N) for r in self._ranges())

    def mask(self) -> np.ndarray:
        m = np.zeros(self.parent.shape, dtype=bool)
        m[self.slices()] = True
        return m


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite real value per site, stored as a d-dimensional array."""

    geometry: BoxGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.geometry.volume:
            raise GeometryMismatchError(
                f"field has {vals.size} entries, box has {self.geometry.volume}"
            )
        vals = vals.reshape(self.geometry.shape)
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, geom: BoxGeometry) -> ScalarField:
        return cls(geom, np.zeros(geom.shape))

    @classmethod
    def constant(cls, geom: BoxGeometry, c: float) -> ScalarField:
        return cls(geom, np.full(geom.shape, float(c)))

    @classmethod
    def delta(cls, geom: BoxGeometry, x: Sequence[int]) -> ScalarField:
        v = np.zeros(geom.shape)
        v[geom.array_position(x)] = 1.0
        return cls(geom, v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __getitem__(self, x: Sequence[int]) -> float:
        return float(self.values[self.geometry.array_position(x)])

    def require(self, geom: BoxGeometry) -> None:
        if self.geometry != geom:
            raise GeometryMismatchError(
                f"field lives on d={self.geometry.d}, N={self.geometry.N}; "
                f"expected d={geom.d}, N={geom.N}"
            )
