"""Sine-basis diagonalisation of the Dirichlet Laplacian on Lambda_N.

The normalised operator is ``(Delta_N f)(x) = (1/2d) sum_{y~x, y in box} f(y) - f(x)``.
Its eigenvectors are tensor products of
``sqrt(2/(2N+2)) sin(pi k (x + N + 1) / (2N + 2))`` with eigenvalues
``-nu_k``, ``nu_k = (1/d) sum_i (1 - cos(pi k_i / (2N + 2)))``. The orthonormal
type-I DST is its own inverse and maps fields to coefficients in this basis.

Besides the transform-based kernels this module offers a heat-kernel route for
single Green entries on boxes too large to materialise: writing
``1/nu^p = Gamma(p)^{-1} int t^{p-1} e^{-t nu} dt`` makes the d-dimensional
spectral sum a one-dimensional integral of a product of 1-D heat kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .lattice import BoxGeometry, ScalarField
from .rng import generator


def axis_eigenvalues(N: int) -> np.ndarray:
    """1 - cos(pi k / (2N+2)) for k = 1..2N+1."""
    k = np.arange(1, 2 * N + 2)
    return 1.0 - np.cos(np.pi * k / (2 * N + 2))


def axis_modes(N: int, coords) -> np.ndarray:
    """Orthonormal 1-D sine modes evaluated at integer coordinates: shape (len(coords), 2N+1)."""
    coords = np.asarray(coords, dtype=float).reshape(-1)
    k = np.arange(1, 2 * N + 2)
    n1 = 2 * N + 2
    return math.sqrt(2.0 / n1) * np.sin(np.pi * np.outer(coords + N + 1, k) / n1)


def dst(values: np.ndarray, axes=None) -> np.ndarray:
    """Orthonormal type-I sine transform over ``axes`` (self-inverse)."""
    return sfft.dstn(values, type=1, norm="ortho", axes=axes)


@dataclass(frozen=True)
class SpectralPlan:
    geometry: BoxGeometry

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def N(self) -> int:
        return self.geometry.N

    @cached_property
    def axis_eigenvalues(self) -> np.ndarray:
        return axis_eigenvalues(self.N)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """nu_k on the full d-dimensional mode grid."""
        lam = self.axis_eigenvalues
        nu = np.zeros(self.geometry.shape)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = lam.size
            nu = nu + lam.reshape(shape)
        nu /= self.d
        nu.setflags(write=False)
        return nu

    @property
    def min_eigenvalue(self) -> float:
        return float(self.axis_eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.axis_eigenvalues[-1])

    def _axes(self, batched: bool):
        return tuple(range(1, self.d + 1)) if batched else None

    def forward(self, values: np.ndarray, batched: bool = False) -> np.ndarray:
        return dst(values, self._axes(batched))

    inverse = forward


def make_plan(geom: BoxGeometry) -> SpectralPlan:
    return SpectralPlan(geom)


def neg_laplacian_array(values: np.ndarray, batched: bool = False) -> np.ndarray:
    """(-Delta_N) applied by the direct stencil; the leading axis is a batch axis if ``batched``."""
    spatial = values.ndim - 1 if batched else values.ndim
    offset = 1 if batched else 0
    pad = [(0, 0)] * offset + [(1, 1)] * spatial
    padded = np.pad(values, pad)
    acc = np.zeros_like(values, dtype=float)
    for axis in range(offset, offset + spatial):
        lo = [slice(None)] * offset + [slice(1, -1)] * spatial
        hi = list(lo)
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        acc += padded[tuple(lo)] + padded[tuple(hi)]
    return values - acc / (2 * spatial)


def apply_laplacian(plan: SpectralPlan, f: ScalarField) -> ScalarField:
    """Delta_N f by the nearest-neighbour stencil, no transform involved."""
    f.require(plan.geometry)
    return ScalarField(plan.geometry, -neg_laplacian_array(f.values))


def solve_poisson_array(plan: SpectralPlan, rhs: np.ndarray, batched: bool = False) -> np.ndarray:
    coeff = plan.forward(rhs, batched) / plan.eigenvalues
    return plan.inverse(coeff, batched)


def solve_poisson(plan: SpectralPlan, rhs: ScalarField) -> ScalarField:
    """u with (-Delta_N) u = rhs."""
    rhs.require(plan.geometry)
    return ScalarField(plan.geometry, solve_poisson_array(plan, rhs.values))


def inverse_power_array(plan: SpectralPlan, rhs: np.ndarray, power: int) -> np.ndarray:
    coeff = plan.forward(rhs) / plan.eigenvalues**power
    return plan.inverse(coeff)


def sample_gff_batch(plan: SpectralPlan, seed: int, count: int) -> np.ndarray:
    """``count`` independent GFF samples, shape (count, *box shape)."""
    rng = generator(seed, "gff")
    xi = rng.standard_normal((count,) + plan.geometry.shape)
    return plan.inverse(xi / np.sqrt(plan.eigenvalues), batched=True)


def sample_gff(plan: SpectralPlan, rng_seed: int) -> ScalarField:
    """One exact sample of the centred field with covariance (-Delta_N)^{-1}."""
    return ScalarField(plan.geometry, sample_gff_batch(plan, rng_seed, 1)[0])


def shifted_log_weights(plan: SpectralPlan, phi: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """log of dP_0/dP_h at phi + h, for a batch of centred samples ``phi``."""
    q_shift = neg_laplacian_array(shift)
    energy = float(np.sum(shift * q_shift))
    axes = tuple(range(1, phi.ndim))
    return -0.5 * energy - np.tensordot(phi, q_shift, axes=(axes, tuple(range(q_shift.ndim))))


def sample_gff_shifted_batch(
    plan: SpectralPlan, shift: ScalarField, seed: int, count: int
) -> tuple[np.ndarray, np.ndarray]:
    shift.require(plan.geometry)
    phi = sample_gff_batch(plan, seed, count)
    logw = shifted_log_weights(plan, phi, shift.values)
    return phi + shift.values, logw


def sample_gff_shifted(plan: SpectralPlan, shift: ScalarField, seed: int) -> tuple[ScalarField, float]:
    """phi + h with its importance log-weight -<h,Qh>/2 - <phi,Qh>, Q = -Delta_N.

    For any event A, E[1_A(phi + h) w] = P(phi in A).
    """
    fields, logw = sample_gff_shifted_batch(plan, shift, seed, 1)
    return ScalarField(plan.geometry, fields[0]), float(logw[0])


def energy(f: ScalarField) -> float:
    """<f, (-Delta_N) f> in direct space."""
    return float(np.sum(f.values * neg_laplacian_array(f.values)))


def spectral_energy(plan: SpectralPlan, f: ScalarField) -> float:
    coeff = plan.forward(f.values)
    return float(np.sum(plan.eigenvalues * coeff**2))


class HeatKernelQuadrature:
    """Spectral sums sum_k psi_k(x) psi_k(y) / nu_k^p without building the box.

    With t = e^s the integrand is analytic in s and decays at both ends, so the
    trapezoidal rule on a uniform s-grid converges geometrically.
    """

    def __init__(self, d: int, N: int, power: int = 1, step: float = 0.025):
        if power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        self.d, self.N, self.power = d, N, power
        self.lam = axis_eigenvalues(N)
        nu_min = float(self.lam[0])
        s_max = math.log(80.0 / nu_min) + 1.0
        s = np.arange(-40.0, s_max + step, step)
        self.t = np.exp(s)
        self.weights = step * self.t**power / math.gamma(power)
        # decay factors exp(-t lam_k / d), shape (n_t, n_k)
        self._decay = np.exp(-np.outer(self.t, self.lam) / d)

    def axis_kernel(self, a, b) -> np.ndarray:
        """1-D heat kernel at time t/d between coordinates a[j] and b[j]: shape (n_t, len(a))."""
        phi_a = axis_modes(self.N, a)
        phi_b = axis_modes(self.N, b)
        return self._decay @ (phi_a * phi_b).T

    def entries(self, source, targets) -> np.ndarray:
        """Values of (-Delta_N)^{-p}(source, target) for each row of ``targets``."""
        targets = np.atleast_2d(np.asarray(targets, dtype=np.int64))
        source = np.asarray(source, dtype=np.int64)
        out = np.empty(targets.shape[0])
        chunk = max(1, 4_000_000 // self.t.size)
        tables = []
        for axis in range(self.d):
            vals, inv = np.unique(targets[:, axis], return_inverse=True)
            table = self.axis_kernel(np.full(vals.size, source[axis]), vals)
            tables.append((table, inv.reshape(-1)))
        for start in range(0, targets.shape[0], chunk):
            sl = slice(start, start + chunk)
            prod = np.ones((self.t.size, min(chunk, targets.shape[0] - start)))
            for table, inv in tables:
                prod *= table[:, inv[sl]]
            out[sl] = self.weights @ prod
        return out


def green_entries(d: int, N: int, source, targets, power: int = 1) -> np.ndarray:
    return HeatKernelQuadrature(d, N, power).entries(source, targets)
