"""Exact samples of the disordered Gibbs measure and of its annealed version.

Completing the square in the Hamiltonian shows that, for fixed disorder, the
field is Gaussian with covariance (-Delta_N)^{-1} and mean m_N = (-Delta_N)^{-1} eta.
A quenched sample is therefore a GFF sample plus the mean field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .disorder import DisorderRealization, TailClass, draw, mean_field, tail_to_dict
from .lattice import BoxGeometry, ScalarField
from .rng import generator
from .spectral import SpectralPlan, sample_gff, sample_gff_batch, solve_poisson_array


@dataclass(frozen=True, eq=False)
class QuenchedSample:
    geometry: BoxGeometry
    phi: ScalarField
    mean_part: ScalarField
    gff_part: ScalarField
    seeds: tuple[int | None, int]


def sample_quenched(plan: SpectralPlan, eta: DisorderRealization, field_seed: int) -> QuenchedSample:
    m = mean_field(plan, eta)
    gff = sample_gff(plan, field_seed)
    phi = ScalarField(plan.geometry, gff.values + m.values)
    return QuenchedSample(plan.geometry, phi, m, gff, (eta.seed, int(field_seed)))


def quenched_batch(plan: SpectralPlan, mean: np.ndarray, field_seed: int, count: int) -> np.ndarray:
    """``count`` quenched fields sharing the mean ``mean``; shape (count, *box shape)."""
    return sample_gff_batch(plan, field_seed, count) + mean


def sample_annealed(plan: SpectralPlan, tail: TailClass, seed_pair: tuple[int, int]) -> QuenchedSample:
    """A fresh disorder field and a fresh GFF, i.e. one draw under P x mu_N pushed to phi + m."""
    disorder_seed, field_seed = seed_pair
    eta = draw(tail, generator(disorder_seed, "annealed-disorder"), plan.geometry.shape)
    m = ScalarField(plan.geometry, solve_poisson_array(plan, eta))
    gff = sample_gff(plan, field_seed)
    phi = ScalarField(plan.geometry, gff.values + m.values)
    return QuenchedSample(plan.geometry, phi, m, gff, (int(disorder_seed), int(field_seed)))


def annealed_batch(plan: SpectralPlan, tail: TailClass, seed: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched annealed draws: returns (phi, mean_part), each of shape (count, *box shape)."""
    eta = draw(tail, generator(seed, "annealed-disorder"), (count,) + plan.geometry.shape)
    m = solve_poisson_array(plan, eta, batched=True)
    return sample_gff_batch(plan, seed, count) + m, m


def dump_field(path: str | Path, field: ScalarField, meta: dict) -> tuple[Path, Path]:
    """Write a raw little-endian float64 array in index order plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field.flat.astype("<f8").tofile(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    info = {"d": field.geometry.d, "N": field.geometry.N, "dtype": "<f8", "order": "row-major", **meta}
    sidecar.write_text(json.dumps(info, indent=2, sort_keys=True))
    return path, sidecar


def load_field(path: str | Path) -> tuple[ScalarField, dict]:
    path = Path(path)
    info = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    geom = BoxGeometry(int(info["d"]), int(info["N"]))
    return ScalarField(geom, np.fromfile(path, dtype="<f8")), info


def sample_metadata(sample: QuenchedSample, tail: TailClass | None) -> dict:
    return {
        "disorder_seed": sample.seeds[0],
        "field_seed": sample.seeds[1],
        "tail": tail_to_dict(tail) if tail is not None else None,
    }
