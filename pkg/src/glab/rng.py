"""Seed derivation and keyed random streams.

Two kinds of randomness are needed:

* bulk streams (field noise, replicate disorder) come from numpy's counter-based
  Philox generator keyed by ``(seed, purpose)``;
* quenched disorder must give the same value at a lattice site whatever box the
  site is viewed from, so it is drawn by hashing ``(seed, purpose, site)`` with a
  splitmix64 finaliser into a uniform variate.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _tag(purpose: str | int) -> int:
    if isinstance(purpose, str):
        return zlib.crc32(purpose.encode())
    return int(purpose)


def derive_seed(seed: int, *keys: str | int) -> int:
    """A 64-bit seed determined by ``seed`` and the key path; distinct paths never share streams."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed: int, *keys: str | int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, *keys)))


def replicate_seed(master: int, i: int) -> int:
    return derive_seed(master, "replicate", i)


def _splitmix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def site_uniforms(seed: int, purpose: str | int, coords: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniform variates in (0, 1), one per row of ``coords``, keyed by absolute site.

    ``coords`` is an integer array of shape (n, d). The value for a site does not
    depend on which other sites are requested.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords[:, None]
    key = np.uint64(derive_seed(seed, purpose, stream))
    h = np.full(coords.shape[0], key, dtype=np.uint64)
    for axis in range(coords.shape[1]):
        c = coords[:, axis]
        zigzag = np.where(c >= 0, 2 * c, -2 * c - 1).astype(np.uint64)
        with np.errstate(over="ignore"):
            h = _splitmix(h ^ (zigzag + np.uint64(axis + 1) * _GOLDEN))
    h = _splitmix(h)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def site_normals(seed: int, purpose: str | int, coords: np.ndarray) -> np.ndarray:
    return ndtri(site_uniforms(seed, purpose, coords))
