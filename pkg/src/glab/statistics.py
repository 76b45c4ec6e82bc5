"""Monte Carlo and spectral measurements: maxima, high points, deviation rates,
variance scans and hard-wall probabilities.

Replicate loops are split into blocks seeded by ``replicate_seed(seed, block)``;
blocks may run on a thread pool and are reduced in block order, so results do
not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from .disorder import DisorderRealization, TailClass, draw, mean_field, normalized_exponent, tail_to_dict
from .errors import EmptyStreamError, InvalidParameterError, WrongTailClassError
from .lattice import BoxGeometry, ScalarField, SubBox, inner_box_mask, inner_radius, make_box, volume_cap
from .rng import generator, replicate_seed
from .sampler import QuenchedSample
from .spectral import (
    SpectralPlan,
    axis_eigenvalues,
    axis_modes,
    green_entries,
    make_plan,
    neg_laplacian_array,
    sample_gff,
    sample_gff_batch,
    solve_poisson_array,
)

log = logging.getLogger(__name__)


def _map_blocks(fn, blocks, jobs: int):
    if jobs <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, blocks))


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


# ---------------------------------------------------------------- maxima


@dataclass
class MaxSweepRecord:
    d: int
    N: int
    tail: dict | None
    disorder_seed: int | None
    field_seed: int | None
    samples: int
    exponent: float
    max_phi: list[float]
    normalized_max: list[float]
    max_mean: float
    max_gff: list[float]
    summary: dict = field(default_factory=dict)
    mean_dominates: int = 0

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def rows(self) -> list[dict]:
        base = {"d": self.d, "N": self.N, "samples": self.samples, "max_mean": self.max_mean}
        return [{**base, **{f"normalized_{k}": v for k, v in self.summary.items()}, "mean_dominates": self.mean_dominates}]


def _summary(values: np.ndarray) -> dict:
    q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95])
    return {"mean": float(values.mean()), "q05": float(q05), "q50": float(q50), "q95": float(q95)}


def max_statistics(samples: Iterable[QuenchedSample], tail: TailClass | None = None) -> MaxSweepRecord:
    """Summary of max phi / (log N)^{1/(alpha ^ 2)} over a stream of samples on one box."""
    geom = None
    maxima, gff_max, mean_max, seeds = [], [], [], []
    disorder_seed = None
    for s in samples:
        if geom is None:
            geom, disorder_seed = s.geometry, s.seeds[0]
        elif s.geometry != geom:
            raise InvalidParameterError("samples come from different boxes")
        maxima.append(float(s.phi.values.max()))
        gff_max.append(float(s.gff_part.values.max()))
        mean_max.append(float(s.mean_part.values.max()))
        seeds.append(s.seeds[1])
    if geom is None:
        raise EmptyStreamError("max_statistics needs at least one sample")
    if geom.N < 2:
        raise InvalidParameterError("normalisation by log N needs N >= 2")
    exponent = 1.0 / (normalized_exponent(tail) if tail is not None else 2.0)
    scale = math.log(geom.N) ** exponent
    maxima = np.asarray(maxima)
    normalized = maxima / scale
    gff_max = np.asarray(gff_max)
    mean_max = np.asarray(mean_max)
    return MaxSweepRecord(
        d=geom.d,
        N=geom.N,
        tail=tail_to_dict(tail) if tail is not None else None,
        disorder_seed=disorder_seed,
        field_seed=seeds[0] if len(seeds) == 1 else None,
        samples=len(maxima),
        exponent=exponent,
        max_phi=maxima.tolist(),
        normalized_max=normalized.tolist(),
        max_mean=float(mean_max.max()),
        max_gff=gff_max.tolist(),
        summary=_summary(normalized),
        mean_dominates=int(np.sum(mean_max > gff_max)),
    )


def quenched_stream(plan: SpectralPlan, eta: DisorderRealization, field_seed: int, count: int, m: ScalarField | None = None):
    """Yield ``count`` quenched samples; sample i uses the field seed replicate_seed(field_seed, i)."""
    m = m if m is not None else mean_field(plan, eta)
    for i in range(count):
        gff = sample_gff(plan, replicate_seed(field_seed, i))
        yield QuenchedSample(plan.geometry, ScalarField(plan.geometry, gff.values + m.values), m, gff, (eta.seed, replicate_seed(field_seed, i)))


def max_sweep(plan: SpectralPlan, eta: DisorderRealization, field_seed: int, count: int) -> MaxSweepRecord:
    rec = max_statistics(quenched_stream(plan, eta, field_seed, count), eta.tail)
    rec.field_seed = int(field_seed)
    return rec


def high_point_count(m: ScalarField, tail: TailClass, b: float, N: int) -> int:
    """Number of sites with m(x) >= (b log N)^{1/alpha}."""
    if tail is None or tail.alpha is None:
        raise WrongTailClassError("high points are defined for stretched-exponential tails; use max_mean_field for bounded disorder")
    if not b > 0:
        raise InvalidParameterError("b must be positive")
    threshold = (b * math.log(N)) ** (1.0 / tail.alpha)
    return int(np.count_nonzero(m.values >= threshold))


def max_mean_field(m: ScalarField) -> float:
    return float(m.values.max())


# ---------------------------------------------------------------- deviations


@dataclass
class DeviationRecord:
    d: int
    L: int
    N_grid: list[int]
    b_grid: list[float]
    region: str
    tail: dict
    x: list[int]
    thresholds: list[list[float]]
    counts: list[list[int]]
    totals: list[list[int]]
    probabilities: list[list[float]]
    wilson: list[list[tuple[float, float]]]
    slopes: list[float]
    slope_se: list[float]
    residuals: list[list[float]]
    theory_slopes: list[float] | None = None
    sparse: list[list[bool]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def rows(self) -> list[dict]:
        out = []
        for i, N in enumerate(self.N_grid):
            for j, b in enumerate(self.b_grid):
                lo, hi = self.wilson[i][j]
                out.append(
                    {
                        "d": self.d, "L": self.L, "region": self.region, "N": N, "b": b,
                        "threshold": self.thresholds[i][j], "count": self.counts[i][j],
                        "total": self.totals[i][j], "p": self.probabilities[i][j],
                        "wilson_lo": lo, "wilson_hi": hi, "slope": self.slopes[j],
                    }
                )
        return out


def _region_weights(d: int, N: int, L: int, x: Sequence[int], region: str) -> np.ndarray:
    """G_N(x, .) restricted to the region, as a flat array.

    The near region only needs |Lambda_L| entries, evaluated without building the
    box; far and full regions need the whole column.
    """
    if region == "near":
        sub = BoxGeometry(d, L).coordinates() + np.asarray(x)
        return green_entries(d, N, x, sub)
    geom = make_box(d, N)
    rhs = np.zeros(geom.shape)
    rhs[geom.array_position(x)] = 1.0
    col = solve_poisson_array(make_plan(geom), rhs)
    if region == "far":
        col = np.where(SubBox(tuple(x), L, geom).mask(), 0.0, col)
    elif region != "full":
        raise InvalidParameterError(f"unknown region {region!r}")
    return col.reshape(-1)


def _crop(eta_big: np.ndarray, d: int, N_big: int, N: int) -> np.ndarray:
    """Sub-box Lambda_N of a batch of fields on Lambda_{N_big}, flattened per row."""
    off = N_big - N
    sl = (slice(None),) + (slice(off, off + 2 * N + 1),) * d
    return eta_big[sl].reshape(eta_big.shape[0], -1)


def deviation_experiment(
    d: int,
    L: int,
    N_grid: Sequence[int],
    b_grid: Sequence[float],
    region: str,
    tail: TailClass,
    replicates: int,
    seed: int = 0,
    x: Sequence[int] | None = None,
    K: float | None = None,
    block: int = 20000,
    jobs: int = 1,
) -> DeviationRecord:
    """Empirical P(S_A(x) >= (b log N)^{1/(alpha ^ 2)}) on a grid of (N, b).

    The same disorder draws are reused for every N (common random numbers), so
    the fitted slopes of log P against log N are much less noisy than the cell
    probabilities themselves. Sparse cells (no exceedance) are left out of the fit.
    """
    N_grid = [int(n) for n in N_grid]
    b_grid = [float(b) for b in b_grid]
    if L > min(N_grid):
        raise InvalidParameterError("L must not exceed the smallest N")
    if region not in ("near", "far", "full"):
        raise InvalidParameterError(f"unknown region {region!r}")
    x = tuple(x) if x is not None else (0,) * d
    a = normalized_exponent(tail)
    thresholds = np.array([[(b * math.log(N)) ** (1.0 / a) for b in b_grid] for N in N_grid])
    weights = [_region_weights(d, N, L, x, region) for N in N_grid]
    N_big = max(N_grid)
    if region == "near":
        shape = (2 * L + 1,) * d
    else:
        shape = (2 * N_big + 1,) * d
        block = max(1, min(block, 20_000_000 // int(np.prod(shape))))

    def run_block(i):
        n = min(block, replicates - i * block)
        eta = draw(tail, generator(replicate_seed(seed, i), "deviation-disorder"), (n,) + shape)
        counts = np.zeros(thresholds.shape, dtype=np.int64)
        for k, (N, w) in enumerate(zip(N_grid, weights)):
            if region == "near":
                s = eta.reshape(n, -1) @ w
            else:
                s = _crop(eta, d, N_big, N) @ w
            counts[k] = (s[:, None] >= thresholds[k][None, :]).sum(axis=0)
        return counts

    n_blocks = -(-replicates // block)
    counts = sum(_map_blocks(run_block, range(n_blocks), jobs))
    totals = np.full(counts.shape, replicates, dtype=np.int64)
    probs = counts / totals
    wilson = [[wilson_interval(counts[i, j], replicates) for j in range(len(b_grid))] for i in range(len(N_grid))]
    sparse = counts == 0
    warnings = []
    if counts.max(initial=0) < 100:
        warnings.append("fewer than 100 exceedances in every cell; increase replicates")
    logN = np.log(N_grid)
    slopes, slope_se, residuals = [], [], []
    for j in range(len(b_grid)):
        ok = ~sparse[:, j]
        if ok.sum() < 2:
            slopes.append(float("nan"))
            slope_se.append(float("nan"))
            residuals.append([float("nan")] * len(N_grid))
            continue
        y = np.log(probs[ok, j])
        xs = logN[ok]
        slope, icpt = np.polyfit(xs, y, 1)
        res = np.full(len(N_grid), np.nan)
        res[ok] = y - (slope * xs + icpt)
        # delta-method variance of log p-hat, treating cells as independent (conservative under CRN)
        var_y = (1 - probs[ok, j]) / counts[ok, j]
        xc = xs - xs.mean()
        se = math.sqrt(float(np.sum(xc**2 * var_y)) / float(np.sum(xc**2)) ** 2)
        slopes.append(float(slope))
        slope_se.append(se)
        residuals.append(res.tolist())
    return DeviationRecord(
        d=d,
        L=int(L),
        N_grid=N_grid,
        b_grid=b_grid,
        region=region,
        tail=tail_to_dict(tail),
        x=list(x),
        thresholds=thresholds.tolist(),
        counts=counts.tolist(),
        totals=totals.tolist(),
        probabilities=probs.tolist(),
        wilson=wilson,
        slopes=slopes,
        slope_se=slope_se,
        residuals=residuals,
        theory_slopes=[-K * b for b in b_grid] if K is not None else None,
        sparse=sparse.tolist(),
        warnings=warnings,
    )


# ---------------------------------------------------------------- variance scan


def origin_spectral_sum(d: int, N: int, power: int) -> float:
    """sum_k psi_k(0)^2 / nu_k^power = (-Delta_N)^{-power}(0, 0).

    Only odd mode indices have psi_k(0) != 0, so the sum runs over (N+1)^d terms.
    Falls back to heat-kernel quadrature when that grid exceeds the volume cap.
    """
    if (N + 1) ** d > volume_cap():
        return float(green_entries(d, N, (0,) * d, [(0,) * d], power)[0])
    lam = axis_eigenvalues(N)[::2]
    w = axis_modes(N, [0])[0, ::2] ** 2
    nu = np.zeros((1,) * d)
    amp = np.ones((1,) * d)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = lam.size
        nu = nu + lam.reshape(shape) / d
        amp = amp * w.reshape(shape)
    return float(np.sum(amp / nu**power))


@dataclass
class VarianceRow:
    d: int
    N: int
    var_m: float
    var_phi: float


def variance_scan(d_grid: Sequence[int], N_grid: Sequence[int], sigma2: float = 1.0) -> list[VarianceRow]:
    """Var_P(m_N(0)) = sigma^2 (-Delta_N)^{-2}(0,0) and Var phi(0) = G_N(0,0), no sampling."""
    rows = []
    for d in d_grid:
        for N in N_grid:
            make_box(int(d), int(N))  # enforces the volume cap
            rows.append(
                VarianceRow(int(d), int(N), sigma2 * origin_spectral_sum(d, N, 2), origin_spectral_sum(d, N, 1))
            )
    return rows


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ---------------------------------------------------------------- hard wall


@dataclass
class RepulsionRecord:
    d: int
    N: int
    eps: float
    inner_radius: int
    tail: dict | None
    estimator: str
    estimate: float
    se: float
    log_estimate: float
    ess: float
    hits: int
    replicates: int
    upper_bound: float | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def rows(self) -> list[dict]:
        d = self.to_dict()
        d.pop("warnings")
        d.pop("tail")
        return [d]


def default_shift(plan: SpectralPlan, eps: float, scale: float = 1.0) -> ScalarField:
    """Solution of (-Delta_N) h = 1_A, rescaled so that min_A h = ``scale``."""
    mask = inner_box_mask(plan.geometry, eps)
    h = solve_poisson_array(plan, mask.astype(float))
    return ScalarField(plan.geometry, scale * h / h[mask].min())


def equilibrium_potential(plan: SpectralPlan, eps: float, scale: float = 1.0) -> ScalarField:
    """h = scale on A, harmonic on Lambda_N minus A, zero on the boundary.

    Built as G_N(., A) q with G_N(A, A) q = 1; G_N(., A) comes from one batched
    solve per site of A.
    """
    geom = plan.geometry
    mask = inner_box_mask(geom, eps)
    idx = np.flatnonzero(mask.reshape(-1))
    units = np.zeros((idx.size, geom.volume))
    units[np.arange(idx.size), idx] = 1.0
    cols = solve_poisson_array(plan, units.reshape((idx.size,) + geom.shape), batched=True).reshape(idx.size, -1)
    q = np.linalg.solve(cols[:, idx], np.ones(idx.size))
    return ScalarField(geom, scale * (q @ cols))


def repulsion_probability(
    plan: SpectralPlan,
    eta: DisorderRealization | None,
    eps: float,
    estimator: str = "plain",
    replicates: int = 100_000,
    seed: int = 0,
    shift: ScalarField | None = None,
    block: int | None = None,
    jobs: int = 1,
) -> RepulsionRecord:
    """mu_N^eta(phi >= 0 on Lambda_{floor((1-eps)N)}) = P(psi >= -m on that box), psi a GFF.

    ``plain`` counts hits; ``mean-shift`` samples psi + h and reweights by
    exp(-<h,Qh>/2 - <psi,Qh>), Q = -Delta_N. With no hit the estimate is 0 and
    a one-sided 95% upper bound is reported instead.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError("eps must lie in (0, 1)")
    if estimator not in ("plain", "mean-shift"):
        raise InvalidParameterError(f"unknown estimator {estimator!r}")
    geom = plan.geometry
    mask = inner_box_mask(geom, eps)
    m = np.zeros(geom.shape) if eta is None else solve_poisson_array(plan, eta.values.values)
    neg_m = -m[mask]
    h = None
    if estimator == "mean-shift":
        h = (shift if shift is not None else default_shift(plan, eps)).values
        qh = neg_laplacian_array(h)
        h_energy = float(np.sum(h * qh))
    block = block or max(1, min(replicates, 4_000_000 // geom.volume))

    def run_block(i):
        n = min(block, replicates - i * block)
        psi = sample_gff_batch(plan, replicate_seed(seed, i), n)
        if h is None:
            hit = np.all(psi[:, mask] >= neg_m, axis=1)
            return hit.astype(float), None
        logw = -0.5 * h_energy - psi.reshape(n, -1) @ qh.reshape(-1)
        hit = np.all((psi + h)[:, mask] >= neg_m, axis=1)
        return hit.astype(float), logw

    n_blocks = -(-replicates // block)
    parts = _map_blocks(run_block, range(n_blocks), jobs)
    hits = np.concatenate([p[0] for p in parts])
    warnings = []
    if h is None:
        vals = hits
        ess = float(replicates)
    else:
        logw = np.concatenate([p[1] for p in parts])
        vals = hits * np.exp(logw)
        hw = vals[hits > 0]
        ess = float(hw.sum() ** 2 / np.sum(hw**2)) if hw.size else 0.0
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")
    n_hits = int(hits.sum())
    upper = None
    if n_hits == 0:
        warnings.append("no replicate hit the event; only an upper bound is available")
        if h is None:
            upper = 1.0 - 0.05 ** (1.0 / replicates)
    elif h is not None and ess < 30:
        warnings.append(f"effective sample size {ess:.1f} is small; estimate unreliable")
    return RepulsionRecord(
        d=geom.d,
        N=geom.N,
        eps=float(eps),
        inner_radius=inner_radius(geom.N, eps),
        tail=tail_to_dict(eta.tail) if eta is not None and eta.tail is not None else None,
        estimator=estimator,
        estimate=est,
        se=se,
        log_estimate=math.log(est) if est > 0 else -math.inf,
        ess=ess,
        hits=n_hits,
        replicates=int(replicates),
        upper_bound=upper,
        warnings=warnings,
    )


# ---------------------------------------------------------------- output


def _record_dict(rec) -> dict:
    if isinstance(rec, dict):
        return _jsonable(rec)
    if hasattr(rec, "to_dict"):
        return rec.to_dict()
    return _jsonable(asdict(rec))


def _record_rows(rec) -> list[dict]:
    if hasattr(rec, "rows"):
        return rec.rows()
    return [_record_dict(rec)]


def write_jsonl(records: Iterable, path: str | Path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            row = {**(extra or {}), **_record_dict(rec)}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def write_csv(records: Iterable, path: str | Path, extra: dict | None = None) -> Path:
    rows = [{**(extra or {}), **r} for rec in records for r in _record_rows(rec)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields: list[str] = []
    for r in rows:
        fields.extend(k for k in r if k not in fields)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return path
