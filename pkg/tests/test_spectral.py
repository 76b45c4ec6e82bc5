import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glab.errors import GeometryMismatchError
from glab.lattice import ScalarField, make_box
from glab.spectral import (
    HeatKernelQuadrature,
    apply_laplacian,
    energy,
    make_plan,
    sample_gff,
    sample_gff_batch,
    sample_gff_shifted,
    sample_gff_shifted_batch,
    solve_poisson,
    spectral_energy,
)
from glab.verify import dense_green


def dense_laplacian(geom):
    return -np.linalg.inv(dense_green(geom))


def test_eigenvalue_extremes():
    for d, N in [(1, 3), (2, 4), (3, 2)]:
        plan = make_plan(make_box(d, N))
        nu = plan.eigenvalues
        c = math.cos(math.pi / (2 * N + 2))
        assert np.all(nu > 0)
        assert nu.min() == pytest.approx(1 - c, rel=1e-12)
        assert nu.max() == pytest.approx(1 + c, rel=1e-12)


def test_apply_laplacian_examples():
    g = make_box(1, 1)
    out = apply_laplacian(make_plan(g), ScalarField(g, [0.0, 1.0, 0.0]))
    np.testing.assert_allclose(out.flat, [0.5, -1.0, 0.5])
    g = make_box(2, 2)
    out = apply_laplacian(make_plan(g), ScalarField.constant(g, 2.0)).values
    missing = np.array([[sum(abs(c) == 2 for c in (i, j)) for j in range(-2, 3)] for i in range(-2, 3)])
    np.testing.assert_allclose(out, -2.0 * missing / 4)


def test_apply_laplacian_matches_dense():
    g = make_box(2, 3)
    f = np.random.default_rng(1).standard_normal(g.volume)
    out = apply_laplacian(make_plan(g), ScalarField(g, f)).flat
    np.testing.assert_allclose(out, dense_laplacian(g) @ f, atol=1e-12)


def test_solve_poisson_examples():
    g = make_box(1, 1)
    u = solve_poisson(make_plan(g), ScalarField.delta(g, (0,)))
    np.testing.assert_allclose(u.flat, [1, 2, 1], atol=1e-12)
    g = make_box(2, 2)
    u = solve_poisson(make_plan(g), ScalarField.delta(g, (0, 0)))
    np.testing.assert_allclose(u.flat, dense_green(g)[:, g.index((0, 0))], atol=1e-10)


@given(st.integers(1, 3), st.integers(0, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_solve_inverts_apply(d, N, seed):
    g = make_box(d, N)
    plan = make_plan(g)
    f = ScalarField(g, np.random.default_rng(seed).standard_normal(g.shape))
    back = solve_poisson(plan, ScalarField(g, -apply_laplacian(plan, f).values))
    assert np.max(np.abs(back.values - f.values)) <= 1e-10 * max(1.0, np.max(np.abs(f.values)))
    assert energy(f) == pytest.approx(spectral_energy(plan, f), rel=1e-10)


def test_solve_inverts_apply_d5():
    g = make_box(5, 2)
    plan = make_plan(g)
    f = ScalarField(g, np.random.default_rng(3).standard_normal(g.shape))
    back = solve_poisson(plan, ScalarField(g, -apply_laplacian(plan, f).values))
    np.testing.assert_allclose(back.values, f.values, atol=1e-10)


def test_geometry_mismatch():
    plan = make_plan(make_box(2, 2))
    with pytest.raises(GeometryMismatchError):
        solve_poisson(plan, ScalarField.zeros(make_box(2, 3)))


def test_gff_deterministic_and_variance():
    g = make_box(2, 3)
    plan = make_plan(g)
    a, b = sample_gff(plan, 42), sample_gff(plan, 42)
    assert np.array_equal(a.values, b.values)
    n = 100_000
    x = sample_gff_batch(plan, 7, n)[:, 3, 3]
    G00 = dense_green(g)[g.index((0, 0)), g.index((0, 0))]
    assert abs(np.mean(x**2) - G00) <= 3 * math.sqrt(2 / n) * G00


def test_gff_covariance_d1():
    g = make_box(1, 2)
    n = 200_000
    X = sample_gff_batch(make_plan(g), 9, n)
    C = X.T @ X / n
    G = np.array([[2 * min(i, j) * (6 - max(i, j)) / 6 for j in range(1, 6)] for i in range(1, 6)])
    se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G**2) / n)
    assert np.all(np.abs(C - G) <= 3 * se)


def test_shifted_zero_shift():
    g = make_box(2, 2)
    plan = make_plan(g)
    f, logw = sample_gff_shifted(plan, ScalarField.zeros(g), 5)
    assert logw == 0.0
    assert np.array_equal(f.values, sample_gff(plan, 5).values)


def test_shifted_weights_normalised():
    g = make_box(2, 2)
    plan = make_plan(g)
    h = ScalarField(g, np.random.default_rng(0).uniform(0, 1, g.shape))
    _, logw = sample_gff_shifted_batch(plan, h, 3, 100_000)
    w = np.exp(logw)
    assert abs(w.mean() - 1) <= 3 * w.std() / math.sqrt(w.size)


def test_shifted_estimator_matches_plain():
    g = make_box(2, 2)
    plan = make_plan(g)
    G00 = dense_green(g)[12, 12]
    plain = sample_gff_batch(plan, 1, 1_000_000)[:, 2, 2] >= 3
    p_plain, se_plain = plain.mean(), plain.std() / 1000
    h = 3.0 * dense_green(g)[:, 12].reshape(g.shape) / G00
    fields, logw = sample_gff_shifted_batch(plan, ScalarField(g, h), 2, 200_000)
    vals = (fields[:, 2, 2] >= 3) * np.exp(logw)
    p_is, se_is = vals.mean(), vals.std() / math.sqrt(vals.size)
    exact = 0.5 * math.erfc(3 / math.sqrt(2 * G00))
    assert abs(p_plain - p_is) <= 3 * math.hypot(se_plain, se_is)
    assert abs(p_is - exact) <= 3 * se_is


@pytest.mark.parametrize("d,N,power", [(2, 3, 1), (3, 4, 1), (3, 4, 2), (5, 2, 2)])
def test_heat_kernel_matches_transform(d, N, power):
    g = make_box(d, N)
    plan = make_plan(g)
    src = (0,) * d
    rhs = ScalarField.delta(g, src)
    col = solve_poisson(plan, rhs)
    if power == 2:
        col = solve_poisson(plan, col)
    targets = g.coordinates()[:: max(1, g.volume // 50)]
    hk = HeatKernelQuadrature(d, N, power).entries(src, targets)
    np.testing.assert_allclose(hk, [col[tuple(t)] for t in targets], rtol=1e-10, atol=1e-12)
