from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from app.application import catalog
from app.domain.circlemap import rotation_curve, rotation_difference
from app.domain.modulus import check_lemmas, craig_simon_check, crossing_times, estimate_R, modulus_certificate
from app.domain.projective import projective_dx, projective_lift
from app.domain.schrodinger import (
    anderson_bernoulli,
    eigen_count_leq,
    free_laplacian_ids,
    free_model,
    ids_empirical,
    rotation_ids,
    schrodinger_family,
)

OMEGA0 = 0.3


# ===== 고유값 세기 =====

def _charpoly_count(V, E):
    # det(V - x) 점화식: p_k = (V_k - x) p_{k-1} - p_{k-2}
    prev, cur = Polynomial([0.0]), Polynomial([1.0])
    for v in V:
        prev, cur = cur, Polynomial([float(v), -1.0]) * cur - prev
    roots = cur.roots()
    assert np.all(np.abs(roots.imag) <= 1e-9)
    return int(np.count_nonzero(roots.real <= E))


def test_sturm_count_small_random_matrices():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        size = int(rng.integers(1, 9))
        V = rng.uniform(-3.0, 3.0, size)
        for E in rng.uniform(-5.0, 5.0, 20):
            assert eigen_count_leq(V, float(E)) == _charpoly_count(V, float(E))


def test_free_ids_by_eigencount():
    grid = np.round(np.arange(-300, 301) * 0.01, 12)
    curve = ids_empirical(free_model(), OMEGA0, 10_000, grid)
    err = np.abs(curve.values - free_laplacian_ids(grid))
    interior = np.abs(grid) <= 1.9
    assert err[interior].max() <= 2e-3
    assert err.max() <= 2e-2


# ===== 회전수 =====

def test_rigid_rotation_is_exact(rigid):
    grid = np.linspace(0.0, 1.0, 100)
    curve = rotation_curve(rigid, grid, OMEGA0, 1000)
    dev = np.abs(curve.values - grid)
    assert dev.max() <= 1e-12
    assert np.all(curve.error_radii >= dev)


def test_pi_third_rotation_translates_by_one_third():
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    x = np.linspace(-1.0, 2.0, 301)
    assert np.allclose(projective_lift(c, -s, s, c, x), x + 1.0 / 3.0, atol=1e-12)


def _unimodular(rng):
    while True:
        m11, m12, m21 = rng.uniform(-2.0, 2.0, 3)
        if abs(m11) >= 0.5:
            return m11, m12, m21, (1.0 + m12 * m21) / m11


def test_projective_derivative_matches_finite_differences():
    rng = np.random.default_rng(7)
    x = (np.arange(256) + 0.5) / 256.0
    h = 1e-7
    for _ in range(50):
        m = _unimodular(rng)
        fd = (projective_lift(*m, x + h) - projective_lift(*m, x - h)) / (2.0 * h)
        exact = projective_dx(*m, x)
        assert np.all(np.abs(fd - exact) <= 1e-6 * np.maximum(1.0, exact))


def test_free_rotation_difference_closed_form():
    fam = schrodinger_family(free_model(), (0.0, 1.0))
    n = 10_000
    assert rotation_difference(fam, 0.0, 1.0, OMEGA0, n) == pytest.approx(-1.0 / 12.0, abs=2.0 / n)


def test_rotation_is_flat_in_a_gap():
    fam = schrodinger_family(free_model(), (5.0, 6.0))
    n = 2000
    assert abs(rotation_difference(fam, 5.0, 6.0, OMEGA0, n)) <= 2.0 / n


# ===== 보조정리 =====

def test_rigid_quarter_step_crossings(rigid):
    assert crossing_times(rigid, 0.0, 0.25, OMEGA0, 40).times == [4 * j for j in range(11)]


def _assert_lemmas(fam, pairs, n, omega0=OMEGA0, seed=None):
    for a, a2 in pairs:
        report = check_lemmas(fam, a, a2, omega0, n, seed=seed)
        assert report.step.min_margin >= -1e-9, (a, a2)
        assert report.step.corollary_min_margin >= -1e-9, (a, a2)
        assert report.segment.verdict != "fail", (a, a2)
        assert report.passed


_CIRCLE_PAIRS = [(a, a + 0.05) for a in np.linspace(0.0, 0.9, 10)]
_ENERGY_PAIRS = [(E, E + 0.1) for E in np.linspace(-2.4, 2.0, 10)]


def test_lemma_suite_rigid(rigid):
    _assert_lemmas(rigid, _CIRCLE_PAIRS, 1000)


def test_lemma_suite_sine(sine):
    _assert_lemmas(sine, _CIRCLE_PAIRS, 1000)


def test_lemma_suite_free_schrodinger():
    _assert_lemmas(schrodinger_family(free_model(), (-2.5, 2.5)), _ENERGY_PAIRS, 1000)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_lemma_suite_anderson(seed):
    fam = catalog.build_family("schrodinger-anderson-bernoulli", (-2.5, 2.5), seed=seed)
    _assert_lemmas(fam, _ENERGY_PAIRS, 1000, omega0=catalog.start_point(fam.base, seed), seed=seed)


# ===== 상수 R =====

def test_R_for_constant_lipschitz(rigid):
    assert abs(estimate_R(rigid, OMEGA0, 1000) - 8.0 * math.log(2.0)) <= 1e-12


def test_R_for_free_schrodinger():
    fam = schrodinger_family(free_model(), (-3.0, 3.0))
    # sup_E ‖A_E‖², |E| ≤ 3: 격자에서 직접 최대화
    E = np.linspace(-3.0, 3.0, 60_001)
    fro = E * E + 2.0
    norm_sq = 0.5 * (fro + np.sqrt(fro * fro - 4.0))
    assert estimate_R(fam, OMEGA0, 1000) == pytest.approx(8.0 * math.log(norm_sq.max()), abs=1e-6)


# ===== 전체 크기 (--runslow) =====

@pytest.mark.slow
def test_routes_agree_on_free_model():
    grid = np.round(np.arange(-19, 20) * 0.1, 12)
    rot = rotation_ids(free_model(), grid, OMEGA0, 1_000_000, e_ref=4.0)
    eig = ids_empirical(free_model(), OMEGA0, 10_000, grid)
    assert np.abs(rot.curve.values - eig.values).max() <= 5e-3


@pytest.mark.slow
def test_routes_agree_on_free_model_fine_grid():
    grid = np.round(np.arange(-190, 191) * 0.01, 12)
    rot = rotation_ids(free_model(), grid, OMEGA0, 1_000_000, e_ref=4.0)
    eig = ids_empirical(free_model(), OMEGA0, 10_000, grid)
    assert np.abs(rot.curve.values - eig.values).max() <= 5e-3


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_routes_agree_on_anderson_bernoulli(seed):
    model = anderson_bernoulli(1.0, seed)
    omega0 = catalog.start_point(model.base, seed)
    grid = np.round(np.arange(-29, 40) * 0.1, 12)
    rot = rotation_ids(model, grid, omega0, 1_000_000, e_ref=4.0)
    eig = ids_empirical(model, omega0, 10_000, grid)
    assert np.abs(rot.curve.values - eig.values).max() <= 2e-2


@pytest.mark.slow
def test_rigid_certificate_full_size(rigid):
    grid = np.linspace(0.0, 1.0, 1001)
    report = modulus_certificate(rigid, grid, OMEGA0, 1_000_000)
    assert report.verdict == "certified"
    assert report.observed_sup <= 1.0 / math.e


@pytest.mark.slow
@pytest.mark.parametrize("n", [1_000_000, 2_000_000])
def test_free_certificate_is_stable(n):
    fam = schrodinger_family(free_model(), (-1.9, 1.9))
    grid = np.linspace(-1.9, 1.9, 3801)
    assert modulus_certificate(fam, grid, OMEGA0, n).verdict == "certified"


@pytest.mark.slow
@pytest.mark.parametrize("n", [1_000_000, 2_000_000])
def test_anderson_certificate_is_stable(n):
    model = anderson_bernoulli(1.0, 0)
    grid = np.linspace(-3.5, 3.5, 7001)
    report = craig_simon_check(model, grid, catalog.start_point(model.base, 0), n)
    assert report.verdict == "certified"
