from __future__ import annotations

import math

import numpy as np
import pytest

from app.domain.base import GOLDEN, IrrationalRotation, Observable
from app.domain.circlemap import RotationCurve, rotation_curve
from app.domain.errors import ConfigurationError, EvaluationError, PreconditionError
from app.domain.schrodinger import (
    PotentialModel,
    almost_mathieu,
    anderson_bernoulli,
    anderson_uniform,
    eigen_count_leq,
    eigen_counts,
    free_laplacian_ids,
    free_model,
    ids_empirical,
    ids_from_rotation,
    lloyd,
    rotation_ids,
    schrodinger_family,
    transfer_matrix,
)


def _dense(V, b=None):
    n = len(V)
    b = np.ones(n - 1) if b is None else b
    return np.diag(V) + np.diag(b, 1) + np.diag(b, -1)


def test_sturm_count_matches_dense_eigenvalues():
    rng = np.random.default_rng(1)
    V = rng.uniform(-1.0, 1.0, 60)
    E = np.sort(rng.uniform(-4.0, 4.0, 50))
    eigs = np.linalg.eigvalsh(_dense(V))
    expected = np.array([np.count_nonzero(eigs <= e) for e in E])
    assert np.array_equal(eigen_counts(V, E), expected)


def test_sturm_count_with_offdiagonal():
    rng = np.random.default_rng(2)
    V = rng.uniform(-2.0, 2.0, 40)
    b = rng.uniform(0.5, 1.5, 39)
    E = np.linspace(-5.0, 5.0, 33) + 1e-3
    eigs = np.linalg.eigvalsh(_dense(V, b))
    expected = np.array([np.count_nonzero(eigs <= e) for e in E])
    assert np.array_equal(eigen_counts(V, E, offdiag=b), expected)


def test_sturm_small_examples():
    assert eigen_count_leq([5.0], 4.0) == 0
    assert eigen_count_leq([0.0, 0.0], 0.0) == 1
    assert eigen_count_leq([0.0, 0.0, 0.0], 0.5) == 2


def test_free_eigen_count_at_band_centre():
    assert eigen_count_leq(np.zeros(100), 0.0) == 50


def test_empirical_ids_of_free_model():
    curve = ids_empirical(free_model(), 0.3, 100, [-3.0, 0.0, 3.0])
    assert curve.values.tolist() == [0.0, 0.5, 1.0]
    assert curve.method == "eigencount"


def test_empirical_ids_needs_enough_sites():
    with pytest.raises(PreconditionError):
        ids_empirical(free_model(), 0.3, 50, [0.0])


def test_rotation_ids_of_free_model():
    grid = np.array([-2.5, -1.0, 0.0, 1.0, 2.5])
    route = rotation_ids(free_model(), grid, 0.3, 2000)
    exact = free_laplacian_ids(grid)
    assert route.e_ref == 3.0
    assert np.all(np.abs(route.curve.values - exact) <= route.curve.error_radii + 1e-12)
    assert abs(route.lower_value) <= route.lower_error + 1e-12


def test_free_laplacian_closed_form():
    assert free_laplacian_ids(0.0) == pytest.approx(0.5)
    assert free_laplacian_ids(-2.0) == 0.0
    assert free_laplacian_ids(2.0) == 1.0
    assert free_laplacian_ids(1.0) == pytest.approx(math.acos(-0.5) / math.pi)


def test_rotation_ids_needs_anchor_for_unbounded_models():
    with pytest.raises(ConfigurationError):
        rotation_ids(lloyd(1.0, 3), [0.0], 5, 200)


def test_rotation_ids_rejects_low_anchor():
    with pytest.raises(PreconditionError):
        rotation_ids(free_model(), [0.0], 0.3, 200, e_ref=1.0)


def test_schrodinger_lift_is_continuous_in_energy():
    fam = schrodinger_family(free_model(), (-3.0, 3.0))
    energies = np.linspace(-3.0, 3.0, 61)
    for w in (0.0, 1.0, -0.7):
        assert np.all(fam.walk_offsets(energies, w) == 0.0)


def test_schrodinger_rotation_decreases_in_energy():
    model = anderson_bernoulli(1.0, 5)
    fam = schrodinger_family(model, (-3.0, 4.0))
    curve = rotation_curve(fam, np.linspace(-3.0, 4.0, 15), 11, 1000)
    steps = np.diff(curve.values)
    assert np.all(steps <= curve.error_radii[1:] + curve.error_radii[:-1])


def test_schrodinger_bounds():
    fam = schrodinger_family(free_model(), (-3.0, 3.0))
    assert fam.C == pytest.approx((1.0 / math.pi) * (1.0 + 10.0 / 128), rel=1e-3)
    assert float(fam.M_of(np.array([0.0]))[0]) == pytest.approx((11.0 + math.sqrt(117.0)) / 2.0)
    assert fam.rotation_scale == 0.5


def test_transfer_matrices():
    A = transfer_matrix(free_model(), 0.5, 0.2)
    assert A.entries == (0.5, -1.0, 1.0, 0.0)
    assert A.det == 1.0


def test_potential_respects_declared_bound():
    model = PotentialModel(base=IrrationalRotation(GOLDEN), f=Observable.constant(2.0), sup_bound=1.0)
    with pytest.raises(EvaluationError):
        model.sequence(0.1, 5)


def test_model_catalog():
    seq = anderson_bernoulli(1.0, 7).sequence(3, 200)
    assert np.array_equal(seq, anderson_bernoulli(1.0, 7).sequence(3, 200))
    assert set(np.unique(seq)) <= {0.0, 1.0}
    assert np.all(np.abs(anderson_uniform(2.0, 7).sequence(0, 200)) <= 1.0)
    assert np.all(np.abs(almost_mathieu(1.0).sequence(0.2, 200)) <= 2.0)
    assert almost_mathieu(1.0).anchor() == 5.0
    assert lloyd(1.0, 0).anchor() is None


def _rho_curve(values, reference):
    energies = np.linspace(-2.5, 2.5, len(values))
    return RotationCurve(
        parameters=energies,
        values=np.asarray(values, dtype=np.float64),
        error_radii=np.full(len(values), 1e-3),
        n=1000,
        x0=0.0,
        omega0=0.3,
        rotation_scale=0.5,
        family={},
        reference=reference,
    )


def test_ids_from_rotation_normalizes_at_anchor():
    curve = _rho_curve([0.5, 0.25, 0.0], (3.0, 0.0, 1e-3))
    ids = ids_from_rotation(curve, free_model(), 3.0)
    assert ids.values.tolist() == [0.0, 0.5, 1.0]
    assert ids.method == "rotation"
    assert np.allclose(ids.error_radii, 4e-3)


def test_ids_from_rotation_needs_anchor_estimate():
    with pytest.raises(PreconditionError):
        ids_from_rotation(_rho_curve([0.5, 0.0], None), free_model())
    with pytest.raises(PreconditionError):
        ids_from_rotation(_rho_curve([0.5, 0.0], (4.0, 0.0, 0.0)), free_model())
