from __future__ import annotations

import math

import numpy as np
import pytest

from app.domain.circlemap import ParameterInterval, rotation_number
from app.domain.errors import InvalidMatrixError, PreconditionError
from app.application.services.sweeps import curve_digest
from app.domain.projective import ProjectiveFamily, operator_norm_sq, projective_dx, projective_lift
from app.domain.schrodinger import TransferMatrix, almost_mathieu, projectivize, schrodinger_family


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return [[c, -s], [s, c]]


def _rotation_matrix(a, w):
    t = np.pi * a
    return (np.cos(t), -np.sin(t), np.sin(t), np.cos(t))


def _rotation_matrix_da(a, w):
    t = np.pi * a
    return (-np.pi * np.sin(t), -np.pi * np.cos(t), np.pi * np.cos(t), -np.pi * np.sin(t))


@pytest.fixture
def rotations(rotation):
    return ProjectiveFamily(
        rotation, ParameterInterval(0.0, 0.4), _rotation_matrix, _rotation_matrix_da, name="rotations"
    )


def test_identity_lifts_to_identity():
    xs = np.linspace(-2.0, 2.0, 81)
    assert np.allclose(projective_lift(1.0, 0.0, 0.0, 1.0, xs), xs, atol=1e-14)


def test_lift_is_degree_one_and_increasing():
    xs = np.linspace(-1.0, 2.0, 301)
    f = projective_lift(2.0, 1.0, 1.0, 1.0, xs)
    assert np.all(np.diff(f) > 0.0)
    assert np.allclose(projective_lift(2.0, 1.0, 1.0, 1.0, xs + 1.0), f + 1.0, atol=1e-12)


def test_rotation_by_third_of_turn():
    lift = projectivize(_rot(math.pi / 3.0))
    assert float(lift(0.0)) == pytest.approx(1.0 / 3.0)
    assert float(lift(0.1)) == pytest.approx(0.1 + 1.0 / 3.0)
    assert float(lift(0.9)) == pytest.approx(0.9 + 1.0 / 3.0)


def test_canonical_lift_starts_in_unit_interval():
    lift = projectivize([[1.0, 5.0], [0.0, 1.0]])
    assert 0.0 <= float(lift(0.0)) < 1.0


def test_hyperbolic_derivatives():
    lift = projectivize(np.diag([2.0, 0.5]))
    assert float(lift.dx(0.0)) == pytest.approx(0.25)
    assert float(lift.dx(0.5)) == pytest.approx(4.0)


def test_projectivize_needs_unit_determinant():
    with pytest.raises(InvalidMatrixError):
        projectivize([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidMatrixError):
        TransferMatrix((2.0, 0.0, 0.0, 1.0))


def test_operator_norm():
    assert operator_norm_sq(2.0, 0.0, 0.0, 0.5) == pytest.approx(4.0)
    assert operator_norm_sq(1.0, 0.0, 0.0, 1.0) == pytest.approx(1.0)


def test_rotation_family_rotation_number(rotations):
    # RP¹ 위 x ↦ x + a, 보고 단위는 절반
    est = rotation_number(rotations, 0.3, 0.2, 0.0, 1000)
    assert est.value == pytest.approx(0.15, abs=1e-9)


def test_rotation_family_constants(rotations):
    assert rotations.C == pytest.approx(1.0 + 10.0 / 128, rel=1e-9)
    assert np.all(rotations.M_of(np.array([0.1, 0.5])) == 2.0)
    assert np.all(rotations.offsets(np.linspace(0.0, 0.4, 9), 0.0) == 0.0)
    assert rotations.describe()["kind"] == "projective"


def test_walk_step_must_respect_C(rotation):
    fam = ProjectiveFamily(
        rotation, ParameterInterval(0.0, 0.4), _rotation_matrix, _rotation_matrix_da, walk_step=0.5
    )
    with pytest.raises(PreconditionError):
        fam.walk_step


# ===== ‖A‖² 상계 =====

def _random_unimodular(rng):
    while True:
        m11, m12, m21 = rng.uniform(-3.0, 3.0, 3)
        if abs(m11) >= 0.3:
            return m11, m12, m21, (1.0 + m12 * m21) / m11


def test_projective_dx_is_bounded_by_norm_squared():
    rng = np.random.default_rng(11)
    x = np.arange(4096) / 4096.0
    for _ in range(100):
        m = _random_unimodular(rng)
        assert projective_dx(*m, x).max() <= operator_norm_sq(*m) * (1.0 + 1e-12)


def test_projective_dx_attains_norm_squared_on_contracted_direction():
    rng = np.random.default_rng(12)
    for _ in range(50):
        m = _random_unimodular(rng)
        _, _, vt = np.linalg.svd(np.array([[m[0], m[1]], [m[2], m[3]]]))
        v = vt[1]
        x = math.atan2(v[1], v[0]) / math.pi
        assert projective_dx(*m, x) == pytest.approx(operator_norm_sq(*m), rel=1e-9)


def test_schrodinger_M_bounds_fiber_derivative():
    fam = schrodinger_family(almost_mathieu(1.0), (-3.0, 3.0))
    E, x = np.meshgrid(np.linspace(-3.0, 3.0, 241), np.arange(512) / 512.0)
    for w in fam.fiber_data(fam.base.orbit(0.3, 20)):
        sup = float(np.max(fam.dx(E, w, x)))
        assert sup <= fam.M_of(np.array([w]))[0] * (1.0 + 1e-12)


# ===== 캐시 키 =====

def _shear(a, w):
    return (np.ones_like(a), a, np.zeros_like(a), np.ones_like(a))


def test_describe_tells_matrices_apart(rotation):
    J = ParameterInterval(0.0, 0.4)
    rot = ProjectiveFamily(rotation, J, _rotation_matrix, _rotation_matrix_da, name="same")
    shear = ProjectiveFamily(rotation, J, _shear, name="same")
    assert rot.describe() != shear.describe()
    grid = np.linspace(0.0, 0.4, 5)
    assert curve_digest(rot, grid, 100, 0.0, 0.3, None) != curve_digest(shear, grid, 100, 0.0, 0.3, None)


def test_describe_uses_explicit_tag(rotation):
    J = ParameterInterval(0.0, 0.4)
    first = ProjectiveFamily(rotation, J, lambda a, w: _shear(a, w), tag="shear")
    again = ProjectiveFamily(rotation, J, lambda a, w: _shear(a, w), tag="shear")
    assert first.describe() == again.describe()
    assert first.describe()["matrix"] == "shear"
