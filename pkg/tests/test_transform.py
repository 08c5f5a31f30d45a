"""U/Z transforms: examples, round trips, structure."""

import numpy as np
import pytest

from wkbmarch.coeffs import AffineSquaredModel, ConstantModel
from wkbmarch.transform import (
    P_INV,
    P_MATRIX,
    PhaseRotation,
    StateVec,
    u_from_z,
    u_initial,
    wave_from_u,
    z_from_u,
)


def test_p_matrices_inverse():
    assert np.max(np.abs(P_MATRIX @ P_INV - np.eye(2))) <= 2 * np.finfo(float).eps
    assert np.max(np.abs(P_INV @ P_MATRIX - np.eye(2))) <= 2 * np.finfo(float).eps


def test_phase_rotation_unit_modulus():
    rot = PhaseRotation(0.7, 0.01, "forward")
    d = rot.diagonal()
    assert np.allclose(np.abs(d), 1.0, atol=5e-16)
    assert d[1] == np.conj(d[0])
    back = PhaseRotation(0.7, 0.01, "backward").diagonal()
    assert np.allclose(d * back, 1.0, atol=5e-16)


def test_u_initial_constant_coefficient():
    u = u_initial(1.0, 1.0j, ConstantModel(1.0), 0.05)
    assert np.allclose(u.vec, [1.0, 1.0j], atol=1e-16)
    assert u.rep == "U"


def test_u_initial_affine_squared():
    eps = 0.2
    u = u_initial(1.0, 1.0j, AffineSquaredModel(), eps)
    want = np.array([2.0 ** -0.5, np.sqrt(2.0) * (eps + 1.0j)])
    assert np.allclose(u.vec, want, rtol=1e-15)


def test_u_initial_zero_data():
    u = u_initial(0.0, 0.0, AffineSquaredModel(), 0.1)
    assert np.all(u.vec == 0.0)


def test_z_from_u_example():
    z = z_from_u(StateVec.u(1.0, 1.0j), 0.0, 0.1)
    assert np.allclose(z.vec, [np.sqrt(2.0) * 1.0j, 0.0], atol=1e-16)
    assert z.rep == "Z"


def test_u_from_z_examples():
    u = u_from_z(StateVec.z(np.sqrt(2.0) * 1.0j, 0.0), 0.0, 0.1)
    assert np.allclose(u.vec, [1.0, 1.0j], atol=5e-16)

    assert np.all(u_from_z(StateVec.z(0.0, 0.0), 1.3, 0.1).vec == 0.0)

    eps = 0.05
    u = u_from_z(StateVec.z(1.0, 0.0), np.pi * eps / 2.0, eps)
    want = np.array([1.0, 1.0j]) / np.sqrt(2.0)
    assert np.allclose(u.vec, want, atol=5e-16)


def test_round_trip_u_z_u(rng):
    eps = 0.01
    worst = 0.0
    for _ in range(1000):
        vec = rng.normal(size=2) + 1j * rng.normal(size=2)
        u = StateVec(vec, "U")
        phi = float(rng.uniform(0.0, 10.0))
        back = u_from_z(z_from_u(u, phi, eps), phi, eps)
        worst = max(worst, np.max(np.abs(back.vec - vec)) / np.max(np.abs(vec)))
    assert worst <= 1e-14


def test_rotation_preserves_moduli(rng):
    for _ in range(100):
        vec = rng.normal(size=2) + 1j * rng.normal(size=2)
        rot = PhaseRotation(float(rng.uniform(0, 20)), 0.03)
        out = rot.apply(vec)
        assert np.allclose(np.abs(out), np.abs(vec), rtol=1e-15)


def test_linearity(rng):
    eps = 0.1
    vec = rng.normal(size=2) + 1j * rng.normal(size=2)
    alpha = complex(rng.normal(), rng.normal())
    z1 = z_from_u(StateVec(alpha * vec, "U"), 0.4, eps).vec
    z2 = alpha * z_from_u(StateVec(vec, "U"), 0.4, eps).vec
    assert np.allclose(z1, z2, rtol=1e-14)


def test_wave_from_u_constant():
    w, wp = wave_from_u(StateVec.u(1.0, 1.0j), ConstantModel(1.0), 0.3, 0.1)
    assert w == pytest.approx(1.0)
    assert wp == pytest.approx(1.0j)


def test_wave_from_u_affine_example():
    w, wp = wave_from_u(StateVec.u(1.0, 0.0), AffineSquaredModel(), 0.5, 0.1)
    assert w == pytest.approx(1.0)
    assert wp == pytest.approx(-0.05)  # -(eps/4) a' a^{-5/4} U1 at a=1, a'=2


def test_wave_initial_composition(rng):
    model = AffineSquaredModel()
    eps = 0.07
    for _ in range(50):
        phi0 = complex(rng.normal(), rng.normal())
        phi1 = complex(rng.normal(), rng.normal())
        u = u_initial(phi0, phi1, model, eps)
        w, wp = wave_from_u(u, model, 0.0, eps)
        assert w == pytest.approx(phi0, rel=1e-13, abs=1e-13)
        assert wp == pytest.approx(phi1, rel=1e-13, abs=1e-13)


def test_representation_tags_enforced():
    u = StateVec.u(1.0, 0.0)
    z = StateVec.z(1.0, 0.0)
    with pytest.raises(ValueError):
        z_from_u(z, 0.0, 0.1)
    with pytest.raises(ValueError):
        u_from_z(u, 0.0, 0.1)
    with pytest.raises(ValueError):
        StateVec(np.zeros(2), "Q")
