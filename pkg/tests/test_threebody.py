import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import masses
from kstriple import quat as qt
from kstriple.errors import CollisionSingular, HyperbolicOuter
from kstriple.quat import CartesianPair, KSPoint
from kstriple.threebody import (JacobiState, MassConfig, RegularizedState, eval_F,
                                eval_regularized, f1_of_L2, inertial_from_jacobi,
                                inertial_hamiltonian, jacobi_from_inertial, pert_potential,
                                total_momentum)


def test_equal_mass_constants():
    m = MassConfig(1, 1, 1)
    assert m.sigma0 == m.sigma1 == 0.5
    assert m.mu1 == 0.5 and m.M1 == 2


@given(masses)
def test_mass_relations(m):
    assert np.isclose(m.sigma0 + m.sigma1, 1.0)
    assert m.mu1 < min(m.m0, m.m1)
    assert m.M2 > m.M1 > 0


def test_rejects_nonpositive_mass():
    with pytest.raises(ValueError):
        MassConfig(1, 0, 1)


def test_jacobi_linear_example():
    m = MassConfig(1, 1, 1)
    p = np.array([[1.0, 0, 0]] * 3)
    s = jacobi_from_inertial(p, np.zeros((3, 3)), m)
    assert np.allclose(s.P1, p[1] + p[2] / 2)


def test_jacobi_roundtrip_and_energy(rng, m):
    for _ in range(50):
        p = rng.normal(size=(3, 3))
        p -= p.mean(axis=0)
        q = rng.normal(size=(3, 3)) * 3
        s = jacobi_from_inertial(p, q, m)
        pb, qb = inertial_from_jacobi(s, m, total_momentum(p), q[0])
        assert np.allclose(pb, p, atol=1e-14) and np.allclose(qb, q, atol=1e-14)
        # with zero total momentum the reduced Hamiltonian equals the inertial one
        assert np.isclose(eval_F(s, m).total, inertial_hamiltonian(p, q, m), rtol=1e-12)


def test_pert_decays_far_away(m):
    Q1 = np.array([1.0, 0, 0])
    vals = [abs(float(pert_potential(Q1, np.array([0, R, 0.0]), m))) for R in (1e2, 1e3, 1e4)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-11


def test_circular_inner_energy(m):
    a1 = 1.7
    v = np.sqrt(m.M1 / a1)
    s = JacobiState([0, m.mu1 * v, 0], [a1, 0, 0], np.zeros(3), [1e9, 0, 0])
    inner = s.P1 @ s.P1 / (2 * m.mu1) - m.mu1 * m.M1 / a1
    assert np.isclose(inner, -m.mu1 * m.M1 / (2 * a1))
    assert np.isclose(eval_F(s, m).kep, inner - m.mu2 * m.M2 / 1e9)


def test_eval_F_collision(m):
    with pytest.raises(CollisionSingular):
        eval_F(JacobiState(np.ones(3), np.zeros(3), np.ones(3), [5, 0, 0]), m)


@given(st.floats(0, 2 * np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi), masses)
def test_pert_rotation_invariance(a, b, c, m):
    from scipy.spatial.transform import Rotation
    R = Rotation.from_euler("zyz", [a, b, c]).as_matrix()
    Q1, Q2 = np.array([0.3, -0.2, 0.1]), np.array([2.0, 5.0, -1.0])
    assert np.isclose(float(pert_potential(R @ Q1, R @ Q2, m)), float(pert_potential(Q1, Q2, m)),
                      rtol=1e-12)


def test_pert_even_for_equal_masses():
    m = MassConfig(1, 1, 2)
    Q1, Q2 = np.array([0.3, -0.2, 0.1]), np.array([2.0, 5.0, -1.0])
    assert np.isclose(float(pert_potential(-Q1, Q2, m)), float(pert_potential(Q1, Q2, m)),
                      rtol=1e-14)


def _random_reg_state(rng, f=3.0, scale=1.0):
    z = rng.normal(size=4) * scale
    P1 = rng.normal(size=3)
    ks = qt.ks_inverse(CartesianPair(qt.hopf(z), P1))
    Q2 = rng.normal(size=3)
    Q2 *= 8.0 / np.linalg.norm(Q2)
    return RegularizedState(ks, rng.normal(size=3), Q2, f)


def test_regularized_matches_physical(rng, m):
    for _ in range(200):
        s = _random_reg_state(rng)
        c = qt.ks_map(s.ks)
        F = eval_F(JacobiState(c.P, c.Q, s.P2, s.Q2), m).total
        r1 = np.linalg.norm(c.Q)
        reg = eval_regularized(s, m, check_f1=False).total
        assert abs(reg - r1 * (F + s.f)) <= 1e-12 * r1 * (abs(F) + s.f)


def test_regularized_finite_at_collision(m):
    w = np.array([0.3, -1.0, 0.2, 0.5])
    s = RegularizedState(KSPoint(np.zeros(4), w), [0, 1.0, 0], [10.0, 0, 0], 5.0)
    parts = eval_regularized(s, m)
    assert parts.pert == 0.0
    assert np.isclose(parts.kep, w @ w / (8 * m.mu1) - m.mu1 * m.M1)


def test_pert_vanishes_quadratically_at_collision(m):
    u = np.array([0.5, 0.5, -0.5, 0.5])
    vals = []
    for eps in (1e-2, 1e-3, 1e-4):
        s = RegularizedState(KSPoint(eps * u, np.zeros(4)), [0, 1.0, 0], [10.0, 0, 0], 5.0)
        vals.append(abs(eval_regularized(s, m).pert) / eps ** 2)
    assert max(vals) < 1.0


def test_hyperbolic_outer_rejected(m):
    s = RegularizedState(KSPoint(np.ones(4), np.zeros(4)), [0, 0, 0], [0.01, 0, 0], 0.1)
    with pytest.raises(HyperbolicOuter):
        eval_regularized(s, m)


def test_f1_examples():
    m = MassConfig(1, 1, 1)
    L2 = 1.3
    f = m.mu2 ** 3 * m.M2 ** 2 / (2 * L2 ** 2)
    assert abs(f1_of_L2(L2, f, m)) < 1e-15
    assert np.isclose(f1_of_L2(1e8, 2.0, m), 2.0)
    # plug-in value: mu2^3 M2^2 / 2 = 1/2 would give 0.5 at f = 1, L2 = 1
    assert np.isclose(f1_of_L2(1.0, 1.0, m), 1.0 - m.mu2 ** 3 * m.M2 ** 2 / 2)
