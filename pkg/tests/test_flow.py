import json

import numpy as np
import pytest

from kstriple import flow as fl
from kstriple import quat as qt
from kstriple.elements import inner_elements_from_ks, regular_from_ks
from kstriple.errors import TooShort
from kstriple.threebody import (JacobiState, MassConfig, RegularizedState, eval_F,
                                eval_regularized, outer_energy_factor)

M = MassConfig(1.0, 0.6, 0.4)


def _f1(s, m=M):
    return outer_energy_factor(s.P2, s.Q2, s.f, m)


def _fd_field(s, m, h=1e-6):
    """Hamilton's equations from central differences of ℱ."""
    y = s.as_vector()
    grad = np.zeros(14)
    for k in range(14):
        e = np.zeros(14)
        e[k] = h * max(1.0, abs(y[k]))
        grad[k] = (fl.regularized_value(y + e, s.f, m) - fl.regularized_value(y - e, s.f, m)) / (2 * e[k])
    # (z, w) and (Q2, P2) conjugate pairs
    return np.concatenate([grad[4:8], -grad[0:4], grad[11:14], -grad[8:11]])


def test_field_matches_finite_differences(rng):
    worst = 0.0
    for _ in range(100):
        z = rng.normal(size=4)
        w = rng.normal(size=4)
        Q2 = rng.normal(size=3)
        Q2 *= 8 / np.linalg.norm(Q2)
        s = RegularizedState(qt.KSPoint(z, w), rng.normal(size=3), Q2, 5.0)
        a = fl.hamiltonian_field(s, M)[:14]
        b = _fd_field(s, M)
        worst = max(worst, np.max(np.abs(a - b)) / np.max(np.abs(b)))
    assert worst < 1e-8


def test_field_finite_at_collision():
    w = np.array([0.3, -0.2, 0.5, 0.1])
    s = RegularizedState(qt.KSPoint(np.zeros(4), w), [0, 0.1, 0], [10.0, 0, 0], 3.0)
    d = fl.hamiltonian_field(s, M)
    assert np.all(np.isfinite(d))
    assert np.allclose(d[0:4], w / (4 * M.mu1))
    assert np.allclose(d[8:11], 0.0)


def _kepler_state(e1=0.5, a1=1.0):
    return fl.state_from_elements_pair((a1, e1, 0.4, 0.3, 1.0, 2.0), (20.0, 0.2, 0.2, 0.1, 0.2, 0.5), M)


def test_unperturbed_oscillators():
    s0 = _kepler_state()
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, 3 * T), pert=False, chunks=3, sample_dt=T / 50)
    c = np.sqrt(8 * M.mu1 * _f1(s0))
    I = 0.5 * (c * c * tr.y[:, 0:4] ** 2 + tr.y[:, 4:8] ** 2)
    assert np.max(np.abs(I - I[0])) < 1e-11 * np.sum(I[0])
    # each oscillator: z'' = -(f1 / 2 mu1) z, so z returns after one inner period 2π/nu1 ... twice
    omega = np.sqrt(_f1(s0) / (2 * M.mu1))
    zc = s0.z * np.cos(omega * tr.tau[:, None]) + s0.w / (4 * M.mu1 * omega) * np.sin(omega * tr.tau[:, None])
    assert np.allclose(tr.y[:, 0:4], zc, atol=1e-9)


def test_energy_identity_along_flow():
    s0 = _kepler_state(e1=0.3)
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, 2 * T), chunks=2)
    for k in range(0, len(tr.tau), max(1, len(tr.tau) // 20)):
        s = tr.state(k)
        c = qt.ks_map(s.ks)
        F = eval_F(JacobiState(c.P, c.Q, s.P2, s.Q2), M).total
        assert abs(F + s.f) < 1e-9 * s.f


def test_conservation_short_run():
    s0 = fl.state_from_secular(0.5, 0.3, 0.3, 0.2, 1.0, 20.0, 0.4, 1.0, M)
    T = fl.inner_period_tau(_f1(s0), M)
    d = fl.integrate(s0, M, (0, 50 * T)).drifts()
    assert d["F"] < 1e-10 and d["BL"] < 1e-11 and d["C"] < 1e-10


def test_rectilinear_collisions_are_regular():
    s0 = _kepler_state(e1=1.0 - 1e-16)
    Q1, P1 = qt.ks_map(s0.ks).Q, qt.ks_map(s0.ks).P
    P1 = (P1 @ Q1) / (Q1 @ Q1) * Q1          # purely radial momentum, e1 = 1
    s0 = fl.state_from_jacobi(JacobiState(P1, Q1, s0.P2, s0.Q2), M)
    assert inner_elements_from_ks(s0, M).e1 == 1.0
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, 4.2 * T), pert=False, chunks=4)
    rep = fl.near_collision_events(tr)
    assert rep.hit_zero
    taus = np.array([t for t, _ in rep.events])
    assert len(taus) == 4
    assert np.allclose(np.diff(taus), T, rtol=1e-8)
    assert np.all(np.isfinite(tr.y)) and tr.drifts()["F"] < 1e-10


def test_near_degenerate_pericentre():
    e1 = 1 - 1e-4
    s0 = _kepler_state(e1=e1)
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, 2.2 * T), pert=False, chunks=2)
    rep = fl.near_collision_events(tr)
    ie = inner_elements_from_ks(s0, M)
    assert abs(ie.e1 - e1) < 1e-5
    assert not rep.hit_zero
    assert np.isclose(rep.global_min, ie.a1 * (1 - ie.e1), rtol=1e-6)


def test_frequency_estimate_synthetic():
    t = np.arange(4096) * 0.05
    x = 1.3 * np.cos(1.7 * t + 0.2) + 0.4 * np.sin(0.31 * t)
    rep = fl.frequency_estimate(x, 0.05, 2)
    freqs = sorted(p.freq for p in rep.peaks)
    assert np.allclose(freqs, [0.31, 1.7], rtol=1e-6)
    assert fl.frequency_estimate(np.full(100, 2.5)).peaks == []
    with pytest.raises(TooShort):
        fl.frequency_estimate(np.ones(10))


def test_kepler_frequency_recovered():
    s0 = _kepler_state(e1=0.2)
    nu1 = np.sqrt(2 * _f1(s0) / M.mu1)
    T = 2 * np.pi / nu1
    dt = T / 32
    tr = fl.integrate(s0, M, (0, 40 * T), pert=False, chunks=4, sample_dt=dt)
    Q1x = qt.hopf_unchecked(tr.y[:, 0:4])[:, 0]
    rep = fl.frequency_estimate(Q1x, dt, 1)
    assert abs(rep.peaks[0].freq / nu1 - 1) < 1e-6


def test_frequency_ratio_scales_with_alpha():
    ratios, alphas = [], np.array([0.2, 0.1, 0.05])
    for a in alphas:
        s0 = fl.state_from_elements_pair((1.0, 0.2, 0.4, 0.3, 1.0, 2.0), (1 / a, 0.1, 0.2, 0.1, 0.2, 0.5), M)
        nu1 = np.sqrt(2 * _f1(s0) / M.mu1)
        nu2_guess = nu1 * a ** 1.5
        span = 4 * 2 * np.pi / nu2_guess
        dt = span / 512
        tr = fl.integrate(s0, M, (0, span), pert=False, chunks=4, sample_dt=dt)
        nu2 = fl.frequency_estimate(tr.y[:, 8], dt, 1).peaks[0].freq
        ratios.append(nu2 / nu1)
    slope = np.polyfit(np.log(alphas), np.log(ratios), 1)[0]
    assert abs(slope - 1.5) < 0.05


def test_trajectory_output(tmp_path):
    s0 = _kepler_state()
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, T), chunks=1)
    rep = fl.near_collision_events(tr)
    summary = fl.write_trajectory(tr, tmp_path / "a.csv", tmp_path / "a.json", rep)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].split(",") == fl.CSV_COLUMNS
    assert len(lines[1].split(",")) == len(fl.CSV_COLUMNS)
    assert len(lines) == len(tr.tau) + 2
    assert float(lines[2].split(",")[2]) == tr.y[0, 0]
    assert json.loads((tmp_path / "a.json").read_text())["samples"] == summary["samples"]


def test_regularity_through_collision_derivatives_bounded():
    s0 = _kepler_state(e1=1 - 1e-9)
    T = fl.inner_period_tau(_f1(s0), M)
    tr = fl.integrate(s0, M, (0, 1.2 * T), chunks=2)
    d = np.array([fl.field_vector(y, tr.f, M) for y in tr.y])
    assert np.all(np.isfinite(d)) and np.max(np.abs(d[:, :8])) < 1e3
