"""Secular (averaged) perturbation: quadrature averages, α-expansion
coefficients, closed-form quadrupolar / octupolar Hamiltonians, the
first-order elimination generator and the bordered-Hessian test.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .elements import (RegularCoords, fkep_regular,
                       ks_arrays_from_regular, orbit_frame, regular_from_ks)
from .errors import NonPhysicalPoint, SingularCoordinates
from .threebody import MassConfig, RegularizedState, pert_potential
from . import quat as qt

# relative tolerance for the triangle inequality and for C = G2 detection
GEOM_TOL = 1e-12


@dataclass(frozen=True)
class SecularPoint:
    """Reduced Darboux coordinates ``(G1, g1, G2, g2)`` with parameters
    ``L1, L2, C``.  The total angular momentum is vertical, ``h1 = h2 + π``."""

    G1: float
    g1: float
    G2: float
    g2: float
    L1: float
    L2: float
    C: float

    @property
    def on_cover(self) -> bool:
        return abs(self.C - self.G2) <= GEOM_TOL * max(self.C, self.G2)

    def check_physical(self) -> None:
        if min(self.L1, self.L2, self.C, self.G2) <= 0:
            raise NonPhysicalPoint("L1, L2, C, G2 must be positive")
        G1 = abs(self.G1)
        tol = GEOM_TOL * (self.C + self.G2 + self.L1)
        if not (abs(self.C - self.G2) - tol <= G1 <= min(self.L1, self.C + self.G2) + tol):
            raise NonPhysicalPoint("triangle inequality |C-G2| <= G1 <= min(L1, C+G2) violated")
        if self.G2 > self.L2 * (1 + GEOM_TOL):
            raise NonPhysicalPoint("G2 > L2")

    def eccentricities(self):
        e1 = np.sqrt(max(0.0, 1.0 - (self.G1 / self.L1) ** 2))
        e2 = np.sqrt(max(0.0, 1.0 - (self.G2 / self.L2) ** 2))
        return e1, e2

    def inclinations(self):
        """``(i1, i2)`` of the two orbit planes w.r.t. the invariable plane."""
        C, G1, G2 = self.C, abs(self.G1), self.G2
        if G1 == 0.0:
            c1 = 0.0
        elif self.on_cover:
            c1 = G1 / (2.0 * C)
        else:
            c1 = ((C - G2) * (C + G2) + G1 * G1) / (2.0 * C * G1)
        c2 = ((C - G1) * (C + G1) + G2 * G2) / (2.0 * C * G2)
        return float(np.arccos(np.clip(c1, -1, 1))), float(np.arccos(np.clip(c2, -1, 1)))


def _ellipse_frames(sp: SecularPoint):
    i1, i2 = sp.inclinations()
    p1, q1 = orbit_frame(i1, np.pi, sp.g1)
    p2, q2 = orbit_frame(i2, 0.0, sp.g2)
    return p1, q1, p2, q2


def average_pert_vectors(p1, q1, e1, p2, q2, e2, alpha, m: MassConfig, nodes: int = 128) -> float:
    """Double average of ``|Q1| F_pert`` over both mean anomalies.

    Ellipses are given by pericentre unit vectors ``p`` and in-plane normals
    ``q``; the inner semi-major axis is 1 and the outer one ``1/alpha``
    (the average is scale invariant).  Uses eccentric anomalies with the
    weights ``1 - e1 cos u1`` (folded into ``|Q1|``) and ``1 - e2 cos u2``.
    """
    if nodes < 8:
        raise ValueError("nodes too small")
    u = 2.0 * np.pi * np.arange(nodes) / nodes
    cu, su = np.cos(u), np.sin(u)
    p1, q1, p2, q2 = (np.asarray(v, dtype=float) for v in (p1, q1, p2, q2))
    s1 = np.sqrt(max(0.0, 1.0 - e1 * e1))
    s2 = np.sqrt(max(0.0, 1.0 - e2 * e2))
    Q1 = (cu - e1)[:, None] * p1 + (s1 * su)[:, None] * q1
    Q2 = ((cu - e2)[:, None] * p2 + (s2 * su)[:, None] * q2) / alpha
    r1 = 1.0 - e1 * cu
    wt2 = 1.0 - e2 * cu
    F = pert_potential(Q1[:, None, :], Q2[None, :, :], m)
    return float(np.mean(r1[:, None] * F * wt2[None, :]))


def average_pert(sp: SecularPoint, a1: float, alpha: float, m: MassConfig, nodes: int = 128) -> float:
    """``(1/4π²) ∬ |Q1| F_pert du1 dl2`` at a secular point.

    ``a1`` only sets the scale and drops out of the result.
    """
    sp.check_physical()
    if a1 <= 0:
        raise ValueError("a1 must be positive")
    e1, e2 = sp.eccentricities()
    p1, q1, p2, q2 = _ellipse_frames(sp)
    return average_pert_vectors(p1, q1, e1, p2, q2, e2, alpha, m, nodes)


class AlphaExpansion(NamedTuple):
    c2: float
    c3: float
    residual: float


def _extrapolate(alphas, vals):
    """Polynomial extrapolation in α² to α = 0; returns (limit, error estimate)."""
    x = np.asarray(alphas, dtype=float) ** 2
    y = np.asarray(vals, dtype=float)
    full = np.polyval(np.polyfit(x, y, len(x) - 1), 0.0)
    if len(x) < 3:
        return float(full), float("nan")
    order = np.argsort(x)
    xs, ys = x[order][:-1], y[order][:-1]
    part = np.polyval(np.polyfit(xs, ys, len(xs) - 1), 0.0)
    return float(full), float(abs(full - part))


def alpha_expansion_vectors(p1, q1, e1, p2, q2, e2, m: MassConfig,
                            alphas=(0.02, 0.01, 0.005), nodes: int = 128) -> AlphaExpansion:
    """Coefficients of ``α³`` and ``α⁴`` in the averaged perturbation.

    Moving the inner pericentre by π flips ``Q1``; the even part of the
    average is then ``c2 α³ + c4 α⁵ + ...`` and the odd part
    ``c3 α⁴ + c5 α⁶ + ...``, so both are extrapolated in α².
    """
    ev, od = [], []
    for a in alphas:
        plus = average_pert_vectors(p1, q1, e1, p2, q2, e2, a, m, nodes)
        minus = average_pert_vectors(-np.asarray(p1), -np.asarray(q1), e1, p2, q2, e2, a, m, nodes)
        ev.append(0.5 * (plus + minus) / a ** 3)
        od.append(0.5 * (plus - minus) / a ** 4)
    c2, r2 = _extrapolate(alphas, ev)
    c3, r3 = _extrapolate(alphas, od)
    return AlphaExpansion(c2, c3, max(r2, r3))


def alpha_expansion(sp: SecularPoint, m: MassConfig, alphas=(0.02, 0.01, 0.005),
                    nodes: int = 128) -> AlphaExpansion:
    sp.check_physical()
    e1, e2 = sp.eccentricities()
    p1, q1, p2, q2 = _ellipse_frames(sp)
    return alpha_expansion_vectors(p1, q1, e1, p2, q2, e2, m, alphas, nodes)


def coplanar_frames(g1: float, g2: float):
    p1 = np.array([np.cos(g1), np.sin(g1), 0.0])
    q1 = np.array([-np.sin(g1), np.cos(g1), 0.0])
    p2 = np.array([np.cos(g2), np.sin(g2), 0.0])
    q2 = np.array([-np.sin(g2), np.cos(g2), 0.0])
    return p1, q1, p2, q2


# ---- quadrupolar closed form -------------------------------------------

def quad_partials(G1, g1, G2, L1, L2, C, mu_quad, on_cover=False):
    """``(f, ∂f/∂G1, ∂f/∂g1, ∂f/∂G2)`` of the quadrupolar secular Hamiltonian

    ``f = -mu_quad L2³/(8 G2³) [2 + 3e1² - 3 sin²i (1 - e1² + 5 e1² sin² g1)]``

    with ``e1² = 1 - G1²/L1²`` and ``i`` the mutual inclination, written
    through ``X = cos² i``.  With ``on_cover`` (``C = G2``) the expression
    is regular through ``G1 = 0`` and valid for either sign of ``G1``.
    """
    if on_cover:
        X = G1 * G1 / (4.0 * G2 * G2)
        XG1 = G1 / (2.0 * G2 * G2)
        XG2 = 1.0 / G2 - G1 * G1 / (2.0 * G2 ** 3)
    else:
        if G1 == 0.0:
            raise SingularCoordinates("G1 = 0 away from C = G2")
        D = (C - G2) * (C + G2) - G1 * G1
        X = D * D / (4.0 * G1 * G1 * G2 * G2)
        XG1 = -D / (G1 * G2 * G2) - D * D / (2.0 * G1 ** 3 * G2 * G2)
        XG2 = -D / (G1 * G1 * G2) - D * D / (2.0 * G1 * G1 * G2 ** 3)
    K = mu_quad * L2 ** 3 / (8.0 * G2 ** 3)
    y = G1 * G1 / (L1 * L1)
    ee = 1.0 - y
    s = np.sin(g1) ** 2
    u = y + 5.0 * ee * s
    B = 2.0 + 3.0 * ee - 3.0 * (1.0 - X) * u
    dy = 2.0 * G1 / (L1 * L1)
    dB_dG1 = -3.0 * dy + 3.0 * XG1 * u - 3.0 * (1.0 - X) * (dy - 5.0 * dy * s)
    dB_dg = -15.0 * ee * np.sin(2.0 * g1) * (1.0 - X)
    dB_dG2 = 3.0 * XG2 * u
    return -K * B, -K * dB_dG1, -K * dB_dg, 3.0 * K * B / G2 - K * dB_dG2


def f_quad_all(sp: SecularPoint, m: MassConfig):
    """``(f, ∂f/∂G1, ∂f/∂g1, ∂f/∂G2)`` at a secular point."""
    return quad_partials(sp.G1, sp.g1, sp.G2, sp.L1, sp.L2, sp.C, m.mu_quad, sp.on_cover)


def f_quad(sp: SecularPoint, m: MassConfig) -> float:
    return float(f_quad_all(sp, m)[0])


def nu_quad2(sp: SecularPoint, m: MassConfig) -> float:
    """``∂f_quad/∂G2`` at fixed ``(G1, g1, C, L1, L2)``."""
    return float(f_quad_all(sp, m)[3])


def octupolar_coplanar(e1: float, e2: float, dg: float) -> float:
    """Coplanar octupolar secular term, up to a normalization constant."""
    return -(15.0 / 64.0) * (4.0 * e1 + 3.0 * e1 ** 3) * e2 * (1.0 - e2 * e2) ** -2.5 * np.cos(dg)


# ---- first-order elimination of the fast angle ------------------------

def _fpert_regular(x, f: float, m: MassConfig):
    """Regularized perturbation ``|z|² F_pert`` at regular-chart points."""
    z, w, Q2, P2 = ks_arrays_from_regular(x, f, m)
    r1 = np.sum(z * z, axis=-1)
    Q1 = qt.hopf_unchecked(z)
    return r1 * pert_potential(Q1, Q2, m)


def _theta_grid(x, thetas):
    x = np.asarray(x, dtype=float)
    pts = np.repeat(x[..., None, :], len(thetas), axis=-2)
    pts[..., 0] = thetas
    return pts


@dataclass
class EliminationReport:
    """Result of :func:`elimination_generator`.

    ``H_hat(x)`` evaluates the generator at regular-chart vectors; the
    arrays hold one entry per base point.
    """

    H_hat: Callable
    flow: Callable
    mean_abs: np.ndarray
    H_amplitude: np.ndarray
    pert_amplitude: np.ndarray
    residual_amplitude: np.ndarray
    f: float = 0.0
    n_theta: int = 64


def elimination_generator(base, m: MassConfig, f: Optional[float] = None, n_theta: int = 64,
                          n_check: int = 16, h: float = 1e-6) -> EliminationReport:
    """First-order generator removing the fast angle ``theta0`` from ℱ_pert.

    ``Ĥ = (1/nu1) ∫ (ℱ_pert - <ℱ_pert>) dtheta0`` realized by FFT over
    ``n_theta`` nodes.  For every base point the report contains the
    oscillation amplitude of ℱ_pert and of ℱ∘φ¹ (φ¹ the time-one map of
    Ĥ, one RK4 step with central-difference gradients) over ``n_check``
    values of ``theta0``.

    ``base`` is a sequence of :class:`RegularCoords` (``f`` required) or of
    :class:`RegularizedState` (``f`` taken from the states).
    """
    base = list(base) if isinstance(base, (list, tuple)) else [base]
    xs = []
    for b in base:
        if isinstance(b, RegularizedState):
            f = b.f if f is None else f
            b = regular_from_ks(b, m)
        xs.append(b.as_vector())
    if f is None:
        raise ValueError("energy parameter f required for regular-chart input")
    xs = np.array(xs)
    thetas = 2.0 * np.pi * np.arange(n_theta) / n_theta
    k = np.fft.fftfreq(n_theta, d=1.0 / n_theta)
    kinv = np.zeros(n_theta, dtype=complex)
    kinv[1:] = 1.0 / (1j * k[1:])
    if n_theta % 2 == 0:
        kinv[n_theta // 2] = 0.0  # Nyquist mode has no antiderivative on the grid

    def H_hat(x):
        x = np.asarray(x, dtype=float)
        vals = _fpert_regular(_theta_grid(x, thetas), f, m)
        nu1 = np.sqrt(2.0 * (f - m.mu2 ** 3 * m.M2 ** 2 / (2 * x[..., 11] ** 2)) / m.mu1)
        coef = np.fft.fft(vals, axis=-1) * kinv
        # evaluate the trigonometric interpolant at the requested theta0
        phase = np.exp(1j * k * x[..., 0, None])
        return np.real(np.sum(coef * phase, axis=-1)) / n_theta / nu1

    def grad(x):
        x = np.asarray(x, dtype=float)
        eye = h * np.eye(14)
        pts = np.concatenate([x[..., None, :] + eye, x[..., None, :] - eye], axis=-2)
        vals = H_hat(pts)
        return (vals[..., :14] - vals[..., 14:]) / (2.0 * h)

    def field(x):
        g = grad(x)
        # q' = dĤ/dp, p' = -dĤ/dq
        return np.concatenate([g[..., 7:], -g[..., :7]], axis=-1)

    def flow(x, steps: int = 1):
        y = np.asarray(x, dtype=float).copy()
        dt = 1.0 / steps
        for _ in range(steps):
            k1 = field(y)
            k2 = field(y + 0.5 * dt * k1)
            k3 = field(y + 0.5 * dt * k2)
            k4 = field(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y

    def total(x):
        return fkep_regular(x[..., 7], x[..., 11], f, m) + _fpert_regular(x, f, m)

    check = 2.0 * np.pi * (np.arange(n_check) + 0.5) / n_check
    mean_abs, h_amp, p_amp, r_amp = [], [], [], []
    for x in xs:
        grid = _theta_grid(x, thetas)
        hv = H_hat(grid)
        mean_abs.append(abs(np.mean(hv)))
        h_amp.append(np.max(np.abs(hv)))
        pv = _fpert_regular(grid, f, m)
        p_amp.append(np.max(np.abs(pv - pv.mean())))
        cg = _theta_grid(x, check)
        tv = total(flow(cg))
        r_amp.append(np.max(np.abs(tv - tv.mean())))
    return EliminationReport(H_hat, flow, np.array(mean_abs), np.array(h_amp),
                             np.array(p_amp), np.array(r_amp), f, n_theta)


def hierarchical_base_point(alpha: float, m: MassConfig, a1: float = 1.0,
                            inner=(0.3, 0.25, 0.2), angles=(0.3, 1.0, 2.0, 4.0),
                            e2: float = 0.3, outer_angles=(0.7, 1.1, 0.4), cos_i2: float = 0.4):
    """A regular-chart point with inner semi-major axis ``a1`` and outer
    ``a1/alpha`` on the ``ℱ_Kep = 0`` level.  ``inner`` holds the actions
    ``P1..P3`` as fractions of ``P0``.  Returns ``(RegularCoords, f)``."""
    a2 = a1 / alpha
    L2 = m.mu2 * np.sqrt(m.M2 * a2)
    f1 = m.mu1 * m.M1 / (2.0 * a1)
    f = f1 + m.mu2 ** 3 * m.M2 ** 2 / (2.0 * L2 * L2)
    P0 = m.mu1 * np.sqrt(m.M1 * a1)
    P = np.array([P0, *(P0 * np.asarray(inner))])
    G2 = L2 * np.sqrt(1.0 - e2 * e2)
    rc = RegularCoords(P, np.asarray(angles, dtype=float), L2, outer_angles[0], G2,
                       outer_angles[1], G2 * cos_i2, outer_angles[2])
    return rc, f


# ---- bordered Hessian ---------------------------------------------------

def _num_grad_hess(K, x, h):
    n = len(x)
    k0 = K(x)
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        kp, km = K(x + ei), K(x - ei)
        g[i] = (kp - km) / (2 * h[i])
        H[i, i] = (kp - 2 * k0 + km) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (K(x + ei + ej) - K(x + ei - ej) - K(x - ei + ej)
                                 + K(x - ei - ej)) / (4 * h[i] * h[j])
    return g, H


def gradient_hessian(K: Callable, point, h: float = 1e-3):
    """Central-difference gradient and Hessian, Richardson-refined."""
    x = np.asarray(point, dtype=float)
    hv = h * np.maximum(1.0, np.abs(x))
    g1, H1 = _num_grad_hess(K, x, hv)
    g2, H2 = _num_grad_hess(K, x, hv / 2)
    return (4 * g2 - g1) / 3, (4 * H2 - H1) / 3


def bordered_matrix(grad, hess) -> np.ndarray:
    g = np.asarray(grad, dtype=float)
    n = len(g)
    B = np.zeros((n + 1, n + 1))
    B[0, 1:] = g
    B[1:, 0] = g
    B[1:, 1:] = hess
    return B


def bordered_hessian(K: Callable, point, h: float = 1e-3, grad=None, hess=None) -> float:
    """Determinant of ``[[0, ∇K], [∇Kᵀ, ∇²K]]`` at ``point``.

    Derivatives are numeric unless ``grad``/``hess`` are supplied.
    """
    if grad is None or hess is None:
        g, H = gradient_hessian(K, point, h)
        grad = g if grad is None else grad
        hess = H if hess is None else hess
    return float(np.linalg.det(bordered_matrix(grad, hess)))


def kepler_bordered_oracle(P0: float, L2: float, f: float, m: MassConfig) -> float:
    """Closed-form bordered determinant of ℱ_Kep(P0, L2): ``P0 ν (2ν'² - ν ν'')``
    with ``ν = nu1(L2)``."""
    c = m.mu2 ** 3 * m.M2 ** 2
    f1 = f - c / (2 * L2 * L2)
    f1p = c / L2 ** 3
    f1pp = -3.0 * c / L2 ** 4
    nu = np.sqrt(2.0 * f1 / m.mu1)
    nup = f1p / (m.mu1 * nu)
    nupp = (f1pp / m.mu1 - nup * nup) / nu
    return float(P0 * nu * (2 * nup * nup - nu * nupp))
