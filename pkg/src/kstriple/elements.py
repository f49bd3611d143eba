"""Kepler elements, outer Delaunay variables, inner elements of the
regularized motion and the regular (action-angle) chart of the inner
oscillators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import quat as qt
from .errors import (ChartDegenerate, DegenerateElement, EccentricityOutOfRange,
                     HyperbolicOuter)
from .threebody import MassConfig, RegularizedState, outer_energy_factor

TWO_PI = 2.0 * np.pi


def wrap(angle):
    """Reduce angles to [0, 2π)."""
    out = np.mod(angle, TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _kepler_newton(l, e, iters=60):
    l = np.asarray(l, dtype=float)
    e = np.asarray(e, dtype=float)
    lw = np.mod(l + np.pi, TWO_PI) - np.pi
    # the starting value pi*sign(l) is safe for high eccentricity
    u = np.where(e > 0.8, np.where(lw >= 0, np.pi, -np.pi), lw + e * np.sin(lw))
    for _ in range(iters):
        fu = u - e * np.sin(u) - lw
        du = fu / (1.0 - e * np.cos(u))
        u = u - du
        if np.all(np.abs(du) < 1e-15):
            break
    return u + (l - lw)


def solve_kepler(l: float, e: float) -> float:
    """Eccentric anomaly ``u`` with ``u - e sin u = l`` (Newton, bisection fallback)."""
    if not (0.0 <= e < 1.0):
        raise EccentricityOutOfRange(f"e = {e} not in [0, 1)")
    u = float(_kepler_newton(l, e))
    if abs(u - e * np.sin(u) - l) > 1e-13 * max(1.0, abs(l)):
        u = kepler_bisect(l, e)
    return wrap(u)


def kepler_bisect(l: float, e: float, tol: float = 1e-15) -> float:
    """Bisection solution of Kepler's equation; used as an oracle."""
    k = np.floor((l + np.pi) / TWO_PI)
    lw = l - k * TWO_PI
    lo, hi = -np.pi - 1.0, np.pi + 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - e * np.sin(mid) - lw > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) + k * TWO_PI


def orbit_frame(i, node, argp):
    """Unit pericentre direction and in-plane normal (rows of the rotation)."""
    ci, si = np.cos(i), np.sin(i)
    cn, sn = np.cos(node), np.sin(node)
    cw, sw = np.cos(argp), np.sin(argp)
    p_hat = np.array([cn * cw - sn * sw * ci, sn * cw + cn * sw * ci, sw * si])
    q_hat = np.array([-cn * sw - sn * cw * ci, -sn * sw + cn * cw * ci, cw * si])
    return p_hat, q_hat


def conic_position(a, e, u, p_hat, q_hat):
    """Position on an ellipse (e <= 1) as a function of eccentric anomaly."""
    u = np.asarray(u, dtype=float)[..., None]
    return a * ((np.cos(u) - e) * p_hat + np.sqrt(max(0.0, 1.0 - e * e)) * np.sin(u) * q_hat)


def state_from_elements(a, e, i, node, argp, mean_anom, mass, gm):
    """(Q, P) of ``H = |P|^2/(2 mass) - mass gm / |Q|`` from classical elements."""
    u = solve_kepler(mean_anom, e)
    p_hat, q_hat = orbit_frame(i, node, argp)
    Q = conic_position(a, e, u, p_hat, q_hat)
    r = a * (1.0 - e * np.cos(u))
    n = np.sqrt(gm / a ** 3)
    v = (a * a * n / r) * (-np.sin(u) * p_hat + np.sqrt(1.0 - e * e) * np.cos(u) * q_hat)
    return Q, mass * v


@dataclass(frozen=True)
class Elements:
    a: float
    e: float
    i: float
    node: Optional[float]
    argp: Optional[float]
    u: float
    mean_anom: float


def angle_in_plane(a, b, normal) -> float:
    """Angle from ``a`` to ``b`` measured counterclockwise about ``normal``."""
    nh = normal / np.linalg.norm(normal)
    return wrap(np.arctan2(np.cross(a, b) @ nh, a @ b))


def elements_from_state(Q, P, mass, gm) -> Elements:
    """Classical elements; node/argp are ``None`` where undefined."""
    Q = np.asarray(Q, dtype=float)
    v = np.asarray(P, dtype=float) / mass
    r = np.linalg.norm(Q)
    energy = 0.5 * v @ v - gm / r
    if energy >= 0:
        raise HyperbolicOuter("orbit is not elliptic")
    a = -gm / (2.0 * energy)
    h = np.cross(Q, v)
    hn = np.linalg.norm(h)
    e_vec = np.cross(v, h) / gm - Q / r
    e = float(np.linalg.norm(e_vec))
    inc = float(np.arccos(np.clip(h[2] / hn, -1.0, 1.0))) if hn > 0 else float("nan")
    ecosu = 1.0 - r / a
    esinu = (Q @ v) / np.sqrt(gm * a)
    u = float(np.arctan2(esinu, ecosu))
    M = u - esinu
    node = argp = None
    nvec = np.array([-h[1], h[0], 0.0])
    nn = np.linalg.norm(nvec)
    if hn > 0 and nn > 1e-12 * hn:
        node = wrap(np.arctan2(nvec[1], nvec[0]))
        if e > 1e-12:
            argp = angle_in_plane(nvec, e_vec, h)
    return Elements(float(a), e, inc, node, argp, wrap(u), wrap(M))


@dataclass(frozen=True)
class DelaunayOuter:
    L2: float
    l2: float
    G2: float
    g2: float
    H2: float
    h2: float


def outer_state_from_delaunay(d: DelaunayOuter, m: MassConfig):
    """(Q2, P2) of the outer Kepler problem with masses (mu2, M2)."""
    if not (d.L2 > 0 and d.G2 > 0 and d.L2 >= d.G2 >= abs(d.H2)):
        raise DegenerateElement("need L2 >= G2 >= |H2| > 0")
    if d.G2 >= d.L2:
        raise DegenerateElement("circular outer orbit: g2 undefined")
    if abs(d.H2) >= d.G2:
        raise DegenerateElement("equatorial outer orbit: h2 undefined")
    a2 = (d.L2 / m.mu2) ** 2 / m.M2
    e2 = np.sqrt(1.0 - (d.G2 / d.L2) ** 2)
    inc = np.arccos(d.H2 / d.G2)
    return state_from_elements(a2, e2, inc, d.h2, d.g2, d.l2, m.mu2, m.M2)


def delaunay_from_outer_state(Q2, P2, m: MassConfig) -> DelaunayOuter:
    el = elements_from_state(Q2, P2, m.mu2, m.M2)
    if el.node is None or el.argp is None:
        raise DegenerateElement("outer orbit circular or equatorial")
    L2 = m.mu2 * np.sqrt(m.M2 * el.a)
    G2 = L2 * np.sqrt(1.0 - el.e ** 2)
    return DelaunayOuter(L2, el.mean_anom, G2, el.argp, G2 * np.cos(el.i), el.node)


@dataclass(frozen=True)
class InnerElements:
    a1: float
    e1: float
    u1: float
    G1: float
    g1: Optional[float] = None
    H1: Optional[float] = None
    h1: Optional[float] = None
    gm_eff: float = float("nan")


def inner_elements_from_ks(s: RegularizedState, m: MassConfig) -> InnerElements:
    """Elements of the Kepler ellipse traced by ``Q1 = z̄ i z`` under ℱ_Kep.

    The ellipse belongs to the Kepler problem with masses ``mu1`` and
    ``M1 + ℱ_Kep/mu1``; a rectilinear orbit (e1 = 1) is a valid result.
    """
    f1 = outer_energy_factor(s.P2, s.Q2, s.f, m)
    if f1 <= 0:
        raise HyperbolicOuter(f"f1 = {f1} <= 0")
    z, w = s.z, s.w
    r = float(qt.norm2(z))
    fkep = w @ w / (8 * m.mu1) + f1 * r - m.mu1 * m.M1
    k = m.mu1 * m.M1 + fkep
    a1 = k / (2.0 * f1)
    gm = k / m.mu1
    Gvec = qt.inner_angular_momentum(z, w)
    G1 = float(np.linalg.norm(Gvec))
    L1 = m.mu1 * np.sqrt(gm * a1)
    e1 = float(np.sqrt(max(0.0, 1.0 - (G1 / L1) ** 2)))
    ecosu = 1.0 - r / a1
    esinu = (float(qt.inner_radial_momentum(z, w)) / m.mu1) / np.sqrt(gm * a1)
    u1 = wrap(np.arctan2(esinu, ecosu)) if (ecosu or esinu) else 0.0
    g1 = H1 = h1 = None
    if r > 0 and G1 > 0:
        c = qt.ks_map(s.ks)
        v = c.P / m.mu1
        h = np.cross(c.Q, v)
        e_vec = np.cross(v, h) / gm - c.Q / np.sqrt(c.Q @ c.Q)
        H1 = float(m.mu1 * h[2])
        nvec = np.array([-h[1], h[0], 0.0])
        nn = np.linalg.norm(nvec)
        if nn > 1e-12 * np.linalg.norm(h):
            h1 = wrap(np.arctan2(nvec[1], nvec[0]))
            if np.linalg.norm(e_vec) > 1e-12:
                g1 = angle_in_plane(nvec, e_vec, h)
    return InnerElements(float(a1), e1, u1, G1, g1, H1, h1, float(gm))


def kepler_frequencies(P0: float, L2: float, f: float, m: MassConfig):
    """``(nu1, nu2) = (∂ℱ_Kep/∂P0, ∂ℱ_Kep/∂L2)`` in fictitious time."""
    f1 = f - m.mu2 ** 3 * m.M2 ** 2 / (2 * L2 * L2)
    if f1 <= 0:
        raise HyperbolicOuter(f"f1 = {f1} <= 0")
    nu1 = np.sqrt(2.0 * f1 / m.mu1)
    nu2 = m.mu2 ** 3 * m.M2 ** 2 * P0 / (L2 ** 3 * np.sqrt(2.0 * m.mu1 * f1))
    return float(nu1), float(nu2)


def fkep_regular(P0, L2, f, m: MassConfig):
    """ℱ_Kep in regular coordinates: ``P0 sqrt(2 f1(L2)/mu1) - mu1 M1``."""
    f1 = f - m.mu2 ** 3 * m.M2 ** 2 / (2 * L2 * L2)
    return P0 * np.sqrt(2.0 * f1 / m.mu1) - m.mu1 * m.M1


@dataclass(frozen=True)
class RegularCoords:
    """Darboux chart: actions ``P[0..3]`` with angles ``theta[0..3]`` and the
    outer Delaunay variables with the shifted mean anomaly ``l2p``."""

    P: np.ndarray
    theta: np.ndarray
    L2: float
    l2p: float
    G2: float
    g2: float
    H2: float
    h2: float

    def as_vector(self) -> np.ndarray:
        """Layout ``(q, p)`` with ``q = (theta0..3, l2', g2, h2)``."""
        q = np.concatenate([self.theta, [self.l2p, self.g2, self.h2]])
        p = np.concatenate([self.P, [self.L2, self.G2, self.H2]])
        return np.concatenate([q, p])

    @classmethod
    def from_vector(cls, x) -> "RegularCoords":
        x = np.asarray(x, dtype=float)
        return cls(x[7:11], x[0:4], x[11], x[4], x[12], x[5], x[13], x[6])


def _f1_and_slope(L2, f, m: MassConfig):
    c = m.mu2 ** 3 * m.M2 ** 2
    return f - c / (2 * L2 * L2), c / L2 ** 3


def regular_from_ks(s: RegularizedState, m: MassConfig, tol: float = 1e-12) -> RegularCoords:
    d = delaunay_from_outer_state(s.Q2, s.P2, m)
    f1, f1p = _f1_and_slope(d.L2, s.f, m)
    if f1 <= 0:
        raise HyperbolicOuter(f"f1 = {f1} <= 0")
    c = np.sqrt(8.0 * m.mu1 * f1)
    z, w = s.z, s.w
    I = 0.5 * (c * c * z * z + w * w)
    if np.any(I <= tol * max(I.sum(), 1e-300)):
        raise ChartDegenerate("an oscillator action vanishes")
    phi = np.arctan2(c * z, w)
    P = np.empty(4)
    P[0] = I.sum() / (2.0 * c)
    P[1:] = I[1:] / c
    th = np.empty(4)
    th[0] = wrap(2.0 * phi[0])
    th[1:] = wrap(phi[1:] - phi[0])
    l2p = wrap(d.l2 + f1p / (2.0 * f1) * float(qt.inner_radial_momentum(z, w)))
    return RegularCoords(P, th, d.L2, l2p, d.G2, d.g2, d.H2, d.h2)


def ks_arrays_from_regular(x, f: float, m: MassConfig):
    """Vectorized inverse chart.

    ``x`` has shape ``(..., 14)`` in the :meth:`RegularCoords.as_vector`
    layout; returns ``(z, w, Q2, P2)`` arrays.
    """
    x = np.asarray(x, dtype=float)
    th = x[..., 0:4]
    l2p, g2, h2 = x[..., 4], x[..., 5], x[..., 6]
    P = x[..., 7:11]
    L2, G2, H2 = x[..., 11], x[..., 12], x[..., 13]
    f1, f1p = _f1_and_slope(L2, f, m)
    c = np.sqrt(8.0 * m.mu1 * f1)
    I = np.empty_like(P)
    I[..., 0] = c * (2.0 * P[..., 0] - P[..., 1] - P[..., 2] - P[..., 3])
    I[..., 1:] = c[..., None] * P[..., 1:]
    phi0 = 0.5 * th[..., 0]
    phi = np.empty_like(th)
    phi[..., 0] = phi0
    phi[..., 1:] = th[..., 1:] + phi0[..., None]
    amp = np.sqrt(2.0 * I)
    z = amp * np.sin(phi) / c[..., None]
    w = amp * np.cos(phi)
    l2 = l2p - f1p / (2.0 * f1) * 0.5 * np.sum(z * w, axis=-1)
    a2 = (L2 / m.mu2) ** 2 / m.M2
    e2 = np.sqrt(np.maximum(0.0, 1.0 - (G2 / L2) ** 2))
    inc = np.arccos(np.clip(H2 / G2, -1.0, 1.0))
    u2 = _kepler_newton(l2, e2)
    cn, sn = np.cos(h2), np.sin(h2)
    cw, sw = np.cos(g2), np.sin(g2)
    ci, si = np.cos(inc), np.sin(inc)
    p_hat = np.stack([cn * cw - sn * sw * ci, sn * cw + cn * sw * ci, sw * si], axis=-1)
    q_hat = np.stack([-cn * sw - sn * cw * ci, -sn * sw + cn * cw * ci, cw * si], axis=-1)
    cu, su = np.cos(u2)[..., None], np.sin(u2)[..., None]
    sq = np.sqrt(1.0 - e2 * e2)[..., None]
    a2e = a2[..., None]
    Q2 = a2e * ((cu - e2[..., None]) * p_hat + sq * su * q_hat)
    r2 = a2 * (1.0 - e2 * np.cos(u2))
    n2 = np.sqrt(m.M2 / a2 ** 3)
    V = (a2 * a2 * n2 / r2)[..., None] * (-su * p_hat + sq * cu * q_hat)
    return z, w, Q2, m.mu2 * V


def ks_from_regular(rc: RegularCoords, f: float, m: MassConfig) -> RegularizedState:
    z, w, Q2, P2 = ks_arrays_from_regular(rc.as_vector(), f, m)
    return RegularizedState(qt.KSPoint(z, w), P2, Q2, f)
