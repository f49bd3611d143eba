"""Reduced quadrupolar flow on (G1, g1): equilibria, closed orbits,
actions and frequencies, phase portraits, and the torsion of the
quadrupolar tori near the coplanar boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (CoincidentMomenta, DegenerateRadicand, NonPhysicalPoint,
                     NotClosed)
from .secular import GEOM_TOL, gradient_hessian, quad_partials

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuadParams:
    L1: float
    L2: float
    G2: float
    C: float
    mu_quad: float = 1.0

    @property
    def on_cover(self) -> bool:
        return abs(self.C - self.G2) <= GEOM_TOL * max(self.C, self.G2)

    @property
    def G1_max(self) -> float:
        return min(self.L1, self.C + self.G2)

    @property
    def G1_min(self) -> float:
        return 0.0 if self.on_cover else abs(self.C - self.G2)

    def with_G2(self, G2: float) -> "QuadParams":
        return QuadParams(self.L1, self.L2, G2, self.C, self.mu_quad)

    @classmethod
    def cover(cls, L1, L2, G2, mu_quad=1.0) -> "QuadParams":
        return cls(L1, L2, G2, G2, mu_quad)


@dataclass(frozen=True)
class CoverPoint:
    G1: float
    g1: float

    def partner(self) -> "CoverPoint":
        """Image under the deck involution ``(G1, g1) -> (-G1, π - g1)``."""
        return CoverPoint(-self.G1, float(np.mod(np.pi - self.g1, TWO_PI)))


def quad_terms(G1, g1, p: QuadParams):
    return quad_partials(G1, g1, p.G2, p.L1, p.L2, p.C, p.mu_quad, p.on_cover)


def f_value(G1, g1, p: QuadParams) -> float:
    return float(quad_terms(G1, g1, p)[0])


def quad_vector_field(G1, g1, p: QuadParams) -> Tuple[float, float]:
    """``(dG1/dt, dg1/dt) = (-∂f/∂g1, ∂f/∂G1)``."""
    _, fG1, fg1, _ = quad_terms(G1, g1, p)
    return -fg1, fG1


def morse_determinant(L1, L2, G2, mu_quad=1.0) -> float:
    """Closed-form Hessian determinant of ``f_quad`` on the cover at (0, 0)."""
    return 45.0 / 8.0 * mu_quad ** 2 * L2 ** 6 / (G2 ** 6 * L1 ** 2)


def equilibrium_hessian(L1, L2, G2, mu_quad=1.0, h: float = 1e-3, g1: float = 0.0) -> float:
    """Finite-difference Hessian determinant of ``f_quad`` on the cover at ``(0, g1)``."""
    p = QuadParams.cover(L1, L2, G2, mu_quad)
    K = lambda x: f_value(x[0], x[1], p)
    _, H = gradient_hessian(K, np.array([0.0, g1]), h)
    return float(np.linalg.det(H))


def linear_period(L1, L2, G2, mu_quad=1.0) -> float:
    """Small-oscillation period around the coplanar equilibrium of the cover."""
    return TWO_PI / np.sqrt(morse_determinant(L1, L2, G2, mu_quad))


@dataclass
class OrbitRecord:
    """A closed orbit of the reduced quadrupolar flow.

    ``action`` is ``|∮ G1 dg1| / 2π``; ``action_rel`` measures the area
    from the lower boundary ``G1 = G1_min`` instead (equal on the cover).
    ``crossings`` lists ``(g1, angle)`` at each passage through ``G1 = 0``;
    the angle is taken in the scaled plane ``(G1/L1, g1)``.
    """

    start: CoverPoint
    t: np.ndarray
    G1: np.ndarray
    g1: np.ndarray
    period: float
    action: float
    action_rel: float
    mean_dG2: float
    winding: int
    crossings: List[Tuple[float, float]] = field(default_factory=list)
    closure_gap: float = 0.0
    energy: float = 0.0
    energy_drift: float = 0.0

    @property
    def amplitude(self) -> float:
        return float(max(np.ptp(self.G1) / 2.0, 1e-300))


def _wrap_pi(x):
    return (x + np.pi) % TWO_PI - np.pi


def trace_orbit(start: CoverPoint, p: QuadParams, rtol: float = 1e-12, atol: float = 1e-14,
                max_time: Optional[float] = None, closure_tol: float = 1e-8,
                samples: int = 400) -> OrbitRecord:
    """Integrate the reduced flow from ``start`` until it closes.

    Closure is detected as a return to the section through ``start``
    transverse to the initial velocity, in the same direction, with the
    gap below ``closure_tol`` times the orbit amplitude.  Rotational
    orbits close after ``g1`` advances by ±2π.
    """
    G10, g10 = float(start.G1), float(start.g1)
    v0 = np.array(quad_vector_field(G10, g10, p))
    scale = np.array([1.0 / p.L1, 1.0])
    vs = v0 * scale
    if np.linalg.norm(vs) < 1e-13 * (p.mu_quad * p.L2 ** 3 / p.G2 ** 3):
        raise NotClosed("start point is an equilibrium")
    vs = vs / np.linalg.norm(vs)
    if max_time is None:
        max_time = 2000.0 * linear_period(p.L1, p.L2, p.G2, p.mu_quad)
    Gmin, Gmax = p.G1_min, p.G1_max

    def rhs(t, y):
        _, fG1, fg1, fG2 = quad_terms(y[0], y[1], p)
        return [-fg1, fG1, y[0] * fG1, fG2]

    def section(t, y):
        return (y[0] - G10) * scale[0] * vs[0] + _wrap_pi(y[1] - g10) * vs[1]
    section.direction = 1.0
    section.terminal = True

    def exit_top(t, y):
        return Gmax - abs(y[0])
    exit_top.terminal = True

    def exit_bottom(t, y):
        return y[0] - Gmin if not p.on_cover else 1.0
    exit_bottom.terminal = True

    def cross(t, y):
        return y[0]

    y = np.array([G10, g10, 0.0, 0.0])
    t0 = 0.0
    ts, Gs, gs = [], [], []
    crossings = []
    # first leg: leave the section before the return event is armed
    T_lin = linear_period(p.L1, p.L2, p.G2, p.mu_quad)
    first = True
    while True:
        if t0 > max_time:
            raise NotClosed(f"orbit did not close within t = {max_time}")
        span = (t0, t0 + (1e-3 * T_lin if first else max_time))
        events = [exit_top, exit_bottom, cross] + ([] if first else [section])
        sol = solve_ivp(rhs, span, y, method="DOP853", rtol=rtol, atol=atol,
                        events=events, dense_output=False)
        if sol.status < 0:
            raise NotClosed(f"integrator failure: {sol.message}")
        ts.append(sol.t)
        Gs.append(sol.y[0])
        gs.append(sol.y[1])
        for te, ye in zip(sol.t_events[2], sol.y_events[2]):
            if p.on_cover:
                dG, dg = quad_vector_field(0.0, ye[1], p)
                ang = float(np.arctan2(abs(dG) / p.L1, abs(dg)))
                crossings.append((float(np.mod(ye[1], TWO_PI)), ang))
        if len(sol.t_events[0]) or len(sol.t_events[1]):
            raise NotClosed("orbit reached the boundary of the chart")
        y = sol.y[:, -1].copy()
        t0 = sol.t[-1]
        if first:
            first = False
            continue
        if len(sol.t_events[3]):
            ye = sol.y_events[3][0]
            gap = np.hypot((ye[0] - G10) / p.L1, _wrap_pi(ye[1] - g10))
            amp = max(np.ptp(np.concatenate(Gs)) / (2 * p.L1), 1e-300)
            if gap < closure_tol * max(amp, 1.0) or gap < 1e-3 * amp:
                break
            # spurious root (e.g. the branch cut of the wrapped angle): step past it
            sol = solve_ivp(rhs, (t0, t0 + 1e-6 * T_lin), y, method="DOP853", rtol=rtol, atol=atol)
            y = sol.y[:, -1].copy()
            t0 = sol.t[-1]
    T = float(t0)
    winding = int(np.round((y[1] - g10) / TWO_PI))
    gap = float(np.hypot((y[0] - G10) / p.L1, y[1] - g10 - winding * TWO_PI))
    area = abs(y[2])
    t_all = np.concatenate(ts)
    G_all = np.concatenate(Gs)
    g_all = np.concatenate(gs)
    f0 = f_value(G10, g10, p)
    fvals = np.array([f_value(a, b, p) for a, b in zip(G_all[:: max(1, len(G_all) // samples)],
                                                       g_all[:: max(1, len(g_all) // samples)])])
    drift = float(np.max(np.abs(fvals - f0)))
    action = area / TWO_PI
    action_rel = abs(y[2] - Gmin * winding * TWO_PI) / TWO_PI if winding else action
    rec = OrbitRecord(start, t_all, G_all, g_all, T, action, action_rel, float(y[3] / T),
                      winding, crossings, gap, f0, drift)
    if gap > closure_tol * max(rec.amplitude / p.L1, 1e-12) and gap > closure_tol:
        raise NotClosed(f"closure gap {gap:.3e} too large")
    return rec


def action_and_frequencies(orbit: OrbitRecord, p: QuadParams = None):
    """``(J1, T, <∂f/∂G2>)`` of a closed orbit."""
    return orbit.action, orbit.period, orbit.mean_dG2


def shoelace_action(orbit: OrbitRecord) -> float:
    """Polygon estimate of the enclosed area / 2π (libration orbits)."""
    x, y = orbit.g1, orbit.G1
    return abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) / TWO_PI


# ---- phase portraits ----------------------------------------------------

def _circles_zero(orbit: OrbitRecord) -> bool:
    """Does an orbit started at ``(0, g0)``, ``0 < g0 < π/2``, encircle the
    equilibrium ``(0, 0)`` rather than the maximum ``(0, π/2)``?"""
    return bool(np.min(orbit.g1) < 0.0)


def separatrix_start(p: QuadParams, tol: float = 1e-6, lo: float = 1e-3, hi: float = np.pi / 2 - 1e-3) -> float:
    """Bisection for the start ``g0`` on ``{G1 = 0}`` separating orbits around
    ``(0, 0)`` from orbits around ``(0, π/2)`` on the cover.

    Stops early once starts are too close to the separatrix to close.
    """
    if not p.on_cover:
        raise NonPhysicalPoint("separatrix search needs C = G2")

    def kind(g0):
        try:
            return _circles_zero(trace_orbit(CoverPoint(0.0, g0), p))
        except NotClosed:
            return None

    if not (kind(lo) is True and kind(hi) is False):
        raise NotClosed("could not bracket the separatrix")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        k = kind(mid)
        if k is None:
            break
        if k:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class Portrait:
    params: QuadParams
    orbits: List[OrbitRecord]
    separatrix_g0: Optional[float]
    minima: Tuple[CoverPoint, ...]
    maxima: Tuple[CoverPoint, ...]
    symmetry_fixed: Tuple[CoverPoint, ...]


def phase_portrait(p: QuadParams, n_orbits: int = 6, max_amp: float = 0.9,
                   find_separatrix: bool = True) -> Portrait:
    """Loops around ``(0, 0)`` with their deck images around ``(0, π)``.

    Starts are ``(0, g0)`` with ``g0`` evenly spaced up to ``max_amp`` times
    the separatrix start; orbits are listed in start order, each followed by
    its partner.
    """
    if not p.on_cover:
        raise NonPhysicalPoint("phase portraits are drawn on the cover C = G2")
    sep = separatrix_start(p) if find_separatrix else np.pi / 4
    orbits = []
    for k in range(1, n_orbits + 1):
        g0 = max_amp * sep * k / n_orbits
        o = trace_orbit(CoverPoint(0.0, g0), p)
        orbits.append(o)
        orbits.append(trace_orbit(CoverPoint(0.0, g0).partner(), p))
    minima = (CoverPoint(0.0, 0.0), CoverPoint(0.0, np.pi))
    maxima = (CoverPoint(0.0, np.pi / 2), CoverPoint(0.0, 3 * np.pi / 2))
    return Portrait(p, orbits, sep if find_separatrix else None, minima, maxima, maxima)


# ---- frequency map near the coplanar boundary --------------------------

def secular_frequencies(p: QuadParams, s: float, g_start: float = 0.0):
    """Rotational orbit started at ``G1 = G1_min + s``: returns
    ``(J1, nu_s, nu_G2, energy)`` with ``nu_s = 2π/T``."""
    o = trace_orbit(CoverPoint(p.G1_min + s, g_start), p)
    return o.action, TWO_PI / o.period, o.mean_dG2, o.energy


def secular_hessian(p: QuadParams, s: float, ds: float = None, dG: float = None):
    """Hessian of the secular Hamiltonian in the actions ``(J1, G2)`` at fixed C,
    from orbit families parametrized by ``(s, G2)`` and the chain rule."""
    ds = ds or 1e-3 * s
    dG = dG or 1e-5 * p.G2
    vals = {}
    for key, (a, b) in {"s+": (s + ds, 0), "s-": (s - ds, 0), "G+": (s, dG), "G-": (s, -dG)}.items():
        q = p.with_G2(p.G2 + b)
        # keep the start a fixed distance above the moving boundary
        vals[key] = np.array(secular_frequencies(q, a)[:3])
    d_ds = (vals["s+"] - vals["s-"]) / (2 * ds)
    d_dG = (vals["G+"] - vals["G-"]) / (2 * dG)
    # rows: J1, nu_s, nu_G2; columns: s, G2
    M = np.array([[d_ds[0], d_dG[0]], [0.0, 1.0]])
    W = np.array([[d_ds[1], d_dG[1]], [d_ds[2], d_dG[2]]])
    return W @ np.linalg.inv(M)


@dataclass
class FrequencyMapReport:
    jacobian: np.ndarray
    det: float
    hadamard_ratio: float
    hessian: np.ndarray
    secular_hessian: np.ndarray


def frequency_map_jacobian(P0: float, L2: float, f: float, m, p: QuadParams, s: float,
                           eps: float) -> FrequencyMapReport:
    """Jacobian of ``(P0, L2, J1, G2) -> (energy, ω2/ω1, ω3/ω1, ω4/ω1)`` for
    ``K = ℱ_Kep(P0, L2) + eps F_sec(J1, G2)``.

    The secular part is evaluated with ``L1, L2`` frozen (their variation
    enters only at higher order in ``eps``).
    """
    c = m.mu2 ** 3 * m.M2 ** 2
    f1 = f - c / (2 * L2 * L2)
    nu = np.sqrt(2 * f1 / m.mu1)
    nup = (c / L2 ** 3) / (m.mu1 * nu)
    nupp = (-3 * c / L2 ** 4 / m.mu1 - nup * nup) / nu
    _, nus, nug, _ = secular_frequencies(p, s)
    Hs = secular_hessian(p, s)
    omega = np.array([nu, P0 * nup, eps * nus, eps * nug])
    H = np.zeros((4, 4))
    H[:2, :2] = [[0.0, nup], [nup, P0 * nupp]]
    H[2:, 2:] = eps * 0.5 * (Hs + Hs.T)
    J = np.zeros((4, 4))
    J[0] = omega
    for i in range(1, 4):
        J[i] = (H[i] * omega[0] - omega[i] * H[0]) / omega[0] ** 2
    det = float(np.linalg.det(J))
    had = abs(det) / float(np.prod(np.linalg.norm(J, axis=1)))
    return FrequencyMapReport(J, det, had, H, Hs)


# ---- normalized system and torsion -----------------------------------

@dataclass(frozen=True)
class NormalizedQuad:
    alpha: float  # C / L1
    beta: float   # G2 / L1

    @classmethod
    def from_params(cls, p: QuadParams) -> "NormalizedQuad":
        return cls(p.C / p.L1, p.G2 / p.L1)


def W_norm(delta, omega, alpha, beta):
    """Normalized quadrupolar function ``𝒲(δ, ω; α, β)``."""
    Y = (alpha * alpha - beta * beta - delta * delta) ** 2 / (4.0 * beta * beta)
    return (-2.0 * delta * delta + Y
            + 5.0 * (1.0 - delta * delta) * np.sin(omega) ** 2 * (Y / (delta * delta) - 1.0))


def W_bar(delta, omega, alpha, beta):
    return (W_norm(delta, omega, alpha, beta) + 5.0 / 3.0) / beta ** 3


def _cubic(alpha, beta):
    return 9 * alpha ** 2 * beta - 6 * alpha * beta ** 2 + beta ** 3 - 4 * alpha ** 3 + 5 * alpha


def Xi_bar(alpha, beta, omega):
    """``∂W̄/∂δ`` at the coplanar boundary ``δ = |α - β|``."""
    if alpha == beta:
        raise CoincidentMomenta("alpha = beta")
    # cubic + b cos² ω with b = -5α + 5α³ - 10α²β + 5αβ², rewritten using
    # cubic + b = (α - β)²(α + β) to avoid cancellation near α = β
    num = (_cubic(alpha, beta) * np.sin(omega) ** 2
           + (alpha - beta) ** 2 * (alpha + beta) * np.cos(omega) ** 2)
    return -2.0 * num / (beta ** 4 * abs(alpha - beta))


def frequency_coefficient(alpha, beta) -> float:
    """``2π (∮ dω / Ξ̄)⁻¹ = -2 sqrt(α+β) sqrt(cubic) / β⁴`` (closed form)."""
    A = _cubic(alpha, beta)
    if A <= 0:
        raise DegenerateRadicand(f"radicand {A} <= 0")
    return -2.0 * np.sqrt(alpha + beta) * np.sqrt(A) / beta ** 4


def frequency_coefficient_quad(alpha, beta, nodes: int = 1024, tol: float = 1e-13,
                               max_nodes: int = 1 << 24) -> float:
    """The same coefficient from trapezoid quadrature of ``∮ dω / Ξ̄``.

    The integrand peaks with width ``~ sqrt(min/max)`` of its denominator,
    which sets the starting node count; nodes are then doubled until two
    successive relative changes fall below ``tol``.
    """
    if _cubic(alpha, beta) <= 0:
        raise DegenerateRadicand("radicand <= 0")
    if alpha == beta:
        raise CoincidentMomenta("alpha = beta")
    den = np.abs(1.0 / Xi_bar(alpha, beta, np.array([0.0, np.pi / 2])))
    width = np.sqrt(den.min() / den.max())
    n = max(nodes, int(2 ** np.ceil(np.log2(40.0 * TWO_PI / width))))
    vals = []
    while n <= max_nodes:
        w = TWO_PI * np.arange(n) / n
        vals.append(TWO_PI * np.mean(1.0 / Xi_bar(alpha, beta, w)))
        if len(vals) >= 3 and all(abs(vals[-1] - v) <= tol * abs(vals[-1]) for v in vals[-3:-1]):
            break
        n *= 2
    return TWO_PI / vals[-1]


def torsion(alpha, beta, steps=(1e-4, 5e-5), torsion_formula=None):
    """``(Ω, (∂Ω/∂β)²)`` with ``Ω`` the frequency coefficient; the β-derivative
    is a Richardson-refined central difference."""
    if alpha == beta:
        raise CoincidentMomenta("alpha = beta: use torsion_limit")
    Om = torsion_formula or frequency_coefficient
    h1, h2 = steps
    d1 = (Om(alpha, beta + h1) - Om(alpha, beta - h1)) / (2 * h1)
    d2 = (Om(alpha, beta + h2) - Om(alpha, beta - h2)) / (2 * h2)
    r = (h1 / h2) ** 2
    d = (r * d2 - d1) / (r - 1.0)
    return float(Om(alpha, beta)), float(d * d)


def torsion_limit(beta: float) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 1125.0 / (2.0 * beta ** 8)


def torsion_extrapolated(beta: float, eps: float = 1e-4, steps=(1e-4, 5e-5), torsion_formula=None) -> float:
    """Torsion at ``α = β ± eps`` extrapolated to ``α = β`` (the O(eps) terms cancel)."""
    tp = torsion(beta + eps, beta, steps, torsion_formula)[1]
    tm = torsion(beta - eps, beta, steps, torsion_formula)[1]
    return 0.5 * (tp + tm)
