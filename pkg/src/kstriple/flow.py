"""Regularized three-body flow: vector field, integration with conservation
monitors and physical-time reconstruction, near-collision detection,
frequency analysis and trajectory output.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from . import quat as qt
from .elements import state_from_elements
from .errors import OuterCollision, StepFailure, TooShort
from .threebody import (JacobiState, MassConfig, RegularizedState, eval_F,
                        eval_regularized)


# monitors beyond this relative drift abort a run
ABORT_DRIFT = 1e-7


def field_vector(y, f: float, m: MassConfig, pert: bool = True) -> np.ndarray:
    """Time derivative of ``[z, w, Q2, P2]`` (and of the physical time if
    ``y`` has a 15th entry) under the flow of ℱ in fictitious time.

    ``ℱ = |w|²/8mu1 + |z|²(f + |P2|²/2mu2 + V(Q1, Q2)) - mu1 M1`` with
    ``Q1 = z̄ i z`` and ``V = -m1 m2/d1 - m0 m2/d0``; with ``pert=False``
    ``V`` is replaced by ``-mu2 M2/|Q2|``.  Written out in scalars because
    the integrator calls it at every stage.
    """
    a, b, c, d = float(y[0]), float(y[1]), float(y[2]), float(y[3])
    x, yy, zz = float(y[8]), float(y[9]), float(y[10])
    px, py, pz = float(y[11]), float(y[12]), float(y[13])
    r1 = a * a + b * b + c * c + d * d
    r2sq = x * x + yy * yy + zz * zz
    if r2sq == 0.0:
        raise OuterCollision("Q2 = 0")
    K2 = (px * px + py * py + pz * pz) / (2.0 * m.mu2)
    if pert:
        # Q1 = hopf(z)
        q1 = a * a + b * b - c * c - d * d
        q2 = 2.0 * (b * c - a * d)
        q3 = 2.0 * (a * c + b * d)
        s0, s1 = m.sigma0, m.sigma1
        u1, u2, u3 = x - s0 * q1, yy - s0 * q2, zz - s0 * q3
        v1, v2, v3 = x + s1 * q1, yy + s1 * q2, zz + s1 * q3
        d1 = math.sqrt(u1 * u1 + u2 * u2 + u3 * u3)
        d0 = math.sqrt(v1 * v1 + v2 * v2 + v3 * v3)
        k1 = m.m1 * m.m2 / d1
        k0 = m.m0 * m.m2 / d0
        V = -k1 - k0
        A1 = k1 / (d1 * d1)
        A0 = k0 / (d0 * d0)
        g1 = -A1 * s0 * u1 + A0 * s1 * v1
        g2 = -A1 * s0 * u2 + A0 * s1 * v2
        g3 = -A1 * s0 * u3 + A0 * s1 * v3
        h1 = A1 * u1 + A0 * v1
        h2 = A1 * u2 + A0 * v2
        h3 = A1 * u3 + A0 * v3
    else:
        r2 = math.sqrt(r2sq)
        V = -m.mu2 * m.M2 / r2
        g1 = g2 = g3 = 0.0
        A = m.mu2 * m.M2 / (r2sq * r2)
        h1, h2, h3 = A * x, A * yy, A * zz
    E = 2.0 * (f + K2 + V)
    # gradient of g . hopf(z) in z is -2 i z ĝ
    out = np.empty(len(y))
    out[0:4] = np.asarray(y[4:8], dtype=float) / (4.0 * m.mu1)
    out[4] = -(E * a + r1 * 2.0 * (a * g1 + c * g3 - d * g2))
    out[5] = -(E * b + r1 * 2.0 * (b * g1 + c * g2 + d * g3))
    out[6] = -(E * c + r1 * 2.0 * (a * g3 + b * g2 - c * g1))
    out[7] = -(E * d + r1 * 2.0 * (b * g3 - a * g2 - d * g1))
    out[8] = r1 * px / m.mu2
    out[9] = r1 * py / m.mu2
    out[10] = r1 * pz / m.mu2
    out[11] = -r1 * h1
    out[12] = -r1 * h2
    out[13] = -r1 * h3
    if len(y) > 14:
        out[14] = r1
    return out


def hamiltonian_field(s: RegularizedState, m: MassConfig, pert: bool = True) -> np.ndarray:
    """Derivative of the state vector ``[z, w, Q2, P2]`` in fictitious time."""
    return field_vector(s.as_vector(), s.f, m, pert)


def regularized_value(y, f: float, m: MassConfig, pert: bool = True) -> float:
    s = RegularizedState.from_vector(y[:14], f)
    parts = eval_regularized(s, m, check_f1=False)
    return parts.total if pert else parts.kep


def monitors(Y, f: float, m: MassConfig, pert: bool = True):
    """ℱ, BL and total angular momentum along rows of ``Y``."""
    Y = np.atleast_2d(Y)
    z, w, Q2, P2 = Y[:, 0:4], Y[:, 4:8], Y[:, 8:11], Y[:, 11:14]
    BL = qt.bl_array(z, w)
    Cvec = qt.inner_angular_momentum(z, w) + np.cross(Q2, P2)
    F = np.array([regularized_value(y, f, m, pert) for y in Y])
    return F, BL, Cvec


@dataclass
class Trajectory:
    """Samples at the accepted steps of the integrator (fictitious time)."""

    tau: np.ndarray
    y: np.ndarray            # columns z(4), w(4), Q2(3), P2(3), t
    f: float
    masses: MassConfig
    F: np.ndarray
    BL: np.ndarray
    C: np.ndarray
    minima: List[tuple] = field(default_factory=list)   # (tau, |z|^2) at local minima
    pert: bool = True

    @property
    def t(self) -> np.ndarray:
        return self.y[:, 14]

    @property
    def r1(self) -> np.ndarray:
        return np.sum(self.y[:, 0:4] ** 2, axis=1)

    def state(self, k: int) -> RegularizedState:
        return RegularizedState.from_vector(self.y[k, :14], self.f)

    def drifts(self) -> dict:
        m = self.masses
        Fscale = m.mu1 * m.M1
        zw = np.sqrt(np.sum(self.y[:, 0:4] ** 2, 1) * np.sum(self.y[:, 4:8] ** 2, 1))
        Cn = max(np.linalg.norm(self.C[0]), 1e-300)
        return {
            "F": float(np.max(np.abs(self.F - self.F[0])) / Fscale),
            "BL": float(np.max(np.abs(self.BL - self.BL[0]) / np.maximum(zw, 1e-300))),
            "C": float(np.max(np.abs(self.C - self.C[0])) / Cn),
        }


def inner_period_tau(f1: float, m: MassConfig) -> float:
    """Period of the inner Kepler motion in fictitious time, ``2π/nu1``."""
    return 2.0 * np.pi / np.sqrt(2.0 * f1 / m.mu1)


def integrate(s0: RegularizedState, m: MassConfig, tau_span, rtol: float = 1e-12,
              atol: float = 1e-15, pert: bool = True, chunks: int = 20,
              abort_drift: float = ABORT_DRIFT, max_step: float = np.inf,
              sample_dt: Optional[float] = None) -> Trajectory:
    """Integrate the regularized flow with DOP853.

    The span is split into ``chunks``; after each chunk the conserved
    quantities are checked and a drift beyond ``abort_drift`` raises
    :class:`StepFailure`.  The physical time ``t = ∫ |z|² dτ`` is carried
    as an extra component.  Local minima of ``|z|²`` are located by an
    event on ``z·w = 0``.  Samples are the accepted steps, or with
    ``sample_dt`` a uniform grid read from the dense output.
    """
    tau0, tau1 = float(tau_span[0]), float(tau_span[1])
    if not tau1 > tau0:
        raise ValueError("empty integration span")
    f = s0.f
    if np.linalg.norm(s0.Q2) == 0.0:
        raise OuterCollision("Q2 = 0")
    y = np.concatenate([s0.as_vector(), [0.0]])
    rhs = lambda t, yy: field_vector(yy, f, m, pert)

    def closest(t, yy):
        return yy[0:4] @ yy[4:8]
    closest.direction = 1.0

    taus, ys, mins = [tau0], [y.copy()], []
    F0, BL0, C0 = monitors(y[None, :14], f, m, pert)
    Fscale = m.mu1 * m.M1
    edges = np.linspace(tau0, tau1, chunks + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol,
                        events=closest, max_step=max_step, dense_output=sample_dt is not None)
        if sol.status < 0:
            raise StepFailure(sol.message)
        if sample_dt is None:
            taus.extend(sol.t[1:])
            ys.extend(sol.y[:, 1:].T)
        else:
            k0 = int(np.floor((a - tau0) / sample_dt)) + 1
            grid = tau0 + sample_dt * np.arange(k0, int(np.floor((b - tau0) / sample_dt)) + 1)
            grid = grid[(grid > a) & (grid <= b)]
            if len(grid):
                taus.extend(grid)
                ys.extend(sol.sol(grid).T)
        for te, ye in zip(sol.t_events[0], sol.y_events[0]):
            mins.append((float(te), float(ye[0:4] @ ye[0:4])))
        y = sol.y[:, -1].copy()
        F1, BL1, C1 = monitors(y[None, :14], f, m, pert)
        zw = np.linalg.norm(y[0:4]) * np.linalg.norm(y[4:8])
        bad = (abs(F1[0] - F0[0]) / Fscale > abort_drift
               or abs(BL1[0] - BL0[0]) > abort_drift * max(zw, 1e-300)
               or np.max(np.abs(C1 - C0)) > abort_drift * max(np.linalg.norm(C0), 1e-300))
        if bad:
            raise StepFailure(f"conservation drift beyond {abort_drift} at tau = {b}")
    Y = np.array(ys)
    F, BL, C = monitors(Y[:, :14], f, m, pert)
    return Trajectory(np.array(taus), Y, f, m, F, BL, C, mins, pert)


class CollisionReport(NamedTuple):
    events: list          # (tau, min |Q1|) below the threshold
    global_min: float
    hit_zero: bool


def near_collision_events(traj: Trajectory, threshold: Optional[float] = None,
                          zero_tol: float = 1e-13) -> CollisionReport:
    """Local minima of ``|Q1| = |z|²`` below ``threshold``.

    The default threshold is ``1e-2`` times the initial inner semi-major
    axis.  Minima come from the integrator's event on ``z·w = 0``; a
    quadratic fit through the sampled steps is used when no event exists.
    """
    if threshold is None:
        from .elements import inner_elements_from_ks
        threshold = 1e-2 * inner_elements_from_ks(traj.state(0), traj.masses).a1
    mins = list(traj.minima)
    if not mins:
        r = traj.r1
        for k in range(1, len(r) - 1):
            if r[k] <= r[k - 1] and r[k] < r[k + 1]:
                x = traj.tau[k - 1:k + 2]
                c = np.polyfit(x - x[1], r[k - 1:k + 2], 2)
                if c[0] > 0:
                    tm = -c[1] / (2 * c[0])
                    mins.append((float(x[1] + tm), float(max(np.polyval(c, tm), 0.0))))
                else:
                    mins.append((float(x[1]), float(r[k])))
    gmin = min([v for _, v in mins] + [float(np.min(traj.r1))])
    events = [(t, v) for t, v in mins if v < threshold]
    return CollisionReport(events, float(gmin), bool(gmin <= zero_tol))


# ---- frequency analysis ---------------------------------------------------

class Peak(NamedTuple):
    freq: float        # angular frequency
    amplitude: float
    phase: float


class FrequencyReport(NamedTuple):
    peaks: List[Peak]
    residual: float


def _project(x, tt, w, omega):
    return np.sum(w * x * np.exp(-1j * omega * tt)) / np.sum(w)


def frequency_estimate(series, dt: float = 1.0, n_freqs: int = 2, rel_floor: float = 1e-10,
                       min_len: int = 64, passes: int = 3) -> FrequencyReport:
    """Leading angular frequencies of a uniformly sampled real series.

    Each frequency is located at the peak of the Hann-windowed spectrum,
    refined by maximizing the windowed projection, then fitted and
    subtracted before the next search.  A final set of passes re-refines
    every frequency with the others removed.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < min_len:
        raise TooShort(f"series of length {n} < {min_len}")
    tt = dt * (np.arange(n) - (n - 1) / 2.0)
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / (n - 1)))
    x = x - np.sum(w * x) / np.sum(w)
    scale = np.max(np.abs(np.asarray(series, dtype=float))) + 1e-300
    if np.max(np.abs(x)) <= rel_floor * scale:
        return FrequencyReport([], 0.0)
    dw = 2.0 * np.pi / (n * dt)

    def refine(sig, omega0):
        res = minimize_scalar(lambda om: -abs(_project(sig, tt, w, om)),
                              bracket=(omega0 - dw, omega0, omega0 + dw),
                              options={"xtol": 1e-15})
        return float(res.x)

    def fit(omegas):
        cols = []
        for om in omegas:
            cols += [np.cos(om * tt), np.sin(om * tt)]
        A = np.array(cols).T
        coef, *_ = np.linalg.lstsq(A * w[:, None], x * w, rcond=None)
        return coef, A

    freqs = []
    resid = x.copy()
    for _ in range(n_freqs):
        power = np.abs(np.fft.rfft(resid * w))
        power[0] = 0.0
        k = int(np.argmax(power))
        if power[k] <= rel_floor * scale * np.sum(w):
            break
        om = refine(resid, k * dw)
        freqs.append(om)
        coef, A = fit(freqs)
        resid = x - A @ coef
        if np.max(np.abs(resid)) <= rel_floor * scale:
            break
    def misfit(omegas):
        coef, A = fit(omegas)
        return float(np.sum((w * (x - A @ coef)) ** 2))

    # polish each frequency against the joint real-sinusoid model, which is
    # free of the mirror-image bias of the complex projection
    for _ in range(passes):
        for i in range(len(freqs)):
            def obj(om, i=i):
                trial = list(freqs)
                trial[i] = om
                return misfit(trial)
            om0 = freqs[i]
            res = minimize_scalar(obj, bracket=(om0 - 0.1 * dw, om0, om0 + 0.1 * dw),
                                  options={"xtol": 1e-15})
            freqs[i] = float(res.x)
    peaks = []
    if freqs:
        coef, A = fit(freqs)
        resid = x - A @ coef
        for i, om in enumerate(freqs):
            c, s = coef[2 * i], coef[2 * i + 1]
            peaks.append(Peak(abs(om), float(np.hypot(c, s)), float(np.arctan2(-s, c))))
    return FrequencyReport(peaks, float(np.sqrt(np.mean(resid ** 2))))


# ---- initial conditions ---------------------------------------------------

def state_from_jacobi(s: JacobiState, m: MassConfig) -> RegularizedState:
    """Regularized state on ``ℱ = 0`` (``f = -F``) with ``BL = 0``."""
    F = eval_F(s, m).total
    if F >= 0:
        from .errors import HyperbolicOuter
        raise HyperbolicOuter(f"physical energy F = {F} >= 0")
    ks = qt.ks_inverse(qt.CartesianPair(s.Q1, s.P1))
    return RegularizedState(ks, s.P2, s.Q2, -F)


def state_from_elements_pair(inner, outer, m: MassConfig) -> RegularizedState:
    """``inner``/``outer`` are ``(a, e, i, node, argp, mean anomaly)``; the
    inner pair uses the reduced mass mu1 with ``M1``, the outer mu2 with ``M2``."""
    Q1, P1 = state_from_elements(*inner, m.mu1, m.M1)
    Q2, P2 = state_from_elements(*outer, m.mu2, m.M2)
    return state_from_jacobi(JacobiState(P1, Q1, P2, Q2), m)


def state_from_secular(e1, g1, e2, g2, a1, a2, l1, l2, m: MassConfig, C: Optional[float] = None):
    """Initial state with vertical total angular momentum ``C``
    (default ``C = G2``), nodes ``h1 = π, h2 = 0``."""
    from .secular import SecularPoint
    L1 = m.mu1 * np.sqrt(m.M1 * a1)
    L2 = m.mu2 * np.sqrt(m.M2 * a2)
    G1 = L1 * np.sqrt(1 - e1 * e1)
    G2 = L2 * np.sqrt(1 - e2 * e2)
    sp = SecularPoint(G1, g1, G2, g2, L1, L2, G2 if C is None else C)
    sp.check_physical()
    i1, i2 = sp.inclinations()
    return state_from_elements_pair((a1, e1, i1, np.pi, g1, l1), (a2, e2, i2, 0.0, g2, l2), m)


# ---- output -----------------------------------------------------------------

CSV_COLUMNS = (["tau", "t"] + [f"z{i}" for i in range(4)] + [f"w{i}" for i in range(4)]
               + ["Q2x", "Q2y", "Q2z", "P2x", "P2y", "P2z", "F_reg", "BL", "Cx", "Cy", "Cz"])
CSV_UNITS = (["fict_time", "time"] + ["sqrt_length"] * 4 + ["momentum*sqrt_length"] * 4
             + ["length"] * 3 + ["momentum"] * 3 + ["energy*length", "momentum*length"]
             + ["angular_momentum"] * 3)


def fmt(x: float) -> str:
    return "%.17g" % x


def write_csv(path, header, units, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerow(units)
        for r in rows:
            wr.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def write_trajectory(traj: Trajectory, csv_path, json_path=None, report: CollisionReport = None) -> dict:
    rows = []
    for k in range(len(traj.tau)):
        y = traj.y[k]
        rows.append([float(traj.tau[k]), float(y[14]), *map(float, y[:14]),
                     float(traj.F[k]), float(traj.BL[k]), *map(float, traj.C[k])])
    write_csv(csv_path, CSV_COLUMNS, CSV_UNITS, rows)
    summary = {"samples": len(traj.tau), "tau_end": float(traj.tau[-1]),
               "t_end": float(traj.t[-1]), "drifts": traj.drifts()}
    if report is not None:
        summary["near_collisions"] = [[float(a), float(b)] for a, b in report.events]
        summary["global_min_r1"] = report.global_min
        summary["hit_zero"] = report.hit_zero
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
