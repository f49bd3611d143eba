"""Masses, Jacobi coordinates and the physical / regularized Hamiltonians."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import quat as qt
from .errors import CollisionSingular, HyperbolicOuter, OuterCollision


@dataclass(frozen=True)
class MassConfig:
    m0: float
    m1: float
    m2: float

    def __post_init__(self):
        if min(self.m0, self.m1, self.m2) <= 0:
            raise ValueError("masses must be positive")

    @cached_property
    def sigma0(self) -> float:
        return 1.0 / (1.0 + self.m1 / self.m0)

    @cached_property
    def sigma1(self) -> float:
        return 1.0 / (1.0 + self.m0 / self.m1)

    @cached_property
    def mu1(self) -> float:
        return 1.0 / (1.0 / self.m0 + 1.0 / self.m1)

    @cached_property
    def mu2(self) -> float:
        return 1.0 / (1.0 / (self.m0 + self.m1) + 1.0 / self.m2)

    @cached_property
    def M1(self) -> float:
        return self.m0 + self.m1

    @cached_property
    def M2(self) -> float:
        return self.m0 + self.m1 + self.m2

    @cached_property
    def mu_quad(self) -> float:
        return self.m0 * self.m1 * self.m2 / (self.m0 + self.m1)

    @property
    def sigma_hat(self) -> float:
        return max(self.sigma0, self.sigma1)


@dataclass(frozen=True)
class JacobiState:
    P1: np.ndarray
    Q1: np.ndarray
    P2: np.ndarray
    Q2: np.ndarray

    def __post_init__(self):
        for name in ("P1", "Q1", "P2", "Q2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class RegularizedState:
    """Point of the regularized phase space plus the energy parameter ``f``.

    The physical energy surface is ``F = -f``.
    """

    ks: qt.KSPoint
    P2: np.ndarray
    Q2: np.ndarray
    f: float

    def __post_init__(self):
        object.__setattr__(self, "P2", np.asarray(self.P2, dtype=float).reshape(3))
        object.__setattr__(self, "Q2", np.asarray(self.Q2, dtype=float).reshape(3))
        if self.f <= 0:
            raise ValueError("energy parameter f must be positive")

    @property
    def z(self):
        return self.ks.z

    @property
    def w(self):
        return self.ks.w

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.ks.z, self.ks.w, self.Q2, self.P2])

    @classmethod
    def from_vector(cls, y, f: float) -> "RegularizedState":
        y = np.asarray(y, dtype=float)
        return cls(qt.KSPoint(y[0:4], y[4:8]), y[11:14], y[8:11], f)


class HamiltonianParts(NamedTuple):
    total: float
    kep: float
    pert: float


def jacobi_from_inertial(p, q, m: MassConfig) -> JacobiState:
    """Jacobi coordinates from inertial momenta/positions (rows j = 0, 1, 2)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    P1 = p[1] + m.sigma1 * p[2]
    P2 = p[2].copy()
    Q1 = q[1] - q[0]
    Q2 = q[2] - m.sigma0 * q[0] - m.sigma1 * q[1]
    return JacobiState(P1, Q1, P2, Q2)


def total_momentum(p) -> np.ndarray:
    return np.sum(np.asarray(p, dtype=float), axis=0)


def inertial_from_jacobi(s: JacobiState, m: MassConfig, P0=None, Q0=None):
    """Inverse of :func:`jacobi_from_inertial` given ``P0`` and ``Q0 = q0``."""
    P0 = np.zeros(3) if P0 is None else np.asarray(P0, dtype=float)
    Q0 = np.zeros(3) if Q0 is None else np.asarray(Q0, dtype=float)
    p2 = s.P2
    p1 = s.P1 - m.sigma1 * p2
    p0 = P0 - p1 - p2
    q0 = Q0
    q1 = s.Q1 + q0
    q2 = s.Q2 + m.sigma0 * q0 + m.sigma1 * q1
    return np.array([p0, p1, p2]), np.array([q0, q1, q2])


def inertial_hamiltonian(p, q, m: MassConfig) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    ms = (m.m0, m.m1, m.m2)
    kin = sum(p[j] @ p[j] / (2.0 * ms[j]) for j in range(3))
    pot = 0.0
    for j in range(3):
        for k in range(j + 1, 3):
            pot -= ms[j] * ms[k] / np.linalg.norm(q[j] - q[k])
    return float(kin + pot)


def _inv_diff(Q2, Q1, s):
    """``1/|Q2 - s Q1| - 1/|Q2|`` without the leading cancellation."""
    r2sq = np.sum(Q2 * Q2, axis=-1)
    d = Q2 - s * Q1
    dsq = np.sum(d * d, axis=-1)
    num = 2.0 * s * np.sum(Q1 * Q2, axis=-1) - s * s * np.sum(Q1 * Q1, axis=-1)
    r2 = np.sqrt(r2sq)
    dd = np.sqrt(dsq)
    return num / (r2 * dd * (r2 + dd))


def pert_potential(Q1, Q2, m: MassConfig):
    """Perturbing function ``F_pert(Q1, Q2)`` (broadcasts over leading axes)."""
    Q1 = np.asarray(Q1, dtype=float)
    Q2 = np.asarray(Q2, dtype=float)
    # mu1 m2 / sigma0 = m1 m2 and mu1 m2 / sigma1 = m0 m2
    return -(m.m1 * m.m2 * _inv_diff(Q2, Q1, m.sigma0)
             + m.m0 * m.m2 * _inv_diff(Q2, Q1, -m.sigma1))


def eval_F(s: JacobiState, m: MassConfig) -> HamiltonianParts:
    """Reduced physical Hamiltonian ``F = F_Kep + F_pert`` at ``P0 = 0``."""
    r1 = np.linalg.norm(s.Q1)
    r2 = np.linalg.norm(s.Q2)
    d01 = np.linalg.norm(s.Q2 - m.sigma0 * s.Q1)
    d02 = np.linalg.norm(s.Q2 + m.sigma1 * s.Q1)
    if min(r1, r2, d01, d02) == 0.0:
        raise CollisionSingular("a Jacobi distance vanishes")
    kep = (s.P1 @ s.P1 / (2 * m.mu1) + s.P2 @ s.P2 / (2 * m.mu2)
           - m.mu1 * m.M1 / r1 - m.mu2 * m.M2 / r2)
    pert = float(pert_potential(s.Q1, s.Q2, m))
    return HamiltonianParts(float(kep + pert), float(kep), pert)


def outer_energy_factor(P2, Q2, f: float, m: MassConfig) -> float:
    """``f + |P2|^2/2mu2 - mu2 M2/|Q2|``: equals ``f1(L2)`` on the outer orbit."""
    r2 = np.linalg.norm(Q2)
    if r2 == 0.0:
        raise OuterCollision("Q2 = 0")
    return float(f + P2 @ P2 / (2 * m.mu2) - m.mu2 * m.M2 / r2)


def eval_regularized(s: RegularizedState, m: MassConfig, check_f1: bool = True) -> HamiltonianParts:
    """Regularized Hamiltonian ``ℱ = ℱ_Kep + ℱ_pert``; finite at z = 0."""
    f1 = outer_energy_factor(s.P2, s.Q2, s.f, m)
    if check_f1 and f1 <= 0:
        raise HyperbolicOuter(f"f1 = {f1} <= 0")
    z, w = s.ks.z, s.ks.w
    r1 = qt.norm2(z)
    kep = w @ w / (8 * m.mu1) + f1 * r1 - m.mu1 * m.M1
    if r1 == 0.0:
        pert = 0.0
    else:
        pert = float(r1 * pert_potential(qt.hopf_unchecked(z), s.Q2, m))
    return HamiltonianParts(float(kep + pert), float(kep), pert)


def f1_of_L2(L2: float, f: float, m: MassConfig) -> float:
    """``f1(L2) = f - mu2^3 M2^2 / (2 L2^2)``; sign is left to the caller."""
    return f - m.mu2 ** 3 * m.M2 ** 2 / (2.0 * L2 * L2)


def jacobi_from_regularized(s: RegularizedState) -> JacobiState:
    c = qt.ks_map(s.ks)
    return JacobiState(c.P, c.Q, s.P2, s.Q2)


def total_angular_momentum(s: RegularizedState) -> np.ndarray:
    return qt.inner_angular_momentum(s.z, s.w) + np.cross(s.Q2, s.P2)
