"""Legendre expansion of the perturbing function in the ratio |Q1|/|Q2|."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import AlphaTooLarge, RatioTooLarge
from .threebody import JacobiState, MassConfig

# pert_series refuses ratios closer than this to the radius of convergence
RATIO_MARGIN = 1e-6
# rounding allowance of the direct evaluation, in units of eps * mu1 m2 rho^2
ROUNDOFF_ULPS = 64.0


def legendre_eval(n: int, x):
    """``P_n(x)`` by Bonnet's recursion; any real ``x`` (arrays broadcast)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=float)
    p_prev, p = np.ones_like(x), x.copy()
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p if p.ndim else float(p)


def sigma_n(n: int, m: MassConfig) -> float:
    if n < 2:
        raise ValueError("sigma_n defined for n >= 2")
    return m.sigma0 ** (n - 1) + (-1) ** n * m.sigma1 ** (n - 1)


class ExpansionTerm(NamedTuple):
    n: int
    sigma: float
    value: float


class SeriesResult(NamedTuple):
    value: float
    bound: float
    terms: tuple
    roundoff: float = 0.0


def _tail(rho, N, m: MassConfig, legendre_bound: str) -> float:
    """Upper bound for ``sum_{n>N} |sigma_n P_n| rho^(n+1)`` (without mu1 m2)."""
    scale = 1.0 if legendre_bound == "real" else 5.0
    tot = 0.0
    for s in (m.sigma0, m.sigma1):
        q = scale * s * rho
        if q >= 1.0:
            return float("inf")
        tot += scale * rho * rho * q ** N / (1.0 - q)
    return tot


def pert_series(s: JacobiState, m: MassConfig, N: int = 12,
                legendre_bound: str = "real") -> SeriesResult:
    """Truncated expansion of the regularized perturbation ``|Q1| F_pert``.

    ``value = -mu1 m2 sum_{n=2}^N sigma_n P_n(cos ζ) rho^(n+1)`` with
    ``rho = |Q1|/|Q2|``.  ``bound`` majorizes the omitted tail, using
    ``|P_n| <= 1`` on [-1, 1] (``legendre_bound="real"``) or the cruder
    ``|P_n| <= 5^n`` valid for ``|x| <= 2`` (``"induction"``).
    """
    if legendre_bound not in ("real", "induction"):
        raise ValueError("legendre_bound must be 'real' or 'induction'")
    r1 = float(np.linalg.norm(s.Q1))
    r2 = float(np.linalg.norm(s.Q2))
    if r2 == 0.0:
        raise RatioTooLarge("Q2 = 0")
    rho = r1 / r2
    if rho * m.sigma_hat >= 1.0 - RATIO_MARGIN:
        raise RatioTooLarge(f"|Q1|/|Q2| = {rho} exceeds 1/sigma_hat")
    pref = m.mu1 * m.m2
    if r1 == 0.0:
        return SeriesResult(0.0, 0.0, ())
    x = float(np.clip(s.Q1 @ s.Q2 / (r1 * r2), -1.0, 1.0))
    terms = []
    p_prev, p = 1.0, x
    total = 0.0
    for n in range(2, N + 1):
        p_prev, p = p, ((2 * n - 1) * x * p - (n - 1) * p_prev) / n
        sig = sigma_n(n, m)
        val = -pref * sig * p * rho ** (n + 1)
        terms.append(ExpansionTerm(n, sig, val))
        total += val
    bound = pref * _tail(rho, N, m, legendre_bound)
    # the direct formula cancels the dipole pieces of the two bodies, so its
    # rounding error scales with rho^2 rather than with the result
    roundoff = ROUNDOFF_ULPS * np.finfo(float).eps * pref * rho * rho * (m.sigma0 + m.sigma1)
    return SeriesResult(total, bound, tuple(terms), float(roundoff))


def pert_bound(alpha: float, e2max: float, m: MassConfig) -> float:
    """Explicit majorant ``C alpha^3`` of the regularized perturbation."""
    gap = 1.0 - e2max - 20.0 * alpha
    if gap <= 0.0:
        raise AlphaTooLarge(f"1 - e2max - 20 alpha = {gap} <= 0")
    return (m.mu1 * m.m2 / 5.0) * 20.0 ** 3 * alpha ** 3 / ((1.0 - e2max) ** 2 * gap)


def within_bound(direct: float, res: SeriesResult) -> bool:
    """``|direct - value| <= bound`` up to the rounding allowance of ``direct``."""
    return abs(direct - res.value) <= res.bound + res.roundoff
