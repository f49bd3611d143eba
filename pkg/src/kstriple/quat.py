"""Quaternion algebra and the Kustaanheimo-Stiefel (KS) map.

Quaternions are plain float arrays of shape ``(..., 4)`` ordered
``(q0, q1, q2, q3)`` for ``q0 + q1 i + q2 j + q3 k``.  All functions
broadcast over leading axes.  Three-vectors are identified with purely
imaginary quaternions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroPosition, ZeroQuaternion

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])

# relative tolerance for "purely imaginary" checks
IMAG_TOL = 1e-10


def quat(q0=0.0, q1=0.0, q2=0.0, q3=0.0) -> np.ndarray:
    return np.array([q0, q1, q2, q3], dtype=float)


def as_quat(v) -> np.ndarray:
    """Promote a 3-vector (or a quaternion) to a quaternion array."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 4:
        return v
    if v.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3 or 4, got {v.shape}")
    out = np.zeros(v.shape[:-1] + (4,))
    out[..., 1:] = v
    return out


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def conj(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def norm2(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.sum(a * a, axis=-1)


def qnorm(a) -> np.ndarray:
    return np.sqrt(norm2(a))


def left_i(a) -> np.ndarray:
    """``i a`` without a full product."""
    a = np.asarray(a, dtype=float)
    return np.stack([-a[..., 1], a[..., 0], -a[..., 3], a[..., 2]], axis=-1)


def fiber_phase(theta) -> np.ndarray:
    """The unit quaternion ``exp(i theta)`` generating the KS fibers."""
    return np.array([np.cos(theta), np.sin(theta), 0.0, 0.0])


def _is_zero(z) -> bool:
    return bool(np.all(np.asarray(z) == 0.0))


def hopf(z) -> np.ndarray:
    """Hopf map ``z -> conj(z) i z`` returned as a 3-vector.

    The norm of the image is ``|z|^2``.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1 and _is_zero(z):
        raise ZeroQuaternion("Hopf map undefined at z = 0")
    q = quat_mul(conj(z), left_i(z))
    scale = norm2(z)
    if np.any(np.abs(q[..., 0]) > IMAG_TOL * np.maximum(scale, 1e-300)):
        raise AssertionError("Hopf image has a non-zero real part")
    return q[..., 1:]


def hopf_unchecked(z) -> np.ndarray:
    """Hopf map valid at z = 0 as well (image 0); no real-part assertion."""
    z = np.asarray(z, dtype=float)
    return quat_mul(conj(z), left_i(z))[..., 1:]


@dataclass(frozen=True)
class KSPoint:
    """A point ``(z, w)`` of T*H; ``w`` is the momentum conjugate to ``z``."""

    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(4))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(4))

    def rotated(self, theta: float) -> "KSPoint":
        u = fiber_phase(theta)
        return KSPoint(quat_mul(u, self.z), quat_mul(u, self.w))


@dataclass(frozen=True)
class CartesianPair:
    Q: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float).reshape(3))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float).reshape(3))


def bl_form(p: KSPoint) -> float:
    """Bilinear invariant ``z̄ i w + conj(z̄ i w) = 2 Re(z̄ i w)``."""
    return float(2.0 * quat_mul(conj(p.z), left_i(p.w))[0])


def bl_array(z, w) -> np.ndarray:
    return 2.0 * quat_mul(conj(z), left_i(w))[..., 0]


def ks_map(p: KSPoint) -> CartesianPair:
    """``(z, w) -> (Q, P) = (z̄ i z, z̄ i w / (2|z|^2))``.

    On the zero set of the bilinear invariant the momentum is purely
    imaginary; off it, the real part is dropped (it is ``BL / (4|z|^2)``).
    """
    if _is_zero(p.z):
        raise ZeroQuaternion("KS map undefined at z = 0")
    r2 = norm2(p.z)
    Q = hopf(p.z)
    Pq = quat_mul(conj(p.z), left_i(p.w)) / (2.0 * r2)
    return CartesianPair(Q, Pq[1:])


def ks_momentum_full(z, w) -> np.ndarray:
    """The full quaternion ``z̄ i w / (2|z|^2)`` (real part = BL/(4|z|^2))."""
    return quat_mul(conj(z), left_i(w)) / (2.0 * norm2(z))[..., None]


def ks_inverse(c: CartesianPair) -> KSPoint:
    """Section of the KS bundle.

    Gauge: if the image is not on the negative x-axis the representative has
    ``z1 = 0, z0 > 0``; on the negative x-axis ``z0 = z1 = z3 = 0, z2 > 0``.
    Either way ``z0 >= 0`` and ``z0 = 0`` implies ``z1 >= 0``.
    """
    Q = c.Q
    r = float(np.linalg.norm(Q))
    if r == 0.0:
        raise ZeroPosition("KS inverse undefined at Q = 0")
    b = Q / r
    # unit u with ū i u = b, built from the rotation carrying i onto b
    # 1 + b0 without cancellation near the negative x-axis
    lat2 = b[1] * b[1] + b[2] * b[2]
    one_plus = 1.0 + b[0] if b[0] >= 0.0 else lat2 / (1.0 - b[0])
    u = np.array([one_plus, 0.0, b[2], -b[1]])
    nu = np.linalg.norm(u)
    if nu == 0.0:
        u = J.copy()
    else:
        u = u / nu
    z = np.sqrt(r) * u
    w = -2.0 * left_i(quat_mul(z, as_quat(c.P)))
    return KSPoint(z, w)


def inner_angular_momentum(z, w) -> np.ndarray:
    """``Q1 x P1 = -Im(z̄ w)/2``, regular through z = 0."""
    return -0.5 * quat_mul(conj(z), w)[..., 1:]


def inner_radial_momentum(z, w) -> np.ndarray:
    """``Q1 . P1 = Re(z̄ w)/2``."""
    return 0.5 * np.sum(np.asarray(z) * np.asarray(w), axis=-1)


def hopf_pullback_gradient(z, g) -> np.ndarray:
    """Gradient in z of ``g . hopf(z)`` for a fixed 3-vector g: ``-2 i z ĝ``."""
    return -2.0 * left_i(quat_mul(z, as_quat(g)))
