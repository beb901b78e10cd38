"""SU(2) group and su(2) algebra arithmetic.

Conventions used throughout the package:

* Algebra elements X are stored as 3 real coefficients (x1, x2, x3) in the
  orthonormal anti-Hermitian traceless basis T_a = -(i/2) sigma_a, so that
  X = sum_a x_a T_a.
* Group elements are stored as unit quaternions q = (q0, q1, q2, q3)
  representing U = q0*I + i*(q1*sigma_1 + q2*sigma_2 + q3*sigma_3).
* The fiber metric is <X, Y> = -2 tr(XY), which makes {T_a} orthonormal;
  in coefficients this is the ordinary dot product.

All functions are pure and operate on numpy arrays with the quaternion or
coefficient axis last, so they broadcast over lattices of any shape.
"""

from __future__ import annotations

import numpy as np

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

# Basis T_a = -(i/2) sigma_a: anti-Hermitian, traceless, <T_a,T_b> = delta_ab.
TA = -0.5j * SIGMA

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def algebra_to_matrix(x: np.ndarray) -> np.ndarray:
    """2x2 complex matrix of the algebra element with coefficients ``x``."""
    x = np.asarray(x, dtype=float)
    return np.einsum("...a,aij->...ij", x, TA)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """2x2 complex matrix q0*I + i q.sigma of the quaternion ``q``."""
    q = np.asarray(q, dtype=float)
    eye = np.eye(2, dtype=np.complex128)
    return q[..., 0, None, None] * eye + 1j * np.einsum(
        "...a,aij->...ij", q[..., 1:], SIGMA
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_to_matrix` for matrices in the quaternion span."""
    m = np.asarray(m, dtype=np.complex128)
    q = np.empty(m.shape[:-2] + (4,))
    q[..., 0] = 0.5 * np.real(m[..., 0, 0] + m[..., 1, 1])
    q[..., 1] = 0.5 * np.imag(m[..., 0, 1] + m[..., 1, 0])
    q[..., 2] = 0.5 * np.real(m[..., 0, 1] - m[..., 1, 0])
    q[..., 3] = 0.5 * np.imag(m[..., 0, 0] - m[..., 1, 1])
    return q


def exp(x: np.ndarray) -> np.ndarray:
    """Exponential map su(2) -> SU(2), returned as a unit quaternion.

    Closed form: exp(sum x_a T_a) = cos(|x|/2) I - i sin(|x|/2) (x/|x|).sigma.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite algebra element")
    theta = np.linalg.norm(x, axis=-1)
    half = 0.5 * theta
    # sin(half)/theta, regular at 0 (equals 1/2 there).
    s = 0.5 * np.sinc(half / np.pi)
    q = np.empty(x.shape[:-1] + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = -x * s[..., None]
    return q


def log(q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp` on the principal branch (|X| < 2*pi)."""
    q = np.asarray(q, dtype=float)
    vec = -q[..., 1:]
    norm = np.linalg.norm(vec, axis=-1)
    half = np.arctan2(norm, q[..., 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norm > 0, 2.0 * half / np.where(norm > 0, norm, 1.0), 2.0)
    return vec * scale[..., None]


def project_ta(m: np.ndarray) -> np.ndarray:
    """Traceless anti-Hermitian part of a 2x2 matrix, as basis coefficients.

    project_ta(M) = (M - M^dag)/2 - (tr((M - M^dag)/2)/2) I, expanded in T_a.
    Idempotent on algebra elements.
    """
    m = np.asarray(m, dtype=np.complex128)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite matrix")
    ah = 0.5 * (m - np.conjugate(np.swapaxes(m, -1, -2)))
    tr = ah[..., 0, 0] + ah[..., 1, 1]
    ah = ah - 0.5 * tr[..., None, None] * np.eye(2)
    # ah = i v.sigma with v real; coefficients x satisfy x = -2 v.
    x = np.empty(m.shape[:-2] + (3,))
    x[..., 0] = -2.0 * 0.5 * np.imag(ah[..., 0, 1] + ah[..., 1, 0])
    x[..., 1] = -2.0 * 0.5 * np.real(ah[..., 0, 1] - ah[..., 1, 0])
    x[..., 2] = -2.0 * 0.5 * np.imag(ah[..., 0, 0] - ah[..., 1, 1])
    return x


def inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ad-invariant inner product <X,Y> = -2 tr(XY) in coefficients."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(x * y, axis=-1)


def norm(x: np.ndarray) -> np.ndarray:
    """|X| = sqrt(<X,X>)."""
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def bracket(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lie bracket [X,Y] in coefficients: [T_a,T_b] = eps_abc T_c."""
    return np.cross(np.asarray(x, float), np.asarray(y, float))


def qmul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion product, equal to the 2x2 matrix product of the images."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.empty(np.broadcast_shapes(p.shape, q.shape))
    p0, pv = p[..., 0], p[..., 1:]
    q0, qv = q[..., 0], q[..., 1:]
    out[..., 0] = p0 * q0 - np.sum(pv * qv, axis=-1)
    out[..., 1:] = (
        p0[..., None] * qv + q0[..., None] * pv - np.cross(pv, qv)
    )
    return out


def qconj(q: np.ndarray) -> np.ndarray:
    """Quaternion conjugate = Hermitian conjugate of the group element."""
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def qnormalize(q: np.ndarray) -> np.ndarray:
    """Project back to SU(2) by quaternion normalization (re-unitarization)."""
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def unitarity_defect(q: np.ndarray) -> float:
    """max |q.q - 1| over the array; 0 for exact group elements."""
    q = np.asarray(q, dtype=float)
    return float(np.max(np.abs(np.sum(q * q, axis=-1) - 1.0)))
