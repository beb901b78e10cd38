"""Hot lattice kernels, jitted with numba.

Links are stored as unit quaternions q = (q0, q1, q2, q3) representing the
SU(2) matrix q0*I + i q.sigma; the quaternion components form a real algebra
isomorphic to the matrix algebra, so all group arithmetic happens on 4 floats.

All site loops run sequentially in a fixed order, so every reduction is
bitwise deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Ordered index pairs (mu < nu) for field-strength storage.
PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_PAIRS_ARR = np.array(PAIRS, dtype=np.int64)


@njit(cache=True, inline="always")
def _qmul(p0, p1, p2, p3, q0, q1, q2, q3):
    return (
        p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
        p0 * q1 + q0 * p1 - (p2 * q3 - p3 * q2),
        p0 * q2 + q0 * p2 - (p3 * q1 - p1 * q3),
        p0 * q3 + q0 * p3 - (p1 * q2 - p2 * q1),
    )


@njit(cache=True, inline="always")
def _plaq(links, fwd, i, mu, nu):
    """Plaquette U_mu(i) U_nu(i+mu) U_mu(i+nu)^dag U_nu(i)^dag."""
    ip_mu = fwd[i, mu]
    ip_nu = fwd[i, nu]
    a = links[i, mu]
    b = links[ip_mu, nu]
    c = links[ip_nu, mu]
    d = links[i, nu]
    p0, p1, p2, p3 = _qmul(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])
    p0, p1, p2, p3 = _qmul(p0, p1, p2, p3, c[0], -c[1], -c[2], -c[3])
    p0, p1, p2, p3 = _qmul(p0, p1, p2, p3, d[0], -d[1], -d[2], -d[3])
    return p0, p1, p2, p3


@njit(cache=True)
def wilson_density(links, fwd, a):
    """Per-site Wilson energy density (4/a^4) sum_{mu<nu} (2 - tr P)."""
    n = links.shape[0]
    out = np.empty(n)
    scale = 8.0 / a**4
    for i in range(n):
        acc = 0.0
        for k in range(6):
            mu = _PAIRS_ARR[k, 0]
            nu = _PAIRS_ARR[k, 1]
            p0, _, _, _ = _plaq(links, fwd, i, mu, nu)
            acc += 1.0 - p0
        out[i] = scale * acc
    return out


@njit(cache=True)
def clover(links, fwd, bwd, a):
    """Clover field strength: F_{mu nu}(x) coefficients, shape (V, 6, 3).

    Average of the four plaquette leaves in the (mu, nu) plane touching x,
    projected to the algebra and divided by a^2.
    """
    n = links.shape[0]
    out = np.empty((n, 6, 3))
    scale = -2.0 / (4.0 * a * a)
    for i in range(n):
        for k in range(6):
            mu = _PAIRS_ARR[k, 0]
            nu = _PAIRS_ARR[k, 1]
            im_mu = bwd[i, mu]
            im_nu = bwd[i, nu]
            im_mn = bwd[im_mu, nu]

            # Leaf 1: x -> x+mu -> x+mu+nu -> x+nu -> x
            q0, q1, q2, q3 = _plaq(links, fwd, i, mu, nu)
            s1, s2, s3 = q1, q2, q3

            # Leaf 2: x -> x+nu -> x+nu-mu -> x-mu -> x
            u = links[i, nu]
            v = links[bwd[fwd[i, nu], mu], mu]
            w = links[im_mu, nu]
            z = links[im_mu, mu]
            q0, q1, q2, q3 = _qmul(u[0], u[1], u[2], u[3], v[0], -v[1], -v[2], -v[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, w[0], -w[1], -w[2], -w[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, z[0], z[1], z[2], z[3])
            s1 += q1
            s2 += q2
            s3 += q3

            # Leaf 3: x -> x-mu -> x-mu-nu -> x-nu -> x
            u = links[im_mu, mu]
            v = links[im_mn, nu]
            w = links[im_mn, mu]
            z = links[im_nu, nu]
            q0, q1, q2, q3 = _qmul(u[0], -u[1], -u[2], -u[3], v[0], -v[1], -v[2], -v[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, w[0], w[1], w[2], w[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, z[0], z[1], z[2], z[3])
            s1 += q1
            s2 += q2
            s3 += q3

            # Leaf 4: x -> x-nu -> x-nu+mu -> x+mu -> x
            u = links[im_nu, nu]
            v = links[im_nu, mu]
            w = links[bwd[fwd[i, mu], nu], nu]
            z = links[i, mu]
            q0, q1, q2, q3 = _qmul(u[0], -u[1], -u[2], -u[3], v[0], v[1], v[2], v[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, w[0], w[1], w[2], w[3])
            q0, q1, q2, q3 = _qmul(q0, q1, q2, q3, z[0], -z[1], -z[2], -z[3])
            s1 += q1
            s2 += q2
            s3 += q3

            out[i, k, 0] = scale * s1
            out[i, k, 1] = scale * s2
            out[i, k, 2] = scale * s3
    return out


@njit(cache=True)
def force(links, fwd, bwd, a):
    """Lattice D*F: the Wilson-energy gradient in continuum normalization.

    G_mu(x) = (1/a^3) * project_ta( U_mu(x) * sum of 6 staples ), returned as
    coefficients of shape (V, 4, 3).  The Wilson energy is
    E = 4 sum_{x, mu<nu} (2 - tr P_{mu nu}(x)) and satisfies
    dE/ds|_{U -> exp(s d) U} = 2 a^3 sum <G, d>, so G converges to the
    continuum D*F (one half of the link-metric gradient times a).
    """
    n = links.shape[0]
    out = np.empty((n, 4, 3))
    scale = -2.0 / a**3
    for i in range(n):
        for mu in range(4):
            w1 = 0.0
            w2 = 0.0
            w3 = 0.0
            w0 = 0.0
            for nu in range(4):
                if nu == mu:
                    continue
                ip_mu = fwd[i, mu]
                ip_nu = fwd[i, nu]
                im_nu = bwd[i, nu]
                ipm_mnu = bwd[ip_mu, nu]

                # Upper staple: U_nu(x+mu) U_mu(x+nu)^dag U_nu(x)^dag
                b = links[ip_mu, nu]
                c = links[ip_nu, mu]
                d = links[i, nu]
                s0, s1, s2, s3 = _qmul(
                    b[0], b[1], b[2], b[3], c[0], -c[1], -c[2], -c[3]
                )
                s0, s1, s2, s3 = _qmul(s0, s1, s2, s3, d[0], -d[1], -d[2], -d[3])
                w0 += s0
                w1 += s1
                w2 += s2
                w3 += s3

                # Lower staple: U_nu(x+mu-nu)^dag U_mu(x-nu)^dag U_nu(x-nu)
                b = links[ipm_mnu, nu]
                c = links[im_nu, mu]
                d = links[im_nu, nu]
                s0, s1, s2, s3 = _qmul(
                    b[0], -b[1], -b[2], -b[3], c[0], -c[1], -c[2], -c[3]
                )
                s0, s1, s2, s3 = _qmul(s0, s1, s2, s3, d[0], d[1], d[2], d[3])
                w0 += s0
                w1 += s1
                w2 += s2
                w3 += s3

            u = links[i, mu]
            o0, o1, o2, o3 = _qmul(u[0], u[1], u[2], u[3], w0, w1, w2, w3)
            out[i, mu, 0] = scale * o1
            out[i, mu, 1] = scale * o2
            out[i, mu, 2] = scale * o3
    return out


@njit(cache=True)
def exp_update(links, z, coef):
    """In place: U_mu(x) <- exp(coef * Z_mu(x)) * U_mu(x), Z algebra-valued."""
    n = links.shape[0]
    for i in range(n):
        for mu in range(4):
            x1 = coef * z[i, mu, 0]
            x2 = coef * z[i, mu, 1]
            x3 = coef * z[i, mu, 2]
            theta = np.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
            half = 0.5 * theta
            if theta > 1e-30:
                s = -np.sin(half) / theta
            else:
                s = -0.5
            e0 = np.cos(half)
            e1 = s * x1
            e2 = s * x2
            e3 = s * x3
            u = links[i, mu]
            r0, r1, r2, r3 = _qmul(e0, e1, e2, e3, u[0], u[1], u[2], u[3])
            links[i, mu, 0] = r0
            links[i, mu, 1] = r1
            links[i, mu, 2] = r2
            links[i, mu, 3] = r3


@njit(cache=True)
def reunitarize(links):
    """In place quaternion normalization of every link."""
    n = links.shape[0]
    for i in range(n):
        for mu in range(4):
            u = links[i, mu]
            nrm = np.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2 + u[3] ** 2)
            inv = 1.0 / nrm
            links[i, mu, 0] *= inv
            links[i, mu, 1] *= inv
            links[i, mu, 2] *= inv
            links[i, mu, 3] *= inv


@njit(cache=True)
def gauge_transform(links, g, fwd):
    """Return g(x) U_mu(x) g(x+mu)^dag for a site field g of unit quaternions."""
    n = links.shape[0]
    out = np.empty_like(links)
    for i in range(n):
        for mu in range(4):
            h = g[i]
            u = links[i, mu]
            k = g[fwd[i, mu]]
            r0, r1, r2, r3 = _qmul(h[0], h[1], h[2], h[3], u[0], u[1], u[2], u[3])
            r0, r1, r2, r3 = _qmul(r0, r1, r2, r3, k[0], -k[1], -k[2], -k[3])
            out[i, mu, 0] = r0
            out[i, mu, 1] = r1
            out[i, mu, 2] = r2
            out[i, mu, 3] = r3
    return out


@njit(cache=True)
def adjoint_rotate(q, x):
    """Coefficients of U X U^dag for unit quaternions q and algebra coeffs x.

    Shapes: q (..., 4) and x (..., 3) flattened to (N, 4) / (N, 3).
    """
    n = q.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        p0, p1, p2, p3 = _qmul(
            q[i, 0], q[i, 1], q[i, 2], q[i, 3], 0.0, x[i, 0], x[i, 1], x[i, 2]
        )
        _, r1, r2, r3 = _qmul(p0, p1, p2, p3, q[i, 0], -q[i, 1], -q[i, 2], -q[i, 3])
        out[i, 0] = r1
        out[i, 1] = r2
        out[i, 2] = r3
    return out
