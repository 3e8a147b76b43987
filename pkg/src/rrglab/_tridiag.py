"""Householder tridiagonalization followed by implicit-shift QL iterations.

Reference dense symmetric eigensolver. O(n^3) with a Python-level loop over
Givens rotations, so it is meant for small matrices and for cross-checking
the LAPACK path.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoConvergence


def householder_tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(diag, offdiag, Q)`` with ``a = Q @ T @ Q.T`` and T tridiagonal."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        beta = -math.copysign(alpha, v[0])
        v[0] -= beta
        v /= np.linalg.norm(v)
        sub = a[k + 1 :, k + 1 :]
        p = sub @ v
        w = p - (v @ p) * v
        sub -= 2.0 * (np.outer(v, w) + np.outer(w, v))
        a[k + 1 :, k] = 0.0
        a[k, k + 1 :] = 0.0
        a[k + 1, k] = a[k, k + 1] = beta
        qs = q[:, k + 1 :]
        qs -= 2.0 * np.outer(qs @ v, v)
    diag = np.diag(a).copy()
    off = np.diag(a, -1).copy() if n > 1 else np.zeros(0)
    return diag, off, q


def tridiagonal_ql(diag: np.ndarray, off: np.ndarray, z: np.ndarray, max_iter: int = 60):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``z`` holds the accumulated transform and is rotated in place, so on exit
    its columns are the eigenvectors of the original matrix. Eigenvalues are
    returned unsorted.
    """
    d = np.array(diag, dtype=float)
    n = len(d)
    e = np.zeros(n)
    e[: n - 1] = off
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise NoConvergence(f"QL iteration exceeded {max_iter} sweeps at index {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                zi1 = z[:, i + 1]
                z[:, i] = c * zi - s * zi1
                z[:, i + 1] = s * zi + c * zi1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


def householder_ql_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    diag, off, q = householder_tridiagonalize(a)
    vals, vecs = tridiagonal_ql(diag, off, q)
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]
