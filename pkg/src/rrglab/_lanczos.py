"""Thick-restart Lanczos with full reorthogonalization.

The projected matrix is kept as a dense array ``T = V^T H V`` (filled from the
Gram-Schmidt coefficients), which makes thick restarts a matter of replacing
the basis by the retained Ritz vectors plus the last residual direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, ValidationFailure


@dataclass
class LanczosResult:
    values: np.ndarray  # descending
    vectors: np.ndarray  # (n, k)
    residuals: np.ndarray
    matvecs: int
    restarts: int


def _orthogonalize(w, basis, locked):
    """Two passes of classical Gram-Schmidt; returns the projection coefficients on ``basis``."""
    h = basis @ w
    w -= h @ basis
    if locked is not None:
        w -= (locked @ w) @ locked
    h2 = basis @ w
    w -= h2 @ basis
    if locked is not None:
        w -= (locked @ w) @ locked
    return h + h2


def lanczos_topk(
    matvec,
    n: int,
    k: int,
    tol: float,
    *,
    scale: float = 1.0,
    locked: np.ndarray | None = None,
    v0: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    max_basis: int | None = None,
    max_matvecs: int | None = None,
    check_every: int = 10,
) -> LanczosResult:
    """Top-k (algebraically largest) eigenpairs of a symmetric operator.

    Parameters
    ----------
    matvec : callable
        ``x -> H @ x`` for 1-d real vectors.
    tol : float
        Converged when ``||H y - theta y|| <= tol * max(1, scale)`` for every
        returned pair.
    locked : ndarray, shape (p, n), optional
        Orthonormal rows spanning an invariant subspace to exclude (deflation).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    free_dim = n - (0 if locked is None else locked.shape[0])
    if k > free_dim:
        raise ValidationFailure(f"k={k} exceeds the dimension {free_dim} of the search space")
    m_max = max_basis or max(2 * k + 40, 80)
    m_max = min(m_max, free_dim)
    keep = min(max(k + 10, m_max // 3), m_max - 1) if m_max > k else k
    max_matvecs = max_matvecs or max(50 * n, 5000)
    thresh = tol * max(1.0, scale)

    basis = np.zeros((m_max + 1, n))
    tmat = np.zeros((m_max + 1, m_max + 1))

    def fresh_vector(count):
        while True:
            w = rng.standard_normal(n)
            _orthogonalize(w, basis[:count], locked)
            nrm = np.linalg.norm(w)
            if nrm > 1e-8 * np.sqrt(n):
                return w / nrm

    if v0 is None:
        basis[0] = fresh_vector(0)
    else:
        w = np.array(v0, dtype=float)
        _orthogonalize(w, basis[:0], locked)
        nrm = np.linalg.norm(w)
        basis[0] = w / nrm if nrm > 1e-12 else fresh_vector(0)

    j = 0  # number of columns whose image has been processed
    matvecs = 0
    restarts = 0
    since_check = 0
    while True:
        w = matvec(basis[j])
        matvecs += 1
        h = _orthogonalize(w, basis[: j + 1], locked)
        tmat[: j + 1, j] = h
        tmat[j, : j + 1] = h
        beta = np.linalg.norm(w)
        j += 1
        since_check += 1
        exhausted = j >= free_dim
        breakdown = beta <= 1e-12 * max(1.0, scale)
        if not exhausted:
            if breakdown:
                basis[j] = fresh_vector(j)
                beta = 0.0
            else:
                basis[j] = w / beta
            tmat[j, j - 1] = tmat[j - 1, j] = beta
        else:
            beta = 0.0

        full = j >= m_max
        if j < k and not exhausted:
            continue
        if not (exhausted or full or since_check >= check_every or breakdown):
            continue
        since_check = 0
        t = tmat[:j, :j]
        theta, s = np.linalg.eigh((t + t.T) / 2.0)
        theta = theta[::-1]
        s = s[:, ::-1]
        est = np.abs(beta * s[j - 1, :k])
        if np.all(est <= thresh) or exhausted:
            y = s[:, :k].T @ basis[:j]
            resid = np.empty(k)
            for i in range(k):
                resid[i] = np.linalg.norm(matvec(y[i]) - theta[i] * y[i])
            matvecs += k
            if np.all(resid <= thresh) or exhausted:
                return LanczosResult(theta[:k].copy(), y.T.copy(), resid, matvecs, restarts)
        if matvecs >= max_matvecs:
            raise NoConvergence(f"Lanczos did not converge within {max_matvecs} matvecs")
        if full:
            # thick restart: keep leading Ritz vectors plus the residual direction
            p = keep
            new = s[:, :p].T @ basis[:j]
            nxt = basis[j].copy()
            basis[:p] = new
            basis[p] = nxt
            basis[p + 1 :] = 0.0
            tmat[:] = 0.0
            tmat[np.arange(p), np.arange(p)] = theta[:p]
            coupling = beta * s[j - 1, :p]
            tmat[p, :p] = coupling
            tmat[:p, p] = coupling
            j = p
            restarts += 1
