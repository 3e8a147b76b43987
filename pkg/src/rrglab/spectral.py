"""Normalized adjacency matrices, symmetric eigensolvers, GOE sampling and
the semicircle Stieltjes transform."""

from __future__ import annotations

import cmath
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _lanczos, _tridiag
from .errors import BranchUndefined, TooLarge, ValidationFailure
from .graphgen import RegularGraph
from .seeding import derive_seed, make_rng

__all__ = [
    "ComplexEnergy",
    "EigenSystem",
    "SymMatrix",
    "canonical_sign",
    "dense_limit",
    "full_eigensystem",
    "m_sc",
    "normal_cdf",
    "normalize_adjacency",
    "sample_constrained_goe",
    "second_eigenpair",
    "topk_eigenpairs",
]

DEFAULT_DENSE_LIMIT = 4096
# below this size second_eigenpair uses the dense path
DENSE_SECOND_CUTOFF = 400


def dense_limit() -> int:
    return int(os.environ.get("LAB_DENSE_LIMIT", DEFAULT_DENSE_LIMIT))


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Real symmetric matrix stored densely or as a scaled neighbor table.

    For the sparse form, entry (i, j) is ``scale`` times the number of times
    ``j`` occurs in row ``i`` of ``neighbors``.
    """

    n: int
    dense: np.ndarray | None = None
    neighbors: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        if (self.dense is None) == (self.neighbors is None):
            raise ValidationFailure("exactly one of dense / neighbors must be given")

    @classmethod
    def from_dense(cls, a: np.ndarray) -> SymMatrix:
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationFailure("square matrix required")
        if not np.array_equal(a, a.T):
            raise ValidationFailure("matrix is not exactly symmetric")
        return cls(a.shape[0], dense=a)

    @property
    def is_sparse(self) -> bool:
        return self.neighbors is not None

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ x
        return self.scale * x[self.neighbors].sum(axis=1)

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        a = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), self.neighbors.shape[1])
        np.add.at(a, (rows, self.neighbors.ravel()), self.scale)
        return a

    def norm_bound(self) -> float:
        """Upper bound on the operator norm (maximum absolute row sum)."""
        if self.dense is not None:
            return float(np.abs(self.dense).sum(axis=1).max()) if self.n else 0.0
        return abs(self.scale) * self.neighbors.shape[1]


@dataclass
class EigenSystem:
    """Eigenpairs sorted by descending eigenvalue.

    ``vectors[:, i]`` belongs to ``values[i]``. ``gap_flags[i]`` is set when the
    spacing to either neighbouring returned eigenvalue is below
    ``degeneracy_tol``.
    """

    values: np.ndarray
    vectors: np.ndarray
    kind: str
    gap_flags: np.ndarray
    degeneracy_tol: float
    matvecs: int | None = None
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ComplexEnergy:
    """Spectral parameter ``z = E + i*eta`` with ``eta > 0``.

    ``n`` and ``eps`` describe the experiment and only feed ``edge_regime``.
    """

    E: float
    eta: float
    n: int | None = None
    eps: float = 0.05

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationFailure(f"eta must be positive, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @property
    def edge_regime(self) -> bool:
        if self.n is None:
            return False
        n = self.n
        return abs(self.E - 2.0) <= n ** (-2.0 / 3.0 + self.eps) and n ** (-2.0 / 3.0) <= self.eta <= 1.0


def _gap_flags(values: np.ndarray, tol: float) -> np.ndarray:
    flags = np.zeros(len(values), dtype=bool)
    if len(values) > 1:
        close = np.abs(np.diff(values)) < tol
        flags[:-1] |= close
        flags[1:] |= close
    return flags


def normalize_adjacency(g: RegularGraph) -> SymMatrix:
    """Adjacency matrix divided by sqrt(d), in neighbor-table form."""
    return SymMatrix(g.n, neighbors=g.neighbors, scale=1.0 / math.sqrt(g.d))


def _default_tol(norm: float) -> float:
    return 1e-8 * max(1.0, norm)


def full_eigensystem(
    h: SymMatrix, method: str = "lapack", degeneracy_tol: float | None = None
) -> EigenSystem:
    """Complete eigendecomposition on the dense path.

    ``method="lapack"`` calls LAPACK's symmetric driver; ``"householder-ql"``
    runs the in-package Householder tridiagonalization + implicit QL.
    """
    limit = dense_limit()
    if h.n > limit:
        raise TooLarge(f"dense eigensolver limited to n <= {limit}, got {h.n}")
    a = h.to_dense()
    if method == "lapack":
        vals, vecs = np.linalg.eigh(a)
    elif method == "householder-ql":
        vals, vecs = _tridiag.householder_ql_eigh(a)
    else:
        raise ValidationFailure(f"unknown method {method!r}")
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    tol = degeneracy_tol if degeneracy_tol is not None else _default_tol(float(np.abs(vals).max(initial=0.0)))
    return EigenSystem(vals, vecs, "full", _gap_flags(vals, tol), tol)


def topk_eigenpairs(
    h: SymMatrix,
    k: int,
    tol: float = 1e-10,
    *,
    deflate: np.ndarray | None = None,
    v0: np.ndarray | None = None,
    seed: int = 0,
    max_matvecs: int | None = None,
    max_basis: int | None = None,
    degeneracy_tol: float | None = None,
) -> EigenSystem:
    """Largest-k eigenpairs by thick-restart Lanczos.

    ``deflate`` (rows orthonormal) removes a known invariant subspace from the
    search. Residuals satisfy ``||H v - lam v|| <= tol * max(1, ||H||)`` with
    ``||H||`` replaced by its row-sum bound.
    """
    if not 1 <= k <= min(h.n, 32):
        raise ValidationFailure(f"need 1 <= k <= min(n, 32), got k={k}")
    if tol <= 0:
        raise ValidationFailure("tol must be positive")
    scale = h.norm_bound()
    locked = None if deflate is None else np.atleast_2d(np.asarray(deflate, dtype=float))
    res = _lanczos.lanczos_topk(
        h.matvec,
        h.n,
        k,
        tol,
        scale=scale,
        locked=locked,
        v0=v0,
        rng=make_rng(seed),
        max_matvecs=max_matvecs,
        max_basis=max_basis,
    )
    dtol = degeneracy_tol if degeneracy_tol is not None else _default_tol(scale)
    return EigenSystem(
        res.values, res.vectors, f"partial({k})", _gap_flags(res.values, dtol), dtol, res.matvecs, res.residuals
    )


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its largest-magnitude coordinate (first on ties) is positive."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def second_eigenpair(
    g: RegularGraph, seed: int, method: str = "auto", tol: float = 1e-10
) -> tuple[float, np.ndarray, bool]:
    """Second eigenpair of A/sqrt(d) with an independent random overall sign.

    The all-ones direction is exactly invariant, so both paths work on its
    orthogonal complement. The returned vector is first put in canonical sign
    and then multiplied by a uniform +-1 drawn from ``seed``.

    Returns
    -------
    lam2 : float
    u2 : ndarray
    degenerate : bool
        ``lam2 - lam3 < 1e-8 * sqrt(d)``.
    """
    h = normalize_adjacency(g)
    n = g.n
    sqrt_d = math.sqrt(g.d)
    dtol = 1e-8 * sqrt_d
    if method == "auto":
        method = "dense" if n <= DENSE_SECOND_CUTOFF else "lanczos"
    e_unit = np.full(n, 1.0 / math.sqrt(n))
    if method == "dense":
        # push the Perron direction below the spectrum; all other pairs unchanged
        a = h.to_dense() - (2.0 * sqrt_d + 1.0) * np.outer(e_unit, e_unit)
        vals, vecs = np.linalg.eigh(a)
        lam2, lam3 = vals[-1], vals[-2]
        u2 = vecs[:, -1]
    elif method == "lanczos":
        es = topk_eigenpairs(h, 2, tol, deflate=e_unit[None, :], seed=derive_seed(seed, 7))
        lam2, lam3 = es.values
        u2 = es.vectors[:, 0]
    else:
        raise ValidationFailure(f"unknown method {method!r}")
    u2 = u2 - (u2 @ e_unit) * e_unit
    u2 = canonical_sign(u2 / np.linalg.norm(u2))
    sign = 1.0 if make_rng(derive_seed(seed, 1)).integers(0, 2) else -1.0
    return float(lam2), sign * u2, bool(lam2 - lam3 < dtol)


def m_sc(z) -> complex:
    """Stieltjes transform of the semicircle law on [-2, 2].

    Accepts a :class:`ComplexEnergy` or a number. Uses the branch with
    ``Im m > 0`` for ``Im z > 0`` and ``m -> 0`` at infinity; on the real axis
    it is defined only for ``|z| > 2``.
    """
    if isinstance(z, ComplexEnergy):
        z = z.z
    z = complex(z)
    if z.imag < 0:
        raise BranchUndefined("m_sc is defined here for Im z >= 0 only")
    if z.imag == 0 and abs(z.real) <= 2.0:
        raise BranchUndefined(f"real z = {z.real} lies on the support [-2, 2]")
    root = cmath.sqrt(z - 2.0) * cmath.sqrt(z + 2.0)
    # (-z + root)/2 rewritten to avoid cancellation at large |z|
    return -2.0 / (z + root)


def sample_constrained_goe(n: int, seed: int) -> SymMatrix:
    """GOE matrix (off-diagonal variance 1/n, diagonal 2/n) projected as P W P, P = I - ee^T/n."""
    if n < 2:
        raise ValidationFailure("n must be at least 2")
    rng = make_rng(seed)
    g = rng.standard_normal((n, n))
    w = (g + g.T) / math.sqrt(2.0 * n)
    row = w.mean(axis=1)
    total = row.mean()
    w = w - row[:, None] - row[None, :] + total
    w = (w + w.T) / 2.0
    return SymMatrix(n, dense=w)


def normal_cdf(x):
    """Standard normal distribution function; exact 0/1 beyond |x| > 8."""
    arr = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(-arr / math.sqrt(2.0))
    out = np.where(arr > 8.0, 1.0, np.where(arr < -8.0, 0.0, out))
    return float(out) if np.ndim(out) == 0 else out
