"""Graph-to-GOE interpolation and the coupling-error experiment.

The evolved matrix is ``sqrt(1 - t) H0 + sqrt(t) W`` with W a GOE matrix
projected onto the complement of the all-ones vector, and the interpolation
is the convex combination ``(1 - s) H0 + s H_t``. Both choices live in
:func:`goe_evolved` so an alternative evolution is a one-function change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CouplingOutOfRange, NoConvergence, TimeOutOfRange, ValidationFailure
from .graphgen import RegularGraph, sample_regular
from .harness.pool import map_ordered
from .locallaw import resolvent_vector
from .seeding import GOE_STREAM, derive_seed, make_rng
from .spectral import (
    ComplexEnergy,
    SymMatrix,
    m_sc,
    normalize_adjacency,
    sample_constrained_goe,
)

__all__ = [
    "PROFILE_COLUMNS",
    "InterpolationPath",
    "build_path",
    "coupling_error_profile",
    "default_s_grid",
    "default_t_star",
    "delta_norm_stats",
    "goe_evolved",
    "interpolated_matrix",
    "optimal_s",
    "power_iteration_norm",
]

PROFILE_COLUMNS = ("n", "d", "t", "s", "E", "eta", "err", "argmin_flag", "seed")


@dataclass(frozen=True, eq=False)
class InterpolationPath:
    h0: SymMatrix
    t: float
    s: float
    ht_goe: SymMatrix
    hts: SymMatrix
    seed: int


def goe_evolved(h0: SymMatrix, t: float, seed: int) -> SymMatrix:
    """``sqrt(1 - t) H0 + sqrt(t) P W P``; returns ``H0`` itself at t = 0."""
    if not 0.0 <= t <= 1.0:
        raise TimeOutOfRange(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return h0
    w = sample_constrained_goe(h0.n, seed).dense
    return SymMatrix(h0.n, dense=math.sqrt(1.0 - t) * h0.to_dense() + math.sqrt(t) * w)


def interpolated_matrix(h0: SymMatrix, ht_goe: SymMatrix, s: float) -> SymMatrix:
    if not 0.0 <= s <= 1.0:
        raise CouplingOutOfRange(f"s must lie in [0, 1], got {s}")
    if h0.n != ht_goe.n:
        raise ValidationFailure("dimension mismatch")
    return SymMatrix(h0.n, dense=(1.0 - s) * h0.to_dense() + s * ht_goe.to_dense())


def build_path(h0: SymMatrix, t: float, s: float, seed: int) -> InterpolationPath:
    ht = goe_evolved(h0, t, seed)
    return InterpolationPath(h0, t, s, ht, interpolated_matrix(h0, ht, s), seed)


def optimal_s(d: float, t: float, n: float) -> float:
    """Coupling that balances graph and GOE errors: ``min(1, sqrt(d t / n))``."""
    if d <= 0 or n <= 0 or t < 0:
        raise ValidationFailure("need d > 0, n > 0 and t >= 0")
    return min(1.0, math.sqrt(d * t / n))


def default_t_star(n: int) -> float:
    return n ** (-1.0 / 3.0)


def default_s_grid(points: int = 21) -> list[float]:
    """0 followed by log-spaced values from 1e-3 to 1."""
    return [0.0] + np.logspace(-3.0, 0.0, points - 1).tolist()


def power_iteration_norm(
    a: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, seed: int = 0, block: int = 8
) -> float:
    """Operator norm of a symmetric matrix by block power iteration with Rayleigh-Ritz.

    A block is used because the spectrum of ``Delta_t`` is close to symmetric,
    so the largest and smallest eigenvalues nearly tie in absolute value and
    single-vector iteration stalls. Stops when the top Ritz pair ``(theta, x)``
    has residual ``r`` with ``min(|r|, |r|^2 / gap) <= tol * |theta|``, where
    gap is the distance from theta to the other Ritz values. Both quantities
    bound the eigenvalue error (Weyl and Kato-Temple estimates).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if not np.any(a):
        return 0.0
    p = min(block, n)
    x, _ = np.linalg.qr(make_rng(seed).standard_normal((n, p)))
    for _ in range(max_iter):
        y = a @ x
        theta, w = np.linalg.eigh(x.T @ y)
        order = np.argsort(-np.abs(theta))
        theta, w = theta[order], w[:, order]
        top = theta[0]
        if top == 0.0:
            return 0.0
        r = np.linalg.norm(y @ w[:, 0] - top * (x @ w[:, 0]))
        gap = np.min(np.abs(theta[1:] - top)) if p > 1 else 0.0
        bound = r if gap <= 0.0 else min(r, r * r / gap)
        if bound <= tol * abs(top):
            return float(abs(top))
        x, _ = np.linalg.qr(y @ w)
    raise NoConvergence(f"block power iteration did not converge in {max_iter} iterations")


def _delta_sample(args):
    n, d, t_grid, base_seed, i, sampler = args
    s = derive_seed(base_seed, i)
    g = sample_regular(n, d, derive_seed(s, 0), sampler)
    h0 = normalize_adjacency(g)
    a0 = h0.to_dense()
    out = []
    for t in t_grid:
        ht = goe_evolved(h0, t, derive_seed(s, GOE_STREAM))
        delta = ht.to_dense() - a0
        out.append(power_iteration_norm(delta, seed=derive_seed(s, 3)) ** 2)
    return out


def delta_norm_stats(
    n: int, d: int, t_grid, samples: int, base_seed: int, workers: int = 1, sampler: str = "auto"
) -> dict:
    """Mean of ``||H_t - H0||_op^2`` per t, with 95% normal intervals and a
    through-origin least-squares fit against ``d t + d^2 / n``.

    The same graph and GOE draw are reused across the t grid within a sample.
    """
    if samples < 30:
        raise ValidationFailure("samples must be at least 30")
    t_grid = [float(t) for t in t_grid]
    per_sample = map_ordered(_delta_sample, [(n, d, t_grid, base_seed, i, sampler) for i in range(samples)], workers)
    norms = np.array(per_sample)  # (samples, len(t_grid))
    rows = []
    for k, t in enumerate(t_grid):
        col = norms[:, k]
        mean = float(col.mean())
        half = 1.96 * float(col.std(ddof=1)) / math.sqrt(samples)
        rows.append({"t": t, "mean_sq_norm": mean, "ci_lo": mean - half, "ci_hi": mean + half, "x": d * t + d * d / n})
    x = np.array([r["x"] for r in rows])
    y = np.array([r["mean_sq_norm"] for r in rows])
    slope = float(x @ y / (x @ x)) if np.any(x) else float("nan")
    return {"n": n, "d": d, "samples": samples, "rows": rows, "fit_slope": slope, "norms": norms}


def coupling_error_profile(
    g: RegularGraph,
    t: float,
    z: ComplexEnergy,
    q,
    s_grid,
    seed: int,
    *,
    fresh: bool = False,
    method: str = "direct",
) -> dict:
    """``err(s) = |<q, (H_{t,s} - z)^{-1} q> - m_sc(z)|`` over a grid of couplings.

    One GOE realization (from ``seed``) is shared by every grid point unless
    ``fresh`` is set, in which case point k uses ``derive_seed(seed, k)``.
    The continuity flag is false when some jump between neighbouring grid
    points exceeds ten times the median jump.
    """
    s_grid = [float(s) for s in s_grid]
    if not s_grid:
        raise ValidationFailure("empty s grid")
    for s in s_grid:
        if not 0.0 <= s <= 1.0:
            raise CouplingOutOfRange(f"s={s} outside [0, 1]")
    zc = z.z if isinstance(z, ComplexEnergy) else complex(z)
    qv = np.asarray(getattr(q, "coords", q), dtype=float)
    h0 = normalize_adjacency(g)
    m = m_sc(zc)
    shared = goe_evolved(h0, t, seed)
    errs = []
    for k, s in enumerate(s_grid):
        ht = goe_evolved(h0, t, derive_seed(seed, k)) if fresh else shared
        hs = h0 if s == 0.0 else interpolated_matrix(h0, ht, s)
        v, _ = resolvent_vector(hs, zc, qv, "solve" if hs.is_sparse else method)
        errs.append(abs(complex(qv @ v) - m))
    errs_arr = np.array(errs)
    best = int(np.argmin(errs_arr))
    order = np.argsort(s_grid, kind="stable")
    jumps = np.abs(np.diff(errs_arr[order]))
    continuity_ok = bool(len(jumps) < 2 or jumps.max() <= 10.0 * max(np.median(jumps), 1e-300))
    return {
        "s": s_grid,
        "err": errs,
        "argmin_index": best,
        "argmin_s": s_grid[best],
        "continuity_ok": continuity_ok,
        "t": float(t),
        "E": zc.real,
        "eta": zc.imag,
        "seed": int(seed),
        "n": g.n,
        "d": g.d,
    }


def profile_rows(profile: dict) -> list[dict]:
    return [
        {
            "n": profile["n"],
            "d": profile["d"],
            "t": profile["t"],
            "s": s,
            "E": profile["E"],
            "eta": profile["eta"],
            "err": err,
            "argmin_flag": k == profile["argmin_index"],
            "seed": profile["seed"],
        }
        for k, (s, err) in enumerate(zip(profile["s"], profile["err"]))
    ]
