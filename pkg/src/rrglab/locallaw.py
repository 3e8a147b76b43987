"""Resolvent quadratic forms and local-law error functionals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DirectionNotOrthogonal, SolveFailure, ValidationFailure
from .graphgen import RegularGraph, sample_regular
from .seeding import derive_seed
from .spectral import (
    ComplexEnergy,
    EigenSystem,
    SymMatrix,
    full_eigensystem,
    m_sc,
    normalize_adjacency,
)

__all__ = [
    "FLUCTUATION_C",
    "REMAINDER_C",
    "SCAN_COLUMNS",
    "LocalLawSample",
    "ensemble_variance_scan",
    "fluctuation_vector",
    "local_law_error",
    "resolvent_quadratic_form",
    "resolvent_vector",
    "shifted_solve",
    "vector_remainder_norm",
]

SOLVE_RESIDUAL_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-12
# frozen diagnostic constants: ||F|| <= C sqrt(d log n / n) ||v|| and ||R|| <= C sqrt(d) / (n eta)
FLUCTUATION_C = 10.0
REMAINDER_C = 20.0

SCAN_COLUMNS = ("n", "d", "E", "eta", "sample_idx", "re_gq", "im_gq", "err", "remainder_norm", "fluct_norm", "seed")


@dataclass(frozen=True)
class LocalLawSample:
    n: int
    d: int
    z: ComplexEnergy
    q_id: str
    gq: complex
    err: float
    remainder_norm: float
    fluct_norm: float
    seed: int

    def row(self, sample_idx: int) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "E": self.z.E,
            "eta": self.z.eta,
            "sample_idx": sample_idx,
            "re_gq": self.gq.real,
            "im_gq": self.gq.imag,
            "err": self.err,
            "remainder_norm": self.remainder_norm,
            "fluct_norm": self.fluct_norm,
            "seed": self.seed,
        }


def _as_z(z) -> complex:
    return z.z if isinstance(z, ComplexEnergy) else complex(z)


def _coords(q) -> np.ndarray:
    return np.asarray(getattr(q, "coords", q), dtype=float)


def shifted_solve(h: SymMatrix, z, b: np.ndarray, tol: float = SOLVE_RESIDUAL_TOL, max_matvecs: int | None = None):
    """Solve ``(H - z) x = b`` for complex ``z`` off the real axis.

    Conjugate orthogonal CG (the complex-symmetric analogue of CG), restarted
    from the current iterate whenever the recursive residual claims
    convergence but the true residual does not.

    Returns ``(x, true_residual_norm, matvecs)``.
    """
    z = _as_z(z)
    n = h.n
    max_matvecs = max_matvecs or 20 * n
    b = np.asarray(b, dtype=complex)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=complex)
    if bnorm == 0.0:
        return x, 0.0, 0
    target = tol * bnorm
    matvecs = 0

    def apply(v):
        return h.matvec(v) - z * v

    r = b.copy()
    while True:
        p = r.copy()
        rho = r @ r
        inner_target = 0.1 * target
        while np.linalg.norm(r) > inner_target:
            if matvecs >= max_matvecs:
                raise SolveFailure(f"COCG exceeded {max_matvecs} matvecs at z={z}")
            ap = apply(p)
            matvecs += 1
            denom = p @ ap
            if denom == 0:
                break
            alpha = rho / denom
            x += alpha * p
            r -= alpha * ap
            rho_new = r @ r
            p = r + (rho_new / rho) * p
            rho = rho_new
        r = b - apply(x)
        matvecs += 1
        res = np.linalg.norm(r)
        if res <= target:
            return x, float(res), matvecs
        if matvecs >= max_matvecs:
            raise SolveFailure(f"COCG exceeded {max_matvecs} matvecs at z={z}")


def resolvent_vector(h: SymMatrix, z, q, method: str = "solve", eig: EigenSystem | None = None) -> tuple[np.ndarray, float]:
    """``v = (H - z)^{-1} q`` and the residual ``||(H - z) v - q||``.

    ``method`` is ``"solve"`` (COCG; LAPACK for dense matrices when
    ``method="direct"``) or ``"eigen"`` (spectral expansion).
    """
    zc = _as_z(z)
    if zc.imag <= 0:
        raise ValidationFailure("resolvent needs Im z > 0")
    qv = _coords(q)
    if method == "eigen":
        eig = eig if eig is not None else full_eigensystem(h)
        coef = (eig.vectors.T @ qv) / (eig.values - zc)
        v = eig.vectors @ coef
    elif method == "direct":
        a = h.to_dense().astype(complex)
        a[np.diag_indices(h.n)] -= zc
        v = np.linalg.solve(a, qv.astype(complex))
    elif method == "solve":
        v, _, _ = shifted_solve(h, zc, qv)
    else:
        raise ValidationFailure(f"unknown method {method!r}")
    resid = float(np.linalg.norm(h.matvec(v) - zc * v - qv))
    return v, resid


def resolvent_quadratic_form(h: SymMatrix, z, q, method: str = "solve", eig: EigenSystem | None = None) -> complex:
    """``<q, (H - z)^{-1} q>`` (bilinear, q real)."""
    zc = _as_z(z)
    qv = _coords(q)
    if method == "eigen":
        eig = eig if eig is not None else full_eigensystem(h)
        w = eig.vectors.T @ qv
        return complex(np.sum(w * w / (eig.values - zc)))
    v, resid = resolvent_vector(h, zc, qv, method)
    if resid > SOLVE_RESIDUAL_TOL * max(1.0, np.linalg.norm(qv)):
        raise SolveFailure(f"resolvent residual {resid:.3e} above tolerance")
    return complex(qv @ v)


def fluctuation_vector(h: SymMatrix, z, q, method: str = "solve") -> tuple[np.ndarray, float]:
    """``F = (H - m_sc(z)) v`` with ``v = G(z) q``, and the residual of the
    exact identity ``F = q + (z - m_sc(z)) v``."""
    zc = _as_z(z)
    qv = _coords(q)
    v, _ = resolvent_vector(h, zc, qv, method)
    m = m_sc(zc)
    f = h.matvec(v) - m * v
    identity = float(np.linalg.norm(f - (qv + (zc - m) * v)))
    return f, identity


def vector_remainder_norm(h: SymMatrix, z, q, method: str = "solve", v: np.ndarray | None = None) -> float:
    """``||v + q / (z + m_sc(z))||`` with ``v = G(z) q``."""
    zc = _as_z(z)
    qv = _coords(q)
    if v is None:
        v, _ = resolvent_vector(h, zc, qv, method)
    return float(np.linalg.norm(v + qv / (zc + m_sc(zc))))


def _check_orthogonal(qv: np.ndarray) -> None:
    overlap = abs(qv.sum()) / math.sqrt(len(qv))
    if overlap > ORTHOGONALITY_TOL:
        raise DirectionNotOrthogonal(f"|<q, e/sqrt(n)>| = {overlap:.3e} exceeds {ORTHOGONALITY_TOL:g}")


def local_law_error(g: RegularGraph, z: ComplexEnergy, q, seed: int = 0, method: str = "solve") -> LocalLawSample:
    """Isotropic local-law error ``|<q, G(z) q> - m_sc(z)|`` on one graph."""
    qv = _coords(q)
    _check_orthogonal(qv)
    if isinstance(z, ComplexEnergy) and z.n is not None and not z.edge_regime:
        warnings.warn(f"z = {z.z} is outside the edge regime for n = {z.n}", stacklevel=2)
    h = normalize_adjacency(g)
    zc = _as_z(z)
    if method == "eigen":
        eig = full_eigensystem(h)
        v, _ = resolvent_vector(h, zc, qv, "eigen", eig)
    else:
        v, resid = resolvent_vector(h, zc, qv, method)
        if resid > SOLVE_RESIDUAL_TOL:
            raise SolveFailure(f"resolvent residual {resid:.3e} above tolerance")
    gq = complex(qv @ v)
    m = m_sc(zc)
    fluct = h.matvec(v) - m * v
    energy = z if isinstance(z, ComplexEnergy) else ComplexEnergy(zc.real, zc.imag, g.n)
    return LocalLawSample(
        n=g.n,
        d=g.d,
        z=energy,
        q_id=getattr(q, "kind", "vector"),
        gq=gq,
        err=abs(gq - m),
        remainder_norm=vector_remainder_norm(h, zc, qv, v=v),
        fluct_norm=float(np.linalg.norm(fluct)),
        seed=int(seed),
    )


def _scan_sample(args):
    n, d, E, eta, i, base_seed, direction_kind, sampler = args
    from .steinlab import build_direction  # deferred: steinlab imports this module

    s = derive_seed(base_seed, n, d, i)
    g = sample_regular(n, d, derive_seed(s, 0), sampler)
    q = build_direction(direction_kind, n, seed=derive_seed(base_seed, n, d, 0xD1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sample = local_law_error(g, ComplexEnergy(E, eta, n), q, seed=s)
    return sample.row(i)


def ensemble_variance_scan(
    grid,
    samples_per_cell: int,
    base_seed: int,
    direction: str = "random-orthogonal",
    workers: int = 1,
    sampler: str = "auto",
) -> dict:
    """Ensemble variance of ``<q, G(z) q>`` over fresh graphs, per (n, d, z) cell.

    Per-sample seeds depend on ``(base_seed, n, d, index)`` only, so repeated
    cells reproduce each other. Cells sharing ``d``, ``E`` and the exponent
    ``log(eta)/log(n)`` are grouped for a log-log fit of variance against n.

    Returns a dict with ``rows`` (one per sample, ``SCAN_COLUMNS``), ``cells``
    (per-cell variances) and ``fits``.
    """
    from .harness.pool import map_ordered
    from .steinlab import scaling_fit

    grid = list(grid)
    if not grid:
        raise ValidationFailure("grid must be non-empty")
    if samples_per_cell < 30:
        raise ValidationFailure("samples_per_cell must be at least 30")
    tasks = []
    cells = []
    for n, d, z in grid:
        z = z if isinstance(z, ComplexEnergy) else ComplexEnergy(complex(z).real, complex(z).imag, n)
        cells.append((int(n), int(d), float(z.E), float(z.eta)))
        tasks.extend((int(n), int(d), float(z.E), float(z.eta), i, base_seed, direction, sampler) for i in range(samples_per_cell))
    rows = map_ordered(_scan_sample, tasks, workers)

    summary = []
    for c, (n, d, E, eta) in enumerate(cells):
        block = rows[c * samples_per_cell : (c + 1) * samples_per_cell]
        re = np.array([r["re_gq"] for r in block])
        im = np.array([r["im_gq"] for r in block])
        err = np.array([r["err"] for r in block])
        summary.append(
            {
                "n": n,
                "d": d,
                "E": E,
                "eta": eta,
                "var_re": float(np.var(re, ddof=1)),
                "var_im": float(np.var(im, ddof=1)),
                "median_err": float(np.median(err)),
            }
        )

    groups: dict[tuple, list[dict]] = {}
    for cell in summary:
        exponent = round(math.log(cell["eta"]) / math.log(cell["n"]), 6)
        groups.setdefault((cell["d"], cell["E"], exponent), []).append(cell)
    fits = []
    for (d, E, exponent), members in sorted(groups.items()):
        ns = sorted({m["n"] for m in members})
        if len(ns) < 3:
            continue
        entry = {"d": d, "E": E, "eta_exponent": exponent}
        for part in ("var_re", "var_im"):
            pts = [(m["n"], m[part]) for m in members]
            slope, intercept, stderr = scaling_fit(pts)
            entry[part] = {"slope": slope, "intercept": intercept, "stderr": stderr}
        fits.append(entry)
    return {"rows": rows, "cells": summary, "fits": fits}
