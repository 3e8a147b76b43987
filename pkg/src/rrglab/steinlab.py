"""Overlap ensembles and their distributional statistics.

The overlap of a graph with a direction q (unit, orthogonal to the all-ones
vector) is ``sqrt(n) * <q, u2>``, where u2 is the sign-randomized second
eigenvector of A/sqrt(d). Ensembles of overlaps are compared to the standard
normal through the exact Kolmogorov-Smirnov distance, plug-in cumulants and
smooth test-function discrepancies.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .errors import (
    BadSupport,
    DegenerateFit,
    DegenerateSample,
    EmptySample,
    ExcessDegeneracy,
    UnknownTestFunction,
    ValidationFailure,
)
from .graphgen import RegularGraph, sample_regular
from .harness.pool import map_ordered
from .seeding import BOOTSTRAP_STREAM, DIRECTION_STREAM, derive_seed, make_rng
from .spectral import normal_cdf, second_eigenpair

__all__ = [
    "GAUSSIAN_TEST_FUNCTIONS",
    "SAMPLE_COLUMNS",
    "BerryEsseenPlan",
    "CumulantSummary",
    "Direction",
    "EnsembleResult",
    "berry_esseen_experiment",
    "bootstrap_slopes",
    "build_direction",
    "cumulants",
    "ks_statistic",
    "overlap",
    "overlap_from_vector",
    "run_ensemble",
    "scaling_fit",
    "stein_discrepancy",
]

DIRECTION_KINDS = ("coordinate-difference", "random-orthogonal", "d-supported")
SAMPLE_COLUMNS = ("n", "d", "direction", "sample_idx", "seed", "overlap")


@dataclass(frozen=True, eq=False)
class Direction:
    """Deterministic unit vector orthogonal to the all-ones vector.

    ``raw`` keeps the unprojected equal-weight vector for the d-supported kind.
    """

    n: int
    coords: np.ndarray
    kind: str
    support: tuple[int, ...] | None = None
    raw: np.ndarray | None = None


def build_direction(kind: str, n: int, params: dict | None = None, seed: int = 0) -> Direction:
    """Construct a direction of the requested kind.

    ``coordinate-difference`` uses ``params["pair"]`` (default (0, 1));
    ``d-supported`` uses ``params["size"]`` or an explicit ``params["support"]``.
    """
    params = dict(params or {})
    if n < 2:
        raise ValidationFailure("direction needs n >= 2")
    if kind == "coordinate-difference":
        i, j = params.get("pair", (0, 1))
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise BadSupport(f"invalid coordinate pair {(i, j)} for n={n}")
        coords = np.zeros(n)
        coords[i] = 1.0 / math.sqrt(2.0)
        coords[j] = -1.0 / math.sqrt(2.0)
        return Direction(n, coords, kind, (int(i), int(j)))
    if kind == "random-orthogonal":
        v = make_rng(seed).standard_normal(n)
        v -= v.mean()
        v /= np.linalg.norm(v)
        v -= v.mean()
        return Direction(n, v / np.linalg.norm(v), kind)
    if kind == "d-supported":
        if "support" in params:
            support = tuple(int(s) for s in params["support"])
        else:
            support = tuple(range(int(params.get("size", 0))))
        if not support or len(set(support)) != len(support) or len(support) >= n:
            raise BadSupport(f"support of size {len(support)} is invalid for n={n}")
        if min(support) < 0 or max(support) >= n:
            raise BadSupport("support index out of range")
        raw = np.zeros(n)
        raw[list(support)] = 1.0 / math.sqrt(len(support))
        v = raw - raw.mean()
        v /= np.linalg.norm(v)
        return Direction(n, v, kind, support, raw)
    raise ValidationFailure(f"unknown direction kind {kind!r}; expected one of {DIRECTION_KINDS}")


def overlap_from_vector(u2: np.ndarray, coords: np.ndarray) -> float:
    return float(math.sqrt(len(u2)) * (np.asarray(coords) @ u2))


def overlap(g: RegularGraph, q: Direction, seed: int, method: str = "auto") -> tuple[float, bool]:
    """``sqrt(n) <q, u2>`` with the sign-randomized second eigenvector, plus its degeneracy flag."""
    if q.n != g.n:
        raise ValidationFailure(f"direction has n={q.n}, graph has n={g.n}")
    _, u2, degenerate = second_eigenpair(g, seed, method=method)
    return overlap_from_vector(u2, q.coords), degenerate


# --------------------------------------------------------------------------- statistics


def ks_statistic(samples) -> float:
    """Exact sup-distance between the empirical CDF of ``samples`` and Phi."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = len(x)
    if m == 0:
        raise EmptySample("KS statistic of an empty sample")
    cdf = normal_cdf(x)
    cdf = np.atleast_1d(cdf)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


@dataclass
class CumulantSummary:
    """Plug-in moments of a sample; ``ci`` maps statistic name to a 95% percentile bootstrap interval."""

    variance: float
    kappa2: float
    kappa3: float
    kappa4: float
    ci: dict[str, tuple[float, float]]
    n_boot: int

    def to_dict(self) -> dict:
        return {
            "variance": self.variance,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "ci": {k: list(v) for k, v in sorted(self.ci.items())},
            "n_boot": self.n_boot,
        }


def _moment_stats(x: np.ndarray) -> np.ndarray:
    """Rows of (variance, kappa3, kappa4) along the last axis."""
    mean = x.mean(axis=-1, keepdims=True)
    c = x - mean
    var = np.mean(c * c, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = c / np.sqrt(var)[..., None]
        k3 = np.mean(z**3, axis=-1)
        k4 = np.mean(z**4, axis=-1) - 3.0
    return np.stack([var, k3, k4], axis=-1)


def cumulants(samples, n_boot: int = 1000, seed: int = 0, min_size: int = 100) -> CumulantSummary:
    """Variance, kappa2 = variance - 1, and standardized kappa3 / kappa4.

    Central moments are plug-in (divide by M). kappa3 and kappa4 are moments of
    the sample standardized by its own standard deviation; kappa4 is excess
    kurtosis.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = len(x)
    if m < min_size:
        raise ValidationFailure(f"cumulants need at least {min_size} samples, got {m}")
    if np.all(x == x[0]):
        raise DegenerateSample("sample has zero variance")
    var, k3, k4 = _moment_stats(x)
    rng = make_rng(seed)
    boots = []
    chunk = max(1, 2_000_000 // m)
    done = 0
    while done < n_boot:
        size = min(chunk, n_boot - done)
        idx = rng.integers(0, m, size=(size, m))
        boots.append(_moment_stats(x[idx]))
        done += size
    ci = {}
    if n_boot:
        b = np.concatenate(boots)
        b = np.column_stack([b[:, 0], b[:, 0] - 1.0, b[:, 1], b[:, 2]])
        lo, hi = np.nanpercentile(b, [2.5, 97.5], axis=0)
        for k, name in enumerate(("variance", "kappa2", "kappa3", "kappa4")):
            ci[name] = (float(lo[k]), float(hi[k]))
    return CumulantSummary(float(var), float(var - 1.0), float(k3), float(k4), ci, n_boot)


def _clipped_square_mean() -> float:
    # E[min(Z^2, 9)] = (2 Phi(3) - 1) - 6 phi(3) + 9 * 2 (1 - Phi(3))
    phi3 = math.exp(-4.5) / math.sqrt(2.0 * math.pi)
    tail = 0.5 * math.erfc(3.0 / math.sqrt(2.0))
    return (1.0 - 2.0 * tail) - 6.0 * phi3 + 18.0 * tail


GAUSSIAN_TEST_FUNCTIONS = {
    "cos": (np.cos, math.exp(-0.5)),
    "clipped_identity": (lambda x: np.clip(x, -3.0, 3.0), 0.0),
    "clipped_square": (lambda x: np.minimum(x * x, 9.0), _clipped_square_mean()),
}


def stein_discrepancy(samples, family=None) -> dict[str, float]:
    """``|mean h(X) - E h(Z)|`` for each test function.

    ``family`` is a list of built-in names or a mapping name -> (h, E h(Z));
    default is every built-in function.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if family is None:
        family = list(GAUSSIAN_TEST_FUNCTIONS)
    if not family:
        raise ValidationFailure("test-function family is empty")
    if isinstance(family, dict):
        items = family.items()
    else:
        items = []
        for name in family:
            if name not in GAUSSIAN_TEST_FUNCTIONS:
                raise UnknownTestFunction(name)
            items.append((name, GAUSSIAN_TEST_FUNCTIONS[name]))
    out = {}
    for name, (h, expected) in items:
        vals = np.asarray(h(x), dtype=float)
        out[name] = abs(math.fsum(vals.tolist()) / len(x) - expected)
    return out


def scaling_fit(points) -> tuple[float, float, float]:
    """Least squares line through ``(log x, log y)``: (slope, intercept, slope standard error)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise DegenerateFit("need at least 3 points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DegenerateFit("coordinates must be positive")
    if len(np.unique(xs)) < 2:
        raise DegenerateFit("x values must be distinct")
    lx, ly = np.log(xs), np.log(ys)
    mx = lx.mean()
    sxx = np.sum((lx - mx) ** 2)
    if sxx == 0:
        raise DegenerateFit("x values are collinear in log space")
    slope = np.sum((lx - mx) * (ly - ly.mean())) / sxx
    intercept = ly.mean() - slope * mx
    resid = ly - (intercept + slope * lx)
    dof = len(pts) - 2
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if dof > 0 else 0.0
    return float(slope), float(intercept), stderr


def bootstrap_slopes(xs, sample_sets, statistic=ks_statistic, n_boot: int = 1000, seed: int = 0) -> np.ndarray:
    """Log-log slopes of ``statistic`` against ``xs`` under independent resampling of every cell."""
    rng = make_rng(seed)
    sets = [np.sort(np.asarray(s, dtype=float)) for s in sample_sets]
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        ys = [statistic(s[rng.integers(0, len(s), len(s))]) for s in sets]
        slopes[b] = scaling_fit(list(zip(xs, ys)))[0]
    return slopes


# --------------------------------------------------------------------------- ensembles


@dataclass
class EnsembleResult:
    """Overlap ensemble with its configuration echo and statistics.

    ``samples`` are in sample-index order with degenerate draws removed;
    ``sample_index`` records which indices they came from.
    """

    n: int
    d: int
    M: int
    direction: str
    base_seed: int
    samples: np.ndarray
    sample_index: np.ndarray
    excluded: int
    ks: float
    stats: CumulantSummary
    stein: dict[str, float]
    raw_samples: np.ndarray | None = None
    raw_stats: CumulantSummary | None = None
    extra: dict = field(default_factory=dict)

    @property
    def variance(self) -> float:
        return self.stats.variance

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "config": {
                "n": self.n,
                "d": self.d,
                "M": self.M,
                "direction": self.direction,
                "base_seed": self.base_seed,
            },
            "kept": len(self.samples),
            "excluded": self.excluded,
            "ks": self.ks,
            "stats": self.stats.to_dict(),
            "stein": {k: self.stein[k] for k in sorted(self.stein)},
        }
        if self.raw_stats is not None:
            out["unprojected_stats"] = self.raw_stats.to_dict()
        if self.extra:
            out["extra"] = self.extra
        if include_samples:
            out["samples"] = self.samples.tolist()
            out["sample_index"] = self.sample_index.tolist()
        return out

    def to_json(self, include_samples: bool = True) -> str:
        return json.dumps(self.to_dict(include_samples), sort_keys=True)


def _graph_sample(n, d, coords, raw, sampler, seed):
    g = sample_regular(n, d, derive_seed(seed, 0), sampler)
    _, u2, degenerate = second_eigenpair(g, derive_seed(seed, 1))
    x = overlap_from_vector(u2, coords)
    xr = overlap_from_vector(u2, raw) if raw is not None else None
    return x, degenerate, xr


def _resolve_direction(direction, n, base_seed) -> Direction:
    if isinstance(direction, Direction):
        if direction.n != n:
            raise ValidationFailure(f"direction has n={direction.n}, ensemble has n={n}")
        return direction
    if isinstance(direction, str):
        kind, params = direction, {}
    else:
        kind, params = direction
    return build_direction(kind, n, params, seed=derive_seed(base_seed, DIRECTION_STREAM))


def run_ensemble(
    n: int,
    d: int,
    M: int,
    direction="coordinate-difference",
    base_seed: int = 0,
    *,
    workers: int = 1,
    n_boot: int = 1000,
    sample_source=None,
    min_samples: int = 100,
    sampler: str = "auto",
) -> EnsembleResult:
    """Draw M independent (graph, sign) overlaps and summarize them.

    Sample i uses ``seed_i = derive_seed(base_seed, i)``: its graph comes from
    ``derive_seed(seed_i, 0)`` and its eigenvector sign from
    ``derive_seed(seed_i, 1)``. Degenerate draws are excluded and counted.

    ``sample_source(seed_i) -> (x, degenerate, x_raw)`` replaces the graph
    pipeline (used to inject reference streams in tests). ``sampler`` picks
    the graph sampler (see :func:`rrglab.graphgen.sample_regular`).
    """
    if M < min_samples:
        raise ValidationFailure(f"M must be at least {min_samples}, got {M}")
    q = _resolve_direction(direction, n, base_seed)
    seeds = [derive_seed(base_seed, i) for i in range(M)]
    if sample_source is None:
        sample_source = partial(_graph_sample, n, d, q.coords, q.raw, sampler)
    draws = [tuple(r) + (None,) * (3 - len(r)) for r in map_ordered(sample_source, seeds, workers)]
    keep = np.array([not dg for _, dg, _ in draws], dtype=bool)
    excluded = int(M - keep.sum())
    if excluded > M / 10:
        raise ExcessDegeneracy(f"{excluded} of {M} samples had a degenerate second eigenvalue")
    xs = np.array([x for x, _, _ in draws], dtype=float)[keep]
    raw = None
    if q.raw is not None:
        raw = np.array([xr for _, _, xr in draws], dtype=float)[keep]
    boot_seed = derive_seed(base_seed, BOOTSTRAP_STREAM)
    stats = cumulants(xs, n_boot=n_boot, seed=boot_seed, min_size=min(min_samples, len(xs)))
    raw_stats = cumulants(raw, n_boot=n_boot, seed=boot_seed, min_size=min(min_samples, len(raw))) if raw is not None else None
    return EnsembleResult(
        n=n,
        d=d,
        M=M,
        direction=q.kind,
        base_seed=int(base_seed),
        samples=xs,
        sample_index=np.flatnonzero(keep),
        excluded=excluded,
        ks=ks_statistic(xs),
        stats=stats,
        stein=stein_discrepancy(np.sort(xs)),
        raw_samples=raw,
        raw_stats=raw_stats,
    )


# --------------------------------------------------------------------------- scaling experiment


@dataclass
class BerryEsseenPlan:
    N: list[int]
    d: list[int]
    M: int
    direction: str = "coordinate-difference"
    base_seed: int = 0
    kappa4: bool = True
    kappa4_n: int | None = None
    n_boot: int = 1000
    min_samples: int = 500
    sampler: str = "auto"


def _cell_seed(base_seed: int, n: int, d: int, stream: int) -> int:
    return derive_seed(base_seed, n, d, stream)


def berry_esseen_experiment(plan: BerryEsseenPlan, output_dir=None, workers: int = 1) -> dict:
    """Run one ensemble per (N, d) cell and fit the KS distance against N and d.

    With ``plan.kappa4`` and at least two degrees, a second series of
    ensembles at ``kappa4_n`` uses d-supported directions (support size d)
    and reports kappa4 against d, for both the projected direction and the
    raw equal-weight vector.

    When ``output_dir`` is given, writes ``report.json``, ``samples.csv``,
    one histogram SVG per cell and log-log KS plots.
    """
    if plan.M < plan.min_samples:
        raise ValidationFailure(f"M must be at least {plan.min_samples}")
    for n in plan.N:
        for d in plan.d:
            if (n * d) % 2 or d >= n:
                raise ValidationFailure(f"infeasible cell n={n}, d={d}")
            if d > n**0.25:
                warnings.warn(f"d={d} exceeds n^(1/4) for n={n}", stacklevel=2)
    cells: dict[tuple[int, int], EnsembleResult] = {}
    for n in plan.N:
        for d in plan.d:
            cells[(n, d)] = run_ensemble(
                n, d, plan.M, plan.direction, _cell_seed(plan.base_seed, n, d, 0),
                workers=workers, n_boot=plan.n_boot, min_samples=plan.min_samples, sampler=plan.sampler,
            )
    report: dict = {
        "schema_version": 1,
        "plan": {
            "N": list(plan.N),
            "d": list(plan.d),
            "M": plan.M,
            "direction": plan.direction,
            "base_seed": plan.base_seed,
        },
        "cells": [cells[k].to_dict() for k in sorted(cells)],
        "ks_vs_N": [],
        "ks_vs_d": [],
        "kappa4_vs_d": [],
    }
    boot_seed = derive_seed(plan.base_seed, BOOTSTRAP_STREAM)
    for d in sorted(set(plan.d)):
        ns = sorted({n for n in plan.N})
        if len(ns) < 3:
            continue
        sets = [cells[(n, d)].samples for n in ns]
        slope, intercept, stderr = scaling_fit([(n, cells[(n, d)].ks) for n in ns])
        boots = bootstrap_slopes(ns, sets, n_boot=plan.n_boot, seed=derive_seed(boot_seed, d))
        report["ks_vs_N"].append(
            {
                "d": d,
                "N": ns,
                "ks": [cells[(n, d)].ks for n in ns],
                "slope": slope,
                "intercept": intercept,
                "stderr": stderr,
                "bootstrap_ci95": [float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))],
                "bootstrap_upper95": float(np.percentile(boots, 95.0)),
            }
        )
    for n in sorted(set(plan.N)):
        ds = sorted(set(plan.d))
        if len(ds) < 3:
            continue
        slope, intercept, stderr = scaling_fit([(d, cells[(n, d)].ks) for d in ds])
        report["ks_vs_d"].append(
            {"N": n, "d": ds, "ks": [cells[(n, d)].ks for d in ds], "slope": slope, "intercept": intercept, "stderr": stderr}
        )
    k4_cells = {}
    if plan.kappa4 and len(set(plan.d)) >= 2:
        n4 = plan.kappa4_n or max(plan.N)
        for d in sorted(set(plan.d)):
            res = run_ensemble(
                n4, d, plan.M, ("d-supported", {"size": d}), _cell_seed(plan.base_seed, n4, d, 4),
                workers=workers, n_boot=plan.n_boot, min_samples=plan.min_samples, sampler=plan.sampler,
            )
            k4_cells[(n4, d)] = res
            report["kappa4_vs_d"].append(
                {
                    "N": n4,
                    "d": d,
                    "kappa4": res.stats.kappa4,
                    "kappa4_ci95": list(res.stats.ci["kappa4"]),
                    "variance": res.stats.variance,
                    "unprojected_kappa4": res.raw_stats.kappa4,
                    "unprojected_variance": res.raw_stats.variance,
                    "ks": res.ks,
                }
            )
    if output_dir is not None:
        _write_berry_esseen_outputs(output_dir, report, cells, k4_cells)
    report["_ensembles"] = cells
    report["_kappa4_ensembles"] = k4_cells
    return report


def _write_berry_esseen_outputs(out, report: dict, cells, k4_cells) -> list[Path]:
    from .harness import io, plots

    outset, owned = io.as_output_set(out)
    rows = []
    for group in (cells, k4_cells):
        for (n, d), res in sorted(group.items()):
            for idx, x in zip(res.sample_index.tolist(), res.samples.tolist()):
                rows.append(
                    {"n": n, "d": d, "direction": res.direction, "sample_idx": idx,
                     "seed": derive_seed(res.base_seed, idx), "overlap": x}
                )
    io.write_csv(outset.path("samples.csv"), SAMPLE_COLUMNS, rows)
    for (n, d), res in sorted(cells.items()):
        plots.emit_histogram_with_table(res.samples, outset, f"hist_n{n}_d{d}")
    for entry in report["ks_vs_N"]:
        plots.emit_plot(
            {"x": entry["N"], "y": entry["ks"]}, "loglog-scatter-with-fit", outset.path(f"ks_vs_N_d{entry['d']}.svg")
        )
    for entry in report["ks_vs_d"]:
        plots.emit_plot(
            {"x": entry["d"], "y": entry["ks"]}, "loglog-scatter-with-fit", outset.path(f"ks_vs_d_N{entry['N']}.svg")
        )
    io.write_json(outset.path("report.json"), report)
    return outset.commit() if owned else list(outset.files)
