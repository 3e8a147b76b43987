"""Dispatch a validated ExperimentSpec to its pipeline and persist the results.

Every file is staged as ``<name>.partial`` and renamed only after all cells
finish; ``run_info.txt`` (wall time, worker count) and finally
``manifest.json`` are written after that. A failure at any point leaves the
staged files in place and no manifest.
"""

from __future__ import annotations

import itertools
import math
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..graphgen import graph_to_text, sample_regular, validate_regular
from ..seeding import DIRECTION_STREAM, GOE_STREAM, derive_seed
from ..spectral import (
    DENSE_SECOND_CUTOFF,
    ComplexEnergy,
    full_eigensystem,
    normalize_adjacency,
    topk_eigenpairs,
)
from . import io, plots
from .config import ExperimentSpec, RunManifest
from .pool import map_ordered


def _cells(spec: ExperimentSpec):
    return [(n, d) for n in spec.params["N"] for d in spec.params["d"]]


def _direction_params(spec: ExperimentSpec, d: int) -> tuple:
    kind = spec.params["direction"]
    if kind == "d-supported":
        return kind, {"size": spec.params.get("support", d)}
    return kind, {}


def _etas(spec: ExperimentSpec, n: int) -> list[float]:
    p = spec.params
    if "eta" in p:
        return list(p["eta"])
    if "eta_exponent" in p:
        return [float(n) ** (-a) for a in p["eta_exponent"]]
    return [float(n) ** -0.5]


# --------------------------------------------------------------------------- sample


def _sample_task(args):
    n, d, seed, sampler = args
    g = sample_regular(n, d, seed, sampler)
    return graph_to_text(g), not validate_regular(g), g.num_edges


def _run_sample(spec, outset, hook):
    cells = []
    M = spec.params["M"]
    for n, d in _cells(spec):
        seeds = [derive_seed(spec.base_seed, n, d, i) for i in range(M)]
        results = map_ordered(_sample_task, [(n, d, s, spec.sampler) for s in seeds], spec.workers)
        rows, files = [], []
        for i, (s, (text, valid, m)) in enumerate(zip(seeds, results)):
            name = f"graphs/n{n}_d{d}_{i:05d}.txt"
            outset.path(name).write_text(text)
            files.append(name)
            rows.append({"n": n, "d": d, "sample_idx": i, "seed": s, "num_edges": m, "valid": valid})
        table = f"sample_n{n}_d{d}.csv"
        io.write_csv(outset.path(table), ("n", "d", "sample_idx", "seed", "num_edges", "valid"), rows)
        cells.append({"N": n, "d": d, "samples": M, "excluded": 0, "files": [table] + files})
        hook(f"n{n}_d{d}")
    return cells, {}


# --------------------------------------------------------------------------- spectrum


def _spectrum_task(args):
    n, d, k, seed, sampler = args
    g = sample_regular(n, d, derive_seed(seed, 0), sampler)
    h = normalize_adjacency(g)
    if n <= DENSE_SECOND_CUTOFF:
        eig = full_eigensystem(h)
        vals = eig.values[:k]
        res = [float(np.linalg.norm(h.matvec(eig.vectors[:, r]) - vals[r] * eig.vectors[:, r])) for r in range(len(vals))]
    else:
        eig = topk_eigenpairs(h, min(k, n), seed=derive_seed(seed, 7))
        vals, res = eig.values, eig.residuals.tolist()
    return [float(v) for v in vals], res


def _run_spectrum(spec, outset, hook):
    cells, summary = [], []
    M, k = spec.params["M"], spec.params["k"]
    for n, d in _cells(spec):
        seeds = [derive_seed(spec.base_seed, n, d, i) for i in range(M)]
        results = map_ordered(_spectrum_task, [(n, d, min(k, n), s, spec.sampler) for s in seeds], spec.workers)
        rows = []
        for i, (s, (vals, res)) in enumerate(zip(seeds, results)):
            rows.extend(
                {"n": n, "d": d, "sample_idx": i, "rank": r + 1, "eigenvalue": v, "residual": res[r], "seed": s}
                for r, v in enumerate(vals)
            )
        lam2 = np.array([vals[1] for vals, _ in results if len(vals) > 1])
        table = f"spectrum_n{n}_d{d}.csv"
        io.write_csv(outset.path(table), ("n", "d", "sample_idx", "rank", "eigenvalue", "residual", "seed"), rows)
        entry = {"N": n, "d": d, "samples": M, "excluded": 0, "files": [table]}
        if len(lam2):
            entry["lambda2_mean"] = float(lam2.mean())
            entry["lambda2_max"] = float(lam2.max())
            entry["ramanujan_bound"] = 2.0 * math.sqrt(d - 1) / math.sqrt(d)
        cells.append(entry)
        summary.append({k2: v for k2, v in entry.items() if k2 != "files"})
        hook(f"n{n}_d{d}")
    io.write_json(outset.path("spectrum_summary.json"), {"schema_version": 1, "cells": summary})
    return cells, {}


# --------------------------------------------------------------------------- clt / scaling


def _run_clt(spec, outset, hook):
    from ..steinlab import SAMPLE_COLUMNS, run_ensemble

    cells, report = [], []
    p = spec.params
    for n, d in _cells(spec):
        res = run_ensemble(
            n, d, p["M"], _direction_params(spec, d), derive_seed(spec.base_seed, n, d, 0),
            workers=spec.workers, n_boot=p["n_boot"], sampler=spec.sampler,
        )
        rows = [
            {"n": n, "d": d, "direction": res.direction, "sample_idx": i, "seed": derive_seed(res.base_seed, i), "overlap": x}
            for i, x in zip(res.sample_index.tolist(), res.samples.tolist())
        ]
        stem = f"clt_n{n}_d{d}"
        io.write_csv(outset.path(f"{stem}_samples.csv"), SAMPLE_COLUMNS, rows)
        plots.emit_histogram_with_table(res.samples, outset, f"{stem}_hist")
        cells.append(
            {"N": n, "d": d, "samples": len(res.samples), "excluded": res.excluded,
             "files": [f"{stem}_samples.csv", f"{stem}_hist.svg", f"{stem}_hist_bins.csv"]}
        )
        report.append(res.to_dict())
        hook(f"n{n}_d{d}")
    io.write_json(outset.path("clt_report.json"), {"schema_version": 1, "cells": report})
    return cells, {}


def _run_scaling(spec, outset, hook):
    from ..steinlab import BerryEsseenPlan, berry_esseen_experiment

    p = spec.params
    plan = BerryEsseenPlan(
        N=list(p["N"]), d=list(p["d"]), M=p["M"], direction=p["direction"], base_seed=spec.base_seed,
        kappa4=p["kappa4"], kappa4_n=p.get("kappa4_N"), n_boot=p["n_boot"], sampler=spec.sampler,
    )
    before = set(outset.files)
    report = berry_esseen_experiment(plan, output_dir=outset, workers=spec.workers)
    files = [str(f.relative_to(outset.root)) for f in outset.files if f not in before]
    cells = [
        {"N": c["config"]["n"], "d": c["config"]["d"], "samples": c["kept"], "excluded": c["excluded"], "files": sorted(files)}
        for c in report["cells"]
    ]
    hook("scaling")
    return cells, {}


# --------------------------------------------------------------------------- locallaw


def _run_locallaw(spec, outset, hook):
    from ..locallaw import SCAN_COLUMNS, ensemble_variance_scan

    p = spec.params
    grid = [(n, d, ComplexEnergy(E, eta, n)) for n, d in _cells(spec) for E in p["E"] for eta in _etas(spec, n)]
    result = ensemble_variance_scan(grid, p["samples"], spec.base_seed, p["direction"], spec.workers, spec.sampler)
    io.write_csv(outset.path("locallaw_samples.csv"), SCAN_COLUMNS, result["rows"])
    files = ["locallaw_samples.csv", "locallaw_report.json"]
    for k, fit in enumerate(result["fits"]):
        members = [c for c in result["cells"] if c["d"] == fit["d"] and c["E"] == fit["E"]
                   and round(math.log(c["eta"]) / math.log(c["n"]), 6) == fit["eta_exponent"]]
        name = f"locallaw_fit_{k}.svg"
        plots.emit_plot({"x": [c["n"] for c in members], "y": [c["var_im"] for c in members]},
                        "loglog-scatter-with-fit", outset.path(name), title="Var Im<q,Gq> vs N")
        files.append(name)
    io.write_json(outset.path("locallaw_report.json"), {"schema_version": 1, "cells": result["cells"], "fits": result["fits"]})
    cells = [{"N": c["n"], "d": c["d"], "E": c["E"], "eta": c["eta"], "samples": p["samples"], "excluded": 0, "files": files}
             for c in result["cells"]]
    hook("locallaw")
    return cells, {}


# --------------------------------------------------------------------------- interpolate


def _profile_task(args):
    from ..interpolate import coupling_error_profile
    from ..steinlab import build_direction

    n, d, t, E, eta, s_grid, seed, kind, params, fresh, sampler = args
    g = sample_regular(n, d, derive_seed(seed, 0), sampler)
    q = build_direction(kind, n, params, seed=derive_seed(seed, DIRECTION_STREAM))
    return coupling_error_profile(g, t, ComplexEnergy(E, eta, n), q, s_grid, derive_seed(seed, GOE_STREAM), fresh=fresh)


def _run_interpolate(spec, outset, hook):
    from ..interpolate import (
        PROFILE_COLUMNS,
        default_s_grid,
        delta_norm_stats,
        optimal_s,
        profile_rows,
    )

    p = spec.params
    s_grid = default_s_grid(p["s_points"])
    cells, summary = [], []
    for n, d in _cells(spec):
        t = p.get("t", n ** (-1.0 / 3.0))
        kind, dparams = _direction_params(spec, d)
        for E in p["E"]:
            for eta in _etas(spec, n):
                tasks = [
                    (n, d, t, E, eta, s_grid, derive_seed(spec.base_seed, n, d, i), kind, dparams, p["fresh"], spec.sampler)
                    for i in range(p["profiles"])
                ]
                profiles = map_ordered(_profile_task, tasks, spec.workers)
                stem = f"interp_n{n}_d{d}_E{E:g}_eta{eta:.6g}"
                rows = [r for prof in profiles for r in profile_rows(prof)]
                io.write_csv(outset.path(f"{stem}.csv"), PROFILE_COLUMNS, rows)
                errs = np.array([prof["err"] for prof in profiles])
                median_err = np.median(errs, axis=0)
                plots.emit_plot({"s": s_grid, "err": median_err.tolist()}, "error-vs-s", outset.path(f"{stem}.svg"),
                                title="median err(s)")
                argmins = np.array([prof["argmin_s"] for prof in profiles])
                s_opt = optimal_s(d, t, n)
                med = float(np.median(argmins))
                entry = {
                    "N": n, "d": d, "t": t, "E": E, "eta": eta, "profiles": len(profiles),
                    "median_argmin_s": med,
                    "optimal_s": s_opt,
                    "ratio_to_optimal": med / s_opt if s_opt > 0 else None,
                    "fraction_interior": float(np.mean((argmins > 0) & (argmins < 1))),
                    "argmin_s_counts": {f"{s:.6g}": int(np.sum(argmins == s)) for s in s_grid},
                    "continuity_failures": int(sum(not prof["continuity_ok"] for prof in profiles)),
                    "median_err_curve": median_err.tolist(),
                    "s_grid": s_grid,
                }
                summary.append(entry)
                cells.append({"N": n, "d": d, "E": E, "eta": eta, "samples": len(profiles), "excluded": 0,
                              "files": [f"{stem}.csv", f"{stem}.svg"]})
                hook(stem)
        if "t_grid" in p:
            stats = delta_norm_stats(n, d, p["t_grid"], p["delta_samples"], derive_seed(spec.base_seed, n, d, 0xDE),
                                     spec.workers, spec.sampler)
            name = f"delta_n{n}_d{d}.csv"
            io.write_csv(outset.path(name), ("n", "d", "t", "mean_sq_norm", "ci_lo", "ci_hi", "x"),
                         [dict(r, n=n, d=d) for r in stats["rows"]])
            summary.append({"N": n, "d": d, "delta_fit_slope": stats["fit_slope"], "delta_rows": stats["rows"]})
            cells.append({"N": n, "d": d, "samples": p["delta_samples"], "excluded": 0, "files": [name]})
            hook(f"delta_n{n}_d{d}")
    io.write_json(outset.path("interpolate_report.json"), {"schema_version": 1, "cells": summary})
    return cells, {}


# --------------------------------------------------------------------------- malliavin


def _energy_task(args):
    import warnings

    from ..errors import DegenerateEigenvalue
    from ..malliavin import overlap_derivative_analysis
    from ..steinlab import build_direction

    n, d, seed, kind, params, mode, cross_check, sampler = args
    g = sample_regular(n, d, derive_seed(seed, 0), sampler)
    q = build_direction(kind, n, params, seed=derive_seed(seed, DIRECTION_STREAM))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = overlap_derivative_analysis(g, q, mode, cross_check, seed=derive_seed(seed, 5))
    except DegenerateEigenvalue:
        return None
    return rep.energy, [r.row(g) for r in rep.records], rep.cross_check


def _run_malliavin(spec, outset, hook):
    from ..malliavin import DERIVATIVE_COLUMNS, variance_decomposition_check
    from ..steinlab import scaling_fit

    p = spec.params
    cells, summary = [], []
    for n, d in _cells(spec):
        kind, dparams = _direction_params(spec, d)
        stem = f"malliavin_n{n}_d{d}"
        if p["analysis"] == "variance":
            rep = variance_decomposition_check(n, d, p["M"], (kind, dparams), derive_seed(spec.base_seed, n, d, 0),
                                               workers=spec.workers, n_boot=p["n_boot"], sampler=spec.sampler)
            summary.append(rep)
            cells.append({"N": n, "d": d, "samples": rep["kept"], "excluded": rep["excluded"], "files": []})
            hook(stem)
            continue
        tasks = [
            (n, d, derive_seed(spec.base_seed, n, d, i), kind, dparams, p["mode"], p["cross_check"], spec.sampler)
            for i in range(p["M"])
        ]
        results = map_ordered(_energy_task, tasks, spec.workers)
        kept = [r for r in results if r is not None]
        rows = [dict(row, functional="overlap") for _, recs, _ in kept for row in recs]
        io.write_csv(outset.path(f"{stem}.csv"), DERIVATIVE_COLUMNS, rows)
        energies = np.array([e for e, _, _ in kept])
        entry = {"N": n, "d": d, "mode": p["mode"], "graphs": len(kept), "excluded": len(results) - len(kept),
                 "energies": energies.tolist()}
        if len(energies):
            half = 1.96 * float(energies.std(ddof=1)) / math.sqrt(len(energies)) if len(energies) > 1 else float("nan")
            entry.update(mean_energy=float(energies.mean()), ci95=[float(energies.mean()) - half, float(energies.mean()) + half])
            checks = [c for _, _, c in kept if c]
            if checks:
                entry["cross_check_max_rel_dev"] = max(c["max_rel_dev"] for c in checks)
        summary.append(entry)
        cells.append({"N": n, "d": d, "samples": len(kept), "excluded": len(results) - len(kept), "files": [f"{stem}.csv"]})
        hook(stem)
    report = {"schema_version": 1, "analysis": p["analysis"], "cells": summary}
    if p["analysis"] == "energy":
        for d in sorted(set(p["d"])):
            pts = [(c["N"], c["mean_energy"]) for c in summary if c["d"] == d and c.get("mean_energy", 0) > 0]
            if len({x for x, _ in pts}) >= 3:
                slope, intercept, stderr = scaling_fit(pts)
                report.setdefault("energy_vs_N", []).append({"d": d, "slope": slope, "intercept": intercept, "stderr": stderr})
                plots.emit_plot({"x": [x for x, _ in pts], "y": [y for _, y in pts]}, "loglog-scatter-with-fit",
                                outset.path(f"malliavin_energy_d{d}.svg"), title="derivative energy vs N")
    else:
        devs = [c["abs_var_minus_one"] for c in summary]
        report["abs_var_minus_one_by_d"] = {str(c["d"]): c["abs_var_minus_one"] for c in summary}
        report["non_increasing_in_d"] = bool(all(a >= b for a, b in itertools.pairwise(devs)))
    io.write_json(outset.path("malliavin_report.json"), report)
    return cells, {}


PIPELINES = {
    "sample": _run_sample,
    "spectrum": _run_spectrum,
    "clt": _run_clt,
    "scaling": _run_scaling,
    "locallaw": _run_locallaw,
    "interpolate": _run_interpolate,
    "malliavin": _run_malliavin,
}


def _no_fault(label: str) -> None:
    return None


def run(spec: ExperimentSpec, fault_hook=None) -> RunManifest:
    """Execute ``spec`` and write its artifacts under ``spec.output_dir``.

    ``fault_hook(label)`` is called after each cell is staged; raising from
    it simulates a mid-run failure.
    """
    start = time.perf_counter()
    root = Path(spec.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    outset = io.OutputSet(root)
    cells, _ = PIPELINES[spec.experiment](spec, outset, fault_hook or _no_fault)
    committed = outset.commit()
    manifest = RunManifest(
        spec=spec.echo(),
        version=__version__,
        cells=cells,
        files=[str(f.relative_to(root)) for f in committed] + ["run_info.txt"],
        wall_time=time.perf_counter() - start,
        workers=spec.workers,
    )
    info = io.OutputSet(root)
    info.path("run_info.txt").write_text(f"wall_time={manifest.wall_time:.3f}\nworkers={manifest.workers}\n")
    io.write_json(info.path("manifest.json"), manifest.to_dict())
    info.commit()
    return manifest
