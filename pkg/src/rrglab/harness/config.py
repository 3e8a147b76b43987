"""Experiment configuration: a flat ``key = value`` document.

Optional ``[section]`` headers group keys for readability only; every key
lives in one namespace. ``#`` starts a comment. Lists are comma separated.

Example::

    experiment = clt
    seed = 1
    [params]
    N = 500
    d = 3
    M = 200
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ParseError, ValidationError

EXPERIMENTS = ("sample", "spectrum", "clt", "locallaw", "interpolate", "malliavin", "scaling")
SECTIONS = ("run", "params", "grid", "output")
DIRECTIONS = ("coordinate-difference", "random-orthogonal", "d-supported")
SAMPLERS = ("auto", "rejection", "switching")


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _list(conv):
    def parse(text: str):
        items = [t.strip() for t in text.split(",")]
        if any(not t for t in items):
            raise ValueError("empty list item")
        return [conv(t) for t in items]

    return parse


def _str(text: str) -> str:
    return text


_ALL = set(EXPERIMENTS)

# key -> (parser, experiments it applies to)
KEYS: dict[str, tuple] = {
    "experiment": (_str, _ALL),
    "seed": (_int, _ALL),
    "workers": (_int, _ALL),
    "output": (_str, _ALL),
    "sampler": (_str, _ALL),
    "N": (_list(_int), _ALL),
    "d": (_list(_int), _ALL),
    "M": (_int, _ALL - {"locallaw", "interpolate"}),
    "k": (_int, {"spectrum"}),
    "direction": (_str, {"clt", "scaling", "locallaw", "interpolate", "malliavin"}),
    "support": (_int, {"clt", "malliavin", "interpolate"}),
    "n_boot": (_int, {"clt", "scaling", "malliavin"}),
    "kappa4": (_bool, {"scaling"}),
    "kappa4_N": (_int, {"scaling"}),
    "E": (_list(_float), {"locallaw", "interpolate"}),
    "eta": (_list(_float), {"locallaw", "interpolate"}),
    "eta_exponent": (_list(_float), {"locallaw", "interpolate"}),
    "samples": (_int, {"locallaw"}),
    "t": (_float, {"interpolate"}),
    "s_points": (_int, {"interpolate"}),
    "profiles": (_int, {"interpolate"}),
    "fresh": (_bool, {"interpolate"}),
    "t_grid": (_list(_float), {"interpolate"}),
    "delta_samples": (_int, {"interpolate"}),
    "analysis": (_str, {"malliavin"}),
    "mode": (_str, {"malliavin"}),
    "cross_check": (_int, {"malliavin"}),
}

DEFAULTS: dict[str, dict] = {
    "sample": {"M": 10},
    "spectrum": {"M": 20, "k": 4},
    "clt": {"M": 2000, "direction": "coordinate-difference", "n_boot": 1000},
    "scaling": {"M": 2000, "direction": "coordinate-difference", "n_boot": 1000, "kappa4": False},
    "locallaw": {"direction": "random-orthogonal", "E": [2.0], "samples": 30},
    "interpolate": {"direction": "random-orthogonal", "E": [2.0], "s_points": 21, "profiles": 200, "fresh": False, "delta_samples": 30},
    "malliavin": {"M": 5, "direction": "coordinate-difference", "analysis": "energy", "mode": "perturbative", "cross_check": 20, "n_boot": 1000},
}

MIN_M = {"sample": 1, "spectrum": 1, "clt": 100, "scaling": 500, "malliavin": 1}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    params: dict
    base_seed: int
    workers: int = 1
    output_dir: Path = Path("out")
    sampler: str = "auto"

    def echo(self) -> dict:
        """Everything that determines the outputs (not workers or the output path)."""
        return {
            "experiment": self.experiment,
            "base_seed": self.base_seed,
            "sampler": self.sampler,
            "params": {k: self.params[k] for k in sorted(self.params)},
        }

    def with_overrides(self, **changes) -> ExperimentSpec:
        out = replace(self, **{k: v for k, v in changes.items() if v is not None})
        validate_spec(out)
        return out


def parse_pairs(text: str) -> dict:
    """Raw ``key -> (value_text, line)`` map; syntax errors carry the line number."""
    pairs: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ParseError("unterminated section header", lineno)
            name = body[1:-1].strip()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{name}]", lineno)
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ParseError("missing key", lineno)
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in pairs:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno)
        pairs[key] = (value, lineno)
    return pairs


def parse_spec(text: str, experiment: str | None = None, **overrides) -> ExperimentSpec:
    """Parse and validate a configuration document.

    ``experiment`` (from a CLI subcommand) must agree with the document when
    both are present. Keyword overrides replace parsed values, e.g. ``seed``.
    """
    pairs = parse_pairs(text)
    values = {}
    for key, (raw, lineno) in pairs.items():
        try:
            values[key] = KEYS[key][0](raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {raw!r} ({exc})", lineno) from None
    if experiment is not None:
        if "experiment" in values and values["experiment"] != experiment:
            raise ValidationError(f"config is for experiment {values['experiment']!r}, not {experiment!r}")
        values["experiment"] = experiment
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return build_spec(values, lines={k: ln for k, (_, ln) in pairs.items()})


def build_spec(values: dict, lines: dict | None = None) -> ExperimentSpec:
    lines = lines or {}
    exp = values.get("experiment")
    if exp is None:
        raise ValidationError("experiment is required")
    if exp not in EXPERIMENTS:
        raise ValidationError(f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    if "seed" not in values:
        raise ValidationError("seed is required (no clock-based default)")
    for key in values:
        if exp not in KEYS[key][1]:
            where = f" (line {lines[key]})" if key in lines else ""
            raise ValidationError(f"key {key!r} does not apply to experiment {exp!r}{where}")
    params = dict(DEFAULTS[exp])
    params.update({k: v for k, v in values.items() if k not in ("experiment", "seed", "workers", "output", "sampler")})
    spec = ExperimentSpec(
        experiment=exp,
        params=params,
        base_seed=int(values["seed"]),
        workers=int(values.get("workers", 1)),
        output_dir=Path(values.get("output", "out")),
        sampler=values.get("sampler", "auto"),
    )
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec) -> None:
    p = spec.params
    if spec.workers < 1:
        raise ValidationError("workers must be at least 1")
    if spec.sampler not in SAMPLERS:
        raise ValidationError(f"sampler must be one of {SAMPLERS}")
    for key in ("N", "d"):
        if key not in p:
            raise ValidationError(f"{key} is required")
    for n in p["N"]:
        for d in p["d"]:
            if d < 1 or d >= n:
                raise ValidationError(f"need 1 <= d < N, got N={n}, d={d}")
            if (n * d) % 2:
                raise ValidationError(f"N*d must be even, got N={n}, d={d}")
    if "M" in p and p["M"] < MIN_M[spec.experiment]:
        raise ValidationError(f"M must be at least {MIN_M[spec.experiment]} for {spec.experiment}")
    if "direction" in p and p["direction"] not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}")
    for key in ("eta",):
        if any(v <= 0 for v in p.get(key, [])):
            raise ValidationError("eta must be positive")
    if "eta" in p and "eta_exponent" in p:
        raise ValidationError("give eta or eta_exponent, not both")
    if spec.experiment == "locallaw":
        if "eta" not in p and "eta_exponent" not in p:
            raise ValidationError("locallaw needs eta or eta_exponent")
        if p["samples"] < 30:
            raise ValidationError("samples must be at least 30")
    if spec.experiment == "interpolate":
        if "t" in p and not 0.0 <= p["t"] <= 1.0:
            raise ValidationError("t must lie in [0, 1]")
        if any(not 0.0 <= t <= 1.0 for t in p.get("t_grid", [])):
            raise ValidationError("t_grid values must lie in [0, 1]")
        if p["s_points"] < 2 or p["profiles"] < 1:
            raise ValidationError("need s_points >= 2 and profiles >= 1")
        if "t_grid" in p and p["delta_samples"] < 30:
            raise ValidationError("delta_samples must be at least 30")
    if spec.experiment == "malliavin":
        if p["analysis"] not in ("energy", "variance"):
            raise ValidationError("analysis must be 'energy' or 'variance'")
        if p["mode"] not in ("perturbative", "exact-recompute"):
            raise ValidationError("mode must be 'perturbative' or 'exact-recompute'")
        if p["analysis"] == "variance" and p["M"] < 500:
            raise ValidationError("variance analysis needs M >= 500")
    if spec.experiment == "spectrum" and not 1 <= p["k"] <= 32:
        raise ValidationError("k must lie in 1..32")


def load_spec(path, experiment: str | None = None, **overrides) -> ExperimentSpec:
    return parse_spec(Path(path).read_text(), experiment, **overrides)


@dataclass
class RunManifest:
    spec: dict
    version: str
    cells: list[dict] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    workers: int = 1

    def to_dict(self) -> dict:
        """Deterministic part only: wall time and worker count go to run_info.txt."""
        return {
            "schema_version": 1,
            "spec": self.spec,
            "version": self.version,
            "cells": self.cells,
            "files": sorted(self.files),
        }
