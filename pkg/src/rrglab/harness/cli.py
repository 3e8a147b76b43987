"""Command-line entry point: ``rrglab <experiment> --config FILE [options]``.

Exit codes: 0 success, 2 validation, 3 numeric failure, 4 I/O. Failures
print one line to stderr: ``error code=<n> type=<ExceptionName> message=<json string>``.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import LabError
from .config import EXPERIMENTS, KEYS, load_spec, parse_spec
from .runner import run


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rrglab", description="Random regular graph eigenvector experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--workers", type=int, help="worker processes (does not change outputs)")
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--seed", type=int, help="base seed, overrides the config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="extra config line, may be repeated")
    return ap


def _fail(exc: BaseException, code: int) -> int:
    print(f"error code={code} type={type(exc).__name__} message={json.dumps(str(exc))}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                return _fail(exc, 4)
        text = text + "\n" + "\n".join(args.set)
        overrides = {"seed": args.seed, "workers": args.workers, "output": args.output}
        spec = parse_spec(text, args.experiment, **overrides)
        manifest = run(spec)
    except LabError as exc:
        return _fail(exc, exc.exit_code)
    except OSError as exc:
        return _fail(exc, 4)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        return _fail(exc, 3)
    print(f"ok experiment={spec.experiment} files={len(manifest.files)} output={spec.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

__all__ = ["KEYS", "load_spec", "main"]
