"""Command-line driver: single solves, convergence studies, verification.

Exit codes: 0 on success, 1 on a usage error, 2 on a numerical failure
(violated stabilization assumption or singular system), with a diagnostic
line naming the failing invariant.

Flags may also be given in a plain-text ``key=value`` configuration file
passed with --config; explicit flags override file entries.
"""

from __future__ import annotations

import argparse
import sys

from .convergence import run_convergence_study, run_single
from .mesh import build_structured_mesh
from .problem import AssumptionViolation, get_example
from .refelem import make_basis
from .solve import SingularSystemError
from .verify import run_verification


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hdgoc",
                     description="HDG solver for distributed optimal "
                                 "control of convection-diffusion problems")
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file; "
                                        "flags override file entries")
        p.add_argument("--example", default=None,
                       help="built-in example id (1, 2, 3) or name")
        p.add_argument("--k", type=int, default=None,
                       help="polynomial degree (default 1)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker-count ceiling (default 1)")
        p.add_argument("--deterministic", action="store_true",
                       help="force serial execution for bit-reproducible "
                            "output")
        p.add_argument("--output", default=None,
                       help="write the report here instead of stdout")

    ps = sub.add_parser("solve", help="single solve with error report")
    common(ps)
    ps.add_argument("--n", default=None, help="cells per axis")

    pt = sub.add_parser("study", help="convergence study over a mesh ladder")
    common(pt)
    pt.add_argument("--n", default=None,
                    help="comma-separated doubling list, e.g. 8,16,32")
    pt.add_argument("--format", choices=("csv", "markdown"), default=None,
                    help="report format (default csv)")

    pv = sub.add_parser("verify", help="run the algebraic identity suite")
    common(pv)
    pv.add_argument("--n", default=None, help="cells per axis (default 2)")

    return parser


def _read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _merge_config(args) -> dict:
    cfg = {"example": "1", "k": 1, "n": None, "format": "csv",
           "threads": 1, "output": None, "deterministic": False}
    if args.config:
        raw = _read_config(args.config)
        for key, value in raw.items():
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = value
    for key in cfg:
        flag = getattr(args, key, None)
        if flag not in (None, False):
            cfg[key] = flag
    cfg["k"] = int(cfg["k"])
    cfg["threads"] = int(cfg["threads"])
    if cfg["deterministic"]:
        cfg["threads"] = 1
    if cfg["k"] < 0:
        raise UsageError("polynomial degree must be >= 0")
    if cfg["threads"] < 1:
        raise UsageError("thread count must be >= 1")
    return cfg


def _parse_n_list(text) -> list:
    try:
        values = [int(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise UsageError(f"bad mesh list {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise UsageError("mesh sizes must be positive integers")
    if any(b != 2 * a for a, b in zip(values, values[1:])):
        raise UsageError("mesh sizes must double at each step")
    return values


def _emit(text, output):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_solve(cfg) -> int:
    n = int(cfg["n"] or 4)
    rec, fields, _, _ = run_single(cfg["example"], cfg["k"], n)
    lines = [f"example {cfg['example']}  k={cfg['k']}  n={n}"]
    for name in ("q", "p", "y", "z", "u"):
        lines.append(f"err_{name} {rec.errors[name]:.12e}")
    lines.append(f"residual {rec.residual:.3e}")
    lines.append(f"seconds {rec.seconds:.3f}")
    _emit("\n".join(lines) + "\n", cfg["output"])
    return 0


def _run_study(cfg) -> int:
    if cfg["n"] is None:
        raise UsageError("study mode needs --n with a doubling list")
    n_list = _parse_n_list(cfg["n"])
    report = run_convergence_study(cfg["example"], cfg["k"], n_list,
                                   threads=cfg["threads"])
    if cfg["format"] == "markdown":
        _emit(report.to_markdown(), cfg["output"])
    else:
        _emit(report.to_csv(), cfg["output"])
    return 0


def _run_verify(cfg) -> int:
    n = int(cfg["n"] or 2)
    spec = get_example(cfg["example"])
    basis = make_basis(spec.dim, cfg["k"])
    mesh = build_structured_mesh(spec.dim, n)
    report = run_verification(mesh, spec, basis)
    _emit(str(report) + "\n", cfg["output"])
    if not report.ok:
        print("numerical failure: identity suite reported failures",
              file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _merge_config(args)
        if args.mode == "solve":
            return _run_solve(cfg)
        if args.mode == "study":
            return _run_study(cfg)
        return _run_verify(cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (KeyError, ValueError, FileNotFoundError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except AssumptionViolation as err:
        print("numerical failure: stabilization/divergence assumption "
              f"violated\n{err}", file=sys.stderr)
        return 2
    except SingularSystemError as err:
        print(f"numerical failure: singular trace system: {err}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
