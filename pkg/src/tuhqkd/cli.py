"""Command-line front end.

Exit codes: 0 success, 1 self-test failure, 2 infeasible parameters or a
resource limit, 64 usage error.  Every report carries the seed and the
library version.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import __version__, protocol, rates, selftest
from .f2core import key_schedule, read_matrix
from .hashball import BallTooLarge
from .pauli import ResourceError

DEFAULT_SEED = selftest.DEFAULT_SEED
EXIT_OK, EXIT_SELFTEST, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        val = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= val < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text!r}")
    return val


def parse_grid(text: str) -> List[int]:
    """``1000,2000,5000`` or ``log:START:STOP:COUNT`` (log-spaced, rounded, deduplicated)."""
    text = text.strip()
    if text.startswith("log:"):
        parts = text[4:].split(":")
        if len(parts) != 3:
            raise UsageError(f"log grid needs log:START:STOP:COUNT, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1 or start < 1 or stop < start:
            raise UsageError(f"bad log grid {text!r}")
        vals = np.unique(np.rint(np.geomspace(start, stop, count)).astype(np.int64))
        return [int(v) for v in vals]
    try:
        vals = [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}")
    if any(v < 2 for v in vals):
        raise UsageError("grid block sizes must be >= 2")
    return vals


def _common(p: argparse.ArgumentParser, formats=("json", "csv", "text")) -> None:
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED,
                   help=f"master seed (default {DEFAULT_SEED:#x})")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=formats, default="json")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tuhqkd", description="Finite-key rates and protocol simulation.")
    p.add_argument("--version", action="version", version=f"tuhqkd {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("rates-2uh", help="output size of the hashing protocol")
    a.add_argument("--n", type=int, help="block size (required unless --target-bits is given)")
    a.add_argument("--delta", type=float, required=True)
    a.add_argument("--epsilon", type=float, required=True)
    a.add_argument("--rounding", choices=rates.ROUNDINGS, default="floor_r")
    a.add_argument("--target-bits", type=int, help="instead report the smallest block size reaching this output")
    _common(a)

    b = sub.add_parser("rates-sampling", help="optimised output of the sampling protocol")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--epsilon", type=float, required=True)
    _common(b)

    c = sub.add_parser("compare", help="rate curves over a grid of block sizes")
    c.add_argument("--grid", required=True, help="comma list or log:START:STOP:COUNT")
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--rounding", choices=rates.ROUNDINGS, default="rate_direct")
    _common(c, ("csv", "json"))

    d = sub.add_parser("simulate", help="run a batch of protocol simulations")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--r", type=int, required=True)
    d.add_argument("--eve", default="none", help="none | iid:p=P | fixed:alpha=BITS,beta=BITS")
    d.add_argument("--trials", type=int, default=1000)
    d.add_argument("--backend", choices=("fast", "statevector"), default="fast")
    d.add_argument("--transcripts", help="directory for per-run transcripts")
    d.add_argument("--matrix-file", help="fixed invertible L, one row of 0/1 characters per line")
    d.add_argument("--timing", action="store_true", help="include wall-clock time in the summary")
    _common(d)

    e = sub.add_parser("selftest", help="run the built-in invariant suites")
    e.add_argument("--suite", action="append", choices=sorted(selftest.SUITES),
                   help="run only this suite (repeatable)")
    _common(e, ("json", "text"))
    return p


# --- formatting --------------------------------------------------------------

def _header(kind: str, seed: int) -> dict:
    return {"schema": f"tuhqkd.{kind}", "version": 1, "library_version": __version__, "seed": seed}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        elif isinstance(val, (list, tuple)):
            out[name] = json.dumps(val)
        else:
            out[name] = val
    return out


def _jsonable(val):
    if isinstance(val, dict):
        return {k: _jsonable(v) for k, v in val.items()}
    if isinstance(val, (list, tuple)):
        return [_jsonable(v) for v in val]
    if isinstance(val, np.generic):
        return val.item()
    if isinstance(val, float) and not math.isfinite(val):
        return repr(val)
    return val


def render(record: dict, fmt: str) -> str:
    record = _jsonable(record)
    if fmt == "json":
        return json.dumps(record, indent=2) + "\n"
    flat = _flatten(record)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
        w.writeheader()
        w.writerow(flat)
        return buf.getvalue()
    return "".join(f"{k}: {v}\n" for k, v in flat.items())


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


# --- commands ----------------------------------------------------------------

def cmd_rates_2uh(args) -> int:
    head = _header("rates-2uh", args.seed)
    if args.target_bits is not None:
        try:
            n = rates.min_blocksize(args.delta, args.epsilon, args.target_bits, args.rounding)
        except rates.InfeasibleError as exc:
            _emit(render({**head, "feasible": False, "reason": str(exc)}, args.format), args.out)
            return EXIT_INFEASIBLE
        rec = {**head, "feasible": True, "delta": args.delta, "epsilon": args.epsilon,
               "rounding": args.rounding, "target_bits": args.target_bits, "min_blocksize": n}
        _emit(render(rec, args.format), args.out)
        return EXIT_OK
    if args.n is None:
        raise UsageError("--n is required unless --target-bits is given")
    rep = rates.tuh_report(rates.TuhQuery(args.n, args.delta, args.epsilon, args.rounding))
    rec = {**head, **rep.to_dict()}
    if not rep.feasible:
        rec["reason"] = f"output size {rep.output_size} <= 0 (k={rep.k} needs 2k < n={rep.n})"
    _emit(render(rec, args.format), args.out)
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_rates_sampling(args) -> int:
    rep = rates.sampling_optimize(rates.SamplingQuery(args.n, args.delta, args.epsilon))
    bound = rates.sampling_upper_bound(args.n, args.delta, args.epsilon)
    rec = {**_header("rates-sampling", args.seed), **rep.to_dict(),
           "bound_rate": bound.bound_rate, "c1": bound.c1, "c2": bound.c2}
    if not rep.feasible:
        rec["reason"] = "no positive output length fits the epsilon budget"
    _emit(render(rec, args.format), args.out)
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_compare(args) -> int:
    grid = parse_grid(args.grid)
    if not grid:
        raise UsageError("the n grid is empty")
    rows = rates.compare_curves(args.delta, args.epsilon, grid, args.rounding)
    if args.format == "csv":
        text = (f"# tuhqkd {__version__} seed={args.seed:#x} rounding={args.rounding}\n"
                + rates.rows_to_csv(rows))
    else:
        text = json.dumps({**_header("compare", args.seed), "rounding": args.rounding,
                           "columns": list(rates.CSV_COLUMNS), "rows": rows}, indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = protocol.ProtocolParams(args.n, args.k, args.r)
    eve = protocol.EveModel.parse(args.eve)
    schedule = None
    if args.matrix_file:
        schedule = key_schedule(read_matrix(args.matrix_file), args.k)
    summary = protocol.run_batch(params, eve, args.backend, args.trials, args.seed,
                                 args.transcripts, schedule=schedule)
    rec = summary.to_dict(timing=args.timing)
    _emit(render(rec, args.format), args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    report = selftest.run_suites(args.suite, args.seed)
    _emit(render(report, args.format) if args.format == "json" else _selftest_text(report), args.out)
    if not report["passed"]:
        print(f"failing suites: {', '.join(report['failed_suites'])}", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


def _selftest_text(report: dict) -> str:
    lines = [f"tuhqkd {report['library_version']} selftest seed={report['seed']:#x}"]
    for s in report["suites"]:
        lines.append(f"{'PASS' if s['passed'] else 'FAIL'} {s['suite']} ({s['seconds']:.2f}s)")
        for c in s["checks"]:
            if not c["passed"]:
                lines.append(f"    failed: {c['name']} {c['detail']}")
    return "\n".join(lines) + "\n"


COMMANDS = {
    "rates-2uh": cmd_rates_2uh,
    "rates-sampling": cmd_rates_sampling,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except rates.InfeasibleError as exc:
        print(json.dumps({"feasible": False, "reason": str(exc)}), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ValueError, KeyError) as exc:
        # bad values argparse cannot see: delta out of range, malformed patterns
        parser.print_usage(sys.stderr)
        print(f"tuhqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResourceError, BallTooLarge) as exc:
        print(json.dumps({"error": "resource", "reason": str(exc)}), file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"tuhqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
