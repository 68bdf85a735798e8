"""Command line entry point: ``sigmak verify | solve | convergence``.

Exit status: 0 success, 1 numerical failure, 2 usage or input error.
Every run writes ``manifest.json`` into its output directory.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import verify
from .errors import ParameterError, SigmakError, jsonable
from .grid import write_field
from .problems import (FAMILIES, config_from_dict, family_document, load_document,
                       observed_orders, problem_from_dict)
from .solver import continuation_solve

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "SIGMAK_SEED"
DEFAULT_SEED = 7

log = logging.getLogger("sigmak")


@dataclass
class RunManifest:
    command: str
    inputs: list
    seed: int
    output_dir: str
    version: str
    wall_clock: float = 0.0
    argv: list = field(default_factory=list)
    exit_code: int = None

    def write(self):
        path = Path(self.output_dir) / "manifest.json"
        path.write_text(json.dumps(jsonable(asdict(self)), indent=2))
        return path


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class UsageError(ParameterError):
    pass


def parse_int_range(text):
    """'3..5' -> [3, 4, 5]; '3,5' -> [3, 5]; '4' -> [4]."""
    out = []
    try:
        for part in str(text).split(","):
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise UsageError(f"bad integer range {text!r}") from exc
    if not out:
        raise UsageError(f"empty range {text!r}")
    return out


def parse_floats(text):
    try:
        vals = [float(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise UsageError("t values must lie in [0, 1]")
    return vals


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by itself; route through our handler instead
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="sigmak", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run the property suites")
    sel = v.add_mutually_exclusive_group(required=True)
    sel.add_argument("--all", action="store_true", help="every suite")
    sel.add_argument("--suite", action="append", choices=sorted(verify.SUITES))
    v.add_argument("--n", default="3..5", help="dimensions, e.g. 3..5 or 3,4")
    v.add_argument("--k", default=None, help="orders (default: all valid)")
    v.add_argument("--t", default=",".join(str(t) for t in verify.T_GRID))
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--seed", default=None, help=f"seed or list; default ${SEED_ENV} or 7")
    v.add_argument("--out", default="sigmak-out/verify")

    s = sub.add_parser("solve", help="solve a problem document")
    s.add_argument("problem", help="problem JSON path or a bundled name")
    s.add_argument("--config", default=None, help="solver config JSON (overrides the problem's)")
    s.add_argument("--out", default="sigmak-out/solve")

    c = sub.add_parser("convergence", help="refinement study on a built-in family")
    c.add_argument("--family", required=True, choices=sorted(FAMILIES))
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--base", type=int, default=None, help="points on the coarsest level")
    c.add_argument("--out", default="sigmak-out/convergence")
    return p


def _write_json(path, obj):
    Path(path).write_text(json.dumps(jsonable(obj), indent=2))


def cmd_verify(args, manifest):
    names = sorted(verify.SUITES) if args.all else args.suite
    ns = parse_int_range(args.n)
    ks = None if args.k is None else parse_int_range(args.k)
    ts = parse_floats(args.t)
    seeds = [manifest.seed] if args.seed is None else parse_int_range(args.seed)
    manifest.seed = seeds[0]
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    if any(n < 2 for n in ns) or (ks is not None and any(k < 1 for k in ks)):
        raise UsageError("need n >= 2 and k >= 1")
    if ks is not None and "condition-a" in (args.suite or []):
        for n in ns:
            bad = [k for k in ks if k >= n]
            if bad:
                raise UsageError(f"condition-a needs 1 <= k <= n-1; got k={bad} for n={n}")
    reports = []
    for rep in verify.run_suites(names, ns, ks, ts, args.samples, seeds):
        reports.append(rep.to_dict())
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name} {_short(rep.params)} "
              f"samples={rep.samples} filtered={rep.filtered} worst_slack={rep.worst_slack:.3e}")
    ok = all(r["passed"] for r in reports)
    _write_json(Path(args.out) / "reports.json", {"passed": ok, "reports": reports})
    return EXIT_OK if ok else EXIT_FAILURE


def _short(params):
    keep = ("n", "k", "t", "seed")
    return " ".join(f"{k}={params[k]}" for k in keep if k in params)


def run_problem(doc, out, config_override=None, stem=None):
    """Solve one document and write report/solution files; returns (exit code, report dict)."""
    try:
        spec, cfg, bound = problem_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"bad problem document: {exc!r}") from exc
    if config_override is not None:
        try:
            cfg = config_from_dict(config_override)
        except TypeError as exc:
            raise UsageError(f"bad solver config: {exc}") from exc
    out = Path(out)
    report_path = out / ("report.json" if stem is None else f"{stem}_report.json")
    stem = stem or "solution"
    try:
        rep = continuation_solve(spec, cfg)
    except SigmakError as exc:
        diag = exc.to_dict()
        _write_json(report_path, {"status": "failed", **diag})
        print(f"solve failed: {exc}", file=sys.stderr)
        return exc.exit_code, diag
    d = rep.to_dict()
    d["reference"] = None if spec.reference is None else spec.reference.to_dict()
    d["regression_bound"] = bound
    status = "ok"
    if bound is not None and d["error_vs_reference"] is not None \
            and d["error_vs_reference"] > bound:
        status = "regression bound exceeded"
    if not d["min_cone_margin"] > 0:
        status = "cone margin not positive"
    d["status"] = status
    _write_json(report_path, d)
    write_field(rep.u, out / f"{stem}.csv", out / f"{stem}.grid.json")
    return (EXIT_OK if status == "ok" else EXIT_FAILURE), d


def cmd_solve(args, manifest):
    doc = load_document(args.problem)
    override = None
    if args.config is not None:
        manifest.inputs.append(args.config)
        override = load_document(args.config)
        override = override.get("config", override)
    code, d = run_problem(doc, args.out, override)
    if code == EXIT_OK:
        print(f"reached t={d['final_t']} error_vs_reference={d['error_vs_reference']} "
              f"min_cone_margin={d['min_cone_margin']:.3e}")
    return code


def cmd_convergence(args, manifest):
    if args.levels < 2:
        raise UsageError("convergence needs at least 2 levels")
    if args.base is not None and args.base < 5:
        raise UsageError("--base must be at least 5")
    hs, errs = [], []
    for level in range(args.levels):
        doc = family_document(args.family, level, args.base)
        code, d = run_problem(doc, args.out, stem=f"level{level}")
        if code != EXIT_OK:
            return code
        h = d["grid"]["h"]
        hs.append(max(h) if isinstance(h, list) else h)
        errs.append(d["error_vs_reference"])
    orders = [None] + observed_orders(hs, errs).tolist()
    with open(Path(args.out) / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "sup_error", "order"])
        for h, e, o in zip(hs, errs, orders):
            w.writerow([repr(h), repr(e), "" if o is None else repr(o)])
            print(f"h={h:.6g} sup_error={e:.6e} order={'' if o is None else f'{o:.4f}'}")
    return EXIT_OK if all(np.diff(errs) < 0) else EXIT_FAILURE


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "convergence": cmd_convergence}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    start = time.perf_counter()
    manifest = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        inputs = [args.problem] if args.command == "solve" else []
        manifest = RunManifest(args.command, inputs, default_seed(), str(args.out),
                               tool_version(), argv=argv)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args, manifest)
    except SigmakError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.exit_code
    if manifest is not None and Path(manifest.output_dir).is_dir():
        manifest.wall_clock = time.perf_counter() - start
        manifest.exit_code = code
        manifest.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
