"""Command-line interface: ``socpdual <command> ...``.

Exit codes: 0 success, 1 invalid network or arguments, 2 solve (or
certificate search) failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, cases
from .conditions import certify_strong_duality, check_conditions
from .dual import build_dual, duality_gap
from .experiment import CONDITIONS, EPS_G, THRESHOLD, default_jobs, emit_report, format_table, gap_study, modify_network
from .formulation import (
    TOTAL_LOSS,
    ObjectiveSpec,
    build_opf_cr,
    build_opf_socp1,
    build_opf_socp2,
    physical_from_solution,
    reform_from_solution,
    reform_to_physical,
    residuals,
)
from .network import NetworkError, dump_network, load_network, write_csv_pair
from .solver import solve

EXIT_OK, EXIT_INVALID, EXIT_SOLVE, EXIT_IO = 0, 1, 2, 3
BUILTIN = {"ieee33": cases.ieee33, "synthetic56": cases.synthetic56}

log = logging.getLogger("socpdual")


class _IOFailure(Exception):
    pass


def _load(spec: str, fmt: str | None):
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise NetworkError(f"unknown built-in network {name!r}; have {sorted(BUILTIN)}")
        return BUILTIN[name]()
    try:
        return load_network(spec, fmt)
    except OSError as exc:
        raise _IOFailure(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise _IOFailure(str(exc)) from None


def _json(doc) -> str:
    return json.dumps(doc, indent=2, default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def _objective(arg: str) -> ObjectiveSpec:
    if arg == "loss":
        return TOTAL_LOSS
    if arg.startswith("linear:"):
        try:
            return ObjectiveSpec.load(arg.split(":", 1)[1])
        except OSError as exc:
            raise _IOFailure(str(exc)) from None
    raise ValueError(f"objective must be 'loss' or 'linear:<file>', got {arg!r}")


# ------------------------------------------------------------------ commands
def cmd_validate(args) -> int:
    net = _load(args.network, args.net_format)
    depth = int(net.depth.max()) if net.n else 0
    _emit(_json({"valid": True, "nodes": net.n + 1, "branches": net.n, "depth": depth, "v0": net.v0}), args.output)
    return EXIT_OK


def cmd_check(args) -> int:
    net = _load(args.network, args.net_format)
    _emit(_json(check_conditions(net).to_dict()), args.output)
    return EXIT_OK


def cmd_certify(args) -> int:
    net = _load(args.network, args.net_format)
    res = certify_strong_duality(net, condition=args.condition)
    _emit(_json(res.to_dict(net)), args.output)
    return EXIT_SOLVE if res.verdict == "search_failed" else EXIT_OK


def cmd_solve(args) -> int:
    net = _load(args.network, args.net_format)
    obj = _objective(args.objective)
    build = {"cr": build_opf_cr, "socp1": build_opf_socp1, "socp2": build_opf_socp2}[args.program]
    prog = build(net, obj)
    sol = solve(prog, max_iters=args.max_iters)
    doc = {
        "program": args.program,
        "objective": obj.to_dict(),
        "status": sol.status,
        "iterations": sol.iterations,
        "primal_obj": sol.primal_obj,
        "solver_dual_obj": sol.dual_obj,
        "residuals": sol.residuals,
        "message": sol.message,
    }
    if sol.ok:
        if args.program == "cr":
            pt = physical_from_solution(prog, net, sol.x)
        else:
            rp = reform_from_solution(prog, net, sol.x)
            pt = reform_to_physical(net, rp)
            doc["reform"] = {"tau": rp.tau, "beta": rp.beta}
        doc["physical"] = pt.to_dict(net)
        doc["physical_residuals"] = residuals(net, pt).summary()
    ok = sol.ok
    if args.dual:
        dual = build_dual(prog)
        sd = solve(dual.program, max_iters=args.max_iters)
        dv = dual.value(sd.primal_obj) if sd.ok else float("nan")
        gap = duality_gap(sol.primal_obj if sol.ok else float("nan"), dv)
        doc["dual"] = {"status": sd.status, "iterations": sd.iterations, "dual_obj": dv,
                       "abs_gap": gap.absolute, "rel_gap": gap.relative, "strong_duality": gap.strong(THRESHOLD)}
        ok = ok and sd.ok
    _emit(_json(doc), args.output)
    return EXIT_OK if ok else EXIT_SOLVE


def cmd_modify(args) -> int:
    net = _load(args.network, args.net_format)
    out = modify_network(net, args.condition, args.eps_g)
    new = out.history[len(net.history):]
    for m in new:
        print(f"{m.element}: {m.field} {m.old:.6g} -> {m.new:.6g}", file=sys.stderr)
    print(f"{len(new)} change(s)", file=sys.stderr)
    if args.output and args.output.endswith("/"):
        write_csv_pair(out, args.output)
    else:
        _emit(dump_network(out), args.output)
    return EXIT_OK


def cmd_gap_study(args) -> int:
    net = _load(args.network, args.net_format)
    obj = _objective(args.objective)
    jobs = args.jobs or default_jobs()
    res = gap_study(
        net, args.instances, seed=args.seed, modify=args.modify, obj=obj, threshold=args.threshold,
        parallelism=jobs, eps_g=args.eps_g, mode=args.dg_mode, dg_share=args.dg_share,
        p_range=tuple(args.dg_p), q_range=tuple(args.dg_q),
    )
    label = f"{Path(args.network).stem if not args.network.startswith('builtin:') else args.network[8:]}"
    label += f" ({args.modify})" if args.modify else " (original)"
    res.meta["label"] = label
    _emit(emit_report(res, args.report_format), args.output)
    if args.report_format != "table":
        sys.stderr.write(format_table([(label, res)]))
    if args.figures:
        from .plotting import save_gap_figures

        try:
            paths = save_gap_figures({label: res}, args.figures)
        except OSError as exc:
            raise _IOFailure(str(exc)) from None
        for p in paths:
            print(f"figure: {p}", file=sys.stderr)
    return EXIT_OK if not res.failed else EXIT_SOLVE


def cmd_export(args) -> int:
    net = BUILTIN[args.case]()
    if args.csv:
        try:
            write_csv_pair(net, args.csv)
        except OSError as exc:
            raise _IOFailure(str(exc)) from None
    else:
        _emit(dump_network(net), args.output)
    return EXIT_OK


# -------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="socpdual", description="Strong duality tools for radial-network OPF relaxations.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def net_cmd(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("network", help="JSON file, folder with nodes.csv/branches.csv, or builtin:<name>")
        p.add_argument("--net-format", choices=("json", "csv-pair"), default=None,
                       help="network file format (default: by extension; folders are csv-pair)")
        p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
        p.set_defaults(fn=fn)
        return p

    net_cmd("validate", cmd_validate, "parse and validate a network")
    net_cmd("check", cmd_check, "report conditions C1-C3")
    p = net_cmd("certify", cmd_certify, "build a Slater certificate")
    p.add_argument("--condition", choices=CONDITIONS, default=None, help="force one condition's construction")
    p = net_cmd("solve", cmd_solve, "solve the relaxation (optionally its dual too)")
    p.add_argument("--objective", default="loss", help="'loss' or 'linear:<weights.json>'")
    p.add_argument("--program", choices=("cr", "socp1", "socp2"), default="cr")
    p.add_argument("--dual", action="store_true", help="also build and solve the explicit dual")
    p.add_argument("--max-iters", type=int, default=200)
    p = net_cmd("modify", cmd_modify, "edit a network so a condition holds")
    p.add_argument("--condition", choices=CONDITIONS, required=True)
    p.add_argument("--eps-g", type=float, default=EPS_G)
    p = net_cmd("gap-study", cmd_gap_study, "duality gaps over random DG instances")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=THRESHOLD)
    p.add_argument("--modify", choices=CONDITIONS, default=None)
    p.add_argument("--format", dest="report_format", choices=("csv", "json", "table"), default="table")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $SOCPDUAL_JOBS or 1)")
    p.add_argument("--objective", default="loss")
    p.add_argument("--eps-g", type=float, default=EPS_G)
    p.add_argument("--dg-mode", choices=("dispatchable", "fixed"), default="dispatchable")
    p.add_argument("--dg-share", type=float, default=0.5)
    p.add_argument("--dg-p", type=float, nargs=2, default=(0.0, 0.03), metavar=("LO", "HI"))
    p.add_argument("--dg-q", type=float, nargs=2, default=(0.0, 0.015), metavar=("LO", "HI"))
    p.add_argument("--figures", default=None, metavar="DIR", help="write histogram/profile PNGs here")
    p = sub.add_parser("export-case", help="write a built-in network")
    p.add_argument("case", choices=sorted(BUILTIN))
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--csv", default=None, metavar="DIR", help="write nodes.csv/branches.csv into DIR")
    p.set_defaults(fn=cmd_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except NetworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _IOFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
