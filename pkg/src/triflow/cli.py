"""``triflow`` command line.

Exit codes: 0 success, 1 input error, 2 solver did not converge,
3 solution inconsistent or out of bounds. ``TRIFLOW_PROFILE`` selects the
default tolerance profile for ``check``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from triflow import __version__
from triflow.errors import NonConvergenceError, SolverError, TriflowError
from triflow.feasibility import PROFILES, cross_validate, get_profile
from triflow.formulations import residual_bfm_lifted, residual_bim_lifted
from triflow.ingest import ParseError, parse_dss_subset, parse_native, write_native
from triflow.netmodel import Network
from triflow.outputs import (
    RunManifest, read_solution, sha256, write_lifted, write_report, write_solution,
)
from triflow.pfsolver import SolveOptions, lift, solve_newton, solve_sweep
from triflow.sdpexport import OBJECTIVES, build_bfm_sdp, build_bim_sdp, index_map_json, write_sdpa

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_INCONSISTENT = 3


class InputError(Exception):
    pass


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _format_of(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "dss" if path.lower().endswith(".dss") else "native"


def load_network(path: str, fmt: str | None = None, frequency: float = 50.0) -> tuple[Network, bytes]:
    data = _read(path)
    if _format_of(path, fmt) == "dss":
        return parse_dss_subset(data, frequency=frequency), data
    return parse_native(data), data


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc.strerror or exc}") from None


def _manifest(args, command: str, inputs: dict[str, bytes], **options) -> RunManifest:
    return RunManifest(command, {p: sha256(d) for p, d in inputs.items()}, options)


def _solution(net, path: str, data: bytes):
    try:
        return read_solution(net, data.decode("utf-8", errors="replace"))
    except ParseError as exc:
        exc.path = path
        raise


# commands ----------------------------------------------------------------------------

def cmd_solve(args) -> int:
    net, data = load_network(args.input, args.format, args.frequency)
    opts = SolveOptions(tol=args.tol, max_iter=args.max_iter)
    solver = solve_newton if args.method == "newton" else solve_sweep
    code = EXIT_OK
    try:
        state, trace = solver(net, opts)
    except NonConvergenceError as exc:
        state, trace = exc.state, exc.trace
        code = EXIT_NONCONVERGED
        print(f"error: {exc}", file=sys.stderr)
        if state is None or trace is None:
            return code
    man = _manifest(args, "solve", {args.input: data}, method=args.method, tol=args.tol,
                    max_iter=args.max_iter, format=_format_of(args.input, args.format))
    _emit(man.stamp(write_solution(net, state, trace)), args.out)
    status = "converged" if trace.converged else "not converged"
    print(f"{status}: {trace.iterations} residual evaluations, final residual "
          f"{trace.final_residual:.3e}", file=sys.stderr)
    return code


def _profile(name: str | None):
    return get_profile(name or os.environ.get("TRIFLOW_PROFILE") or "default")


def cmd_check(args) -> int:
    prof = _profile(args.profile)
    net, data = load_network(args.input, args.format, args.frequency)
    sol = _read(args.solution)
    state = _solution(net, args.solution, sol)
    rep = cross_validate(net, state, prof)
    ok = rep.consistent and rep.bounds_ok
    lines = rep.to_lines()
    lines.insert(1, f"bounds = {'ok' if rep.bounds_ok else 'violated'}")
    man = _manifest(args, "check", {args.input: data, args.solution: sol},
                    profile=args.profile or os.environ.get("TRIFLOW_PROFILE") or "default")
    _emit(man.stamp(write_report(lines)), args.out)
    print(f"{rep.verdict}, bounds {'ok' if rep.bounds_ok else 'violated'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_INCONSISTENT


def cmd_lift(args) -> int:
    net, data = load_network(args.input, args.format, args.frequency)
    sol = _read(args.solution)
    state = _solution(net, args.solution, sol)
    lifted = lift(net, state)
    ranks, psd = {}, {}
    reports = [residual_bfm_lifted(net, lifted)]
    if not any(br.is_zero_impedance for br in net.branches.values()):
        reports.append(residual_bim_lifted(net, lifted))
    for rep in reports:
        ranks.update(rep.groups.get("rank", {}))
        psd.update(rep.groups.get("psd", {}))
    man = _manifest(args, "lift", {args.input: data, args.solution: sol})
    _emit(man.stamp(write_lifted(net, lifted, ranks, psd)), args.out)
    print(f"max rank residual {max(ranks.values(), default=0.0):.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_export(args) -> int:
    net, data = load_network(args.input, args.format, args.frequency)
    build = build_bfm_sdp if args.relaxation == "bfm" else build_bim_sdp
    prob = build(net, args.objective)
    man = _manifest(args, "export", {args.input: data}, relaxation=args.relaxation,
                    objective=args.objective)
    text = write_sdpa(prob, args.objective)
    _emit(man.stamp(text, comment="*"), args.out)
    if args.out and args.out != "-":
        doc = json.loads(index_map_json(prob, args.objective))
        doc["manifest"] = man.record(text)
        _emit(json.dumps(doc, indent=1, sort_keys=True) + "\n", args.out + ".map.json")
    print(f"{len(prob.blocks)} psd blocks, {len(prob.rows)} rows, {prob.n_vars} variables",
          file=sys.stderr)
    return EXIT_OK


def cmd_convert(args) -> int:
    net, data = load_network(args.input, args.src, args.frequency)
    man = _manifest(args, "convert", {args.input: data},
                    src=_format_of(args.input, args.src), to=args.to, frequency=args.frequency)
    _emit(man.stamp(write_native(net)), args.out)
    return EXIT_OK


# parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="triflow", description="Unbalanced three-phase power "
                                "flow: solve, cross-check formulations, lift, export.")
    p.add_argument("--version", action="version", version=f"triflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_flag="--format"):
        sp.add_argument("input", help="network file (.net or .dss)")
        sp.add_argument(fmt_flag, dest="format" if fmt_flag == "--format" else "src",
                        choices=("native", "dss"), default=None,
                        help="input format (default: by extension)")
        sp.add_argument("--frequency", type=float, default=50.0,
                        help="system frequency in Hz for DSS capacitance (default 50)")
        sp.add_argument("--60hz", dest="frequency", action="store_const", const=60.0,
                        help="shorthand for --frequency 60")
        sp.add_argument("--out", "-o", default=None, help="output file (default stdout)")

    sp = sub.add_parser("solve", help="solve the power flow")
    common(sp)
    sp.add_argument("--method", choices=("newton", "sweep"), default="newton")
    sp.add_argument("--tol", type=float, default=SolveOptions.tol)
    sp.add_argument("--max-iter", type=int, default=SolveOptions.max_iter)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("check", help="evaluate a solution in all formulations and bounds")
    common(sp)
    sp.add_argument("solution")
    sp.add_argument("--profile", choices=sorted(PROFILES), default=None,
                    help="tolerance profile (default: $TRIFLOW_PROFILE or 'default')")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("lift", help="lift a solution into the matrix variable spaces")
    common(sp)
    sp.add_argument("solution")
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("export", help="write the rank-dropped relaxation in SDPA format")
    common(sp)
    sp.add_argument("--relaxation", choices=("bfm", "bim"), default="bfm")
    sp.add_argument("--objective", choices=OBJECTIVES, default=OBJECTIVES[0])
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("convert", help="convert a network file to the native format")
    common(sp, fmt_flag="--from")
    sp.add_argument("--to", choices=("native",), default="native")
    sp.set_defaults(func=cmd_convert)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 0 for --help/--version and 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        return args.func(args)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(f"{getattr(exc, 'path', args.input)}:{d.line}: {d.severity}: {d.message}",
                  file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, TriflowError, ValueError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # keep the exit-code contract total
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
