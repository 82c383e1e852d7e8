"""``linconsensus`` command-line interface.

Exit codes
----------
0   success; for ``classify`` the system solves consensus
1   does not solve consensus, audit failed, or the requested method does not apply
2   indeterminate verdict
3   simulation refused because a standing assumption fails (without ``--unsafe``)
64  usage error (bad flags or flag combination, bad tolerance override)
65  malformed input data
66  input file missing or unreadable
70  internal error, including failed self-verification of generated output
73  output file cannot be created
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chi import (
    check_average_consensus,
    consensus_function_limit,
    consensus_function_method1,
    consensus_function_scalar,
)
from .classify import INDETERMINATE, YES, SystemMatrix, classify_consensus
from .errors import ConsensusError, InputError, StructuralError
from .io import (
    format_matrix,
    load_simulation_config,
    parse_edge_list,
    read_matrix,
    validate,
)
from .linalg import TolerancePolicy
from .similarity import (
    bring_to_canonical,
    random_consensus_system,
    retarget_to_average,
    similarity_transform,
    verify_transform,
)
from .switched import (
    SwitchedSystem,
    check_switched_assumptions,
    incidence_from_edges,
    laplacian_from_incidence,
    lyapunov_audit,
    simulate_switched,
)

EXIT_OK, EXIT_NO, EXIT_INDETERMINATE, EXIT_REFUSED = 0, 1, 2, 3
EX_USAGE, EX_DATAERR, EX_NOINPUT, EX_SOFTWARE, EX_CANTCREAT = 64, 65, 66, 70, 73


class UsageError(Exception):
    pass


class SelfCheckError(Exception):
    """Generated output failed its own verification."""


class _CannotCreate(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _print_matrix(M, out, indent="  "):
    for row in np.atleast_2d(M):
        print(indent + "  ".join(f"{_fmt(v):>16}" for v in row), file=out)


def _policy(args) -> TolerancePolicy:
    try:
        base = TolerancePolicy.from_env()
        return base.with_overrides(rank_rel=args.rank_rel, eig_zero_rel=args.eig_zero_rel,
                                   convergence_abs=args.convergence_abs)
    except InputError as exc:
        raise UsageError(str(exc)) from None


def _load_system(path) -> SystemMatrix:
    mf = read_matrix(path)
    return SystemMatrix(mf.A, mf.n, mf.m)


def _dump_json(doc, schema: str, out) -> None:
    validate(doc, schema)
    json.dump(doc, out, indent=2)
    out.write("\n")


def cmd_classify(args, out) -> int:
    tol = _policy(args)
    sysm = _load_system(args.path)
    verdict = classify_consensus(sysm, tol)
    if args.json:
        _dump_json(verdict.to_dict(), "verdict", out)
    else:
        print(verdict.format(), file=out)
    if verdict.solves == YES:
        return EXIT_OK
    if verdict.solves == INDETERMINATE:
        return EXIT_INDETERMINATE
    return EXIT_NO


def cmd_chi(args, out) -> int:
    tol = _policy(args)
    sysm = _load_system(args.path)
    try:
        fn = consensus_function_limit(sysm, tol) if args.limit else consensus_function_method1(sysm, tol)
    except StructuralError as exc:
        msg = str(exc)
        if not args.limit and "rank" in msg:
            msg += "\nrerun with --limit to read chi off lim e^{At}"
        print(f"chi: {msg}", file=sys.stderr)
        return EXIT_NO
    doc = fn.to_dict()
    weights = None
    if sysm.m == 1:
        try:
            weights = consensus_function_scalar(sysm, tol)
        except StructuralError:
            weights = None
    if weights is not None:
        doc["weights"] = weights.weights.tolist()
        doc["normalized_weights"] = weights.normalized.tolist()
    if args.limit:
        doc["limit"] = fn.limit.tolist()
    avg = check_average_consensus(sysm, tol) if args.average_check else None
    if avg is not None:
        doc["average_check"] = avg.to_dict()

    if args.json:
        _dump_json(doc, "chi", out)
        return EXIT_OK
    print(f"consensus function chi(x) = E x  (method: {fn.method}, n={fn.n}, m={fn.m})", file=out)
    print("E =", file=out)
    _print_matrix(fn.E, out)
    if args.limit:
        print(f"lim e^(At) =  (rank {doc['limit_rank']})", file=out)
        _print_matrix(fn.limit, out)
    if weights is not None:
        print("weights y (chi(x) = y.x / sum(y)):", file=out)
        _print_matrix(weights.weights, out)
        print("normalized weights:", file=out)
        _print_matrix(weights.normalized, out)
    if avg is not None:
        print(avg.format(), file=out)
    return EXIT_OK


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise _CannotCreate(f"cannot write {path}: {exc.strerror or exc}") from None


def cmd_transform(args, out) -> int:
    tol = _policy(args)
    prefix = Path(args.out)
    if args.input is None:
        if args.n is None or args.m is None:
            raise UsageError("--n and --m are required without --input")
        if args.n < 2 or args.m < 1:
            raise UsageError("need --n >= 2 and --m >= 1")
        r = args.m if args.r is None else args.r
        if not 1 <= r <= args.m:
            raise UsageError(f"--r must lie in [1, m] = [1, {args.m}], got {r}")
        if args.average and r != args.m:
            raise UsageError("--average requires r = m")
        sysm, T, J = random_consensus_system(args.n, args.m, args.seed, r=r, average=args.average, tol=tol)
        T_mat, n, m = T.T, args.n, args.m
        # re-verify from scratch
        if not verify_transform(T_mat, n, m, average=args.average, tol=tol).passed:
            raise SelfCheckError("generated T violates its structural clauses")
        verdict = classify_consensus(sysm, tol)
        if not verdict.yes or verdict.dimN_A != r:
            raise SelfCheckError(f"generated A classified {verdict.solves!r} with dim N(A) = {verdict.dimN_A}")
        desc = f"synthesized A = T^-1 J T with r = {r}" + (", average form" if args.average else "")
    else:
        if args.n is not None or args.m is not None or args.r is not None:
            raise UsageError("--n, --m and --r are taken from the input file; do not pass them with --input")
        src = _load_system(args.input)
        n, m = src.n, src.m
        verdict = classify_consensus(src, tol)
        if not verdict.yes:
            print(f"transform: input does not solve consensus (classifier says {verdict.solves!r})",
                  file=sys.stderr)
            return EXIT_NO
        if args.average:
            if verdict.dimN_A != m:
                raise UsageError(f"--average needs dim N(A) = m = {m}, input has {verdict.dimN_A}")
            T_mat, sysm = retarget_to_average(src, tol, seed=args.seed)
            desc = "A' = T^-1 A T solves the average consensus problem"
        else:
            T_mat, form = bring_to_canonical(src, tol)
            sysm = SystemMatrix(similarity_transform(src.A, T_mat), n, m)
            desc = f"A' = T^-1 A T = diag(0_{form.r}, M)"
        resid = float(np.max(np.abs(T_mat @ sysm.A - src.A @ T_mat)))
        if resid > tol.convergence_abs * max(1.0, float(np.max(np.abs(src.A)))) * max(1.0, float(np.max(np.abs(T_mat)))):
            raise SelfCheckError(f"T A' != A T (residual {resid:.3g})")
    if args.average and not check_average_consensus(sysm, tol).passed:
        raise SelfCheckError("output fails the average-consensus check")

    t_path = prefix.with_name(prefix.name + "-T.mat")
    a_path = prefix.with_name(prefix.name + "-A.mat")
    _write(t_path, format_matrix(T_mat, n, m, comment="transform T"))
    _write(a_path, format_matrix(sysm.A, n, m, comment=desc))
    print(f"wrote {t_path}", file=out)
    print(f"wrote {a_path}", file=out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    tol = _policy(args)
    cfg = load_simulation_config(args.config)
    n, m = cfg.subsystems[0].n, cfg.subsystems[0].m
    subs = [SystemMatrix(mf.A, mf.n, mf.m) for mf in cfg.subsystems]
    F = cfg.F if cfg.F is not None else np.hstack([np.eye(m)] * n) / n
    switched = SwitchedSystem(subs, F)
    assumptions = check_switched_assumptions(switched, tol)
    if not assumptions.passed and not args.unsafe:
        print("simulate: refused, assumption(s) fail:", file=sys.stderr)
        for c in assumptions.failures():
            print(f"  {c.name}  ({c.detail})", file=sys.stderr)
        print("rerun with --unsafe to simulate anyway", file=sys.stderr)
        return EXIT_REFUSED
    traj = simulate_switched(switched, cfg.signal, cfg.x0, cfg.sample_dt, unsafe=True, tol=tol)
    audit = lyapunov_audit(traj, switched, tol)
    doc = audit.to_dict()
    doc["final_agreement_value"] = traj.states[-1].reshape(n, m).mean(axis=0).tolist()
    doc["unsafe"] = bool(args.unsafe)
    doc["assumptions"] = assumptions.to_dict()
    validate(doc, "audit")

    prefix = Path(args.out)
    csv_path = prefix.with_name(prefix.name + "-trajectory.csv")
    json_path = prefix.with_name(prefix.name + "-audit.json")
    try:
        traj.write_csv(csv_path)
    except OSError as exc:
        raise _CannotCreate(f"cannot write {csv_path}: {exc.strerror or exc}") from None
    _write(json_path, json.dumps(doc, indent=2) + "\n")
    print(audit.report.format(), file=out)
    print(f"final |delta| = {audit.final_disagreement:.3e}", file=out)
    print(f"wrote {csv_path}", file=out)
    print(f"wrote {json_path}", file=out)
    return EXIT_OK if audit.passed else EXIT_NO


def cmd_graph_laplacian(args, out) -> int:
    path = Path(args.path)
    edges = parse_edge_list(path.read_text(), path)
    n_vertices = args.vertices
    top = 1 + max(max(e) for e in edges)
    if n_vertices is None:
        n_vertices = top
    elif n_vertices < top:
        raise UsageError(f"--vertices {n_vertices} is smaller than the largest vertex index {top}")
    L = laplacian_from_incidence(incidence_from_edges(edges, n_vertices))
    out.write(format_matrix(L, n_vertices, 1))
    return EXIT_OK


def _add_tolerance_flags(p):
    g = p.add_argument_group("tolerances (override LINCONSENSUS_TOL)")
    g.add_argument("--rank-rel", type=float, help="relative singular-value cutoff (default 1e-10)")
    g.add_argument("--eig-zero-rel", type=float, help="relative zero-eigenvalue band (default 1e-9)")
    g.add_argument("--convergence-abs", type=float, help="absolute limit/trajectory tolerance (default 1e-6)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linconsensus", description="Analyse linear consensus protocols x' = Ax.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="decide whether x' = Ax solves a consensus problem")
    p.add_argument("path", help="matrix file")
    p.add_argument("--json", action="store_true", help="emit the verdict as JSON")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("chi", help="compute the consensus function chi(x) = E x")
    p.add_argument("path", help="matrix file")
    p.add_argument("--json", action="store_true", help="emit E (and any reports) as JSON")
    p.add_argument("--limit", action="store_true", help="read E off lim e^(At) (any kernel dimension)")
    p.add_argument("--average-check", action="store_true", help="append the average-consensus report")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("transform", help="synthesize a system or retarget one to average consensus")
    p.add_argument("--n", type=int, help="number of agents (without --input)")
    p.add_argument("--m", type=int, help="agent state dimension (without --input)")
    p.add_argument("--r", type=int, help="kernel dimension of the synthesized system (default m)")
    p.add_argument("--average", action="store_true", help="produce a system that solves the average consensus problem")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--input", help="matrix file to transform instead of synthesizing")
    p.add_argument("--out", default="transform", help="output prefix (writes <prefix>-T.mat, <prefix>-A.mat)")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("simulate", help="simulate a switched system and audit its Lyapunov function")
    p.add_argument("config", help="JSON simulation config")
    p.add_argument("--out", default="run", help="output prefix (writes <prefix>-trajectory.csv, <prefix>-audit.json)")
    p.add_argument("--unsafe", action="store_true", help="simulate even if assumptions fail")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("graph-laplacian", help="graph Laplacian of an undirected edge list")
    p.add_argument("path", help="edge list, one '1-based-u v' pair per line")
    p.add_argument("--vertices", type=int, help="vertex count (default: largest index in the list)")
    p.set_defaults(func=cmd_graph_laplacian)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"{parser.prog} {args.command}: cannot read input: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EX_NOINPUT
    except _CannotCreate as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    except InputError as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EX_DATAERR
    except (SelfCheckError, ConsensusError) as exc:
        print(f"{parser.prog} {args.command}: internal error: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
