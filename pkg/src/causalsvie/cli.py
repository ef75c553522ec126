"""Command line entry point.

Commands: ``simulate``, ``verify-duality``, ``verify-representation`` and
``partition``.  Exit codes: 0 pass, 1 verification failure, 2 configuration
error, 3 numerical blow-up.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .brownian import simulate_brownian
from .ebsvie import CONVERGED_GAP, duality_lhs_exact, duality_rhs, solve_ebsvie
from .forward import BlowUpError, flow_restart, solve_closed_loop_augmented, solve_closed_loop_direct
from .config import ConfigError, ExperimentConfig
from .grid import GridError
from .io import dump_theta, write_estimates, write_rows
from .kernels import KernelError
from .lyapunov import operator_matrix, representation_lhs_exact, representation_rhs, solve_lyapunov
from .montecarlo import estimate_linear_functional, estimate_quadratic_functional
from .operators import find_partition, subinterval_norm, wellposedness_constant

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
EQUIVALENCE_TOL = 1e-8
FLOW_TOL = 1e-12
GAP_TOL = 1e-6
MIN_ORDER = 0.5


class Report:
    """Plain-text report echoed to stdout and optionally written to a file."""

    def __init__(self, title: str):
        self.lines = [title]

    def add(self, line: str = "") -> None:
        self.lines.append(line)

    def emit(self, out_dir: Path, name: str, formats) -> None:
        text = "\n".join(self.lines) + "\n"
        sys.stdout.write(text)
        if "txt" in formats:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / name).write_text(text)


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.out) if args.out else cfg.output_dir


def _fmt(x: float) -> str:
    return f"{x:.6e}"


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    inst = cfg.build()
    out = _out_dir(cfg, args)
    mc = cfg.mc(args.seed)
    n_paths = args.paths if args.paths is not None else 1
    restart = args.restart if args.restart is not None else (inst.inp.start + inst.grid.N) // 2
    if not inst.inp.start <= restart <= inst.grid.N:
        raise ConfigError(f"restart index {restart} lies outside [{inst.inp.start}, {inst.grid.N}]")
    rows, urows = [], []
    eq_res = flow_res = 0.0
    for pid in range(n_paths):
        path = simulate_brownian(mc.seed, inst.grid, pid)
        try:
            sol = solve_closed_loop_direct(inst.kernels, inst.strat, inst.inp, path)
        except BlowUpError as exc:
            raise BlowUpError(exc.i, exc.j, pid) from None
        aug = solve_closed_loop_augmented(inst.kernels, inst.strat, inst.inp, path)
        m0 = inst.inp.start
        eq_res = max(eq_res, float(np.max(np.abs(aug.Theta.values[m0:, m0:] - sol.Theta.values[m0:, m0:]))))
        rs = flow_restart(sol, inst.kernels, inst.strat, restart, path)
        flow_res = max(flow_res, float(np.max(np.abs(rs.Theta.values[restart:, restart:]
                                                     - sol.Theta.values[restart:, restart:]))))
        for i in range(m0, inst.grid.N + 1):
            for a in range(cfg.d):
                rows.append((pid, i, a, inst.inp.x[i, a], sol.X[i, a]))
            for c in range(cfg.l):
                urows.append((pid, i, c, sol.u[i, c]))
        if args.dump_theta:
            dump_theta(sol.Theta.values, out / f"theta_{pid}.csv")
    write_rows(out / "paths.csv", ("path_id", "i", "component", "x", "X"), rows)
    write_rows(out / "controls.csv", ("path_id", "i", "component", "u"), urows)
    write_rows(out / "residuals.csv", ("quantity", "value"),
               [("equivalence", eq_res), ("flow", flow_res), ("restart", restart)])

    estimates = {}
    if inst.data is not None:
        estimates["linear_functional"] = estimate_linear_functional(
            inst.kernels, inst.strat, inst.data, inst.inp, cfg=mc)
    if inst.Q is not None and inst.kernels.homogeneous and not np.any(inst.strat.v):
        estimates["quadratic_functional"] = estimate_quadratic_functional(
            inst.kernels, inst.strat, inst.Q, inst.inp, mc)
    if estimates:
        write_estimates(out / "estimates.csv", estimates, mc.seed)

    ok = eq_res <= EQUIVALENCE_TOL and flow_res <= FLOW_TOL
    rep = Report("simulate")
    rep.add(f"paths: {n_paths}  seed: {mc.seed}  N: {inst.grid.N}  start: {inst.inp.start}")
    rep.add(f"solver equivalence residual: {_fmt(eq_res)} (tolerance {EQUIVALENCE_TOL:g})")
    rep.add(f"flow residual at restart {restart}: {_fmt(flow_res)} (tolerance {FLOW_TOL:g})")
    for q, e in estimates.items():
        rep.add(f"{q}: {e.mean:.10g} +/- {e.std_error:.3g} (n={e.n})")
    rep.add("PASS" if ok else "FAIL")
    rep.emit(out, "simulate_report.txt", cfg.formats)
    return EXIT_OK if ok else EXIT_FAIL


def _levels(cfg: ExperimentConfig, refine: int):
    return [cfg.N * 2**r for r in range(refine + 1)]


def _order(g1: float, g2: float) -> float:
    """Empirical order; undefined once either gap is at rounding level."""
    if g1 <= CONVERGED_GAP or g2 <= CONVERGED_GAP:
        return float("nan")
    return float(np.log2(g1 / g2))


def _order_text(gap: float, order: float) -> str:
    if gap <= CONVERGED_GAP:
        return "converged"
    return "-" if np.isnan(order) else f"{order:.3f}"


def _verdict(gaps, orders) -> bool:
    """Pass unless the final order is below the minimum while the final gap is large."""
    last_gap = gaps[-1]
    last_order = orders[-1] if orders else float("nan")
    return not (last_gap > GAP_TOL and not last_order >= MIN_ORDER)


def cmd_verify_duality(cfg: ExperimentConfig, args) -> int:
    if not cfg.has_duality:
        raise ConfigError("verify-duality needs a duality section")
    out = _out_dir(cfg, args)
    rows, gaps, literal = [], [], []
    for N in _levels(cfg, args.refine):
        inst = cfg.build(N)
        sol = solve_ebsvie(inst.kernels, inst.strat, inst.data, inst.grid, start=inst.inp.start)
        lhs = duality_lhs_exact(inst.kernels, inst.strat, inst.data, inst.inp, inst.grid)
        rhs = duality_rhs(inst.kernels, inst.strat, sol, inst.inp, inst.grid, inst.data)
        rhs_lit = duality_rhs(inst.kernels, inst.strat, sol, inst.inp, inst.grid)
        gaps.append(abs(lhs - rhs))
        literal.append(abs(lhs - rhs_lit))
        rows.append([N, lhs, rhs, gaps[-1], rhs_lit, literal[-1]])
    orders = [_order(a, b) for a, b in zip(gaps, gaps[1:])]
    lit_orders = [_order(a, b) for a, b in zip(literal, literal[1:])]
    for r, o, lo in zip(rows, [float("nan")] + orders, [float("nan")] + lit_orders):
        r += [o, lo]
    write_rows(out / "duality.csv",
               ("N", "lhs", "rhs", "gap", "rhs_literal", "gap_literal", "order", "order_literal"),
               rows)
    ok = _verdict(gaps, orders)
    rep = Report("verify-duality")
    for r in rows:
        rep.add(f"N={r[0]:5d}  lhs={r[1]: .10e}  gap={_fmt(r[3])}  order={_order_text(r[3], r[6])}  "
                f"literal gap={_fmt(r[5])}  literal order={_order_text(r[5], r[7])}")
    rep.add("PASS" if ok else "FAIL")
    rep.emit(out, "duality_report.txt", cfg.formats)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_representation(cfg: ExperimentConfig, args) -> int:
    if not cfg.has_weights:
        raise ConfigError("verify-representation needs a weights section")
    out = _out_dir(cfg, args)
    rows, gaps = [], []
    for N in _levels(cfg, args.refine):
        inst = cfg.build(N)
        if not inst.kernels.homogeneous or np.any(inst.strat.v):
            raise ConfigError("verify-representation needs b = sigma = v = 0")
        P = solve_lyapunov(inst.kernels, inst.strat, inst.Q, inst.grid, start=inst.inp.start,
                           scheme=args.scheme)
        lhs = representation_lhs_exact(inst.kernels, inst.strat, inst.Q, inst.inp, inst.grid)
        rhs = representation_rhs(P, inst.inp, inst.grid)
        M = operator_matrix(P, inst.inp.start, inst.grid)
        sym1 = float(np.max(np.abs(P.P1 - np.swapaxes(P.P1, -1, -2)), initial=0.0))
        sym = max(sym1, P.P2.symmetry_residual())
        gaps.append(abs(lhs - rhs))
        rows.append([N, lhs, rhs, gaps[-1], sym, float(np.max(np.abs(M - M.T)))])
    orders = [_order(a, b) for a, b in zip(gaps, gaps[1:])]
    for r, o in zip(rows, [float("nan")] + orders):
        r.append(o)
    write_rows(out / "representation.csv",
               ("N", "lhs", "rhs", "gap", "symmetry_residual", "operator_asymmetry", "order"), rows)
    ok = _verdict(gaps, orders)
    rep = Report(f"verify-representation (scheme {args.scheme})")
    for r in rows:
        rep.add(f"N={r[0]:5d}  lhs={r[1]: .10e}  gap={_fmt(r[3])}  order={_order_text(r[3], r[6])}  "
                f"symmetry={_fmt(r[4])}  self-adjointness={_fmt(r[5])}")
    rep.add("PASS" if ok else "FAIL")
    rep.emit(out, "representation_report.txt", cfg.formats)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_partition(cfg: ExperimentConfig, args) -> int:
    inst = cfg.build()
    out = _out_dir(cfg, args)
    A, C, grid = inst.kernels.A, inst.kernels.C, inst.grid
    nodes = find_partition(A, C, grid)
    m = len(nodes) - 1
    L = subinterval_norm(A, C, 0, grid.N, grid.h)
    K = wellposedness_constant(m, L)
    write_rows(out / "partition.csv", ("index", "node", "time"),
               [(q, n, float(grid.nodes[n])) for q, n in enumerate(nodes)])
    write_rows(out / "partition_summary.csv", ("quantity", "value"), [("m", m), ("L", L), ("K", K)])
    rep = Report("partition")
    rep.add("nodes: " + " ".join(str(n) for n in nodes))
    rep.add(f"m = {m}")
    rep.add(f"L = {L:.10g}")
    rep.add(f"K = {K:.10g}")
    rep.emit(out, "partition_report.txt", cfg.formats)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-duality": cmd_verify_duality,
    "verify-representation": cmd_verify_representation,
    "partition": cmd_partition,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalsvie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML or JSON experiment file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="override mc.seed")

    p = sub.add_parser("simulate", help="simulate closed-loop paths and check solver consistency")
    common(p)
    p.add_argument("--paths", type=int, help="number of paths to write (default 1)")
    p.add_argument("--dump-theta", action="store_true", help="write Theta for every path")
    p.add_argument("--restart", type=int, help="restart index for the flow check")
    for name, text in (("verify-duality", "check the duality identity under refinement"),
                       ("verify-representation", "check the quadratic representation under refinement")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--refine", type=int, default=1, help="number of grid doublings (default 1)")
        if name == "verify-representation":
            p.add_argument("--scheme", choices=("exact", "explicit"), default="exact")
    p = sub.add_parser("partition", help="small-norm partition and well-posedness constant")
    common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "paths", None) is not None and args.paths < 1:
        parser.error("--paths must be positive")
    if getattr(args, "refine", 1) < 1:
        parser.error("--refine must be at least 1")
    try:
        cfg = ExperimentConfig.load(args.config)
        return COMMANDS[args.command](cfg, args)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, KernelError, GridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
