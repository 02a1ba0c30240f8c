"""Command-line front end: ``lqgjam solve | simulate | sweep``.

Exit codes: 0 success, 1 bad arguments or config, 2 the stage problem has no
saddle point (concavity violated or a singular block), 3 a simultaneous-move
stage game without a pure equilibrium.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import tomli

from .control_synthesis import ConcavityViolation, SingularStageMatrix
from .decisions import NoPureNash, TreeTooLarge
from .model import SpecError, load_spec, spec_from_mapping
from .simulation import monte_carlo, rollout, write_trace
from .solver import METHODS, PI_STARTS, Solution, solve

SWEEP_FIELDS = {"r_a": "Ra", "a": "A", "sigma_o": "sigma_o", "o_d": "Od", "o_a": "Oa"}
VALUE_TERMS = ("initial", "noise", "estimation", "observation", "jamming", "total")


def _num(v: float) -> str:
    return repr(float(v))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fail(code: int, message: str) -> int:
    print(f"lqgjam: {message}", file=sys.stderr)
    return code


def _decision_rows(sol: Solution) -> list[list]:
    return [
        [s.stage, s.i_d, s.i_a, s.h, _num(np.trace(s.P))]
        for s in sol.tree.on_path(sol.spec.observation_rule)
    ]


def write_solution(sol: Solution, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    sol.tree.dump(out / "tree.json")
    with open(out / "value.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["term", "value"])
        for term in VALUE_TERMS:
            w.writerow([term, _num(getattr(sol.value, term))])
    with open(out / "decisions.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["stage", "i_d", "i_a", "h", "P_trace"])
        w.writerows(_decision_rows(sol))


def _solve_config(args: argparse.Namespace) -> Solution:
    return solve(load_spec(args.config), method=args.method, pi_start=args.pi_start)


def _guarded(fn, *args) -> int:
    try:
        return fn(*args)
    except (SpecError, OSError, TreeTooLarge) as exc:
        return _fail(1, str(exc))
    except (ConcavityViolation, SingularStageMatrix) as exc:
        return _fail(2, str(exc))
    except NoPureNash as exc:
        return _fail(3, str(exc))


def cmd_solve(args: argparse.Namespace) -> int:
    sol = _solve_config(args)
    write_solution(sol, Path(args.out))
    if not sol.converged:
        print(f"lqgjam: policy iteration stopped after {sol.iterations} iterations without converging",
              file=sys.stderr)
    d = sol.decisions
    print(f"V0={_num(sol.value.total)} method={sol.method} converged={sol.converged} "
          f"observations={sum(i for i, _ in d)} jammings={sum(a for _, a in d)}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.replicates < 2:
        return _fail(1, "--replicates must be at least 2")
    sol = _solve_config(args)
    stats = monte_carlo(sol.spec, sol.riccati, sol.tree, args.replicates, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stats.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["quantity", "value"])
        w.writerow(["replicates", stats.replicates])
        w.writerow(["seed", args.seed])
        w.writerow(["mean", _num(stats.mean)])
        w.writerow(["std", _num(stats.std)])
        w.writerow(["std_error", _num(stats.std_error)])
        w.writerow(["analytic_total", _num(sol.value.total)])
    with open(out / "error_covariance.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["stage", "i", "j", "empirical", "propagated"])
        q = sol.spec.q
        for n in range(sol.spec.horizon):
            for i in range(q):
                for j in range(q):
                    w.writerow([n, i, j, _num(stats.error_covariance[n, i, j]), _num(stats.propagated[n, i, j])])
    if args.trace:
        write_trace(rollout(sol.spec, sol.riccati, sol.tree, args.seed), out / "trace.csv")
    print(f"mean={_num(stats.mean)} std_error={_num(stats.std_error)} V0={_num(sol.value.total)}")
    return 0


def _sweep_point(raw: dict, field: str, value: float, method: str, pi_start: str = "idle") -> dict:
    cfg = dict(raw)
    cfg[field] = value
    try:
        sol = solve(spec_from_mapping(cfg), method=method, pi_start=pi_start)
    except NoPureNash as exc:
        return {"value": value, "status": f"no_pure_nash@stage{exc.stage}", "decisions": None}
    d = sol.decisions
    return {
        "value": value,
        "status": "ok" if sol.converged else "not_converged",
        "decisions": d,
        "path": _decision_rows(sol),
        "V0": sol.value.total,
        "method": sol.method,
    }


def parse_values(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise SpecError("--values is empty")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise SpecError(f"--values: {exc}") from None


def run_sweep(
    raw: dict,
    param: str,
    values: Sequence[float],
    method: str = "auto",
    workers: int = 1,
    pi_start: str = "idle",
) -> list[dict]:
    field = SWEEP_FIELDS[param]
    ordered = sorted(values)
    # validate the base config up front so errors surface as exit 1, not per row
    spec_from_mapping(raw)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, [raw] * len(ordered), [field] * len(ordered), ordered,
                                 [method] * len(ordered), [pi_start] * len(ordered)))
    return [_sweep_point(raw, field, v, method, pi_start) for v in ordered]


def write_sweep(rows: list[dict], param: str, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "decisions_long.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([param, "stage", "i_d", "i_a", "h", "P_trace"])
        for row in rows:
            for path_row in row.get("path") or []:
                w.writerow([_num(row["value"]), *path_row])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([param, "status", "method", "observations", "jammings", "V0"])
        for row in rows:
            d = row["decisions"]
            if d is None:
                w.writerow([_num(row["value"]), row["status"], "", "", "", ""])
                continue
            w.writerow([
                _num(row["value"]), row["status"], row["method"],
                sum(i for i, _ in d), sum(a for _, a in d), _num(row["V0"]),
            ])


def cmd_sweep(args: argparse.Namespace) -> int:
    values = parse_values(args.values)
    with open(args.config, "rb") as fh:
        try:
            raw: dict[str, Any] = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise SpecError(f"parse error: {exc}") from None
    rows = run_sweep(raw, args.param, values, args.method, args.workers, args.pi_start)
    write_sweep(rows, args.param, Path(args.out))
    for row in rows:
        d = row["decisions"]
        if d is None:
            print(f"{args.param}={_num(row['value'])} {row['status']}")
        else:
            print(f"{args.param}={_num(row['value'])} observations={sum(i for i, _ in d)} "
                  f"jammings={sum(a for _, a in d)} V0={_num(row['V0'])} {row['status']}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with config errors; 2 is reserved
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lqgjam", description="Observe/jam LQG game solver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="TOML game spec")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--method", choices=METHODS, default="auto")
        p.add_argument("--pi-start", choices=PI_STARTS, default="idle",
                       help="starting sequences for policy iteration")

    p = sub.add_parser("solve", help="solve a spec and write tree, value and decisions")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo check of the equilibrium value")
    common(p)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true", help="also write replicate 0 as trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="solve once per value of one parameter")
    common(p)
    p.add_argument("--param", required=True, choices=sorted(SWEEP_FIELDS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return _guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
