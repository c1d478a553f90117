"""Command-line front end.

Subcommands: solve-cosrp, solve-cmdp, simulate, sweep, reproduce, bound.
Every CSV starts with a ``#`` line holding the tool version and the fully
resolved configuration, then a header row. The worker count for sweeps and
replications comes from the ``VAOI_WORKERS`` environment variable.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import __version__, cmdp, experiments
from .config import SWEEP_PARAMETERS, ExperimentConfig, SweepSpec, load_config
from .cosrp import CoSrpPolicy, Scheme, build_program, format_policy
from .errors import ConvergenceError, InvalidInputError, PolicyFormatError, StateSpaceTooLargeError
from .model import RateFunction, enumerate_joint_states
from .optimizer import BracketError, format_solution, parse_solution, solve
from .sim import adapter_for, replicate, simulate
from .svg import line_chart

log = logging.getLogger("vaoi_noma")

EXIT_OK = 0
EXIT_MISS = 1  # a reproduction cell outside its tolerance
EXIT_INPUT = 2  # bad config, policy file or arguments
EXIT_SOLVER = 3  # solver failed to converge or bracket

REPRODUCE_TARGETS = ("table1", "fig1", "fig_simul_prob", "fig_lambda", "fig_region")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: str, header: Sequence[str], rows, provenance: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# vaoi_noma {__version__} config={json.dumps(provenance, sort_keys=True, separators=(',', ':'))}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _out_dir(args, cfg: ExperimentConfig | None = None) -> str:
    if args.out:
        return args.out
    if cfg is not None and cfg.out_dir:
        return cfg.out_dir
    return "."


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise InvalidInputError("--config is required for this command")
    cfg = load_config(args.config)
    if args.scheme:
        cfg = cfg.with_(scheme=Scheme(args.scheme))
    if args.seed is not None:
        cfg = cfg.with_(sim=replace(cfg.sim, seed=args.seed))
    return cfg


def _provenance(cfg: ExperimentConfig | None, **extra) -> dict:
    out = {} if cfg is None else cfg.resolved()
    out.update(extra)
    return out


def _zero_budget(cfg: ExperimentConfig) -> bool:
    return cfg.pbar == 0


def _starved(cfg: ExperimentConfig) -> bool:
    """Some weighted user has packets that a zero budget can never deliver."""
    return any(s.lam > 0 and s.weight > 0 for s in cfg.streams)


# -- subcommands ----------------------------------------------------------------------

def cmd_solve_cosrp(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    model, streams = cfg.channel, cfg.streams
    if _zero_budget(cfg):
        n_states = len(enumerate_joint_states(model))
        policy = CoSrpPolicy.constant(n_states, len(streams), 0, cfg.scheme)
        objective = math.inf if _starved(cfg) else 0.0
        if objective == math.inf:
            log.warning("zero power budget: nothing can be delivered, average VAoI is unbounded")
        _write_text(os.path.join(out, f"cosrp_policy_{cfg.scheme.value}.csv"),
                    format_policy(policy, model) + f"objective={objective}, power=0, theta=0, psi_inf=0\n")
        row = [cfg.scheme.value, cfg.pbar, objective, 0.0, math.inf, 0]
    else:
        sol = solve(build_program(model, streams, cfg.pbar, cfg.scheme), cfg.solver)
        _write_text(os.path.join(out, f"cosrp_policy_{cfg.scheme.value}.csv"), format_solution(sol, model))
        row = [cfg.scheme.value, cfg.pbar, sol.objective, sol.achieved_power, sol.theta,
               sol.diagnostics.get("bisect_iters", 0)]
        if not sol.diagnostics.get("converged", True):
            log.warning("budget met only up to a power jump; reported power is below the budget")
    write_csv(os.path.join(out, "solve_cosrp.csv"), ["scheme", "pbar", "objective", "power", "theta", "iters"],
              [row], _provenance(cfg))
    print(",".join(_fmt(v) for v in row))
    return EXIT_OK


def _parse_thetas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"--thetas expects comma-separated numbers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise InvalidInputError("--thetas needs non-negative prices")
    return sorted(values)


def cmd_solve_cmdp(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    space = cmdp.StateSpace(cfg.channel, cfg.streams, cfg.mdp, cfg.scheme)
    prov = _provenance(cfg)
    if args.thetas:
        rows = []
        v0 = None
        for theta in _parse_thetas(args.thetas):
            vf, pol = cmdp.value_iteration(theta, space, v0)
            v0 = vf.values
            ev = cmdp.evaluate_policy(pol, space)
            rows.append([theta, ev.vaoi, ev.power, ev.tail_mass, len(cmdp.check_threshold(vf, space))])
        write_csv(os.path.join(out, "solve_cmdp_thetas.csv"),
                  ["theta", "vaoi", "power", "tail_mass", "threshold_violations"], rows, prov)
        for r in rows:
            print(",".join(_fmt(v) for v in r))
        return EXIT_OK
    header = ["pbar", "gamma", "delta_max", "theta", "vaoi", "power", "tail_mass", "threshold_violations"]
    if _zero_budget(cfg):
        never = cmdp.CmdpPolicy(np.zeros((space.n_delta, space.n_channel), dtype=int), space.masks, space.scheme)
        ev = cmdp.evaluate_policy(never, space)
        vaoi = math.inf if _starved(cfg) else 0.0
        if vaoi == math.inf:
            log.warning("zero power budget: nothing can be delivered, average VAoI is unbounded")
        _write_text(os.path.join(out, "cmdp_policy.csv"), cmdp.format_policy_dump(never, space))
        row = [cfg.pbar, cfg.mdp.gamma, cfg.mdp.delta_max, math.inf, vaoi, 0.0, ev.tail_mass, 0]
    else:
        sol = cmdp.bisect_theta(cfg.pbar, space)
        violations = len(cmdp.check_threshold(sol.value_function, space))
        _write_text(os.path.join(out, "cmdp_policy.csv"), cmdp.format_policy_dump(sol.policy, space))
        _write_text(os.path.join(out, "cmdp_values.csv"), cmdp.format_value_dump(sol.value_function, space))
        row = [cfg.pbar, cfg.mdp.gamma, cfg.mdp.delta_max, sol.theta_star, sol.average_vaoi, sol.average_power,
               sol.tail_mass, violations]
        if not sol.reliable:
            log.warning("stationary mass %.3g sits at the VAoI cap; raise delta_max", sol.tail_mass)
    write_csv(os.path.join(out, "solve_cmdp.csv"), header, [row], prov)
    print(",".join(_fmt(v) for v in row))
    return EXIT_OK


def _read_policy(path: str, cfg: ExperimentConfig):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read policy file {path}: {exc}") from None
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")), "")
    if first.startswith("delta_1"):
        space = cmdp.StateSpace(cfg.channel, cfg.streams, cfg.mdp, cfg.scheme)
        return cmdp.parse_policy_dump(text, space), cfg.mdp.delta_max
    policy, _ = parse_solution(text, cfg.channel)
    return policy, None


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    if not args.policy:
        raise InvalidInputError("simulate needs --policy FILE")
    policy, delta_max = _read_policy(args.policy, cfg)
    sim_cfg = cfg.sim
    if args.trace:
        sim_cfg = replace(sim_cfg, trace_slots=args.trace)
    adapter = adapter_for(policy, len(cfg.streams), delta_max)
    if sim_cfg.replications > 1:
        m = replicate(cfg.channel, cfg.streams, RateFunction.LOG1P, adapter, sim_cfg)
    else:
        m = simulate(cfg.channel, cfg.streams, RateFunction.LOG1P, adapter, sim_cfg)
    n = len(cfg.streams)
    header = [f"vaoi_user_{i + 1}" for i in range(n)] + ["vaoi_weighted", "power", "se_vaoi", "se_power",
                                                         "slots", "reps", "seed"]
    row = list(m.per_user_vaoi) + [m.weighted_vaoi, m.power, m.se_weighted, m.se_power, m.slots, m.reps, m.seed]
    write_csv(os.path.join(out, "simulate.csv"), header, [row], _provenance(cfg, policy=os.path.basename(args.policy)))
    hist_rows = [[d] + [int(m.histogram[i, d]) for i in range(n)] for d in range(m.histogram.shape[1])]
    write_csv(os.path.join(out, "simulate_histogram.csv"), ["vaoi"] + [f"count_user_{i + 1}" for i in range(n)],
              hist_rows, _provenance(cfg, note=f"last bin collects VAoI >= {sim_cfg.hist_max}"))
    if m.trace is not None:
        _write_text(os.path.join(out, "trace.txt"), m.trace)
    print(",".join(_fmt(v) for v in row))
    return EXIT_OK


def _sweep_spec(args, cfg: ExperimentConfig) -> SweepSpec:
    if args.param:
        if args.start is None or args.stop is None or args.steps is None:
            raise InvalidInputError("--param needs --from, --to and --steps")
        return SweepSpec(args.param, args.start, args.stop, args.steps)
    if cfg.sweep is None:
        raise InvalidInputError("no sweep given: add a [sweep] section or pass --param/--from/--to/--steps")
    return cfg.sweep


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    spec = _sweep_spec(args, cfg)
    inst = experiments.Instance(cfg.channel, cfg.streams)
    header, rows = experiments.sweep(inst, cfg.pbar, cfg.scheme, spec.parameter, spec.grid(), cfg.solver, cfg.mdp,
                                     with_cmdp=args.cmdp)
    write_csv(os.path.join(out, "sweep.csv"), header, rows, _provenance(cfg, sweep=_spec_dict(spec)))
    series = {f"CO-SRP {cfg.scheme.value.upper()}": ([r[1] for r in rows], [r[3] for r in rows])}
    if args.cmdp:
        series[f"CMDP {cfg.scheme.value.upper()}"] = ([r[1] for r in rows], [r[7] for r in rows])
    _write_text(os.path.join(out, "sweep.svg"), line_chart(series, spec.parameter, "weighted average VAoI"))
    for r in rows:
        print(",".join(_fmt(v) for v in r))
    return EXIT_OK


def _spec_dict(spec: SweepSpec) -> dict:
    return {"parameter": spec.parameter, "from": spec.start, "to": spec.stop, "steps": spec.steps}


def _grid(default: Sequence[float], points: int | None) -> list[float]:
    if not points:
        return [float(v) for v in default]
    return [float(v) for v in np.linspace(default[0], default[-1], points)]


def cmd_reproduce(args) -> int:
    out = args.out or "."
    target = args.target
    prov = {"target": target}
    status = EXIT_OK
    if target == "table1":
        header, rows = experiments.table1()
        write_csv(os.path.join(out, "table1.csv"), header, rows, prov)
        for r in rows:
            print(",".join(_fmt(v) for v in r))
        misses = sum((1 - r[-2]) + (1 - r[-1]) for r in rows)
        if misses:
            log.error("%d Table I cell(s) outside tolerance", misses)
            status = EXIT_MISS
    elif target == "fig1":
        pbars = _grid(experiments.FIG1_PBARS, args.points)
        header, rows = experiments.fig1(pbars, with_cmdp=not args.no_cmdp)
        write_csv(os.path.join(out, "fig1.csv"), header, rows, dict(prov, cmdp=not args.no_cmdp))
        series = {"CO-SRP NOMA": (pbars, [r[1] for r in rows]), "CO-SRP TDMA": (pbars, [r[3] for r in rows])}
        if not args.no_cmdp:
            series["CMDP NOMA"] = (pbars, [r[5] for r in rows])
            series["CMDP TDMA"] = (pbars, [r[8] for r in rows])
        _write_text(os.path.join(out, "fig1.svg"), line_chart(series, "average power budget", "weighted average VAoI"))
    elif target == "fig_simul_prob":
        pbars = _grid(experiments.FIG_SIMUL_PBARS, args.points)
        header, rows = experiments.fig_simul_prob(pbars)
        write_csv(os.path.join(out, "fig_simul_prob.csv"), header, rows, prov)
        series = {f"P(bad)={b:g}": (pbars, [r[2] for r in rows if r[1] == b]) for b in experiments.FIG_SIMUL_PBAD}
        _write_text(os.path.join(out, "fig_simul_prob.svg"),
                    line_chart(series, "average power budget", "probability of serving both users"))
    elif target == "fig_lambda":
        lams = _grid(experiments.FIG_LAMBDA_GRID, args.points)
        header, rows = experiments.fig_lambda(lams)
        write_csv(os.path.join(out, "fig_lambda.csv"), header, rows, prov)
        series = {}
        for p in experiments.FIG_LAMBDA_PBARS:
            series[f"NOMA P={p:g}"] = (lams, [r[2] for r in rows if r[1] == p])
            series[f"TDMA P={p:g}"] = (lams, [r[3] for r in rows if r[1] == p])
        _write_text(os.path.join(out, "fig_lambda.svg"),
                    line_chart(series, "arrival probability", "weighted average VAoI"))
    elif target == "fig_region":
        header, rows = experiments.fig_region(args.points or experiments.FIG_REGION_STEPS)
        write_csv(os.path.join(out, "fig_region.csv"), header, rows, prov)
        series = {"NOMA": ([r[2] for r in rows], [r[3] for r in rows]),
                  "TDMA": ([r[4] for r in rows], [r[5] for r in rows])}
        _write_text(os.path.join(out, "fig_region.svg"), line_chart(series, "VAoI user 1", "VAoI user 2"))
    if target != "table1":
        for r in rows:
            print(",".join(_fmt(v) for v in r))
    return status


def cmd_bound(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    if _zero_budget(cfg):
        raise InvalidInputError("the bound needs a positive power budget")
    inst = experiments.Instance(cfg.channel, cfg.streams)
    row = experiments.bound_row(inst, cfg.pbar, cfg.scheme, cfg.solver, cfg.mdp if args.cmdp else None)
    write_csv(os.path.join(out, "bound.csv"), experiments.BOUND_HEADER, [row], _provenance(cfg))
    print(",".join(_fmt(v) for v in row))
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------

def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment INI file")
    common.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir or .)")
    common.add_argument("--seed", type=_seed, metavar="U64", help="override the simulation seed")
    common.add_argument("--scheme", choices=[s.value for s in Scheme], help="override the access scheme")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="vaoi-noma", description="VAoI-optimal scheduling over NOMA broadcast.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-cosrp", parents=[common], help="optimal channel-only randomized policy")
    p.set_defaults(func=cmd_solve_cosrp)

    p = sub.add_parser("solve-cmdp", parents=[common], help="constrained MDP policy by price bisection")
    p.add_argument("--thetas", metavar="LIST", help="evaluate the greedy policy at these prices instead")
    p.set_defaults(func=cmd_solve_cmdp)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run of a saved policy")
    p.add_argument("--policy", metavar="FILE", help="policy written by solve-cosrp or solve-cmdp")
    p.add_argument("--trace", type=int, default=0, metavar="SLOTS", help="write the first SLOTS slots (<= 10000)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="solve along a parameter grid")
    p.add_argument("--param", choices=SWEEP_PARAMETERS)
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--cmdp", action="store_true", help="also solve the constrained MDP at each point")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", parents=[common], help="regenerate a reference table or figure")
    p.add_argument("target", choices=REPRODUCE_TARGETS)
    p.add_argument("--points", type=int, metavar="N", help="coarser grid with N points")
    p.add_argument("--no-cmdp", action="store_true", help="fig1 without the constrained MDP curves")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("bound", parents=[common], help="CO-SRP value and the implied lower bound")
    p.add_argument("--cmdp", action="store_true", help="place the constrained MDP value between them")
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (InvalidInputError, PolicyFormatError, StateSpaceTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, BracketError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
