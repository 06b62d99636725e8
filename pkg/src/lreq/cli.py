"""Command-line front end.

    lreq effects  PROGRAM   type and effect of a program
    lreq mnf      PROGRAM   metric normal form, framing bounds and rewrite trail
    lreq plans    PROGRAM   verdict for every composition plan
    lreq run      PROGRAM   execute under one plan with runtime enforcement
    lreq check    PROGRAM   exit 0 iff some plan is usable

Exit codes: 0 success, 2 parse/type/config error, 3 planning error, 4 runtime
violation, 5 resource cap exceeded.  ``--format machine`` prints one JSON
document with sorted keys.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Sequence

from .config import SCHEDULERS, AnalysisConfig, load_config
from .effects import Arrow, infer, render_type, type_json
from .errors import (
    ExplorationLimit,
    LreqError,
    PlanningError,
    RunError,
    TraceSetOverflow,
)
from .history import render, to_json
from .lang.desugar import desugar
from .lang.parser import parse
from .lang.syntax import Abs, App, Expr
from .interp import (
    Done,
    OutOfFuel,
    Runtime,
    describe,
    explore,
    make_scheduler,
    outcome_json,
    run,
)
from .mnf import normalize
from .plans import (
    Classification,
    Plan,
    analyse_plans,
    behaviour,
    classify,
    enumerate_plans,
    parse_plan,
)
from .trace import render_trace

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PLANNING = 3
EXIT_VIOLATION = 4
EXIT_CAP = 5

USABLE = (Classification.STATICALLY_VALID, Classification.NEEDS_RUNTIME_GUARDS)


def _emit(args: argparse.Namespace, doc: dict, lines: Sequence[str]) -> None:
    if args.format == "machine":
        print(json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2))
    else:
        print("\n".join(lines))
    sys.stdout.flush()


def _config(args: argparse.Namespace) -> AnalysisConfig:
    guards: dict[str, Any] = {}
    for item in args.guard or ():
        name, _, value = item.partition("=")
        table = {"true": True, "false": False, "both": "both"}
        if value.lower() not in table:
            raise LreqError(f"--guard expects NAME=true|false|both, not {item!r}")
        guards[name.strip()] = table[value.lower()]
    return load_config(
        args.config,
        semiring=args.semiring,
        depth=args.depth,
        mu_iters=args.mu_iters,
        fuel=args.fuel,
        seed=args.seed,
        scheduler=args.scheduler,
        guard_mode=args.guard_mode,
        guards=guards,
    )


def _analysed(cfg: AnalysisConfig, prog: Expr):
    t, h = infer(prog, cfg.repo, cfg.F)
    return t, h, behaviour(t, h)


def _select_plan(args: argparse.Namespace, plans: Sequence[Plan]) -> Plan:
    if args.plan is None:
        return plans[0]
    return parse_plan(args.plan, plans)


# -- commands ---------------------------------------------------------------------------


def cmd_effects(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> int:
    t, h = infer(prog, cfg.repo, cfg.F)
    doc = {"command": "effects", "type": type_json(t), "effect": to_json(h),
           "rendered": f"{render_type(t)}, {render(h)}"}
    _emit(args, doc, [doc["rendered"]])
    return EXIT_OK


def cmd_mnf(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> int:
    _, _, h = _analysed(cfg, prog)
    nf = normalize(h, cfg.semiring, cfg.bounds.mu_iters)
    frames = [
        {"index": f.index, "check": str(f.check), "inner": f.inner.to_json(),
         "capped": f.capped.to_json(), "needs_guard": not f.satisfied}
        for f in nf.frames
    ]
    trail = [
        {"rule": s.rule, "path": list(s.path), "before": render(s.before), "after": render(s.after)}
        for s in nf.trail
    ]
    doc = {"command": "mnf", "bound": nf.bound.to_json(), "body": render(nf.body),
           "frames": frames, "trail": trail}
    lines = [f"bound: {nf.bound}"]
    for f in nf.frames:
        note = "  needs runtime guard" if not f.satisfied else ""
        lines.append(f"frame {f.index}: {f.check}  body {f.inner}  capped {f.capped}{note}")
    lines.append(f"normal form: {render(nf.expr)}")
    if args.trail:
        lines.append("trail:")
        lines += [f"  {s.rule:<7} {render(s.before)}  =>  {render(s.after)}" for s in nf.trail]
    _emit(args, doc, lines)
    return EXIT_OK


def _verdict_line(label: str, v) -> str:
    frames = " ".join(f"{f.inner}->{f.capped}" for f in v.frames) or "-"
    extra = ""
    if v.security.witness is not None:
        w = v.security.witness
        extra = f"  violates {w.policy}: {render_trace(w.prefix)}"
    elif v.security.overflow is not None:
        extra = f"  trace set overflow at {v.security.overflow}"
    return f"{label:<6} {v.classification!s:<19} bound {v.bound!s:<5} frames {frames}  {v.plan or ''}{extra}"


def cmd_plans(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> int:
    opts = dict(mu_iters=cfg.bounds.mu_iters, trace_cap=cfg.bounds.trace_cap)
    plans = enumerate_plans(prog, cfg.repo)
    selected = [parse_plan(args.plan, plans)] if args.plan is not None else plans
    total = classify(prog, None, cfg.repo, cfg.F, cfg.policies, cfg.bounds.depth, **opts)
    verdicts = analyse_plans(prog, cfg.repo, cfg.F, cfg.policies, cfg.bounds.depth,
                             plans=selected, **opts)
    doc = {"command": "plans", "sum": total.to_json(),
           "plans": [dict(v.to_json(), index=plans.index(v.plan)) for v in verdicts]}
    lines = [_verdict_line("sum", total)]
    lines += [_verdict_line(f"#{plans.index(v.plan)}", v) for v in verdicts]
    _emit(args, doc, lines)
    return EXIT_OK


def _runnable(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> Expr:
    """A function program is applied to ``--arg`` (default ``*``)."""
    if isinstance(desugar(prog), Abs):
        return App(prog, parse(args.arg, cfg.signature))
    return prog


def cmd_run(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> int:
    plans = enumerate_plans(prog, cfg.repo)
    plan = _select_plan(args, plans)
    term = _runnable(args, cfg, prog)
    rt = Runtime(cfg.repo, cfg.F, plan, cfg.guards, cfg.policies, cfg.guard_mode, cfg.bounds.mu_iters)
    doc: dict[str, Any] = {"command": "run", "plan": plan.mapping, "scheduler": cfg.scheduler,
                           "seed": cfg.seed, "guard_mode": cfg.guard_mode}
    if cfg.scheduler == "exhaustive":
        outcomes = explore(term, rt, cfg.bounds.fuel, cfg.bounds.state_cap)
        doc["outcomes"] = [outcome_json(o) for o in outcomes]
        lines = [f"plan: {plan}"] + [describe(o) for o in outcomes]
    else:
        o = run(term, rt, make_scheduler(cfg.scheduler, cfg.seed), cfg.bounds.fuel)
        outcomes = [o]
        doc["outcome"] = outcome_json(o)
        lines = [f"plan: {plan}"] + [str(r) for r in o.log] + [describe(o)]
        if isinstance(o, Done):
            lines += [f"frame {f.check}: actual {f.actual}  guard {f.guard}" for f in o.frames]
    _emit(args, doc, lines)
    if any(isinstance(o, OutOfFuel) for o in outcomes):
        return EXIT_CAP
    if any(not isinstance(o, Done) for o in outcomes):
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_check(args: argparse.Namespace, cfg: AnalysisConfig, prog: Expr) -> int:
    verdicts = analyse_plans(prog, cfg.repo, cfg.F, cfg.policies, cfg.bounds.depth,
                             mu_iters=cfg.bounds.mu_iters, trace_cap=cfg.bounds.trace_cap)
    counts = {str(c): sum(v.classification == c for v in verdicts) for c in Classification}
    usable = [i for i, v in enumerate(verdicts) if v.classification in USABLE]
    doc = {"command": "check", "plans": len(verdicts), "counts": counts, "usable": usable}
    lines = [f"{len(verdicts)} plans: " + ", ".join(f"{k} {n}" for k, n in counts.items()),
             f"usable plans: {len(usable)}"]
    _emit(args, doc, lines)
    if usable:
        return EXIT_OK
    if counts[str(Classification.INCONCLUSIVE)]:
        return EXIT_CAP
    return EXIT_PLANNING


COMMANDS = {
    "effects": (cmd_effects, "type and effect of a program"),
    "mnf": (cmd_mnf, "metric normal form and framing bounds"),
    "plans": (cmd_plans, "classify every composition plan"),
    "run": (cmd_run, "execute under one plan with runtime enforcement"),
    "check": (cmd_check, "exit 0 iff some plan is usable"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="analysis configuration (default: the BestTravel corpus)")
    common.add_argument("--semiring", help="semiring name, overriding the configuration")
    common.add_argument("--depth", type=int, help="unfolding depth of recursion in trace sets")
    common.add_argument("--mu-iters", type=int, help="iteration cap for recursion bounds")
    common.add_argument("--fuel", type=int, help="step budget of a run")
    common.add_argument("--seed", type=int, help="seed of the seeded scheduler")
    common.add_argument("--scheduler", choices=SCHEDULERS)
    common.add_argument("--plan", help="plan index or rho=location,... list")
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--guard", action="append", metavar="NAME=VALUE",
                        help="override a guard: true, false or both (repeatable)")
    common.add_argument("--guard-mode", choices=("predictive", "actual"))
    common.add_argument("--arg", default="*", help="argument for a function program (default *)")
    common.add_argument("--trail", action="store_true", help="mnf: print the rewrite trail")

    parser = argparse.ArgumentParser(prog="lreq", description="Metric-aware secure service orchestration.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("program", help="program file (also looked up next to the configuration)")
    return parser


def exit_code(exc: LreqError) -> int:
    if isinstance(exc, (TraceSetOverflow, ExplorationLimit)):
        return EXIT_CAP
    if isinstance(exc, PlanningError):
        return EXIT_PLANNING
    if isinstance(exc, RunError):
        return EXIT_VIOLATION
    return EXIT_INPUT


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        prog = cfg.load_program(args.program)
        return COMMANDS[args.command][0](args, cfg, prog)
    except LreqError as exc:
        print(f"lreq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    except BrokenPipeError:
        # The reader went away (e.g. ``| head``); silence the final flush.
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
