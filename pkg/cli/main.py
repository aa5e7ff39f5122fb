"""
Command-line front door: python -m cli.main <command> MODEL.json [options]

Exit status: 0 on success, 1 on numerical/simulation failure or a failed
comparison, 2 for an unreadable or invalid model, 3 when an analytic
operation is asked for outside its regime.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence

import pandas as pd

from config import settings
from mxmc import catastrophe, inversion, resurrect, simulator, stopped
from mxmc.errors import GateError, ModelValidationError, MxmcError
from mxmc.model import VARIANTS, QueueModel, load_model
from mxmc.reports import report_frame, write_csv, write_json
from mxmc.roots import classify_regime, root_u
from utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_MODEL = 2
EXIT_GATE = 3

STATIONARY_STATES = 6


@dataclass(frozen=True)
class ComparisonVerdict:
    quantity: str
    analytic: float
    estimate: float
    std_error: float
    z: float
    passed: bool


def verdict(quantity: str, analytic: float, est: simulator.SimEstimate, threshold: Optional[float] = None) -> ComparisonVerdict:
    """Pass iff |z| <= threshold; an infinite analytic value never passes."""
    threshold = settings.COMPARE_Z_THRESHOLD if threshold is None else threshold
    if math.isinf(analytic):
        return ComparisonVerdict(quantity, analytic, est.point, est.std_error, math.inf, False)
    diff = est.point - analytic
    if est.std_error > 0:
        z = diff / est.std_error
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return ComparisonVerdict(quantity, analytic, est.point, est.std_error, z, abs(z) <= threshold)


# ---------------------------------------------------------------------- #
# Commands                                                                #
# ---------------------------------------------------------------------- #


def cmd_validate(model: QueueModel, args) -> dict:
    regime = classify_regime(model.without_catastrophes())
    return {
        "model": model.to_dict(),
        "b1": model.b1,
        "drift": model.drift,
        "regime": regime.value,
        "u": root_u(model).value,
        "is_mmc": model.is_mmc,
    }


def cmd_analyze(model: QueueModel, args):
    if model.beta == 0:
        report = resurrect.equilibrium(model, J=args.J)
    else:
        report = catastrophe.equilibrium(model, J=args.J)
    if args.format == "csv":
        return resurrect.equilibrium_report_frame(report)
    return {
        "routing": "resurrect" if model.beta == 0 else "catastrophe",
        "classification": report.classification,
        "pi": report.pi,
        "tail_mass": report.tail_mass,
        "EN": report.EN,
        "ELw": report.ELw,
        "busy_period": report.mean_busy_period,
        "mean_busy_period": report.mean_busy_period,
        "extras": report.extras,
    }


def cmd_extinction(model: QueueModel, args):
    report = stopped.extinction_report(model.without_catastrophes(), args.k, args.J)
    if args.format == "csv":
        return pd.DataFrame({"state": range(1, len(report.m_star) + 1), "m_star": report.m_star})
    return report


def cmd_catastrophe(model: QueueModel, args) -> dict:
    return catastrophe.catastrophe_report(model, args.j)


def cmd_invert(model: QueueModel, args) -> pd.DataFrame:
    variant = args.variant or _default_variant(model)
    if args.quantity == "transition":
        transform = inversion.transition_transform(model, variant, args.i, args.j)
        kind, probability = inversion.InversionKind.FUNCTION, True
    elif args.quantity == "extinction":
        transform = lambda lam: stopped.extinction_time_lt(model, args.i, lam)  # noqa: E731
        kind, probability = inversion.InversionKind.DISTRIBUTION, True
    else:
        transform = lambda lam: catastrophe.catastrophe_time_transform(model, args.i, lam)  # noqa: E731
        kind, probability = inversion.InversionKind.DENSITY, False
    return inversion.invert_grid(transform, args.t, args.order, kind, probability)


def _default_variant(model: QueueModel) -> str:
    return "resurrect" if model.beta == 0 else "catastrophe"


def _sim_config(model: QueueModel, args, variant: str, x0: int) -> simulator.SimConfig:
    overrides = {}
    for name, key in (("horizon", "horizon"), ("reps", "replications"), ("seed", "seed"), ("workers", "workers")):
        value = getattr(args, name, None)
        if value is not None:
            overrides[key] = value
    return simulator.SimConfig.from_settings(variant, x0, **overrides)


def _stat_variant(model: QueueModel, stat: str, requested: Optional[str]) -> str:
    if requested:
        return requested
    return {
        "mean_busy_period": "resurrect",
        "extinction_prob": "stopped",
        "mean_extinction_time": "stopped",
        "mean_catastrophe_time": "catastrophe",
        "var_catastrophe_time": "catastrophe",
    }.get(stat, _default_variant(model))


def _start_state(stat: str, args) -> int:
    if stat in ("extinction_prob", "mean_extinction_time"):
        return args.k
    if stat in ("mean_catastrophe_time", "var_catastrophe_time"):
        return args.j
    if stat == "p_ij":
        return args.i
    return 0


def _stationary_target(model: QueueModel):
    if model.beta == 0:
        return resurrect.equilibrium(model).pi
    return catastrophe.equilibrium(model).pi


def _sim_params(model: QueueModel, stat: str, args) -> dict:
    if stat == "p_ij":
        return {"j": args.j, "t": args.t[0]}
    if stat == "extinction_prob":
        return {"T": args.T} if args.T is not None else {}
    if stat == "stationary":
        return {"target": _stationary_target(model)}
    return {}


def cmd_simulate(model: QueueModel, args) -> simulator.SimEstimate:
    stat = args.stat
    variant = _stat_variant(model, stat, args.variant)
    config = _sim_config(model, args, variant, _start_state(stat, args))
    return simulator.estimate(model, config, stat, **_sim_params(model, stat, args))


def _analytic(model: QueueModel, stat: str, variant: str, args) -> float:
    if stat == "mean_busy_period":
        return resurrect.mean_busy_period(model.without_catastrophes())
    if stat == "extinction_prob":
        return stopped.extinction_probability(model, args.k)
    if stat == "mean_extinction_time":
        return stopped.mean_extinction_time(model, args.k)
    if stat == "mean_catastrophe_time":
        return catastrophe.catastrophe_time_moments(model, args.j).mean
    if stat == "var_catastrophe_time":
        return catastrophe.catastrophe_time_moments(model, args.j).variance
    if stat == "p_ij":
        return inversion.transition_probability(model, variant, args.i, args.j, args.t[0])
    raise GateError("bad_statistic", stat)


def cmd_compare(model: QueueModel, args) -> List[ComparisonVerdict]:
    stat = args.stat
    variant = _stat_variant(model, stat, args.variant)
    config = _sim_config(model, args, variant, _start_state(stat, args))

    if stat == "stationary":
        target = _stationary_target(model)
        occ = simulator.occupancy(model, config)
        verdicts = []
        for k in range(min(STATIONARY_STATES, len(target))):
            p = float(occ.probabilities[k]) if k < len(occ.probabilities) else 0.0
            se = float(occ.std_errors[k]) if k < len(occ.std_errors) else 0.0
            est = simulator.SimEstimate(p, se, occ.batches, config.seed)
            verdicts.append(verdict(f"pi_{k}", target[k], est))
        return verdicts

    analytic = _analytic(model, stat, variant, args)
    est = simulator.estimate(model, config, stat, **_sim_params(model, stat, args))
    return [verdict(stat, analytic, est)]


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "extinction": cmd_extinction,
    "catastrophe": cmd_catastrophe,
    "invert": cmd_invert,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------------- #
# Parser                                                                  #
# ---------------------------------------------------------------------- #


def _count(text: str) -> int:
    # accepts 1e6 as well as 1000000
    return int(float(text))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--out", default=None, help="write the report here instead of stdout only")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--stat", choices=simulator.STATISTICS, required=True)
    sim.add_argument("--variant", choices=VARIANTS, default=None)
    sim.add_argument("--i", type=int, default=1)
    sim.add_argument("--j", type=int, default=0)
    sim.add_argument("--k", type=int, default=1)
    sim.add_argument("--t", type=float, nargs="+", default=[1.0])
    sim.add_argument("--T", type=float, default=None, help="extinction_prob time limit")
    sim.add_argument("--horizon", type=float, default=None)
    sim.add_argument("--reps", type=_count, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--workers", type=int, default=None)

    parser = argparse.ArgumentParser(prog="mxmc", description="M^X/M/c queue with resurrection and catastrophes")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="validate a model file")

    p = sub.add_parser("analyze", parents=[common], help="classification, equilibrium and moments")
    p.add_argument("--J", type=int, default=None, help="fixed truncation")

    p = sub.add_parser("extinction", parents=[common], help="extinction probability and times")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--J", type=int, default=20)

    p = sub.add_parser("catastrophe", parents=[common], help="first catastrophe time and asymptotes")
    p.add_argument("--j", type=int, default=0)

    p = sub.add_parser("invert", parents=[common], help="Gaver-Stehfest inversion on a t-grid")
    p.add_argument("--quantity", choices=("transition", "extinction", "catastrophe_density"), default="transition")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--i", type=int, default=0)
    p.add_argument("--j", type=int, default=0)
    p.add_argument("--t", type=float, nargs="+", required=True)
    p.add_argument("--order", type=int, default=None)

    sub.add_parser("simulate", parents=[common, sim], help="Monte-Carlo estimate with standard error")
    sub.add_parser("compare", parents=[common, sim], help="analytic value against simulation")
    return parser


def _emit(result, args) -> None:
    if args.format == "csv":
        text = write_csv(report_frame(result), args.out)
    else:
        text = write_json(result, args.out)
    print(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    logger.info("🎯 mxmc %s %s", args.command, args.model)

    try:
        model = load_model(args.model)
        result = COMMANDS[args.command](model, args)
    except ModelValidationError as exc:
        logger.error("❌ %s", exc)
        print(str(exc), file=sys.stderr)
        return EXIT_MODEL
    except GateError as exc:
        logger.error("❌ %s", exc)
        print(str(exc), file=sys.stderr)
        return EXIT_GATE
    except MxmcError as exc:
        logger.error("❌ %s", exc)
        print(str(exc), file=sys.stderr)
        return EXIT_FAILED

    _emit(result, args)
    if args.command == "compare":
        failed = [v.quantity for v in result if not v.passed]
        if failed:
            logger.warning("⚠️ Comparison failed for %s", ", ".join(failed))
            return EXIT_FAILED
        logger.info("✅ All %d comparisons passed", len(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
