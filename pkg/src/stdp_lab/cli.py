"""Command-line entry point: ``stdp-lab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path


from . import __version__, gradlink, output
from .config import QUICK, ConfigError, Settings, load_settings, settings_to_dict
from .experiments import (
    DegenerateRegressionError,
    ExperimentConfig,
    dump_example_trace,
    run_events,
    run_rate_dynamics,
    run_rule_agreement,
    run_stdp_curve,
    sequence_rng,
    trace_rng,
)

log = logging.getLogger("stdp_lab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3
EXPERIMENTS = ("stdp-curve", "agreement", "rate-dynamics", "trace")
SUBCOMMANDS = EXPERIMENTS + ("gradcheck", "sgd-equiv", "verify")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; this CLI reserves 2 for runtime failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (fallback: $STDP_LAB_SEED)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, metavar="N", default=os.cpu_count() or 1)
    common.add_argument("--plots", action="store_true", help="also write SVG figures")
    common.add_argument("--sequences", type=int, metavar="N", help="number of rate sequences")
    common.add_argument("--trains", type=int, metavar="N", help="spike trains per sequence")
    common.add_argument("--seq-len", type=int, metavar="N", help="steps per sequence")
    common.add_argument("--quick", action="store_true", help="reduced preset: 100 sequences x 100 trains")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="stdp-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "stdp-curve": "spike-timing curves for the proposed and nearest-neighbour rules",
        "agreement": "nearest-neighbour update binned by proposed-rule update",
        "rate-dynamics": "mean squared postsynaptic slope with and without plasticity",
        "trace": "one example sequence with its weight trajectory",
        "gradcheck": "analytic ds/dW against central differences",
        "sgd-equiv": "rate-rule updates against gradient steps under relaxation",
        "verify": "run every acceptance check; exit 3 on failure",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.quick:
        out.update(QUICK)
    for flag, key in (("sequences", "n_sequences"), ("trains", "n_trains"), ("seq_len", "seq_len")):
        if getattr(args, flag) is not None:
            out[key] = getattr(args, flag)
    if args.seed is not None:
        out["master_seed"] = args.seed
    return out


def write_outputs(cfg: ExperimentConfig, out: Path, which, workers: int = 1, plots: bool = False) -> list[str]:
    """Run the named experiments and write their CSV (and SVG) files."""
    out = Path(out)
    written = []
    events = None
    if "stdp-curve" in which or "agreement" in which:
        events = run_events(cfg, workers)
    if "stdp-curve" in which:
        curves = run_stdp_curve(cfg, events=events)
        output.emit_csv(output.curve_table(*curves), out / "stdp_curve.csv")
        written.append("stdp_curve.csv")
        if plots:
            output.emit_svg_plot(list(curves), out / "stdp_curve.svg")
            written.append("stdp_curve.svg")
    if "agreement" in which:
        agreement = run_rule_agreement(cfg, events=events)
        output.emit_csv(output.agreement_table(agreement), out / "agreement.csv")
        written.append("agreement.csv")
        log.info("agreement: r=%.4f slope=%.4g", agreement.correlation, agreement.slope)
        if plots:
            output.emit_svg_plot(agreement, out / "agreement.svg")
            written.append("agreement.svg")
    if "rate-dynamics" in which:
        report = run_rate_dynamics(cfg, workers)
        output.emit_csv(output.dynamics_table(report), out / "rate_dynamics.csv")
        written.append("rate_dynamics.csv")
    if "trace" in which:
        trace = dump_example_trace(cfg, trace_rng(cfg.master_seed))
        output.emit_csv(output.trace_table(trace), out / "trace.csv")
        written.append("trace.csv")
        if plots:
            output.emit_svg_plot(trace, out / "trace.svg")
            written.append("trace.svg")
    return written


def _gradcheck(settings: Settings, out: Path) -> tuple[list[str], bool]:
    g = settings.gradlink
    rows = []
    for k in range(g.instances):
        rng = sequence_rng(settings.experiment.master_seed, 30_000 + k, 0)
        net = gradlink.random_network(rng, g.n_post, g.n_pre)
        report = gradlink.check_gradient(net, rng.normal(size=g.n_pre), g.h)
        rows.append((k, report.h, report.max_rel_error, float(report.abs_errors.max()), report.finite))
    output.emit_csv(output.Table(["instance", "h", "max_rel_error", "max_abs_error", "finite"], rows), out / "gradcheck.csv")
    worst = max(r[2] for r in rows)
    ok = all(r[4] for r in rows) and worst <= 1e-6
    print(f"gradcheck: max relative error {worst:.3g} over {g.instances} instances ({'ok' if ok else 'FAILED'})")
    return ["gradcheck.csv"], ok


def _sgd_equiv(settings: Settings, out: Path) -> tuple[list[str], bool]:
    g = settings.gradlink
    rng = sequence_rng(settings.experiment.master_seed, 40_000, 0)
    net = gradlink.random_network(rng, g.n_post, g.n_pre)
    s_prev = rng.normal(size=g.n_pre)
    obj = gradlink.Objective(rng.normal(size=g.n_post))
    report = gradlink.sgd_equivalence_run(net, obj, s_prev, relax_steps=g.relax_steps, eps=g.eps, h=g.h)
    rows = [
        (k, float(report.objective[k]), float(report.chain_rel_dev[k]), float(report.fd_rel_dev[k]))
        for k in range(len(report.fd_rel_dev))
    ]
    output.emit_csv(output.Table(["step", "objective", "chain_rel_dev", "fd_rel_dev"], rows), out / "sgd_equiv.csv")
    ok = report.max_fd_rel_dev <= 1e-5 and report.monotone
    print(
        f"sgd-equiv: max relative deviation {report.max_fd_rel_dev:.3g}, "
        f"objective non-increasing: {report.monotone} ({'ok' if ok else 'FAILED'})"
    )
    return ["sgd_equiv.csv"], ok


def write_manifest(out: Path, settings: Settings, command: str, files: list[str], duration: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "master_seed": settings.experiment.master_seed,
        "config": settings_to_dict(settings),
        "outputs": files,
        "duration_s": round(duration, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    try:
        settings = load_settings(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"stdp-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("stdp-lab: configuration error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    cfg = settings.experiment
    out = Path(args.out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            from .acceptance import run_all

            results = run_all(cfg, quick=args.quick, workers=args.workers)
            passed = sum(r.passed for r in results)
            print(f"{passed}/{len(results)} checks passed")
            return EXIT_OK if passed == len(results) else EXIT_ACCEPTANCE
        if args.command == "gradcheck":
            files, ok = _gradcheck(settings, out)
        elif args.command == "sgd-equiv":
            files, ok = _sgd_equiv(settings, out)
        else:
            files, ok = write_outputs(cfg, out, (args.command,), args.workers, args.plots), True
        write_manifest(out, settings, args.command, files, time.perf_counter() - start)
    except (DegenerateRegressionError, gradlink.DivergenceError, FloatingPointError) as exc:
        print(f"stdp-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except output.EmptyPlotError as exc:
        print(f"stdp-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"stdp-lab: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in files:
        print(out / name)
    return EXIT_OK if ok else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
