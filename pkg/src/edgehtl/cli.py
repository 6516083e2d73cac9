"""Command line entry point: ``run``, ``list-presets`` and ``compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig, apply_overrides, list_presets, load_config, preset
from .errors import ConfigurationError
from .experiment import SYNTHETIC, compare, read_summary, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

log = logging.getLogger("edgehtl")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgehtl", description="Edge hypothesis-transfer-learning simulator")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replicated experiment")
    run.add_argument("--config", help="TOML file with dotted keys")
    run.add_argument("--preset", help="start from a named preset (see list-presets)")
    run.add_argument("--seed", type=int)
    run.add_argument("--replications", type=int)
    run.add_argument("--dataset", help=f"CovType file, or '{SYNTHETIC}' for the built-in surrogate")
    run.add_argument("--baseline", help="summary.json of a reference run to compute gain against")
    run.add_argument("--emit-messages", action="store_true", help="write messages_rep<r>.csv")
    run.add_argument("--emit-raw", action="store_true", help="write per-replication windows_rep<r>.csv")
    run.add_argument("--jobs", type=int, default=1, help="replications run in parallel")
    run.add_argument("--out", required=True, help="output directory")

    sub.add_parser("list-presets", help="print preset names")

    cmp_ = sub.add_parser("compare", help="energy gain and accuracy loss of B relative to A")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    return p


def _resolve_config(args) -> ExperimentConfig:
    if args.config is None and args.preset is None:
        raise ConfigurationError("run needs --config, --preset or both")
    cfg = preset(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.dataset is not None:
        overrides["dataset_path"] = args.dataset
    return apply_overrides(cfg, overrides) if overrides else cfg


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    baseline = read_summary(args.baseline) if args.baseline else None
    out = run_experiment(cfg, args.out, args.emit_messages, args.emit_raw, baseline, jobs=args.jobs)
    s = out.summary
    line = f"{cfg.name}: f1={s['f1']:.4f} total_mJ={s['total_mJ']:.1f}"
    if "baseline" in s:
        line += f" gain={s['baseline']['gain_pct']:.1f}% loss={s['baseline']['accuracy_loss_pp']:.2f}pp"
    print(line)
    return EXIT_OK


def _cmd_compare(args) -> int:
    report = compare(read_summary(args.a), read_summary(args.b))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.command == "list-presets":
            print("\n".join(list_presets()))
            return EXIT_OK
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_run(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
