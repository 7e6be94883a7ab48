"""``schoenbat <subcommand>``: run one experiment and write CSV (and optionally JSON)."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .. import __name__ as package_name
from ..errors import ConfigError
from .config import Experiment, build_config, parse_config, with_overrides
from .experiments import run_experiment, speedups
from .records import to_csv_text, to_json_text

SUBCOMMANDS = {e.value.replace("_", "-"): e for e in Experiment}

PROTOCOL_NOTES = {
    True: "inputs: Q and K pre-SBN normalized (column standardization, Frobenius scaling) before exact/approximate comparison",
    False: "inputs: raw Gaussian Q, K (no pre-SBN)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schoenbat", description="Kernelized attention vs random Maclaurin feature attention")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, experiment in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment.value} experiment")
        p.add_argument("--config", help="flat JSON file of config keys")
        p.add_argument("--kernel", action="append", choices=["exp", "inv", "logi", "trigh", "sqrt"],
                       help="kernel to run (repeatable; default depends on the experiment)")
        p.add_argument("--n", type=int, nargs="+")
        p.add_argument("--d", type=int, nargs="+")
        p.add_argument("--D", type=int, nargs="+")
        p.add_argument("--p", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--maps", type=int)
        p.add_argument("--pairs", type=int)
        p.add_argument("--eps", type=float, nargs="+", help="tail-bound epsilon grid")
        p.add_argument("--S", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float, help="ppSBN epsilon")
        p.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
        p.add_argument("--out", help="CSV path (default: stdout)")
        p.add_argument("--json", action="store_const", const=True,
                       help="also write a JSON mirror next to --out (or print JSON instead of CSV)")
        p.set_defaults(experiment=experiment)
    return parser


def metadata(cfg) -> list[str]:
    keys = ("kernels", "n", "d", "D", "p", "trials", "maps", "seed", "epsilon", "normalize")
    settings = cfg.as_dict()
    return [
        f"{package_name} experiment={cfg.experiment.value}",
        "config " + " ".join(f"{k}={settings[k]}" for k in keys),
        PROTOCOL_NOTES[cfg.normalize],
        "trial=-1 marks rows aggregated over trials; wall_time_s is excluded from determinism comparisons",
    ]


def summarize(cfg, records) -> list[str]:
    lines = []
    if cfg.experiment is Experiment.SPEED_SWEEP:
        for (k, n, d, D), s in sorted(speedups(records).items()):
            lines.append(f"{k:6s} n={n:<6d} d={d:<4d} D={D:<4d} speedup={s:8.3f}")
    checks = [r for r in records if r.metric.startswith("tail_check")]
    if checks:
        failed = [r for r in checks if r.value == 0.0]
        asserted = [r for r in checks if not math.isnan(r.value)]
        lines.append(f"tail bound: {len(asserted) - len(failed)}/{len(asserted)} asserted grid points hold")
        for r in failed:
            lines.append(f"  VIOLATED {r.kernel} D={r.D} {r.metric}")
    margins = [r for r in records if r.metric in ("margin", "attention_margin")]
    if margins:
        worst = min(margins, key=lambda r: r.value)
        lines.append(f"unbiasedness: smallest margin to 4 SE = {worst.value:.3f} ({worst.kernel}, {worst.metric})")
    degenerate = sum(r.degeneracies for r in records)
    if degenerate:
        lines.append(f"degenerate RMFA normalizers clamped: {degenerate}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = parse_config(args.config)
            if cfg.experiment is not args.experiment:
                raise ConfigError(f"config is for {cfg.experiment.value}, subcommand is {args.experiment.value}")
        else:
            cfg = build_config({"experiment": args.experiment.value})
        cfg = with_overrides(
            cfg, kernels=args.kernel, n=args.n, d=args.d, D=args.D, p=args.p, trials=args.trials, maps=args.maps,
            pairs=args.pairs, eps=args.eps, S=args.S, seed=args.seed, epsilon=args.epsilon,
            normalize=args.normalize, out=args.out, json=args.json,
        )
    except ConfigError as exc:
        print(f"schoenbat: {exc}", file=sys.stderr)
        return 2

    records = run_experiment(cfg)
    meta = metadata(cfg)
    if cfg.out:
        Path(cfg.out).write_text(to_csv_text(records, meta))
        if cfg.json:
            Path(cfg.out).with_suffix(".json").write_text(to_json_text(records, meta))
    elif cfg.json:
        sys.stdout.write(to_json_text(records, meta))
    else:
        sys.stdout.write(to_csv_text(records, meta))
    for line in summarize(cfg, records):
        print(line, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
