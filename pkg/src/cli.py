"""
Command Line Interface
----------------------
Entry point for the experiment pipeline:

    python -m src.cli generate --quick
    python -m src.cli train    --config configs/reference.yaml
    python -m src.cli sweep    --quick --seed 7 --out data/runs/quick
    python -m src.cli report   --out data/runs/quick

Every flag can also be set through a CHANPRED_* environment variable; the
command line wins when both are given.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from src.config import ExperimentConfig, apply_overrides, load_config, quick_profile, reference_profile
from src.dataset import generate_dataset
from src.exceptions import ChannelPredError
from src.log import configure_logging
from src.sweep import read_results, run_sweep, train_models

logger = logging.getLogger(__name__)

ENV_PREFIX = "CHANPRED_"
VERBS = ("generate", "train", "sweep", "report")


def _split_list(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def _env(name: str) -> Optional[str]:
    value = os.environ.get(ENV_PREFIX + name)
    return value if value not in (None, "") else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chanpred", description="UL/DL channel prediction experiments")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--quick", action="store_true", default=None, help="CI-scale profile")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--modes", help="Comma-separated: interpolation,open_loop,closed_loop,adaptive")
    parser.add_argument("--estimators", help="LS, LSMMSE or both")
    parser.add_argument("--ssnr", help="Comma-separated SSNR values in dB")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file or profile first, then env overrides, then flags."""
    config_path = args.config or _env("CONFIG")
    quick = args.quick if args.quick is not None else (_env("QUICK") or "").lower() in ("1", "true", "yes")

    if config_path:
        config = load_config(config_path)
        if quick:
            config = quick_profile(**config.model_dump(mode="json", exclude_unset=True))
    else:
        config = quick_profile() if quick else reference_profile()

    seed = args.seed if args.seed is not None else _env("SEED")
    ssnr = _split_list(args.ssnr or _env("SSNR"))
    return apply_overrides(
        config,
        seed=int(seed) if seed is not None else None,
        output_dir=args.out or _env("OUT"),
        modes=_split_list(args.modes or _env("MODES")),
        estimator=args.estimators or _env("ESTIMATORS"),
        ssnr_db=[float(v) for v in ssnr] if ssnr else None,
    )


def format_report(results: pd.DataFrame) -> str:
    """nmse_avg_db pivoted to (estimator, mode) rows x SSNR columns."""
    table = results.pivot_table(index=["estimator", "mode"], columns="ssnr_db", values="nmse_avg_db", dropna=False)
    return table.to_string(float_format=lambda v: f"{v:8.2f}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        config = resolve_config(args)
        if args.verb == "generate":
            generate_dataset(config)
        elif args.verb == "train":
            paths = train_models(config)
            logger.info("Trained %d predictors", len(paths))
        elif args.verb == "sweep":
            run_sweep(config)
        else:
            results_path = Path(config.output_dir) / "results.csv"
            print(format_report(read_results(results_path)))
    except (ChannelPredError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
