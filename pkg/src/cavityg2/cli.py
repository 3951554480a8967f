"""Command-line entry point.

Exit codes: 0 success, 1 a requested check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import experiments as ex
from . import io
from .config import FORMATS, METHODS, MODELS, ConfigError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cavityg2")


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in out if f not in FORMATS]
    if bad or not out:
        raise ConfigError(f"--format takes a comma list from {FORMATS}, got {text!r}")
    return out


def _common(p: argparse.ArgumentParser, formats: str, model: str | None = None) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (trajectory runs)")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default ${io.OUT_ENV} or ./{io.DEFAULT_OUT})/<verb>")
    p.add_argument("--format", default=formats, help=f"comma list from {','.join(FORMATS)} (default {formats})")
    p.add_argument("-v", "--verbose", action="store_true")
    if model is not None:
        p.add_argument("--config", type=Path, help="YAML experiment config")
        p.add_argument("--model", choices=MODELS, default=model)
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="parameter preset for --model")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. params.pump=0.3 or solver.n_traj=5000")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavityg2", description="Photon statistics of driven cavity QED models.")
    parser.add_argument("--version", action="version", version=f"cavityg2 {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("derive-params", help="effective polariton parameters of an EIT configuration")
    _common(p, "json", model="eit-effective")
    p.add_argument("--golden", action="store_true", help="check against the stored reference table")

    p = sub.add_parser("g2", help="g2(tau) of one model")
    _common(p, "csv,json", model="jc-exact")
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="compare two g2 CSV files, or the exact and effective model of a preset")
    _common(p, "json")
    p.add_argument("inputs", nargs="*", type=Path, help="two CSV files written by `g2`")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), default="eit-dashed")

    p = sub.add_parser("reproduce-fig2", help="all eight reference curves, comparisons and figure")
    _common(p, "csv,json,svg")
    p.add_argument("--trajectories", type=int, default=0, metavar="N",
                   help="also run N-trajectory jump-pair estimates and check them against the deterministic g2")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("spectrum", help="excitation-manifold spectrum of an exact model")
    _common(p, "json", model="jc-exact")
    p.add_argument("--manifolds", type=int, default=2, help="highest manifold to analyse")
    return parser


def resolve_config(args) -> cfgmod.ExperimentConfig:
    if args.config is not None:
        cfg = cfgmod.load(args.config)
    else:
        cfg = cfgmod.preset(args.model, args.preset)
    if args.overrides:
        cfg = cfgmod.apply_overrides(cfg, args.overrides)
    if getattr(args, "method", None):
        cfg = cfgmod.apply_overrides(cfg, [f"correlation.method={args.method}"])
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args) -> Path:
    return args.out if args.out is not None else io.default_output_dir() / args.verb


def run(args) -> int:
    formats = _formats(args.format)
    out = _out_dir(args)
    if args.verb == "derive-params":
        report = ex.cmd_derive_params(resolve_config(args), out, formats, golden=args.golden)
    elif args.verb == "g2":
        _, report = ex.cmd_g2(resolve_config(args), out, formats, workers=args.workers)
    elif args.verb == "compare":
        if len(args.inputs) == 2:
            a, _ = io.read_series_csv(args.inputs[0])
            b, _ = io.read_series_csv(args.inputs[1])
            labels = tuple(p.stem for p in args.inputs)
        elif not args.inputs:
            a, b = ex.pair_series(*ex.pair_configs(args.preset))
            labels = (f"exact {args.preset}", f"effective {args.preset}")
        else:
            raise ConfigError("compare takes exactly two CSV files, or none with --preset")
        report = ex.cmd_compare(a, b, out, formats, labels)
    elif args.verb == "reproduce-fig2":
        _, report = ex.cmd_reproduce_fig2(out, formats, args.seed or 0, args.trajectories, args.workers)
    else:
        report = ex.cmd_spectrum(resolve_config(args), out, formats, args.manifolds)
    sys.stdout.write(ex.render_summary(report))
    return EXIT_OK if report.ok else EXIT_CHECK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        # ConfigError, trajectory preconditions and unreadable inputs
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
