"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 input/config error, 3 domain error.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .cohort import parse_predictions
from .errors import ConfigError, DomainError, InputError
from .experiments import (
    precision_shift_distribution,
    resample_group_fraction,
    strategy_comparison,
    sweep_list_size,
    write_results,
    write_shift,
)
from .metrics import evaluate_selection
from .mitigation import EqualizedAllocation, apply_allocation, equalize_allocation
from .scorers import SynthConfig, write_synthetic
from .selection import SELECTORS, STRATEGIES
from .temporal import SplitConfig, bind_cohorts, generate_splits, splits_to_json

log = logging.getLogger("fairtopk")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DOMAIN = 0, 1, 2, 3


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(path, attribute):
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    return parse_predictions(path, attribute)


@dataclass
class RunConfig:
    data_dir: Path
    attribute: str
    k: int
    seed: int
    splits: SplitConfig
    reference_group: str | None = None
    strategies: tuple = STRATEGIES
    models: list | None = None
    out_dir: Path = Path("results")
    experiments: dict = field(default_factory=lambda: {"strategy_comparison": {}})
    n_jobs: int = 1
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        for key in ("data_dir", "attribute", "k", "seed", "splits"):
            if key not in d:
                raise ConfigError(f"run config missing {key!r}")
        base = Path(base_dir) if base_dir else Path(".")
        data_dir = Path(d["data_dir"])
        if not data_dir.is_absolute():
            data_dir = (base / data_dir).resolve()
        if not data_dir.is_dir():
            raise ConfigError(f"data_dir {data_dir} does not exist")
        strategies = tuple(d.get("strategies", STRATEGIES))
        unknown = sorted(set(strategies) - set(STRATEGIES))
        if unknown:
            raise ConfigError(f"unknown strategies {unknown}")
        out_dir = Path(d.get("out_dir", "results"))
        if not out_dir.is_absolute():
            out_dir = (base / out_dir).resolve()
        try:
            return cls(
                data_dir=data_dir,
                attribute=str(d["attribute"]),
                k=int(d["k"]),
                seed=int(d["seed"]),
                splits=SplitConfig.from_dict(d["splits"]),
                reference_group=d.get("reference_group"),
                strategies=strategies,
                models=d.get("models"),
                out_dir=out_dir,
                experiments=dict(d.get("experiments", {"strategy_comparison": {}})),
                n_jobs=int(d.get("n_jobs", 1)),
                raw=d,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad run config: {exc}") from None


def _run_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    raw = _read_json(args.config)
    if isinstance(raw, dict):
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["out_dir"] = str(Path(args.out).resolve())
        if getattr(args, "k", None) is not None:
            raw["k"] = args.k
    return RunConfig.from_dict(raw, base_dir=Path(args.config).resolve().parent)


def _timestamp(args) -> str:
    return args.timestamp or dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _manifest(cfg: RunConfig, timestamp: str, files) -> dict:
    canonical = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return {
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "config": cfg.raw,
        "seed": cfg.seed,
        "timestamp": timestamp,
        "versions": {
            "fairtopk": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "files": {str(Path(p).name): _sha256(p) for p in files},
    }


def cmd_synth(args) -> int:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = SynthConfig.from_json(args.config)
    out = Path(args.out or ".")
    paths = write_synthetic(cfg, out, seed=args.seed)
    manifest = [{"path": str(p), "sha256": _sha256(p)} for p in paths]
    print(json.dumps(manifest, indent=1))
    return EXIT_OK


def cmd_mitigate(args) -> int:
    val = _load(args.val_csv, args.attribute)
    seed = 0 if args.seed is None else args.seed
    alloc = equalize_allocation(val, args.model_id, args.k, seed)
    _write(args.out, alloc.to_json(indent=1))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    test = _load(args.test_csv, args.attribute)
    try:
        alloc = EqualizedAllocation.from_dict(_read_json(args.allocation_json))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed allocation file: {exc}") from None
    seed = alloc.seed if args.seed is None else args.seed
    report = evaluate_selection(test, apply_allocation(test, alloc, seed), args.reference_group)
    _write(args.out, report.to_json(indent=1))
    return EXIT_OK


def cmd_select(args) -> int:
    val = _load(args.val_csv, args.attribute)
    test = _load(args.test_csv, args.attribute)
    seed = 0 if args.seed is None else args.seed
    strategies = args.strategy or list(STRATEGIES)
    out = {s: SELECTORS[s](val, test, args.k, seed, None, args.reference_group).to_dict() for s in strategies}
    _write(args.out, json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_splits(args) -> int:
    if args.config:
        raw = _read_json(args.config)
        raw = raw.get("splits", raw) if isinstance(raw, dict) else raw
        if not isinstance(raw, dict):
            raise ConfigError("split config must be a JSON object")
        cfg = SplitConfig.from_dict(raw)
    else:
        if args.first is None:
            raise ConfigError("give --config or --first/--window/--cadence")
        cfg = SplitConfig.from_dict(
            {"first_as_of_date": args.first, "label_window": args.window, "cadence": args.cadence, "n_splits": args.n}
        )
    _write(args.out, splits_to_json(generate_splits(cfg), indent=1))
    return EXIT_OK


def _bound(cfg: RunConfig):
    return bind_cohorts(generate_splits(cfg.splits), cfg.data_dir, cfg.attribute)


def _experiment_run(cfg: RunConfig, args, only=None) -> int:
    bound = _bound(cfg)
    stamp = _timestamp(args)
    files = []
    exps = cfg.experiments if only is None else {only: cfg.experiments.get(only, {})}
    for name, params in exps.items():
        params = params or {}
        seeds = params.get("seeds", [cfg.seed])
        if name == "strategy_comparison":
            res = strategy_comparison(bound, cfg.k, seeds, cfg.models, cfg.reference_group, cfg.strategies, cfg.n_jobs)
            files += write_results(res, cfg.out_dir, name, stamp, plot=args.plot_data)
        elif name == "sweep_list_size":
            grid = args.k_grid or params.get("k_grid")
            if not grid:
                raise ConfigError("sweep_list_size needs a k_grid")
            res = sweep_list_size(bound, grid, seeds, cfg.models, cfg.reference_group, cfg.strategies, cfg.n_jobs)
            files += write_results(res, cfg.out_dir, name, stamp, plot=args.plot_data)
        elif name == "resample_group_fraction":
            focal = getattr(args, "focal_group", None) or params.get("focal_group")
            fractions = getattr(args, "fractions", None) or params.get("fractions")
            replicates = getattr(args, "replicates", None) or params.get("replicates", 20)
            if not focal or not fractions:
                raise ConfigError("resample_group_fraction needs focal_group and fractions")
            b = bound[int(params.get("split", 0))]
            res = resample_group_fraction(
                b.val, b.test, cfg.k, focal, fractions, int(replicates), cfg.seed, cfg.models,
                cfg.reference_group, cfg.strategies, cfg.n_jobs,
            )
            files += write_results(res, cfg.out_dir, name, stamp, plot=args.plot_data)
        elif name == "precision_shift":
            b = bound[int(params.get("split", 0))]
            dist = precision_shift_distribution(b.val, b.test, cfg.k, cfg.seed, cfg.models, cfg.reference_group)
            path = write_shift(dist, cfg.out_dir, stamp)
            files += [path, path.with_suffix(".json")]
        else:
            raise ConfigError(f"unknown experiment {name!r}")
    manifest_path = cfg.out_dir / f"manifest_{stamp}.json"
    manifest_path.write_text(json.dumps(_manifest(cfg, stamp, files), indent=1, sort_keys=True), encoding="utf-8")
    print(json.dumps({"manifest": str(manifest_path), "files": [str(p) for p in files]}, indent=1))
    return EXIT_OK


def cmd_run(args) -> int:
    return _experiment_run(_run_config(args), args)


def cmd_sweep(args) -> int:
    return _experiment_run(_run_config(args), args, only="sweep_list_size")


def cmd_resample(args) -> int:
    return _experiment_run(_run_config(args), args, only="resample_group_fraction")


def _int_list(text):
    return [int(x) for x in text.split(",") if x]


def _float_list(text):
    return [float(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fairtopk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic cohort files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mitigate", parents=[common], help="fit a recall-equalizing allocation")
    p.add_argument("val_csv")
    p.add_argument("--model-id", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--attribute", default="group")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("evaluate", parents=[common], help="apply an allocation to a test cohort")
    p.add_argument("test_csv")
    p.add_argument("allocation_json")
    p.add_argument("--attribute", default="group")
    p.add_argument("--reference-group", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("select", parents=[common], help="run model-selection strategies")
    p.add_argument("val_csv")
    p.add_argument("test_csv")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--attribute", default="group")
    p.add_argument("--reference-group", default=None)
    p.add_argument("--strategy", action="append", choices=STRATEGIES)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("splits", parents=[common], help="generate temporal validation splits")
    p.add_argument("--first")
    p.add_argument("--window", type=int, default=12)
    p.add_argument("--cadence", type=int, default=12)
    p.add_argument("--n", type=int, default=1)
    p.set_defaults(func=cmd_splits)

    for name, func, help_ in (
        ("run", cmd_run, "run the experiments listed in a run config"),
        ("sweep", cmd_sweep, "list-size sweep"),
        ("resample", cmd_resample, "group-fraction resampling"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--timestamp", default=None, help="fixed timestamp for output file names")
        p.add_argument("--plot-data", action="store_true", help="also write plot-ready aggregate tables")
        p.add_argument("--k-grid", type=_int_list, default=None)
        if name == "resample":
            p.add_argument("--focal-group", default=None)
            p.add_argument("--fractions", type=_float_list, default=None)
            p.add_argument("--replicates", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
