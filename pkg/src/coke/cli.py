"""Command line entry point: ``coke gen``, ``coke discover`` and ``coke eval``.

Settings are merged with precedence flags > ``COKE_SEED`` (seed only) > JSON
config file > built-in defaults.  Exit codes: 0 success, 2 configuration
error, 3 data-format error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import formats
from .core import edges_of
from .errors import ConfigError, DataFormatError, NumericalError
from .metrics import edge_set_confusion
from .scoring import RewardConfig
from .synthgen import GenConfig, generate_benchmark
from .trainer import TrainConfig, Trainer

log = logging.getLogger("coke")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "COKE_SEED"
SECTIONS = {"gen": GenConfig, "train": TrainConfig, "reward": RewardConfig}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def load_config_file(path: Optional[str]) -> dict:
    """Parse a JSON config of the form ``{"seed": .., "gen": {..}, "train": {..}, "reward": {..}}``."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} (byte {exc.pos}): {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for name, klass in SECTIONS.items():
        section = cfg.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
        allowed = {f.name for f in dataclasses.fields(klass)}
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"{path}: unknown keys in {name!r}: {sorted(bad)}")
    return cfg


def resolve_seed(flag_seed: Optional[int], file_cfg: dict, section: str) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if "seed" in file_cfg.get(section, {}):
        return file_cfg[section]["seed"]
    return int(file_cfg.get("seed", 0))


def build(klass, file_cfg: dict, section: str, overrides: dict):
    values = dict(file_cfg.get(section, {}))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        obj = klass(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} settings: {exc}") from exc
    validate = getattr(obj, "validate", None)
    return validate() if validate else obj


# ---------------------------------------------------------------- subcommands


def cmd_gen(args) -> int:
    file_cfg = load_config_file(args.config)
    overrides = {
        "p": args.p,
        "k": args.k,
        "samples": args.samples,
        "target_missing_rate": args.missing_rate,
        "recipe_count": args.recipes,
        "full_fraction": args.full_fraction,
        "expert_edge_count": args.expert_edges,
        "edge_density": args.edge_density,
        "noise_sigma": args.noise,
        "seed": resolve_seed(args.seed, file_cfg, "gen"),
    }
    cfg = build(GenConfig, file_cfg, "gen", overrides)
    bench = generate_benchmark(cfg)
    try:
        formats.write_benchmark(args.out, bench)
    except OSError as exc:
        raise ConfigError(f"cannot write benchmark to {args.out}: {exc.strerror}") from exc
    print(f"realized missing rate: {bench.report.realized_rate:.4f}")
    print(f"wrote {bench.data.n_rows} rows x {bench.data.n_vars} sensors, {len(bench.truth.edges)} true edges to {args.out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    file_cfg = load_config_file(args.config)
    data_dir = Path(args.data)
    for name in (formats.DATA_FILE, formats.META_FILE):
        if not (data_dir / name).is_file():
            raise ConfigError(f"{data_dir / name} does not exist")
    overrides = {
        "iterations": args.iterations,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "gamma": args.gamma,
        "entropy_bonus": args.entropy_bonus,
        "hidden": args.hidden,
        "top_m": args.top_m,
        "greedy_every": args.greedy_every,
        "checkpoint_every": args.checkpoint_every,
        "seed": resolve_seed(args.seed, file_cfg, "train"),
        "use_chronology": False if args.no_chrono else None,
        "use_expert": False if args.no_expert else None,
        "use_incomplete": False if args.no_incomplete else None,
        "miss_only": True if args.miss_only else None,
    }
    train_cfg = build(TrainConfig, file_cfg, "train", overrides)
    reward_cfg = build(RewardConfig, file_cfg, "reward", {"penalty_weight": args.penalty_weight})

    ds, ek, truth = formats.read_benchmark(data_dir)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from exc
    params_path = out / formats.PARAMS_FILE
    trainer = Trainer(ds, ek, train_cfg, reward_cfg, truth, checkpoint_path=params_path)
    result = trainer.run()

    formats.write_edges(out / formats.PRED_FILE, result.best.adjacency, ds.sensor_names)
    formats.write_trace(out / formats.TRACE_FILE, result.trace.records)
    formats.save_params(params_path, result.params)
    best = result.best
    print(f"best reward {best.reward:.6f} at iteration {best.iteration}, {int(best.adjacency.sum())} edges")
    if truth is not None:
        m = edge_set_confusion(edges_of(best.adjacency), edges_of(truth))
        print(f"vs truth: precision {m.precision:.4f} recall {m.recall:.4f} f1 {m.f1:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    for p in (args.pred, args.truth):
        if not Path(p).is_file():
            raise ConfigError(f"{p} does not exist")
    if args.meta:
        names = formats.read_meta(args.meta)["sensors"]
        pred = formats.read_edges(args.pred, names)
        truth = formats.read_edges(args.truth, names)
        m = edge_set_confusion(edges_of(pred), edges_of(truth))
    else:
        m = edge_set_confusion(formats.read_named_edges(args.pred), formats.read_named_edges(args.truth))
    text = json.dumps(m.to_dict(), indent=2) + "\n"
    if args.out:
        formats.write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coke", description="Causal discovery on recipe-structured manufacturing data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic benchmark directory")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--p", type=int, help="number of sensors")
    g.add_argument("--k", type=int, help="number of machines")
    g.add_argument("--samples", type=int)
    g.add_argument("--missing-rate", type=float)
    g.add_argument("--recipes", type=int)
    g.add_argument("--full-fraction", type=float)
    g.add_argument("--expert-edges", type=int)
    g.add_argument("--edge-density", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("discover", help="learn a causal graph from a benchmark directory")
    d.add_argument("--data", required=True, help="directory with data.csv, meta.json and optionally expert.json")
    d.add_argument("--out", required=True)
    d.add_argument("--config")
    d.add_argument("--iterations", type=int)
    d.add_argument("--batch-size", type=int)
    d.add_argument("--learning-rate", type=float)
    d.add_argument("--gamma", type=float)
    d.add_argument("--entropy-bonus", type=float)
    d.add_argument("--hidden", type=int)
    d.add_argument("--top-m", type=int)
    d.add_argument("--penalty-weight", type=float)
    d.add_argument("--greedy-every", type=int)
    d.add_argument("--checkpoint-every", type=int)
    d.add_argument("--seed", type=int)
    d.add_argument("--no-chrono", action="store_true", help="start from the complete digraph")
    d.add_argument("--no-expert", action="store_true", help="ignore expert edges and their penalty")
    d.add_argument("--no-incomplete", action="store_true", help="drop the incomplete-recipe embedding path")
    d.add_argument("--miss-only", action="store_true", help="allow running without a complete recipe")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("eval", help="score predicted edges against true edges")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--meta", help="meta.json used to validate sensor names")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
