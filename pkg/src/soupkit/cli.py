"""``soupkit`` command line.

Machine-readable results go to stdout as JSON; diagnostics go to stderr.
Exit codes: 0 ok, 1 configuration error, 2 data error, 3 incompatible
checkpoints.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from soupkit.checkpoint import read_checkpoint, write_checkpoint
from soupkit.data import SPLITS, Dataset, load_tsv
from soupkit.entities import GazetteerSet, count_features, extract_entities, substitute_tokens, ParentType
from soupkit.errors import CompatibilityError, DomainError, FormatError, SoupkitError
from soupkit.trainer import ModelSpec, TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPAT = 0, 1, 2, 3
GAZETTEER_ENV = "SOUPKIT_GAZETTEERS"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -- configuration ------------------------------------------------------------

_SPLIT_FLAGS = {"train": "train", "dev": "dev", "dev_test": "dev-test", "test": "test"}

_DEFAULTS = {
    "kind": "text_linear",
    "feature_dim": 2**18,
    "hidden_dim": 64,
    "hash_seed": 0,
    "preprocess": "raw",
    "learning_rate": 0.0004,
    "epochs": 5,
    "batch_size": 24,
    "seed": 0,
    "scheme": "inverse-loss",
    "workers": 1,
    "out": ".",
}

_PATH_KEYS = {"train", "dev", "dev_test", "test", "gazetteers", "out", "data"}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    base = Path(path).parent
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key in _PATH_KEYS & cfg.keys():
        if isinstance(cfg[key], str) and not os.path.isabs(cfg[key]):
            cfg[key] = str(base / cfg[key])
    return cfg


def _resolve(args) -> dict:
    """Flags win over the config file, which wins over built-in defaults."""
    cfg = _load_config(getattr(args, "config", None))
    merged = dict(_DEFAULTS)
    merged.update(cfg)
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "func", "config"):
            merged[key] = value
    return merged


def _gazetteers(cfg) -> GazetteerSet:
    directory = cfg.get("gazetteers_flag") or os.environ.get(GAZETTEER_ENV) or cfg.get("gazetteers")
    if not directory:
        return GazetteerSet.default()
    if not os.path.isdir(directory):
        raise ConfigError(f"gazetteer directory not found: {directory}")
    try:
        return GazetteerSet.from_dir(directory)
    except (FormatError, DomainError) as exc:
        raise DataError(str(exc)) from None


def _model_spec(cfg) -> ModelSpec:
    try:
        return ModelSpec(
            kind=str(cfg["kind"]).replace("-", "_"),
            feature_dim=int(cfg["feature_dim"]),
            hidden_dim=int(cfg["hidden_dim"]),
            hash_seed=int(cfg["hash_seed"]),
            preprocess=str(cfg["preprocess"]).replace("-", "_"),
        )
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg, seed) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=float(cfg["learning_rate"]),
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            seed=int(seed),
        )
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _load_split(path, name):
    if not path:
        raise ConfigError(f"no path given for the {name} split")
    if not os.path.isfile(path):
        raise DataError(f"{name} file not found: {path}")
    try:
        return load_tsv(path, name)
    except (FormatError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(str(exc)) from None


def _load_checkpoint(path):
    if not os.path.isfile(path):
        raise DataError(f"checkpoint not found: {path}")
    try:
        return read_checkpoint(path)
    except (SoupkitError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _spec_of(ckpt, path) -> ModelSpec:
    try:
        return ModelSpec.from_id(ckpt.meta.model_spec_id)
    except DomainError:
        raise DataError(f"{path}: checkpoint does not record its model spec") from None


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _parse_seeds(raw) -> list[int]:
    if isinstance(raw, list):
        items = raw
    else:
        items = [s for s in str(raw).split(",") if s.strip()]
    try:
        seeds = [int(s) for s in items]
    except ValueError:
        raise ConfigError(f"bad seed list {raw!r}") from None
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {seeds}")
    return seeds


# -- commands -----------------------------------------------------------------

def _train_one(dataset, spec, cfg, seed, gaz, out: Path) -> dict:
    history: list = []
    ckpt = train(dataset, spec, _train_config(cfg, seed), gaz, history)
    ckpt_path = out / f"model-seed{seed}.ckpt"
    log_path = out / f"model-seed{seed}.log.jsonl"
    write_checkpoint(ckpt, ckpt_path)
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    print(f"trained seed {seed}: best epoch {ckpt.meta.extra['best_epoch']}, dev F1 {ckpt.meta.extra['dev_f1']:.4f}",
          file=sys.stderr)
    return {
        "checkpoint": str(ckpt_path),
        "log": str(log_path),
        "seed": seed,
        "signature": ckpt.signature.hex,
        "dev_loss": ckpt.meta.dev_loss,
        "dev_f1": ckpt.meta.extra["dev_f1"],
        "best_epoch": ckpt.meta.extra["best_epoch"],
    }


def _training_inputs(cfg):
    spec = _model_spec(cfg)
    gaz = _gazetteers(cfg)
    dataset = Dataset({"train": _load_split(cfg.get("train"), "train"), "dev": _load_split(cfg.get("dev"), "dev")})
    if not dataset["train"] or not dataset["dev"]:
        raise DataError("train and dev splits must be non-empty")
    return spec, gaz, dataset


def cmd_train(cfg) -> int:
    spec, gaz, dataset = _training_inputs(cfg)
    _emit(_train_one(dataset, spec, cfg, cfg["seed"], gaz, _out_dir(cfg)))
    return EXIT_OK


def cmd_train_many(cfg) -> int:
    if cfg.get("seeds") is None:
        raise ConfigError("train-many needs --seeds")
    seeds = _parse_seeds(cfg["seeds"])
    if len(seeds) < 2:
        raise ConfigError("train-many needs at least two seeds")
    spec, gaz, dataset = _training_inputs(cfg)
    out = _out_dir(cfg)
    _emit({"models": [_train_one(dataset, spec, cfg, s, gaz, out) for s in seeds]})
    return EXIT_OK


def cmd_soup(cfg) -> int:
    from soupkit.soup import Scheme, build_master, greedy_master

    inputs = cfg.get("inputs") or []
    if not inputs:
        raise ConfigError("soup needs at least one input checkpoint")
    try:
        scheme = Scheme.parse(cfg["scheme"])
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if scheme is Scheme.EXPLICIT:
        raise ConfigError("explicit weights are not available from the command line")
    ckpts = [_load_checkpoint(p) for p in inputs]
    spec = _spec_of(ckpts[0], inputs[0])
    dev = _load_split(cfg.get("dev"), "dev")
    if not dev:
        raise DataError("dev split is empty")
    gaz = _gazetteers(cfg)
    workers = int(cfg["workers"])
    if scheme is Scheme.GREEDY:
        master, recipe = greedy_master(ckpts, dev, spec, gaz, names=list(inputs), workers=workers)
    else:
        master, recipe = build_master(ckpts, dev, spec, scheme, gaz, names=list(inputs), workers=workers)
    out = _out_dir(cfg)
    write_checkpoint(master, out / "master.ckpt")
    recipe.dump(out / "recipe.json")
    report = recipe.to_json()
    report.update({"master": str(out / "master.ckpt"), "recipe": str(out / "recipe.json"), "dev_f1": recipe.dev_f1})
    _emit(report)
    return EXIT_OK


def cmd_eval(cfg) -> int:
    from soupkit.evaluation import evaluation_report

    ckpt = _load_checkpoint(cfg["checkpoint"])
    spec = _spec_of(ckpt, cfg["checkpoint"])
    name = cfg.get("split_name") or Path(cfg["split_path"]).stem
    items = _load_split(cfg["split_path"], name)
    if not items:
        raise DataError("evaluation split is empty")
    _emit(evaluation_report(ckpt, items, spec, _gazetteers(cfg), split=name, model=str(cfg["checkpoint"])))
    return EXIT_OK


def cmd_stats(cfg) -> int:
    from soupkit.data import class_distribution
    from soupkit.entities import corpus_entity_stats

    paths = {name: cfg.get(name) for name in SPLITS if cfg.get(name)}
    if not paths:
        raise ConfigError("stats needs at least one of --train/--dev/--dev-test/--test")
    dataset = Dataset({name: _load_split(path, name) for name, path in paths.items()})
    gaz = _gazetteers(cfg)
    report = {"class_distribution": {}, "entities": {}}
    for name, counts in class_distribution(dataset).items():
        report["class_distribution"][name] = counts._asdict()
        try:
            stats = corpus_entity_stats(dataset[name], gaz)
        except DomainError:
            report["entities"][name] = None
            continue
        report["entities"][name] = {"Yes": stats[1].to_json(), "No": stats[0].to_json()}
    _emit(report)
    return EXIT_OK


def cmd_bench(cfg) -> int:
    from soupkit.ensemble import SingleModel, bench_inference, train_stacking
    from soupkit.soup import Scheme, build_master

    members = cfg.get("members") or []
    if len(members) < 2:
        raise ConfigError("bench needs at least two --members")
    ckpts = [_load_checkpoint(p) for p in members]
    spec = _spec_of(ckpts[0], members[0])
    gaz = _gazetteers(cfg)
    dev = _load_split(cfg.get("dev"), "dev")
    data = _load_split(cfg.get("data"), "data")
    if not dev or not data:
        raise DataError("dev and benchmark data must be non-empty")
    if cfg.get("master"):
        master = _load_checkpoint(cfg["master"])
    else:
        try:
            scheme = Scheme.parse(cfg["scheme"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        master, _ = build_master(ckpts, dev, spec, scheme, gaz, names=members)
    stack = train_stacking(ckpts, dev, spec, _train_config(cfg, cfg["seed"]), gaz)
    systems = [SingleModel(master, name="soup"), stack] + [SingleModel(c, name=f"member:{p}") for c, p in zip(ckpts, members)]
    report = bench_inference(systems, data, spec, gaz, parallel=bool(cfg.get("parallel")))
    _emit(report.to_json())
    return EXIT_OK


def _ner_record(text, gaz) -> dict:
    mentions = extract_entities(text, gaz)
    return {
        "text": text,
        "mentions": [
            {"start": m.start, "end": m.end, "surface": m.surface, "fine_type": m.fine_type, "parent": m.parent.name}
            for m in mentions
        ],
        "counts": dict(zip([p.name for p in ParentType], count_features(mentions))),
        "substituted": substitute_tokens(text, mentions),
    }


def cmd_ner(cfg) -> int:
    gaz = _gazetteers(cfg)
    if cfg.get("file"):
        if not os.path.isfile(cfg["file"]):
            raise DataError(f"file not found: {cfg['file']}")
        with open(cfg["file"], encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        _emit([_ner_record(line, gaz) for line in lines])
    elif cfg.get("text"):
        _emit(_ner_record(cfg["text"], gaz))
    else:
        raise ConfigError("ner needs a text argument or --file")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_common(p, splits=()):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--gazetteers", dest="gazetteers_flag", metavar="DIR",
                   help=f"gazetteer directory (overrides ${GAZETTEER_ENV} and the config)")
    for key in splits:
        p.add_argument(f"--{_SPLIT_FLAGS[key]}", dest=key, metavar="PATH")


def _add_training(p):
    p.add_argument("--kind", choices=["ner_logreg", "text_linear", "text_mlp", "ner-logreg", "text-linear", "text-mlp"])
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--hash-seed", type=int)
    p.add_argument("--preprocess", choices=["raw", "ner-tokens", "ner_tokens"])
    p.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--out", metavar="DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soupkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train", help="train one model")
    _add_common(p, ("train", "dev"))
    _add_training(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-many", help="train one model per seed")
    _add_common(p, ("train", "dev"))
    _add_training(p)
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    p.set_defaults(func=cmd_train_many)

    p = sub.add_parser("soup", help="build a master model from checkpoints")
    _add_common(p, ("dev",))
    p.add_argument("inputs", nargs="*", metavar="CHECKPOINT")
    p.add_argument("--scheme", choices=["uniform", "paper-as-written", "inverse-loss", "greedy"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_soup)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled TSV file")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("split_path", metavar="SPLIT")
    p.add_argument("--split-name")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="class distribution and entity statistics")
    _add_common(p, SPLITS)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="inference cost of soup vs stacking")
    _add_common(p, ("dev",))
    p.add_argument("--members", nargs="+", metavar="CHECKPOINT")
    p.add_argument("--master", metavar="CHECKPOINT", help="pre-built master; souped from members if omitted")
    p.add_argument("--data", metavar="PATH", help="labeled TSV file to run inference over")
    p.add_argument("--scheme", choices=["uniform", "paper-as-written", "inverse-loss"])
    p.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel", action="store_true", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ner", help="recognize entities and show token substitution")
    _add_common(p)
    p.add_argument("text", nargs="?")
    p.add_argument("--file")
    p.set_defaults(func=cmd_ner)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"soupkit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"soupkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CompatibilityError as exc:
        print(f"soupkit: incompatible checkpoints: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except SoupkitError as exc:
        print(f"soupkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
