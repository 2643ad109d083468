"""Command line: ``amrnn <subcommand> [options]``.

Options may also come from a flat ``key = value`` file passed with
``--config``; command-line values override the file, which overrides the
built-in defaults. Exit status: 0 success, 1 usage/config error, 2 data
validation error, 3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import baselines
from .attention import AttentionLevel
from .data import (DataFormatError, Dataset, Example, ValidationError, corrupt_example, load_dataset,
                   load_embedding_table, prune_story, vocabulary)
from .export import export_attention
from .model import AMRNN
from .synthetic import KINDS, TaskConfigError, TaskSpec, write_task
from .training import ConfigError, TrainConfig, evaluate, train, tune_hops, write_history

log = logging.getLogger("amrnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

BASELINE_METHODS = [k.value for k in baselines.SimpleBaselineKind] + ["sliding_window", "memnet", "all"]

# key -> (type, default); every key is also a --flag
DEFAULTS: dict[str, tuple[type, object]] = {
    "dataset": (str, None),
    "embeddings": (str, None),
    "checkpoint": (str, None),
    "out_dir": (str, "."),
    "split": (str, "test"),
    "hidden_size": (int, 128),
    "embedding_dim": (int, 128),
    "n_hops": (int, 1),
    "level": (str, "word"),
    "learning_rate": (float, 1e-5),
    "momentum": (float, 0.9),
    "rms_decay": (float, 0.9),
    "epsilon": (float, 1e-8),
    "dropout_rate": (float, 0.2),
    "batch_size": (int, 40),
    "max_epochs": (int, 50),
    "patience": (int, None),
    "hop_search": (str, "1,2,3"),
    "loss": (str, "squared"),
    "seed": (int, 0),
    "keep_fraction": (float, 1.0),
    "corruption_rate": (float, 0.0),
    "corruption_seed": (int, 0),
    "method": (str, "all"),
    "window": (int, None),
    "memnet_epochs": (int, 50),
    "memnet_lr": (float, 0.01),
    "memnet_size": (int, 128),
    "memnet_shared": (str, "true"),
    "example_id": (str, None),
    "kind": (str, "keyword_match"),
    "vocab_size": (int, 16),
    "story_utterances": (int, 4),
    "words_per_utterance": (int, 3),
    "distractor_facts": (int, 3),
    "n_train": (int, 500),
    "n_dev": (int, 100),
    "n_test": (int, 100),
    "embedding_file_dim": (int, 50),
}

SUBCOMMANDS = ("train", "eval", "baseline", "gen-synthetic", "export-attention", "tune-hops")


class UsageError(Exception):
    pass


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amrnn", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="flat key = value file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for key in DEFAULTS:
        parser.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    merged: dict[str, object] = {k: default for k, (_, default) in DEFAULTS.items()}
    if args.config:
        merged.update(read_config_file(args.config))
    merged.update({k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None})
    for key, (typ, _) in DEFAULTS.items():
        value = merged[key]
        if value is None or isinstance(value, typ):
            continue
        try:
            merged[key] = typ(value)
        except ValueError:
            raise UsageError(f"--{key.replace('_', '-')}: cannot parse {value!r} as {typ.__name__}") from None
    return merged


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    for key in keys:
        if key in ("dataset", "embeddings", "checkpoint") and not Path(cfg[key]).is_file():
            raise UsageError(f"--{key}: no such file {cfg[key]}")


def train_config(cfg: dict) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    kwargs = {k: cfg[k] for k in names if k in cfg and k != "hop_search"}
    kwargs["hop_search"] = tuple(int(x) for x in str(cfg["hop_search"]).split(",") if x.strip())
    return TrainConfig(**kwargs)


def _load_data(cfg: dict) -> Dataset:
    ds = load_dataset(cfg["dataset"])
    if cfg["keep_fraction"] < 1.0:
        _require(cfg, "embeddings")
        table = load_embedding_table(cfg["embeddings"])
        ds = Dataset.from_examples(
            Example(ex.id, prune_story(ex.story, ex.question, cfg["keep_fraction"], table),
                    ex.question, ex.choices, ex.answer, ex.split)
            for ex in ds.all_examples())
    return ds


def _new_model(cfg: dict, ds: Dataset, n_hops: int | None = None) -> AMRNN:
    return AMRNN.for_examples(ds.train, hidden_size=cfg["hidden_size"], embedding_dim=cfg["embedding_dim"],
                              n_hops=n_hops or cfg["n_hops"], level=cfg["level"], seed=cfg["seed"])


def _write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def cmd_train(cfg: dict, out: Path) -> None:
    _require(cfg, "dataset")
    ds = _load_data(cfg)
    model, history = train(_new_model(cfg, ds), ds, train_config(cfg))
    model.save(out / "model.ckpt.json")
    write_history(history, out / "history.jsonl")
    print(f"wrote {out / 'model.ckpt.json'} and {out / 'history.jsonl'} ({len(history)} epochs)")


def cmd_eval(cfg: dict, out: Path) -> None:
    _require(cfg, "dataset", "checkpoint")
    ds = _load_data(cfg)
    model = AMRNN.load(cfg["checkpoint"])
    examples = ds.split(cfg["split"])
    if not examples:
        raise UsageError(f"split {cfg['split']!r} is empty")
    rate = cfg["corruption_rate"]
    if rate > 0:
        lexicon = vocabulary(ds.all_examples())
        examples = [corrupt_example(ex, rate, [cfg["corruption_seed"], i], lexicon)
                    for i, ex in enumerate(examples)]
    predicted = model.predict(examples)
    records = [{"id": ex.id, "chosen": int(c), "correct": bool(c == ex.answer)}
               for ex, c in zip(examples, predicted)]
    accuracy = float(np.mean([r["correct"] for r in records]))
    records.append({"split": cfg["split"], "corruption_rate": rate, "accuracy": accuracy, "n": len(examples)})
    _write_jsonl(out / "eval.jsonl", records)
    print(f"accuracy {accuracy:.6f} on {len(examples)} {cfg['split']} examples")


def cmd_baseline(cfg: dict, out: Path) -> None:
    _require(cfg, "dataset")
    ds = _load_data(cfg)
    examples = ds.split(cfg["split"])
    method = cfg["method"]
    if method not in BASELINE_METHODS:
        raise UsageError(f"--method must be one of {BASELINE_METHODS}")
    methods = BASELINE_METHODS[:-1] if method == "all" else [method]
    table = None
    if any(m not in ("longest", "shortest", "most_different_length", "memnet") for m in methods):
        _require(cfg, "embeddings")
        table = load_embedding_table(cfg["embeddings"])
    path = out / "baseline.jsonl"
    path.write_text("")
    for m in methods:
        if m == "sliding_window":
            W = cfg["window"]
            if W is None:
                tune_on = ds.dev or ds.train
                accs = {w: np.mean([baselines.sliding_window(ex, table, w) == ex.answer for ex in tune_on])
                        for w in baselines.WINDOW_SEARCH}
                W = min(accs, key=lambda w: (-accs[w], w))
            chosen = [baselines.sliding_window(ex, table, W) for ex in examples]
        elif m == "memnet":
            mcfg = baselines.MemNetConfig(embedding_size=cfg["memnet_size"], learning_rate=cfg["memnet_lr"],
                                          batch_size=cfg["batch_size"], max_epochs=cfg["memnet_epochs"],
                                          shared_embeddings=cfg["memnet_shared"].lower() in ("1", "true", "yes"),
                                          seed=cfg["seed"])
            net = baselines.memnet_train(baselines.memnet_for(ds.train, mcfg), ds, mcfg)
            chosen = list(net.predict(examples))
        else:
            chosen = [baselines.simple_baseline(ex, m, table) for ex in examples]
        acc = baselines.write_report(path, m, examples, chosen, mode="a")
        print(f"{m}: accuracy {acc:.6f}")


def cmd_gen_synthetic(cfg: dict, out: Path) -> None:
    if cfg["kind"] not in KINDS:
        raise UsageError(f"--kind must be one of {KINDS}")
    spec = TaskSpec(kind=cfg["kind"], vocab_size=cfg["vocab_size"], story_utterances=cfg["story_utterances"],
                    words_per_utterance=cfg["words_per_utterance"], distractor_facts=cfg["distractor_facts"],
                    n_examples={"train": cfg["n_train"], "dev": cfg["n_dev"], "test": cfg["n_test"]},
                    seed=cfg["seed"])
    data, emb = write_task(spec, out, cfg["embedding_file_dim"])
    print(f"wrote {data} and {emb}")


def cmd_tune_hops(cfg: dict, out: Path) -> None:
    _require(cfg, "dataset")
    ds = _load_data(cfg)
    result = tune_hops(lambda n: _new_model(cfg, ds, n), ds, train_config(cfg))
    records = [{"n_hops": n, "dev_accuracy": acc} for n, acc in result.dev_accuracy.items()]
    records.append({"best_n_hops": result.best})
    _write_jsonl(out / "tune_hops.jsonl", records)
    result.models[result.best].save(out / "model.ckpt.json")
    print(f"best n_hops {result.best}; dev accuracy " +
          ", ".join(f"{n}: {a:.4f}" for n, a in result.dev_accuracy.items()))


def cmd_export_attention(cfg: dict, out: Path) -> None:
    _require(cfg, "dataset", "checkpoint")
    ds = _load_data(cfg)
    model = AMRNN.load(cfg["checkpoint"])
    pool = ds.all_examples()
    if cfg["example_id"]:
        chosen = [ex for ex in pool if ex.id == cfg["example_id"]]
        if not chosen:
            raise UsageError(f"no example with id {cfg['example_id']!r}")
    else:
        chosen = ds.split(cfg["split"])[:1] or pool[:1]
    for ex in chosen:
        tsv, svg = export_attention(model, ex, cfg["level"], out)
        print(f"wrote {tsv} and {svg}")


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "gen-synthetic": cmd_gen_synthetic,
    "tune-hops": cmd_tune_hops,
    "export-attention": cmd_export_attention,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        AttentionLevel(cfg["level"])
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.subcommand](cfg, out)
    except (UsageError, ConfigError, TaskConfigError) as exc:
        print(f"amrnn {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, DataFormatError) as exc:
        print(f"amrnn {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # bad enum values (level, baseline kind) and similar option errors
        print(f"amrnn {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, FloatingPointError, OSError, RuntimeError) as exc:
        print(f"amrnn {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
