"""Command line entry point: ``mmdisaster {synth,train,eval,gradcheck}``.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O or file-format
error, 4 gradient check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional, Tuple

from . import __version__
from .data_io import SynthConfig, load_dataset, save_dataset, split, synth_generate
from .embedders import MODALITIES, EmbedderSet, GeoEmbedConfig, ImageEmbedConfig, TextEmbedConfig
from .errors import ConfigError, DataFormatError, MMDisasterError
from .gradcheck import gradient_check
from .metrics import evaluate
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHECK = 4

_MODEL_DEFAULTS = {f.name: f.default for f in fields(ModelConfig) if f.name != "num_classes"}
_TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}


@dataclass
class RunConfig:
    """Everything a train run needs, flattened; defaults come from the component configs."""

    data: Optional[str] = None
    out_dir: Optional[str] = None
    d: int = _MODEL_DEFAULTS["d"]
    d_t: int = _MODEL_DEFAULTS["d_t"]
    d_g: int = _MODEL_DEFAULTS["d_g"]
    dropout_rate: float = _MODEL_DEFAULTS["dropout_rate"]
    hash_seed: int = TextEmbedConfig.hash_seed
    freq_base: float = GeoEmbedConfig.freq_base
    learning_rate: float = _TRAIN_DEFAULTS["learning_rate"]
    batch_size: int = _TRAIN_DEFAULTS["batch_size"]
    epochs: int = _TRAIN_DEFAULTS["epochs"]
    weight_decay: float = _TRAIN_DEFAULTS["weight_decay"]
    beta1: float = _TRAIN_DEFAULTS["beta1"]
    beta2: float = _TRAIN_DEFAULTS["beta2"]
    adam_eps: float = _TRAIN_DEFAULTS["adam_eps"]
    seed: int = _TRAIN_DEFAULTS["seed"]
    split: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    figures: bool = False

    def embedders(self, d_i: int) -> EmbedderSet:
        return EmbedderSet(TextEmbedConfig(self.d_t, self.hash_seed), ImageEmbedConfig(d_i),
                           GeoEmbedConfig(self.d_g, self.freq_base))

    def model_config(self, num_classes: int, d_i: int) -> ModelConfig:
        return ModelConfig(num_classes, self.d, self.d_t, d_i, self.d_g, self.dropout_rate)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.weight_decay,
                           self.beta1, self.beta2, self.adam_eps, self.seed)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    p.add_argument("--data", default=defaults.data, help="dataset file (JSON lines)")
    p.add_argument("--out-dir", default=defaults.out_dir, help="directory for checkpoint, history and reports")
    p.add_argument("--config", help="JSON file of RunConfig values; command-line flags take precedence")
    g = p.add_argument_group("model")
    g.add_argument("--d", type=int, default=defaults.d, help="unified embedding width")
    g.add_argument("--d-t", type=int, default=defaults.d_t, help="text hashing width")
    g.add_argument("--d-g", type=int, default=defaults.d_g, help="geo encoding width (even)")
    g.add_argument("--dropout-rate", type=float, default=defaults.dropout_rate, help="inverted dropout rate")
    g.add_argument("--hash-seed", type=int, default=defaults.hash_seed, help="text hashing seed")
    g.add_argument("--freq-base", type=float, default=defaults.freq_base, help="geo encoding frequency base")
    g = p.add_argument_group("optimization")
    g.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float,
                   default=defaults.learning_rate, help="Adam step size")
    g.add_argument("--batch-size", type=int, default=defaults.batch_size, help="samples per Adam step")
    g.add_argument("--epochs", type=int, default=defaults.epochs, help="passes over the train part")
    g.add_argument("--weight-decay", type=float, default=defaults.weight_decay, help="decoupled decay factor")
    g.add_argument("--beta1", type=float, default=defaults.beta1, help="first-moment decay")
    g.add_argument("--beta2", type=float, default=defaults.beta2, help="second-moment decay")
    g.add_argument("--adam-eps", type=float, default=defaults.adam_eps, help="Adam denominator epsilon")
    g.add_argument("--seed", type=int, default=defaults.seed, help="seeds init, shuffling, dropout and split")
    g.add_argument("--split", type=float, nargs=3, default=list(defaults.split),
                   metavar=("TRAIN", "VAL", "TEST"), help="stratified split fractions")
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the outputs")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="mmdisaster", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic multimodal dataset", formatter_class=fmt)
    sd = SynthConfig()
    s.add_argument("--classes", type=int, default=sd.num_classes, help="number of classes (>= 2)")
    s.add_argument("--per-class", type=int, default=sd.samples_per_class, help="samples per class")
    s.add_argument("--vocab-per-class", type=int, default=sd.vocab_per_class, help="class-exclusive tokens")
    s.add_argument("--shared-vocab", type=int, default=sd.shared_vocab, help="tokens shared by all classes")
    s.add_argument("--tokens-per-text", type=int, default=sd.tokens_per_text, help="words per sample text")
    s.add_argument("--geo-spread", type=float, default=sd.geo_spread, help="coordinate std in degrees")
    s.add_argument("--image-dim", type=int, default=sd.image_dim, help="image feature width")
    s.add_argument("--image-center-distance", type=float, default=sd.image_center_distance,
                   help="distance between class image means")
    s.add_argument("--noise-level", type=float, default=sd.noise_level,
                   help="shared-token fraction and image noise scale, in [0, 1]")
    s.add_argument("--seed", type=int, default=sd.seed, help="generator seed")
    s.add_argument("--out", required=True, help="output dataset file")

    t = sub.add_parser("train", help="split, train, and report on the validation part", formatter_class=fmt)
    _add_run_flags(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset", formatter_class=fmt)
    e.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    e.add_argument("--data", required=True, help="dataset file to score")
    e.add_argument("--report", default="report.json", help="structured report output path")
    e.add_argument("--ablate", nargs="+", choices=MODALITIES, default=[],
                   help="zero these modality embeddings before the forward pass")
    e.add_argument("--figures", action="store_true", help="render confusion and per-class PNGs next to the report")

    g = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients", formatter_class=fmt)
    g.add_argument("--eps", type=float, default=1e-5, help="central-difference step")
    g.add_argument("--tol", type=float, default=None, help="max relative error (default: max(1e-4, eps))")
    g.add_argument("--samples", type=int, default=5, help="random samples in the checked batch")
    g.add_argument("--seed", type=int, default=0, help="seed for the random model and samples")
    return parser


def _explicit_dests(parser: argparse.ArgumentParser, argv: List[str]) -> set:
    """Destinations the user actually set on the command line."""
    saved = {a: a.default for a in parser._actions}
    try:
        for a in parser._actions:
            a.default = argparse.SUPPRESS
        ns, _ = parser.parse_known_args(argv)
    finally:
        for a, d in saved.items():
            a.default = d
    return set(vars(ns))


def resolve_run_config(args: argparse.Namespace, parser: argparse.ArgumentParser, argv: List[str]) -> RunConfig:
    """Built-in defaults, overridden by the --config file, overridden by explicit flags."""
    values = asdict(RunConfig())
    if args.config:
        try:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        unknown = set(file_values) - set(values)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for dest in _explicit_dests(parser, argv):
        if dest in values:
            values[dest] = getattr(args, dest)
    values["split"] = tuple(values["split"])
    cfg = RunConfig(**values)
    if not cfg.data or not cfg.out_dir:
        raise ConfigError("train needs --data and --out-dir (flag or config file)")
    return cfg


def _write_jsonl(path: Path, lines) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = SynthConfig(num_classes=args.classes, samples_per_class=args.per_class,
                      vocab_per_class=args.vocab_per_class, shared_vocab=args.shared_vocab,
                      tokens_per_text=args.tokens_per_text, geo_spread=args.geo_spread,
                      image_dim=args.image_dim, image_center_distance=args.image_center_distance,
                      noise_level=args.noise_level, seed=args.seed)
    ds = synth_generate(cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, args.out)
    counts = ", ".join(f"{name}={ds.labels.count(c)}" for c, name in enumerate(ds.class_names))
    print(f"wrote {len(ds)} samples, {ds.num_classes} classes ({counts}) to {args.out}")
    return EXIT_OK


def cmd_train(args, parser, argv) -> int:
    run = resolve_run_config(args, parser, argv)
    ds = load_dataset(run.data)
    if len(ds) == 0:
        raise ConfigError(f"dataset {run.data} has no samples")
    model_cfg = run.model_config(ds.num_classes, ds.d_i)
    embedders = run.embedders(ds.d_i)
    train_cfg = run.train_config()
    parts = split(ds, run.split, run.seed)

    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(run), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for name, part in zip(("train", "val", "test"), parts):
        save_dataset(part, out / f"{name}.jsonl")

    train_part, val_part, _ = parts
    embs = [embedders.embed(s) for s in train_part.samples]
    params, history = train(embs, train_part.labels, model_cfg, train_cfg,
                            on_epoch=lambda r: print(f"epoch {r.epoch:3d}  loss {r.mean_loss:.6f}  "
                                                     f"train_acc {r.train_accuracy:.4f}"))
    save_checkpoint(out / "checkpoint.json", params, model_cfg, embedders, ds.class_names)
    _write_jsonl(out / "history.jsonl", (r.to_json() for r in history))
    if run.figures and history:
        from .plots import plot_history

        plot_history(history, out / "history.png")
    if len(val_part):
        report = evaluate(params, [embedders.embed(s) for s in val_part.samples], val_part.labels,
                          model_cfg, ds.class_names)
        (out / "val_report.json").write_text(report.to_json(), encoding="utf-8")
        print("validation:")
        print(report.table())
    else:
        print("validation part is empty; no report written")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, model_cfg, embedders, ckpt_names = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if ds.num_classes != model_cfg.num_classes:
        raise ConfigError(f"checkpoint has {model_cfg.num_classes} classes, dataset has {ds.num_classes}")
    if ds.d_i != model_cfg.d_i:
        raise ConfigError(f"checkpoint expects d_i={model_cfg.d_i}, dataset declares d_i={ds.d_i}")
    if ckpt_names is not None and list(ckpt_names) != list(ds.class_names):
        raise ConfigError(f"class names differ: checkpoint {ckpt_names}, dataset {ds.class_names}")
    if len(ds) == 0:
        raise ConfigError(f"dataset {args.data} has no samples")
    embs = [embedders.embed(s).ablate(args.ablate) for s in ds.samples]
    report = evaluate(params, embs, ds.labels, model_cfg, ds.class_names)
    path = Path(args.report)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    echo = {"checkpoint": args.checkpoint, "data": args.data, "ablate": sorted(args.ablate)}
    path.with_suffix(".config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")
    if args.figures:
        from .plots import plot_confusion, plot_per_class

        plot_confusion(report, path.with_suffix(".confusion.png"))
        plot_per_class(report, path.with_suffix(".per_class.png"))
    print(report.table())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.eps <= 0 or args.samples < 1:
        raise ConfigError("--eps must be positive and --samples >= 1")
    result = gradient_check(n_samples=args.samples, eps=args.eps, tolerance=args.tol, seed=args.seed)
    for name, err in result.errors.items():
        status = "ok" if err < result.tolerance else "FAIL"
        print(f"{name:8s} max_rel_err {err:.3e}  {status}")
    if result.passed:
        print(f"PASS: all parameters below {result.tolerance:g} (eps {result.eps:g})")
        return EXIT_OK
    print(f"FAIL: {', '.join(result.failed)} exceed {result.tolerance:g}", file=sys.stderr)
    return EXIT_CHECK


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "train":
            sub = parser._subparsers._group_actions[0].choices["train"]
            return cmd_train(args, sub, argv[argv.index("train") + 1:])
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_gradcheck(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, MMDisasterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
