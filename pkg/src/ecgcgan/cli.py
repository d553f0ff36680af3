"""Command-line entry point: prepare, train, generate, evaluate, plot.

Every command writes a ``manifest.json`` describing what it did. Options can
also come from a ``key = value`` config file; precedence is built-in
defaults, then the config file, then flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    DS1,
    DS2,
    LABEL_INDEX,
    LABELS,
    Beat,
    SplitPlan,
    as_arrays,
    build_split,
    class_counts,
    discover_records,
    extract_beats,
    file_digest,
    ingest_record,
    read_beats,
    smote_balance,
    write_beats,
)
from .evaluation import evaluate_discriminator, evaluate_generator, synthesize, write_reports
from .training import Trainer, TrainingConfig, read_snapshot, read_train_log, write_train_log

log = logging.getLogger("ecgcgan")

# Published beat counts used as a yardstick for full MIT-BIH extractions
REFERENCE_COUNTS = {
    "intra": {"N": 87529, "S": 5892, "V": 2438, "F": 2438},
    "inter": {"N": 44476, "S": 3205, "V": 683},
    "inter_test": {"N": 43053, "S": 2687, "V": 1755},
}


class UsageError(Exception):
    """Bad command-line input detected before any work starts."""


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


# option name -> (type, default); defaults of train options mirror TrainingConfig
_TRAIN_DEFAULTS = TrainingConfig()
OPTIONS = {
    "prepare": {
        "mode": (str, "intra"),
        "seed": (int, 0),
        "smote": (_bool, True),
        "k_neighbors": (int, 5),
        "train_fraction": (float, 0.8),
    },
    "train": {
        **{f.name: (_bool if isinstance(getattr(_TRAIN_DEFAULTS, f.name), bool) else type(getattr(_TRAIN_DEFAULTS, f.name)),
                    getattr(_TRAIN_DEFAULTS, f.name))
           for f in TrainingConfig.__dataclass_fields__.values()},
        "resume": (str, None),
    },
    "generate": {"seed": (int, 0), "noise_sigma": (float, 4.0)},
    "evaluate": {"seed": (int, 0), "noise_sigma": (float, 4.0), "plot_beats": (int, 1)},
    "plot": {"per_class": (int, 1)},
}


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags for ``command``."""
    table = OPTIONS[command]
    file_values = read_config_file(args.config) if args.config else {}
    unknown = sorted(set(file_values) - set(table))
    if unknown:
        raise UsageError(f"unknown {command} option(s) in config file: {', '.join(unknown)}")
    resolved = {}
    for name, (kind, default) in table.items():
        flag = getattr(args, name, None)
        if flag is not None:
            resolved[name] = flag
        elif name in file_values:
            try:
                resolved[name] = kind(file_values[name])
            except ValueError as exc:
                raise UsageError(f"config option {name}: {exc}") from None
        else:
            resolved[name] = default
    return resolved


# --------------------------------------------------------------------------
# manifest


def _input_entry(path, deterministic: bool) -> dict:
    path = Path(path)
    entry = {"path": path.name if deterministic else str(path.resolve())}
    if path.is_file():
        entry["sha256"] = file_digest(path)
    return entry


def write_manifest(path, command: str, options: dict, inputs: dict, outputs: list[str],
                   deterministic: bool, started: float, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": options,
        "seeds": {k: v for k, v in options.items() if k == "seed"},
        "inputs": {k: _input_entry(p, deterministic) for k, p in inputs.items()},
        "outputs": sorted(outputs),
        "deterministic": deterministic,
    }
    if extra:
        manifest.update(extra)
    if not deterministic:
        manifest["started"] = time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started))
        manifest["elapsed_seconds"] = round(time.time() - started, 3)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# commands


def _load_prepared(raw: Path) -> tuple[dict[str, list[Beat]], Counter]:
    if raw.is_file():
        by_record: dict[str, list[Beat]] = {}
        for b in read_beats(raw):
            by_record.setdefault(b.record_id, []).append(b)
        return by_record, Counter()
    paths = discover_records(raw)
    if not paths:
        raise UsageError(f"no *.sig.csv records found in {raw}")
    by_record, dropped = {}, Counter()
    for p in paths:
        beats, skipped = extract_beats(ingest_record(p))
        by_record[p.name] = beats
        dropped.update(skipped)
        log.info("record %s: %d beats, skipped %s", p.name, len(beats), dict(skipped) or "none")
    return by_record, dropped


def _count_deltas(counts: dict[str, int], mode: str, fold: str = "") -> dict:
    ref = REFERENCE_COUNTS[mode]
    deltas = {c: counts[c] - ref[c] for c in ref}
    for c in ref:
        log.info("%sclass %s: %d beats (reference %d, delta %+d)", fold, c, counts[c], ref[c], deltas[c])
    return {"reference": ref, "delta": deltas}


def cmd_prepare(args, opts) -> int:
    started = time.time()
    raw, out_dir = Path(args.raw), Path(args.out_dir)
    if not raw.exists():
        raise UsageError(f"raw input not found: {raw}")
    plan = SplitPlan(mode=opts["mode"], train_fraction=opts["train_fraction"], seed=opts["seed"])
    by_record, dropped = _load_prepared(raw)
    train, test = build_split(by_record, plan)
    counts_train = class_counts(train)
    counts_test = class_counts(test)
    if opts["smote"] and train:
        train = smote_balance(train, opts["k_neighbors"], opts["seed"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_beats(train, out_dir / "train.csv", with_flags=True)
    write_beats(test, out_dir / "test.csv", with_flags=True)
    if plan.mode == "inter":
        reference = _count_deltas(counts_train, "inter", "train ")
        reference["test"] = _count_deltas(counts_test, "inter_test", "test ")
    else:
        reference = _count_deltas({c: counts_train[c] + counts_test[c] for c in LABELS}, "intra")
    extra = {
        "split": plan.describe(),
        "ds_lists": {"DS1": list(DS1), "DS2": list(DS2),
                     "note": "DS1 with the duplicated 101 replaced by the canonical 22-record list"},
        "counts": {
            "train_before_smote": counts_train,
            "train": class_counts(train),
            "test": counts_test,
            "synthetic": sum(b.synthetic for b in train),
        },
        "dropped": dict(sorted(dropped.items())),
        "records": {"train": sorted({b.record_id for b in train} - {"smote"}),
                    "test": sorted({b.record_id for b in test})},
        "reference_counts": reference,
    }
    write_manifest(out_dir / "manifest.json", "prepare", opts, {"raw": raw},
                   ["train.csv", "test.csv"], args.deterministic, started, extra)
    log.info("wrote %d train and %d test beats to %s", len(train), len(test), out_dir)
    return 0


def _training_config(opts) -> TrainingConfig:
    return TrainingConfig(**{k: v for k, v in opts.items() if k in TrainingConfig.__dataclass_fields__})


def cmd_train(args, opts) -> int:
    started = time.time()
    beats_path, out_dir = Path(args.train_beats), Path(args.out_dir)
    if not beats_path.is_file():
        raise UsageError(f"beats file not found: {beats_path}")
    x, labels = as_arrays(read_beats(beats_path))
    if len(x) == 0:
        raise UsageError(f"{beats_path}: no beats")
    config = _training_config(opts)
    out_dir.mkdir(parents=True, exist_ok=True)
    if opts["resume"]:
        trainer = Trainer.resume(config, opts["resume"], "latest_")
        log.info("resumed at epoch %d step %d", trainer.epoch, trainer.step)
    else:
        trainer = Trainer(config)
    first_step = trainer.step
    try:
        trainer.fit(x, labels, out_dir, keep_timing=not args.deterministic)
    finally:
        write_train_log(trainer.log, out_dir / "train_log.csv", include_timing=not args.deterministic)
    trainer.save(out_dir / "checkpoints")
    outputs = ["train_log.csv", "checkpoints/generator.ckpt", "checkpoints/discriminator.ckpt"]
    outputs += sorted(f"snapshots/{p.name}" for p in (out_dir / "snapshots").glob("*.csv"))
    if trainer.log:
        from .plotting import plot_losses

        plot_losses(trainer.log, out_dir / "losses.svg")
        outputs.append("losses.svg")
    extra = {"steps": {"first": first_step, "last": trainer.step}, "epochs_completed": trainer.epoch}
    write_manifest(out_dir / "manifest.json", "train", opts, {"train_beats": beats_path},
                   outputs, args.deterministic, started, extra)
    return 0


def cmd_generate(args, opts) -> int:
    started = time.time()
    beats_path, out = Path(args.beats), Path(args.out)
    G = load_checkpoint(args.g_checkpoint, "generator")
    beats = read_beats(beats_path)
    x, labels = as_arrays(beats)
    generated = synthesize(G, x, labels, opts["seed"], opts["noise_sigma"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_beats([Beat(g, b.label, b.record_id, b.r_peak_index, True) for g, b in zip(generated, beats)],
                out, with_flags=True)
    manifest = out.with_name(out.stem + ".manifest.json")
    write_manifest(manifest, "generate", opts, {"g_checkpoint": args.g_checkpoint, "beats": beats_path},
                   [out.name], args.deterministic, started, {"n_beats": len(beats)})
    return 0


def cmd_evaluate(args, opts) -> int:
    from .plotting import plot_beat_pairs, plot_roc

    started = time.time()
    out_dir = Path(args.out_dir)
    G = load_checkpoint(args.g_checkpoint, "generator")
    D = load_checkpoint(args.d_checkpoint, "discriminator")
    x, labels = as_arrays(read_beats(args.test_beats))
    if len(x) == 0:
        raise UsageError(f"{args.test_beats}: no beats")
    generated = synthesize(G, x, labels, opts["seed"], opts["noise_sigma"])
    sim = evaluate_generator(G, x, labels, opts["seed"], opts["noise_sigma"])
    disc = evaluate_discriminator(D, x, labels, G, adversarial=generated)
    summary = write_reports(sim, disc, out_dir)
    plot_beat_pairs(x, generated, labels, out_dir / "beats.svg", opts["plot_beats"])
    plot_roc(disc.detection_scores, disc.detection_truth, out_dir / "roc.svg", disc.detection.auc)
    outputs = ["similarity.json", "similarity.csv", "classification_real.csv", "classification_adv.csv",
               "detection.csv", "report.json", "beats.svg", "roc.svg"]
    inputs = {"g_checkpoint": args.g_checkpoint, "d_checkpoint": args.d_checkpoint, "test_beats": args.test_beats}
    write_manifest(out_dir / "manifest.json", "evaluate", opts, inputs, outputs, args.deterministic, started,
                   {"summary": {"ssim": summary["similarity"]["ssim"],
                                "accuracy_real": summary["classification_real"]["accuracy"],
                                "detection_auc": summary["detection"]["auc"]}})
    log.info("ssim %.4f, real accuracy %.4f, detection auc %s", sim.ssim, disc.real.accuracy, disc.detection.auc)
    return 0


def _snapshot_pairs(paths: list[Path]) -> dict:
    pairs = {}
    for p in paths:
        rows = {kind: (epoch, label, s) for epoch, label, kind, s in read_snapshot(p)}
        if "real" in rows and "generated" in rows:
            epoch, label, real = rows["real"]
            pairs[(epoch, label)] = (real, rows["generated"][2])
    return pairs


def cmd_plot(args, opts) -> int:
    from .plotting import plot_beat_pairs, plot_losses, plot_snapshot_grid

    started = time.time()
    out_dir = Path(args.out_dir)
    inputs = [Path(p) for p in args.inputs]
    for p in inputs:
        if not p.exists():
            raise UsageError(f"input not found: {p}")
    snapshot_files, beat_files, log_files = [], [], []
    for p in inputs:
        if p.is_dir():
            snapshot_files += sorted(p.glob("epoch_*_*.csv"))
        elif p.name.startswith("epoch_"):
            snapshot_files.append(p)
        elif p.name == "train_log.csv":
            log_files.append(p)
        else:
            beat_files.append(p)
    outputs = []
    if snapshot_files:
        pairs = _snapshot_pairs(snapshot_files)
        if not pairs:
            raise UsageError("snapshot files contain no real/generated pairs")
        plot_snapshot_grid(pairs, out_dir / "snapshots.svg")
        outputs.append("snapshots.svg")
    if beat_files:
        if len(beat_files) > 2:
            raise UsageError("plot takes one beats file, or a real and a generated beats file")
        real = read_beats(beat_files[0])
        if not real:
            raise UsageError(f"{beat_files[0]}: no beats")
        other = read_beats(beat_files[1]) if len(beat_files) == 2 else real
        if len(other) != len(real):
            raise UsageError("real and generated beats files differ in length")
        x, labels = as_arrays(real)
        plot_beat_pairs(x, as_arrays(other)[0], labels, out_dir / "beats.svg", opts["per_class"])
        outputs.append("beats.svg")
    for p in log_files:
        records = read_train_log(p)
        if not records:
            raise UsageError(f"{p}: empty training log")
        plot_losses(records, out_dir / "losses.svg")
        outputs.append("losses.svg")
    if not outputs:
        raise UsageError("nothing to plot")
    write_manifest(out_dir / "manifest.json", "plot", opts, {f"input{i}": p for i, p in enumerate(inputs)},
                   outputs, args.deterministic, started)
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecgcgan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with option defaults")
    common.add_argument("--deterministic", action="store_true",
                        help="omit timestamps and timings so reruns are byte-identical")
    common.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="extract, split and balance beats")
    p.add_argument("raw", help="directory of <id>.sig.csv/<id>.ann.csv pairs, or a beats CSV")
    p.add_argument("out_dir")
    p.add_argument("--mode", choices=("intra", "inter"))
    p.add_argument("--seed", type=int)
    p.add_argument("--smote", dest="smote", action="store_const", const=True)
    p.add_argument("--no-smote", dest="smote", action="store_const", const=False)
    p.add_argument("--k-neighbors", type=int)
    p.add_argument("--train-fraction", type=float)

    p = sub.add_parser("train", parents=[common], help="train the generator and discriminator")
    p.add_argument("train_beats")
    p.add_argument("out_dir")
    for name, (kind, _) in OPTIONS["train"].items():
        if kind is _bool:
            p.add_argument(_flag(name), dest=name, action="store_const", const=True)
            p.add_argument("--no-" + name.replace("_", "-"), dest=name, action="store_const", const=False)
        else:
            p.add_argument(_flag(name), dest=name, type=kind)

    p = sub.add_parser("generate", parents=[common], help="synthesize one beat per input beat")
    p.add_argument("g_checkpoint")
    p.add_argument("beats")
    p.add_argument("out")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", type=float)

    p = sub.add_parser("evaluate", parents=[common], help="similarity, classification and detection reports")
    p.add_argument("g_checkpoint")
    p.add_argument("d_checkpoint")
    p.add_argument("test_beats")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--plot-beats", type=int, help="beats per class in beats.svg")

    p = sub.add_parser("plot", parents=[common], help="render beats, snapshots or a training log")
    p.add_argument("inputs", nargs="+", help="beats CSV(s), snapshot files/directory, or train_log.csv")
    p.add_argument("out_dir")
    p.add_argument("--per-class", type=int)
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        opts = resolve_options(args.command, args)
        return COMMANDS[args.command](args, opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # single-line diagnostic for every failure
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
