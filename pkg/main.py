"""
EyeAffect command line
Eye-slot preprocessing, splitting, training, evaluation and attention maps
"""

import argparse
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from errors import EyeAffectError
from evaluation.attention import DIRECTIONS, OUTPUT_NAMES, attention_triptych, heatmap_overlay, saliency
from evaluation.metrics import evaluate_report, format_report_table, read_predictions, write_predictions, write_report
from models.builders import MODEL_IDS, build, count_params, shape_table
from models.checkpoint import load_checkpoint, load_training_state
from models.network import format_shape_table
from preprocessing.augment import letterbox, preview_panel, prepare_input
from preprocessing.dataset import (
    build_split, parse_annotations, read_split_manifest, split_count_table, validation_count, write_split_manifest,
)
from preprocessing.eyeslot import EyeSlot, read_image, write_image
from preprocessing.pipeline import (
    MANIFEST_FILE, EyeSlotPreprocessor, load_slots, read_slot_manifest, rejection_report, slot_labels,
)
from preprocessing.synthetic import write_synthetic_corpus
from schemas.affect import TrainHistory
from schemas.config import ModelConfig, PipelineConfig, TrainConfig, load_config
from schemas.layers import WEIGHTED_KINDS
from seeding import derive_seed
from training.data import SlotDataset
from training.plots import export_loss_plot, training_time_table
from training.trainer import Trainer, predict

load_dotenv()  # Loads .env file into environment variables for local development

logger = logging.getLogger("eyeaffect")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

PREPROCESS_DIR = "preprocess"
SPLIT_FILE = "split.txt"


class NoRecordsError(EyeAffectError, ValueError):
    """An input that must contain records contains none"""


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def fraction(text: str) -> float:
    """'1/16', '0.0625' or '1'"""
    try:
        value = float(Fraction(text))
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from e
    return value


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=36)


def _add_model_flags(parser: argparse.ArgumentParser, config: PipelineConfig) -> None:
    model = config.model
    parser.add_argument("--model", choices=MODEL_IDS, default=model.id, help="Architecture")
    parser.add_argument("--input-width", type=int, default=model.input_width, help="Network input width in pixels")
    parser.add_argument("--input-height", type=int, default=model.input_height, help="Network input height in pixels")
    parser.add_argument("--scale", type=fraction, default=model.channel_scale, help="Channel scale, e.g. 1/16")
    parser.add_argument("--width-multiplier", type=fraction, default=model.width_multiplier,
                        help="MobileNet width multiplier (M3)")
    parser.add_argument("--dtype", choices=("float32", "float64"), default=model.dtype, help="Parameter precision")


def resolve_paths(args) -> None:
    """Fill path flags left unset with their locations under --output-dir."""
    out = Path(args.output_dir)
    defaults = {
        "manifest": out / PREPROCESS_DIR / MANIFEST_FILE,
        "split": out / SPLIT_FILE,
    }
    out_defaults = {
        "synthesize": out / "synthetic",
        "preprocess": out / PREPROCESS_DIR,
        "split": out / SPLIT_FILE,
    }
    for name, value in defaults.items():
        if hasattr(args, name) and getattr(args, name) is None:
            setattr(args, name, str(value))
    if getattr(args, "out", "") is None and args.command in out_defaults:
        args.out = str(out_defaults[args.command])


def build_parser(config: PipelineConfig) -> ArgumentParser:
    parser = ArgumentParser(
        prog="eyeaffect", description="Ocular-region valence/arousal regression pipeline", formatter_class=_formatter
    )
    parser.add_argument("--config", default=None, help="JSON pipeline configuration file")
    parser.add_argument("--log-level", default=os.getenv("EYEAFFECT_LOG_LEVEL", "INFO"), help="Logging level")
    parser.add_argument("--seed", type=int, default=config.seed, help="Base seed for every random stream")
    parser.add_argument("--output-dir", default=config.output_dir, help="Root directory for artifacts")
    parser.add_argument("--workers", type=int, default=config.workers, help="Worker threads (0 = inline)")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)
    commands.required = True

    p = commands.add_parser("synthesize", help="Write a synthetic annotated face corpus", formatter_class=_formatter)
    p.add_argument("--out", default=None, help="Corpus directory (default: <output-dir>/synthetic)")
    p.add_argument("--count", type=int, default=10, help="Number of faces")
    p.add_argument("--rotation", type=float, default=15.0, help="Faces are rotated uniformly within +/- this many degrees")
    p.add_argument("--invalid-fraction", type=float, default=0.0, help="Share of deliberately ineligible rows")
    p.add_argument("--size", type=int, default=256, help="Image side in pixels")
    p.set_defaults(func=cmd_synthesize)

    p = commands.add_parser("preprocess", help="Extract eye slots from annotated images", formatter_class=_formatter)
    p.add_argument("--annotations", default=config.annotations, help="Annotation CSV (training pool)")
    p.add_argument("--test-annotations", default=config.test_annotations, help="Annotation CSV of the test pool")
    p.add_argument("--image-root", default=None, help="Directory both annotation files are relative to (default: training annotation dir)")
    p.add_argument("--out", default=None, help="Slot directory (default: <output-dir>/preprocess)")
    p.add_argument("--horizontal-expansion", type=float, default=config.eyeslot.horizontal_expansion,
                   help="Box width increase")
    p.add_argument("--vertical-expansion", type=float, default=config.eyeslot.vertical_expansion,
                   help="Box height increase")
    p.add_argument("--debug-overlays", action="store_true", help="Also write box overlays on the source images")
    p.add_argument("--strict", action="store_true", help="Fail on the first malformed annotation row")
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("split", help="Carve the validation set and write the split manifest", formatter_class=_formatter)
    p.add_argument("--manifest", default=None, help="Eye-slot manifest (default: <output-dir>/preprocess/slots.csv)")
    p.add_argument("--test-annotations", default=config.test_annotations, help="Annotation CSV naming the test pool")
    p.add_argument("--validation-fraction", type=float, default=config.validation_fraction,
                   help="Share of the training pool set aside")
    p.add_argument("--out", default=None, help="Split manifest path (default: <output-dir>/split.txt)")
    p.set_defaults(func=cmd_split)

    train = config.train
    p = commands.add_parser("train", help="Train one model", formatter_class=_formatter)
    _add_model_flags(p, config)
    p.add_argument("--manifest", default=None, help="Eye-slot manifest (default: <output-dir>/preprocess/slots.csv)")
    p.add_argument("--split", default=None, help="Split manifest (default: <output-dir>/split.txt)")
    p.add_argument("--batch-size", type=int, default=train.batch_size, help="Batch size (gamma)")
    p.add_argument("--epochs", type=int, default=train.epochs, help="Epochs (eta)")
    p.add_argument("--alpha", type=float, default=train.adam.alpha, help="Adam step size")
    p.add_argument("--no-augment", action="store_true", help="Disable training-time augmentation")
    p.add_argument("--no-shuffle", action="store_true", help="Keep the manifest order every epoch")
    p.add_argument("--checkpoint-dir", default=None, help="Default: <output-dir>/checkpoints/<model>")
    p.add_argument("--resume", default=None, help="Continue from a checkpoint written by train")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="Score predictions: RMSE, CORR, CCC and SAGR per output", formatter_class=_formatter)
    p.add_argument("--predictions", nargs="*", default=[], help="Prediction CSVs, one per model")
    p.add_argument("--names", nargs="*", default=None, help="Model names for the prediction files")
    p.add_argument("--checkpoint", default=None, help="Predict the test subset with this checkpoint first")
    p.add_argument("--manifest", default=None, help="Eye-slot manifest (default: <output-dir>/preprocess/slots.csv)")
    p.add_argument("--split", default=None, help="Split manifest (default: <output-dir>/split.txt)")
    p.add_argument("--report", default=None, help="Report JSON path (default: <output-dir>/report.json)")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("attention", help="Gradient saliency overlay for one eye slot", formatter_class=_formatter)
    p.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    p.add_argument("--image", required=True, help="Eye-slot PNG")
    p.add_argument("--output", choices=OUTPUT_NAMES + ("both",), default="both", help="Which prediction")
    p.add_argument("--direction", choices=DIRECTIONS + ("triptych",), default="triptych", help="Saliency direction")
    p.add_argument("--out", default=None, help="PNG path (default: <output-dir>/attention/<image>)")
    p.set_defaults(func=cmd_attention)

    p = commands.add_parser("augment-preview", help="Before/after PNGs of the training transforms",
                            formatter_class=_formatter)
    p.add_argument("--image", required=True, help="Eye-slot PNG")
    p.add_argument("--count", type=int, default=4, help="Augmented variants")
    p.add_argument("--input-width", type=int, default=config.model.input_width, help="Letterbox width")
    p.add_argument("--input-height", type=int, default=config.model.input_height, help="Letterbox height")
    p.add_argument("--out", default=None, help="Directory (default: <output-dir>/augment-preview)")
    p.set_defaults(func=cmd_augment_preview)

    p = commands.add_parser("describe", help="Per-layer shape and parameter table", formatter_class=_formatter)
    _add_model_flags(p, config)
    p.add_argument("--all", action="store_true", help="Also compare parameter counts of all three models")
    p.set_defaults(func=cmd_describe)
    return parser


def model_config(args, config: PipelineConfig) -> ModelConfig:
    return ModelConfig(**{
        **config.model.model_dump(),
        "id": args.model, "input_width": args.input_width, "input_height": args.input_height,
        "channel_scale": args.scale, "width_multiplier": args.width_multiplier, "dtype": args.dtype,
    })


def cmd_synthesize(args, config: PipelineConfig) -> int:
    csv_path, records = write_synthetic_corpus(
        args.out, args.count, args.seed, (-args.rotation, args.rotation), args.invalid_fraction, args.size
    )
    print(f"Wrote {len(records)} faces and {csv_path}")
    return EXIT_OK


def cmd_preprocess(args, config: PipelineConfig) -> int:
    if not args.annotations:
        raise ValueError("--annotations is required (flag or config file)")
    records, diagnostics = parse_annotations(args.annotations, strict=args.strict)
    image_root = args.image_root or str(Path(args.annotations).parent)
    if args.test_annotations:
        test_records, test_diagnostics = parse_annotations(args.test_annotations, strict=args.strict)
        records += test_records
        diagnostics += test_diagnostics
    for diagnostic in diagnostics:
        print(f"malformed row {diagnostic.row}: {diagnostic.message}", file=sys.stderr)
    if not records:
        raise NoRecordsError("no records")

    eyeslot = config.eyeslot.model_copy(update={
        "horizontal_expansion": args.horizontal_expansion, "vertical_expansion": args.vertical_expansion,
    })
    preprocessor = EyeSlotPreprocessor(eyeslot, workers=args.workers, debug_overlays=args.debug_overlays)
    summary = preprocessor.run(records, image_root, args.out)
    print(rejection_report(summary))
    return EXIT_OK


def cmd_split(args, config: PipelineConfig) -> int:
    rows = read_slot_manifest(args.manifest)
    if not rows:
        raise NoRecordsError("no records")
    test_pool = set()
    if args.test_annotations:
        test_records, _ = parse_annotations(args.test_annotations)
        test_pool = {r.record_id for r in test_records}

    train_rows = [r for r in rows if r.record_id not in test_pool]
    test_rows = [r for r in rows if r.record_id in test_pool]
    train_accepted = [r.record_id for r in train_rows if r.accepted]
    if not train_accepted:
        raise NoRecordsError("no records in the training pool")
    manifest = build_split(
        train_accepted, [r.record_id for r in test_rows if r.accepted], args.validation_fraction, args.seed
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_split_manifest(manifest, args.out)

    initial_validation = validation_count(args.validation_fraction, len(train_rows))
    initial = {"train": len(train_rows) - initial_validation, "validation": initial_validation, "test": len(test_rows)}
    print(split_count_table(initial, manifest.counts()))
    print(f"Split manifest written to {args.out}")
    return EXIT_OK


def _datasets(args, config: PipelineConfig, target, dtype):
    split = read_split_manifest(args.split)
    train_slots = load_slots(args.manifest, split.train)
    val_slots = load_slots(args.manifest, split.validation)
    if not train_slots:
        raise NoRecordsError("no records in the training split")
    train_set = SlotDataset(train_slots, target, dtype, None if args.no_augment else config.augment, args.seed)
    val_set = SlotDataset(val_slots, target, dtype, None, args.seed)
    return train_set, val_set


def cmd_train(args, config: PipelineConfig) -> int:
    out = Path(args.output_dir)
    checkpoint_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else out / "checkpoints" / args.model
    train_config = TrainConfig(**{
        **config.train.model_dump(),
        "batch_size": args.batch_size, "epochs": args.epochs, "seed": args.seed,
        "shuffle": not args.no_shuffle, "augment": not args.no_augment, "workers": args.workers,
        "checkpoint_dir": str(checkpoint_dir), "adam": {**config.train.adam.model_dump(), "alpha": args.alpha},
    })

    if args.resume:
        network, adam, metadata = load_training_state(args.resume)
        start_epoch = int(metadata.get("epoch", -1)) + 1
        restored = TrainHistory(**metadata["history"]) if metadata.get("history") else None
        trainer = Trainer(
            network, train_config, model_id=network.config.id, adam=adam, start_epoch=start_epoch, history=restored
        )
    else:
        network = build(model_config(args, config), seed=args.seed)
        trainer = Trainer(network, train_config)

    target = (network.config.input_width, network.config.input_height)
    train_set, val_set = _datasets(args, config, target, network.config.dtype)
    history = trainer.train(train_set, val_set if len(val_set) else None)

    history_path = out / f"history_{trainer.model_id}.csv"
    export_loss_plot(history, history_path)
    export_loss_plot(history, out / f"loss_{trainer.model_id}.png")
    print(training_time_table(history))
    print(f"History written to {history_path}; checkpoints in {checkpoint_dir}")
    return EXIT_OK


def _predict_checkpoint(args, path: str) -> str:
    network = load_checkpoint(path)
    split = read_split_manifest(args.split)
    slots = load_slots(args.manifest, split.test)
    if not slots:
        raise NoRecordsError("no records in the test split")
    target = (network.config.input_width, network.config.input_height)
    inputs = np.stack([prepare_input(s.image, target, network.config.dtype) for s in slots])
    out = Path(args.output_dir) / f"predictions_{network.config.id}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions(out, predict(network, inputs), slot_labels(slots), [s.record_id for s in slots])
    print(f"Predictions written to {out}")
    return str(out)


def cmd_evaluate(args, config: PipelineConfig) -> int:
    files = list(args.predictions)
    if args.checkpoint:
        files.append(_predict_checkpoint(args, args.checkpoint))
    if not files:
        raise ValueError("give --predictions files or a --checkpoint")
    names = list(args.names) if args.names else [Path(f).stem.replace("predictions_", "") for f in files]
    if len(names) != len(files):
        raise ValueError(f"{len(names)} names for {len(files)} prediction files")

    reports = []
    for name, path in zip(names, files):
        predictions, targets, _ = read_predictions(path)
        if len(predictions) == 0:
            raise NoRecordsError(f"no records in {path}")
        reports.append(evaluate_report(predictions, targets, model_id=name))

    report_path = Path(args.report) if args.report else Path(args.output_dir) / "report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    write_report(reports, report_path)
    print(format_report_table(reports))
    print(f"Report written to {report_path}")
    return EXIT_OK


def cmd_attention(args, config: PipelineConfig) -> int:
    network = load_checkpoint(args.checkpoint)
    target = (network.config.input_width, network.config.input_height)
    image = prepare_input(read_image(args.image), target, network.config.dtype)
    out = Path(args.out) if args.out else Path(args.output_dir) / "attention" / Path(args.image).name
    outputs = (0, 1) if args.output == "both" else (OUTPUT_NAMES.index(args.output),)

    if args.direction == "triptych":
        attention_triptych(network, image, outputs, out)
    else:
        panels = [heatmap_overlay(image, saliency(network, image, i, args.direction).values) for i in outputs]
        out.parent.mkdir(parents=True, exist_ok=True)
        write_image(np.vstack(panels), out)
    print(f"Attention map written to {out}")
    return EXIT_OK


def cmd_augment_preview(args, config: PipelineConfig) -> int:
    slot = EyeSlot(image=read_image(args.image), valence=0.0, arousal=0.0, record_id=Path(args.image).stem)
    target = (args.input_width, args.input_height)
    out = Path(args.out) if args.out else Path(args.output_dir) / "augment-preview"
    out.mkdir(parents=True, exist_ok=True)
    seeds = [derive_seed(args.seed, "augment-preview", i) for i in range(args.count)]

    write_image(letterbox(slot.image, *target), out / f"{slot.record_id}_before.png")
    write_image(preview_panel(slot, config.augment, seeds, target), out / f"{slot.record_id}_after.png")
    print(f"Preview written to {out}")
    return EXIT_OK


def cmd_describe(args, config: PipelineConfig) -> int:
    model = model_config(args, config)
    rows = shape_table(model)
    print(f"{model.id} ({model.input_height}x{model.input_width}, scale {args.scale:g})")
    print(format_shape_table(rows, model.input_shape))
    weighted = [r for r in rows if r.kind in WEIGHTED_KINDS]
    print(f"Weighted layers: {len(weighted)}")
    for row in weighted:
        print(f"  {row.name}")
    if args.all:
        print("\nParameter counts:")
        for model_id in MODEL_IDS:
            other = ModelConfig(**{**model.model_dump(), "id": model_id})
            print(f"  {model_id}: {count_params(other):,}")
    return EXIT_OK


def _preparse(argv: Sequence[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    pre.add_argument("--log-level", default=os.getenv("EYEAFFECT_LOG_LEVEL", "INFO"))
    known, _ = pre.parse_known_args(argv)
    return known


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    early = _preparse(argv)
    logging.basicConfig(
        level=getattr(logging, str(early.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(early.config)
    except (OSError, ValueError) as e:
        print(f"eyeaffect: invalid configuration: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    args = build_parser(config).parse_args(argv)
    resolve_paths(args)
    config = config.model_copy(update={"seed": args.seed, "output_dir": args.output_dir})

    try:
        return args.func(args, config)
    except (ValidationError, ValueError) as e:
        logger.error(str(e))
        print(f"eyeaffect {args.command}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, EyeAffectError, ArithmeticError, RuntimeError) as e:
        logger.error(str(e))
        print(f"eyeaffect {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
