"""
Command-line surface: dataset synthesis, training, conversion, evaluation,
embedding export, plotting and codebook-size sweeps.

Exit codes: 0 success, 1 usage error, 2 data/validation/I-O error,
3 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

from cli.scatter_svg import write_scatter_svg
from models.branch import Branch, EmbeddingKind
from models.dataset import Dataset, Utterance, load_dataset, save_dataset
from models.embedding_record import load_embeddings_csv, save_embeddings_csv, select_records
from models.errors import DivergenceError, NumericError, ValidationError
from models.evaluation_inputs import load_bws_trials, load_f0_csv, load_ratings, load_transcript
from models.model_config import ModelConfig
from models.run_paths import RunManifest, RunPaths, save_manifest
from models.synth_spec import SynthSpec
from services.checkpoint import load_checkpoint, save_checkpoint
from services.conversion_service import ConversionService
from services.dataset_service import synth_dataset
from services.embedding_analysis import disentanglement_report, pca2
from services.listening_tests import bws_table, mos_summary
from services.speech_metrics import average_cosine_similarity, corpus_wer, ffe, mcd
from services.sweep_service import SweepService
from services.train_service import TrainService, save_history_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3
DEFAULT_SEED = 42
SEED_ENV = "DART_SEED"
EVAL_TASKS = ("mcd", "ffe", "cs", "wer", "bws", "mos")


class UsageError(Exception):
    pass


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad arguments."""

    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> CommandParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"Random seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    common.add_argument("--quiet", action="store_true", help="Suppress progress messages on stderr")

    parser = CommandParser(prog="dart", description="Speaker/accent disentanglement toolkit")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = commands.add_parser("synth-data", parents=[common], help="Generate a synthetic dataset")
    p.add_argument("--spec", type=Path, help="YAML/JSON synth spec (default: built-in defaults)")
    p.add_argument("--out", type=Path, required=True, help="Output dataset (JSON lines)")

    p = commands.add_parser("train", parents=[common], help="Train a model")
    p.add_argument("--config", type=Path, help="YAML/JSON model config")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="Output checkpoint")

    p = commands.add_parser("convert", parents=[common], help="Convert one utterance to another accent")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="Reference set containing the target accent")
    p.add_argument("--utterance", required=True)
    p.add_argument("--target-accent", required=True)
    p.add_argument("--out", type=Path, required=True, help="Output features (JSON lines)")

    p = commands.add_parser("eval", parents=[common], help="Compute an evaluation metric")
    p.add_argument("--task", required=True, choices=EVAL_TASKS)
    p.add_argument("--ref", type=Path, help="Reference input (mcd: dataset, ffe: F0 CSV, cs: embeddings, wer: text)")
    p.add_argument("--hyp", type=Path, help="Hypothesis input of the same kind as --ref")
    p.add_argument("--keep-c0", action="store_true", help="mcd: include the 0th cepstral coefficient")
    p.add_argument("--threshold", type=float, default=0.2, help="ffe: gross pitch error threshold")
    p.add_argument("--branch", choices=[b.value for b in Branch], default=Branch.SPEAKER.value)
    p.add_argument("--kind", choices=[k.value for k in EmbeddingKind], default=EmbeddingKind.PRE_VQ.value)
    p.add_argument("--trials", type=Path, help="bws: trials (JSON lines)")
    p.add_argument("--ratings", type=Path, action="append", help="mos: ratings file, repeatable")

    p = commands.add_parser("embed", parents=[common], help="Export embeddings")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="Output embedding CSV")
    p.add_argument("--report", type=Path, help="Also write a disentanglement report CSV")

    p = commands.add_parser("plot", parents=[common], help="PCA scatter plot of embeddings")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--color-by", choices=[b.value for b in Branch], required=True)
    p.add_argument("--branch", choices=[b.value for b in Branch], required=True)
    p.add_argument("--kind", choices=[k.value for k in EmbeddingKind], default=EmbeddingKind.PRE_VQ.value)
    p.add_argument("--out", type=Path, required=True, help="Output SVG")

    p = commands.add_parser("sweep", parents=[common], help="Train once per codebook size")
    p.add_argument("--config", type=Path)
    p.add_argument("--codebook-sizes", type=_size_list, required=True, help="Comma separated, e.g. 64,128,512")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="Output table CSV")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _size_list(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of integers: {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"codebook sizes must be positive integers: {text!r}")
    return sizes


def resolve_seed(flag: int | None) -> int:
    """--seed, else $DART_SEED, else 42."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _model_config(path: Path | None, seed: int, data: Dataset) -> ModelConfig:
    cfg = ModelConfig.from_file(path) if path else ModelConfig()
    changes = {"seed": seed}
    if cfg.feature_dim is None and data.feature_dim is not None:
        changes["feature_dim"] = data.feature_dim
    return cfg.with_overrides(**changes)


def _finish(manifest: RunManifest, primary: Path, outputs: list[Path]) -> None:
    manifest.finish(outputs)
    save_manifest(manifest, RunPaths(primary).manifest_json())


def cmd_synth_data(args, argv, seed, log) -> int:
    spec = SynthSpec.from_file(args.spec) if args.spec else SynthSpec()
    spec = SynthSpec.from_mapping({**spec.to_dict(), "seed": seed})
    manifest = RunManifest(argv, spec.to_dict(), seed)
    data = synth_dataset(spec, log_callback=log)
    save_dataset(data, args.out)
    log(f"✓ Wrote {len(data)} utterances to {args.out}")
    _finish(manifest, args.out, [args.out])
    return EXIT_OK


def cmd_train(args, argv, seed, log) -> int:
    data = load_dataset(args.data)
    cfg = _model_config(args.config, seed, data)
    manifest = RunManifest(argv, cfg.to_dict(), seed)
    result = TrainService(cfg).train(data, log_callback=log)

    paths = RunPaths(args.out)
    save_checkpoint(result.model, args.out)
    save_history_csv(result, paths.history_csv())
    manifest.final_loss = result.final_loss.as_dict()
    log(f"✓ Saved checkpoint to {args.out} and loss history to {paths.history_csv()}")
    _finish(manifest, args.out, [args.out, paths.history_csv()])
    return EXIT_OK


def cmd_convert(args, argv, seed, log) -> int:
    model = load_checkpoint(args.model)
    reference = load_dataset(args.data)
    source = reference.get(args.utterance)
    manifest = RunManifest(argv, model.config.to_dict(), seed)
    features = ConversionService(model).convert(source, args.target_accent, reference, log_callback=log)
    converted = Utterance(f"{source.utterance_id}_to_{args.target_accent}", source.speaker_id,
                          args.target_accent, features)
    save_dataset(Dataset([converted]), args.out)
    _finish(manifest, args.out, [args.out])
    return EXIT_OK


def cmd_embed(args, argv, seed, log) -> int:
    model = load_checkpoint(args.model)
    data = load_dataset(args.data)
    manifest = RunManifest(argv, model.config.to_dict(), seed)
    records = ConversionService(model).extract_embeddings(data, log_callback=log)
    save_embeddings_csv(records, args.out)
    outputs = [args.out]
    if args.report:
        report = disentanglement_report(records)
        report.to_csv(args.report, index=False, lineterminator="\n", float_format="%.17g")
        outputs.append(args.report)
        log(f"✓ Wrote disentanglement report to {args.report}")
    _finish(manifest, args.out, outputs)
    return EXIT_OK


def cmd_plot(args, argv, seed, log) -> int:
    records = select_records(load_embeddings_csv(args.embeddings), Branch(args.branch), EmbeddingKind(args.kind))
    if not records:
        raise ValidationError(f"{args.embeddings.name} has no {args.branch}/{args.kind} embeddings")
    settings = {"branch": args.branch, "kind": args.kind, "color_by": args.color_by}
    manifest = RunManifest(argv, settings, seed)
    points = pca2([r.vector for r in records])
    labels = [r.label(Branch(args.color_by)) for r in records]
    title = f"{args.branch} branch ({args.kind}) coloured by {args.color_by}"
    write_scatter_svg(points, labels, args.out, title=title)
    log(f"✓ Wrote {len(records)} points to {args.out}")
    _finish(manifest, args.out, [args.out])
    return EXIT_OK


def cmd_sweep(args, argv, seed, log) -> int:
    data = load_dataset(args.data)
    cfg = _model_config(args.config, seed, data)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    manifest = RunManifest(argv, cfg.to_dict(), seed)
    table = SweepService(cfg, workers=args.workers).run(data, args.codebook_sizes, log_callback=log)
    table.to_csv(args.out, index=False, lineterminator="\n", float_format="%.17g")
    _finish(manifest, args.out, [args.out])
    return EXIT_OK


def _require(args, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n)]
    if missing:
        raise UsageError(f"eval --task {args.task} requires {', '.join(missing)}")


def evaluate(args) -> dict:
    task = args.task
    if task == "mcd":
        _require(args, "ref", "hyp")
        ref, hyp = load_dataset(args.ref), load_dataset(args.hyp)
        shared = sorted(set(ref.ids()) & set(hyp.ids()))
        if not shared:
            raise ValidationError("reference and hypothesis datasets share no utterance ids")
        values = [mcd(ref.get(i).features, hyp.get(i).features, skip_c0=not args.keep_c0) for i in shared]
        return {"mcd": sum(values) / len(values), "pairs": len(values)}
    if task == "ffe":
        _require(args, "ref", "hyp")
        ref, hyp = load_f0_csv(args.ref), load_f0_csv(args.hyp)
        return {"ffe": ffe(ref, hyp, args.threshold), "frames": ref.frames}
    if task == "cs":
        _require(args, "ref", "hyp")
        branch, kind = Branch(args.branch), EmbeddingKind(args.kind)
        ref = {r.utterance_id: r.vector for r in select_records(load_embeddings_csv(args.ref), branch, kind)}
        hyp = {r.utterance_id: r.vector for r in select_records(load_embeddings_csv(args.hyp), branch, kind)}
        shared = sorted(set(ref) & set(hyp))
        if not shared:
            raise ValidationError(f"no {branch.value}/{kind.value} embeddings share an utterance id")
        return {"cs": average_cosine_similarity([(ref[i], hyp[i]) for i in shared]), "pairs": len(shared)}
    if task == "wer":
        _require(args, "ref", "hyp")
        ref, hyp = load_transcript(args.ref), load_transcript(args.hyp)
        if len(ref) != len(hyp):
            raise ValidationError(f"{args.ref.name} has {len(ref)} lines but {args.hyp.name} has {len(hyp)}")
        return corpus_wer(list(zip(ref, hyp))).as_dict()
    if task == "bws":
        _require(args, "trials")
        table = bws_table(load_bws_trials(args.trials))
        return {
            "scores": {item: float(v) for item, v in zip(table["item"], table["score"])},
            "best_share": {item: float(v) for item, v in zip(table["item"], table["best_share"])},
        }
    _require(args, "ratings")
    summaries = {path.stem: mos_summary(load_ratings(path)).as_dict() for path in args.ratings}
    if len(args.ratings) == 1:
        return next(iter(summaries.values()))
    return summaries


def cmd_eval(args, argv, seed, log) -> int:
    result = evaluate(args)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS: dict[str, Callable] = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "convert": cmd_convert,
    "eval": cmd_eval,
    "embed": cmd_embed,
    "plot": cmd_plot,
    "sweep": cmd_sweep,
}


def _describe(exc: BaseException) -> str:
    if isinstance(exc, KeyError) and exc.args:
        return str(exc.args[0])
    return str(exc)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        seed = resolve_seed(args.seed)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)

    def log(msg: str) -> None:
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        return COMMANDS[args.command](args, argv, seed, log)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericError) as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_DATA


run_command = main
