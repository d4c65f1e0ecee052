"""Command-line front end: dataset generation, the two training phases, the
count-head fit, evaluation, RTF benchmarking, and ad-hoc decoding.

Every command writes a summary.json (config echo, build id, results) plus
CSV reports into --out. Failing preconditions exit nonzero with a message
naming what was missing.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from .evaluation import (
    evaluate_count_accuracy,
    evaluate_error_rates,
    measure_rtf,
    parse_decode_mode,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .mixtures import (
    DatasetManifest,
    SPLITS,
    generate_split,
    read_manifest,
    read_records,
    validate_feasibility,
    write_manifest,
    write_records,
)
from .model import ModelConfig, MtModel
from .sot import build_sot_target
from .tensor import Tensor
from .training import (
    MissingPhase1Error,
    TrainConfig,
    train_count_head,
    train_phase1,
    train_phase2,
)


class PreconditionError(RuntimeError):
    """User-facing failure: names the precondition that did not hold."""


def build_identifier() -> str:
    """Digest of the package sources, so reports say which build produced them."""
    digest = hashlib.sha256()
    root = Path(__file__).parent
    for path in sorted(root.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise PreconditionError(f"{what} not found: {path}")
    return path


def _load_manifest(path) -> DatasetManifest:
    return read_manifest(_require_file(path, "manifest"))


def _records_path(manifest_path, split: str) -> Path:
    if split not in SPLITS:
        raise PreconditionError(f"unknown split {split!r} (expected one of {', '.join(SPLITS)})")
    path = Path(manifest_path).parent / f"{split}.bin"
    if not path.is_file():
        raise PreconditionError(f"record file not found: {path} (generate data first)")
    return path


def _load_split(manifest_path, split: str) -> list:
    return read_records(_records_path(manifest_path, split))


def _load_run_config(path) -> dict:
    """Optional JSON file with partial "model" and "train" sections."""
    if path is None:
        return {}
    with open(_require_file(path, "config file"), encoding="utf-8") as handle:
        payload = json.load(handle)
    unknown = set(payload) - {"model", "train"}
    if unknown:
        raise PreconditionError(f"unknown config sections: {sorted(unknown)}")
    return payload


def _model_config(overrides: dict, manifest: DatasetManifest) -> ModelConfig:
    """Model settings, with data-derived fields pinned by the manifest."""
    fields = dict(overrides.get("model", {}))
    pinned = {
        "feature_dim": manifest.renderer.feature_dim,
        "content_size": manifest.renderer.content_size,
    }
    for key, value in pinned.items():
        if key in fields and fields[key] != value:
            raise PreconditionError(
                f"config {key}={fields[key]} contradicts the manifest ({value})"
            )
        fields[key] = value
    try:
        return ModelConfig(**fields)
    except (TypeError, ValueError) as err:
        raise PreconditionError(f"bad model config: {err}") from err


def _train_config(overrides: dict, args) -> TrainConfig:
    fields = dict(overrides.get("train", {}))
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    if getattr(args, "alpha", None) is not None:
        fields["alpha"] = args.alpha
    try:
        return TrainConfig(**fields)
    except TypeError as err:
        raise PreconditionError(f"bad train config: {err}") from err


def _load_model(args) -> MtModel:
    path = _require_file(args.checkpoint, "checkpoint")
    try:
        return load_checkpoint(path)
    except ValueError as err:
        raise PreconditionError(str(err)) from err


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, command: str, config_echo: dict, results: dict) -> None:
    summary = {
        "command": command,
        "build": build_identifier(),
        "config": config_echo,
        "results": results,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_losses(out: Path, history, start_step: int = 0) -> None:
    lines = ["step,loss"]
    lines += [f"{start_step + i + 1},{loss:.10f}" for i, loss in enumerate(history)]
    (out / "losses.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _progress_printer(tag: str):
    def emit(step: int, loss: float) -> None:
        print(f"[{tag}] step {step}: loss {loss:.4f}", flush=True)

    return emit


def cmd_gen_data(args) -> int:
    if args.manifest:
        manifest = _load_manifest(args.manifest)
        if args.seed is not None:
            manifest.seed = args.seed
    else:
        manifest = DatasetManifest(seed=args.seed if args.seed is not None else 7)
    out = _out_dir(args)
    write_manifest(out / "manifest.json", manifest)
    counts = {}
    stack = args.stack_check
    for split in SPLITS:
        samples = generate_split(manifest, split)
        if stack:
            for sample in samples:
                validate_feasibility(sample, stack)
        write_records(out / f"{split}.bin", samples)
        counts[split] = len(samples)
        print(f"wrote {len(samples)} samples to {out / (split + '.bin')}", flush=True)
    _write_summary(
        out,
        "gen-data",
        {"manifest": manifest.to_dict()},
        {"samples": counts},
    )
    return 0


def cmd_train_phase1(args) -> int:
    manifest = _load_manifest(args.manifest)
    overrides = _load_run_config(args.config)
    model_config = _model_config(overrides, manifest)
    train_config = _train_config(overrides, args)
    samples = _load_split(args.manifest, "train")
    model = MtModel(model_config)
    started = time.perf_counter()
    history = train_phase1(
        model, samples, train_config, progress=_progress_printer("phase1")
    )
    elapsed = time.perf_counter() - started
    out = _out_dir(args)
    save_checkpoint(model, out / "checkpoint.ckpt", step=len(history))
    _write_losses(out, history)
    _write_summary(
        out,
        "train-phase1",
        {"model": model_config.to_dict(), "train": train_config.to_dict()},
        {
            "steps": len(history),
            "final_loss": history[-1],
            "seconds": elapsed,
            "checkpoint": str(out / "checkpoint.ckpt"),
        },
    )
    return 0


def cmd_train_phase2(args) -> int:
    manifest = _load_manifest(args.manifest)
    overrides = _load_run_config(args.config)
    train_config = _train_config(overrides, args)
    model = _load_model(args)
    if model.config.feature_dim != manifest.renderer.feature_dim:
        raise PreconditionError(
            f"checkpoint expects {model.config.feature_dim} feature channels, "
            f"manifest provides {manifest.renderer.feature_dim}"
        )
    samples = _load_split(args.manifest, "train")
    started = time.perf_counter()
    try:
        history = train_phase2(
            model,
            samples,
            train_config,
            freeze_shared=args.freeze_shared,
            progress=_progress_printer("phase2"),
        )
    except MissingPhase1Error as err:
        raise PreconditionError(str(err)) from err
    elapsed = time.perf_counter() - started
    out = _out_dir(args)
    total_steps = model.loaded_step + len(history)
    save_checkpoint(model, out / "checkpoint.ckpt", step=total_steps)
    _write_losses(out, history, start_step=model.loaded_step)
    _write_summary(
        out,
        "train-phase2",
        {"model": model.config.to_dict(), "train": train_config.to_dict()},
        {
            "steps": len(history),
            "alpha": train_config.alpha,
            "freeze_shared": args.freeze_shared,
            "final_loss": history[-1],
            "seconds": elapsed,
            "checkpoint": str(out / "checkpoint.ckpt"),
        },
    )
    return 0


def cmd_train_tch(args) -> int:
    _load_manifest(args.manifest)
    overrides = _load_run_config(args.config)
    train_config = _train_config(overrides, args)
    model = _load_model(args)
    samples = _load_split(args.manifest, "train")
    started = time.perf_counter()
    history = train_count_head(
        model, samples, train_config, progress=_progress_printer("tch")
    )
    elapsed = time.perf_counter() - started
    out = _out_dir(args)
    save_checkpoint(model, out / "checkpoint.ckpt", step=model.loaded_step)
    _write_losses(out, history)
    _write_summary(
        out,
        "train-tch",
        {"model": model.config.to_dict(), "train": train_config.to_dict()},
        {
            "steps": len(history),
            "final_loss": history[-1],
            "seconds": elapsed,
            "checkpoint": str(out / "checkpoint.ckpt"),
        },
    )
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args)
    samples = _load_split(args.manifest, args.split)
    parse_decode_mode(args.decode_mode)
    error_report = evaluate_error_rates(
        model, samples, oracle_count=args.oracle_count, decode_mode=args.decode_mode
    )
    count_report = evaluate_count_accuracy(model, samples)
    out = _out_dir(args)
    (out / "error_rates.csv").write_text(error_report.to_csv(), encoding="utf-8")
    (out / "count_accuracy.csv").write_text(count_report.to_csv(), encoding="utf-8")
    results = {
        "split": args.split,
        "routing": "oracle" if args.oracle_count else "count_head",
        "decode_mode": args.decode_mode,
        "token_error_rate": error_report.rate(),
        "token_error_rate_by_count": {
            str(count): error_report.rate(talker_count=count)
            for count in sorted({s.talker_count for s in samples})
        },
        "count_accuracy": count_report.accuracy(),
        "samples": len(samples),
    }
    _write_summary(out, "eval", {"model": model.config.to_dict()}, results)
    for key in ("token_error_rate", "count_accuracy"):
        print(f"{key}: {results[key]:.4f}", flush=True)
    return 0


def cmd_bench_rtf(args) -> int:
    model = _load_model(args)
    samples = _load_split(args.manifest, args.split)
    if args.samples is not None:
        samples = samples[: args.samples]
    reports = {}
    for mode in ("ctc_greedy", "teacher_autoregressive"):
        reports[mode] = measure_rtf(model, samples, mode=mode)
    out = _out_dir(args)
    csv = reports["ctc_greedy"].to_csv() + "".join(
        line + "\n"
        for line in reports["teacher_autoregressive"].to_csv().splitlines()[1:]
    )
    (out / "rtf.csv").write_text(csv, encoding="utf-8")
    ctc_rtf = reports["ctc_greedy"].rtf()
    ar_rtf = reports["teacher_autoregressive"].rtf()
    results = {
        "split": args.split,
        "samples": len(samples),
        "warmup_excluded": reports["ctc_greedy"].warmup_skipped,
        "ctc_greedy_rtf": ctc_rtf,
        "teacher_autoregressive_rtf": ar_rtf,
        "speedup": ar_rtf / ctc_rtf if ctc_rtf else 0.0,
        "hardware": reports["ctc_greedy"].hardware,
    }
    _write_summary(out, "bench-rtf", {"model": model.config.to_dict()}, results)
    print(
        f"ctc_greedy rtf {ctc_rtf:.5f}, teacher_autoregressive rtf {ar_rtf:.5f}, "
        f"speedup {results['speedup']:.1f}x",
        flush=True,
    )
    return 0


def cmd_decode(args) -> int:
    model = _load_model(args)
    samples = _load_split(args.manifest, args.split)
    kind, width = parse_decode_mode(args.decode_mode)
    vocab = model.vocab
    rows = []
    for sample in samples:
        routed = model.infer_routed(
            Tensor(sample.features),
            oracle_count=sample.talker_count if args.oracle_count else None,
            decode=kind,
            beam_width=width,
        )
        reference = build_sot_target(sample.utterances, vocab)
        rows.append(
            {
                "id": sample.sample_id,
                "talker_count": sample.talker_count,
                "predicted_count": routed.talker_count,
                "routed_by": routed.routed_by,
                "streams": [" ".join(vocab.symbol(t) for t in s) for s in routed.streams],
                "reference": " ".join(vocab.symbol(t) for t in reference.tokens),
            }
        )
    payload = json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = _out_dir(args)
        (out / "decodes.json").write_text(payload, encoding="utf-8")
        _write_summary(
            out,
            "decode",
            {"model": model.config.to_dict()},
            {"split": args.split, "samples": len(rows), "decode_mode": args.decode_mode},
        )
        print(f"wrote {len(rows)} decodes to {out / 'decodes.json'}", flush=True)
    else:
        sys.stdout.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtctc",
        description="Multi-talker CTC toolkit: data, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.set_defaults(handler=handler)
        return cmd

    gen = add("gen-data", cmd_gen_data, "render a synthetic mixture dataset")
    gen.add_argument("--manifest", help="start from an existing manifest instead of defaults")
    gen.add_argument("--seed", type=int, help="override the manifest seed")
    gen.add_argument("--stack-check", type=int, metavar="N",
                     help="reject samples too short for an N-frame stacking encoder")
    gen.add_argument("--out", required=True, help="output directory")

    for name, handler, help_text in (
        ("train-phase1", cmd_train_phase1, "serialized teacher pretraining"),
        ("train-phase2", cmd_train_phase2, "hybrid objective on a phase-1 model"),
        ("train-tch", cmd_train_tch, "fit the talker-count head"),
    ):
        cmd = add(name, handler, help_text)
        cmd.add_argument("--manifest", required=True, help="dataset manifest path")
        cmd.add_argument("--config", help="JSON file with model/train overrides")
        cmd.add_argument("--seed", type=int, help="override the training seed")
        cmd.add_argument("--out", required=True, help="output directory")
        if name != "train-phase1":
            cmd.add_argument("--checkpoint", required=True, help="starting checkpoint")
        if name == "train-phase2":
            cmd.add_argument("--alpha", type=float, help="serialized-CTC weight")
            cmd.add_argument("--freeze-shared", action="store_true",
                             help="keep the shared encoder fixed")

    ev = add("eval", cmd_eval, "routed decoding with error-rate reports")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split", default="eval", help="dataset split (default: eval)")
    ev.add_argument("--oracle-count", action="store_true",
                    help="route with the true talker count instead of the head")
    ev.add_argument("--decode-mode", default="greedy", help="greedy or beam:K")
    ev.add_argument("--out", required=True)

    bench = add("bench-rtf", cmd_bench_rtf, "real-time-factor comparison at batch 1")
    bench.add_argument("--manifest", required=True)
    bench.add_argument("--checkpoint", required=True)
    bench.add_argument("--split", default="eval")
    bench.add_argument("--samples", type=int, help="cap the number of utterances")
    bench.add_argument("--out", required=True)

    dec = add("decode", cmd_decode, "dump per-stream transcripts")
    dec.add_argument("--manifest", required=True)
    dec.add_argument("--checkpoint", required=True)
    dec.add_argument("--split", default="eval")
    dec.add_argument("--oracle-count", action="store_true")
    dec.add_argument("--decode-mode", default="greedy", help="greedy or beam:K")
    dec.add_argument("--out", help="write decodes.json here instead of stdout")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except PreconditionError as err:
        print(f"mtctc {args.command}: error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"mtctc {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
