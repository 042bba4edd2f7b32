"""Command-line surface: synth / train / eval / ablate / predict.

Exit codes: 0 success, 1 runtime or model failure (divergence, bad
checkpoint), 2 usage/config/validation failure. Every command is fully
determined by its flags plus the seed; machine-readable output is JSON
(single line on stdout) or the documented CSV/JSONL schemas.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_model
from .data import (
    Dataset,
    DatasetError,
    EMOTION_LABELS,
    SynthSpec,
    _sample_from_json,
    generate_synthetic,
    label_name,
    load_jsonl,
    save_jsonl,
)
from .metrics import MetricError, evaluate, export_epoch_curve
from .model import ABLATION_MODES, forward_full, init_model_params
from .tensor import NonFiniteError, get_default_dtype, set_default_dtype
from .training import (
    AdamState,
    AugmentationConfig,
    DivergenceError,
    TrainConfig,
    TrainState,
    load_training_checkpoint,
    save_training_checkpoint,
    train,
)
from .transformer import ModelConfig

# Published reference rows carried alongside ablation output for context.
PUBLISHED_REFERENCE = [
    {"model": "Transformer (text only)", "auc": 0.685, "f1": 0.653,
     "note": "published, not reproduced"},
    {"model": "weighted full fusion", "auc": 0.817, "f1": 0.795,
     "note": "published, not reproduced"},
]


class UsageError(ValueError):
    """Bad flags/config; maps to exit code 2."""


def _parse_floats3(text: str, flag: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"{flag} needs three comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"{flag}: could not parse {text!r} as numbers") from None


def _parse_range(text: str, flag: str) -> tuple:
    try:
        lo, hi = (int(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"{flag} must look like MIN:MAX, got {text!r}") from None
    return lo, hi


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path}: invalid JSON ({e.msg})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return cfg


def _pick(flag_value, config: dict, section: str, key: str, default):
    if flag_value is not None:
        return flag_value
    sec = config.get(section, {}) if section else config
    if isinstance(sec, dict) and key in sec:
        return sec[key]
    return default


def _model_config(args, config: dict, ds: Dataset) -> ModelConfig:
    cfg = ModelConfig(
        d_model=int(_pick(args.d_model, config, "model", "d_model", 32)),
        n_heads=int(_pick(args.n_heads, config, "model", "n_heads", 2)),
        n_layers=int(_pick(args.n_layers, config, "model", "n_layers", 1)),
        d_ff=int(_pick(args.d_ff, config, "model", "d_ff", 64)),
        dropout_p=float(_pick(args.dropout, config, "model", "dropout_p", 0.1)),
        max_seq_len=int(_pick(args.max_seq_len, config, "model", "max_seq_len", 64)),
        d_img=ds.d_img,
        d_audio=ds.d_audio,
        d_text=ds.d_text if ds.text_mode == "embeddings" else 0,
        vocab_size=ds.vocab_size if ds.text_mode == "tokens" else 0,
    )
    return cfg.validate()


def _train_config(args, config: dict, seed=None) -> TrainConfig:
    tc = TrainConfig(
        epochs=int(_pick(args.epochs, config, "train", "epochs", 50)),
        batch_size=int(_pick(args.batch_size, config, "train", "batch_size", 16)),
        learning_rate=float(_pick(args.lr, config, "train", "learning_rate", 1e-3)),
        beta1=float(_pick(args.beta1, config, "train", "beta1", 0.9)),
        beta2=float(_pick(args.beta2, config, "train", "beta2", 0.999)),
        eps=float(_pick(args.adam_eps, config, "train", "eps", 1e-8)),
        seed=int(seed if seed is not None
                 else _pick(args.seed, config, "train", "seed", 0)),
        augmentation=AugmentationConfig(
            gaussian_sigma=float(_pick(args.sigma, config, "train",
                                       "gaussian_sigma", 0.01)),
            modality_dropout_p=float(_pick(args.modality_dropout, config, "train",
                                           "modality_dropout_p", 0.1)),
        ),
        early_stop_patience=int(_pick(args.early_stop, config, "train",
                                      "early_stop_patience", 0)),
        grad_clip_norm=float(_pick(args.grad_clip, config, "train",
                                   "grad_clip_norm", 1.0)),
    )
    return tc.validate()


def _set_precision(args, config: dict) -> None:
    precision = _pick(getattr(args, "precision", None), config, None, "precision", "fp64")
    if precision not in ("fp64", "fp32"):
        raise UsageError(f"precision must be fp64 or fp32, got {precision!r}")
    set_default_dtype("float64" if precision == "fp64" else "float32")


def _load_dataset(path) -> Dataset:
    if path is None:
        raise UsageError("--data is required")
    if not Path(path).exists():
        raise UsageError(f"dataset file not found: {path}")
    return load_jsonl(path)


def _report_json(report) -> str:
    return json.dumps(report.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    if args.informativeness is not None:
        informativeness = _parse_floats3(args.informativeness, "--informativeness")
    else:
        informativeness = (0.5, 0.5, 0.5)
    if args.n is not None:
        fracs = _parse_floats3(args.split_frac, "--split-frac")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise UsageError(f"--split-frac must sum to 1, got {args.split_frac}")
        n_train = int(args.n * fracs[0])
        n_val = int(args.n * fracs[1])
        n_test = args.n - n_train - n_val
    else:
        n_train, n_val, n_test = args.n_train, args.n_val, args.n_test
        if n_train is None:
            raise UsageError("either --n or --n-train is required")
    spec = SynthSpec(
        n_train=n_train, n_val=n_val or 0, n_test=n_test or 0,
        d_img=args.d_img, d_audio=args.d_audio,
        text_mode=args.text_mode, d_text=args.d_text, vocab_size=args.vocab_size,
        img_len=_parse_range(args.img_len, "--img-len"),
        audio_len=_parse_range(args.audio_len, "--audio-len"),
        text_len=_parse_range(args.text_len, "--text-len"),
        informativeness=informativeness, seed=args.seed,
        mean_scale=args.mean_scale,
    )
    ds = generate_synthetic(spec)
    save_jsonl(ds, args.out)
    with open(f"{args.out}.spec.json", "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps({"dataset": str(args.out), "samples": len(ds.samples)},
                     sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# train


def _run_training(ds: Dataset, cfg: ModelConfig, tc: TrainConfig, mode: str,
                  train_split: str, val_split: str, resume=None):
    train_samples = ds.split(train_split)
    val_samples = ds.split(val_split)
    if resume is not None:
        cfg, state, _ = load_training_checkpoint(resume)
    else:
        rng = np.random.default_rng(tc.seed)
        params = init_model_params(cfg, rng)
        state = TrainState(params=params, adam=AdamState.fresh(params), rng=rng)
    result = train(state.params, cfg, train_samples, val_samples, tc,
                   mode=mode, state=state)
    return cfg, result


def cmd_train(args) -> int:
    config = _load_config_file(args.config)
    _set_precision(args, config)
    data_path = _pick(args.data, config, None, "data", None)
    ds = _load_dataset(data_path)
    cfg = _model_config(args, config, ds)
    tc = _train_config(args, config)
    mode = _pick(args.mode, config, None, "mode", "full")
    if mode not in ABLATION_MODES:
        raise UsageError(f"--mode must be one of {ABLATION_MODES}, got {mode!r}")
    train_split = _pick(args.train_split, config, None, "train_split", "train")
    val_split = _pick(args.val_split, config, None, "val_split", "val")
    report_split = _pick(args.report_split, config, None, "report_split", val_split)
    outdir = Path(_pick(args.outdir, config, None, "outdir", None) or ".")
    outdir.mkdir(parents=True, exist_ok=True)

    cfg, result = _run_training(ds, cfg, tc, mode, train_split, val_split,
                                resume=args.resume)
    save_training_checkpoint(outdir / "model.ckpt", cfg, result.state,
                             mode=mode, diverged=result.diverged)
    export_epoch_curve(result.logs, outdir / "curve.csv")
    report = evaluate(result.params, cfg, ds.split(report_split),
                      tc.batch_size, mode)
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        fh.write(_report_json(report) + "\n")
    print(_report_json(report))
    if result.diverged:
        print(f"training diverged: {result.divergence_reason}; "
              f"best checkpoint retained", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    cfg, params, meta = load_model(args.ckpt)
    ds = _load_dataset(args.data)
    report = evaluate(params, cfg, ds.split(args.split), args.batch_size,
                      meta.get("mode", "full"))
    print(_report_json(report))
    return 0


# ---------------------------------------------------------------------------
# ablate


def _fmt_cell(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _ablation_text_table(rows: list) -> str:
    headers = ["mode", "accuracy", "weighted_f1", "macro_auc", "note"]
    table = [headers] + [
        [r["mode"], _fmt_cell(r.get("accuracy", "-")),
         _fmt_cell(r.get("weighted_f1", "-")), _fmt_cell(r.get("macro_auc", "-")),
         r.get("note", "")]
        for r in rows
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_ablate(args) -> int:
    config = _load_config_file(args.config)
    _set_precision(args, config)
    ds = _load_dataset(_pick(args.data, config, None, "data", None))
    tc_base = _train_config(args, config)
    cfg = _model_config(args, config, ds)
    modes = (args.modes.split(",") if args.modes
             else list(_pick(None, config, None, "modes", list(ABLATION_MODES))))
    for m in modes:
        if m not in ABLATION_MODES:
            raise UsageError(f"unknown ablation mode {m!r}; expected {ABLATION_MODES}")
    seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
             else [int(s) for s in _pick(None, config, None, "seeds", [tc_base.seed])])
    train_split = _pick(args.train_split, config, None, "train_split", "train")
    val_split = _pick(args.val_split, config, None, "val_split", "val")
    eval_split = _pick(args.eval_split, config, None, "eval_split", "test")
    outdir = Path(_pick(args.outdir, config, None, "outdir", None) or ".")
    outdir.mkdir(parents=True, exist_ok=True)

    results = {}
    rows = []
    for mode in modes:
        per_seed = []
        failed = None
        for seed in seeds:
            tc = TrainConfig.from_dict({**tc_base.to_dict(), "seed": seed})
            try:
                _, result = _run_training(ds, cfg, tc, mode, train_split, val_split)
                if result.diverged:
                    raise DivergenceError(result.divergence_reason or "diverged")
                report = evaluate(result.params, cfg, ds.split(eval_split),
                                  tc.batch_size, mode)
                per_seed.append({
                    "seed": seed,
                    "accuracy": report.accuracy,
                    "weighted_f1": report.weighted_f1,
                    "macro_auc": report.macro_auc,
                })
            except (DivergenceError, NonFiniteError, MetricError) as e:
                failed = str(e)
                break
        if failed is not None:
            results[mode] = {"failed": failed}
            rows.append({"mode": mode, "note": f"FAILED: {failed}"})
            continue
        mean_row = {
            key: float(np.mean([r[key] for r in per_seed]))
            for key in ("accuracy", "weighted_f1", "macro_auc")
        }
        results[mode] = {"seeds": per_seed, "mean": mean_row}
        rows.append({"mode": mode, **mean_row,
                     "note": f"mean of {len(seeds)} seed(s)"})
    for ref in PUBLISHED_REFERENCE:
        rows.append({"mode": ref["model"], "macro_auc": ref["auc"],
                     "weighted_f1": ref["f1"], "note": ref["note"]})
    payload = {"modes": results, "seeds": seeds,
               "published_reference": PUBLISHED_REFERENCE}
    with open(outdir / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    text = _ablation_text_table(rows)
    with open(outdir / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(json.dumps(payload, sort_keys=True))
    print(text, file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args) -> int:
    cfg, params, meta = load_model(args.ckpt)
    if args.sample == "-":
        line = sys.stdin.readline()
    else:
        if not Path(args.sample).exists():
            raise UsageError(f"sample file not found: {args.sample}")
        with open(args.sample, "r", encoding="utf-8") as fh:
            line = fh.readline()
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise UsageError(f"sample line is not valid JSON: {e.msg}") from None
    shell = Dataset(d_img=cfg.d_img, d_audio=cfg.d_audio,
                    text_mode=cfg.text_mode, d_text=cfg.d_text,
                    vocab_size=cfg.vocab_size)
    try:
        sample = _sample_from_json(obj, shell, get_default_dtype())
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"bad sample object: {e}") from None
    from .data import _validate_sample
    _validate_sample(shell, sample)
    probs, _ = forward_full(sample, params, cfg, training=False,
                            mode=meta.get("mode", "full"))
    p = probs.data
    out = {
        "label": label_name(int(p.argmax())),
        "probs": {EMOTION_LABELS[i]: float(p[i]) for i in range(len(EMOTION_LABELS))},
    }
    print(json.dumps(out, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--n-heads", type=int, dest="n_heads")
    p.add_argument("--n-layers", type=int, dest="n_layers")
    p.add_argument("--d-ff", type=int, dest="d_ff")
    p.add_argument("--dropout", type=float, dest="dropout")
    p.add_argument("--max-seq-len", type=int, dest="max_seq_len")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--adam-eps", type=float, dest="adam_eps")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, help="augmentation feature-noise std")
    p.add_argument("--modality-dropout", type=float, dest="modality_dropout")
    p.add_argument("--early-stop", type=int, dest="early_stop")
    p.add_argument("--grad-clip", type=float, dest="grad_clip")
    p.add_argument("--precision", choices=["fp64", "fp32"])
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--data")
    p.add_argument("--outdir")
    p.add_argument("--train-split", dest="train_split")
    p.add_argument("--val-split", dest="val_split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trifuse",
        description="Multimodal (image/audio/text) emotion classifier toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic JSONL dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="total samples, split by --split-frac")
    p.add_argument("--split-frac", default="0.7,0.15,0.15")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-val", type=int, dest="n_val")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--informativeness", help="three values in [0,1]: img,audio,text")
    p.add_argument("--d-img", type=int, default=16, dest="d_img")
    p.add_argument("--d-audio", type=int, default=12, dest="d_audio")
    p.add_argument("--text-mode", choices=["embeddings", "tokens"],
                   default="embeddings", dest="text_mode")
    p.add_argument("--d-text", type=int, default=8, dest="d_text")
    p.add_argument("--vocab-size", type=int, default=0, dest="vocab_size")
    p.add_argument("--img-len", default="4:10", dest="img_len")
    p.add_argument("--audio-len", default="4:10", dest="audio_len")
    p.add_argument("--text-len", default="4:10", dest="text_len")
    p.add_argument("--mean-scale", type=float, default=1.0, dest="mean_scale")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and write ckpt/curve/report")
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--mode", choices=list(ABLATION_MODES))
    p.add_argument("--report-split", dest="report_split")
    p.add_argument("--resume", help="resumable checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train + evaluate the fusion ablations")
    _add_train_flags(p)
    _add_model_flags(p)
    p.add_argument("--modes", help="comma list from "
                   f"{','.join(ABLATION_MODES)} (default all)")
    p.add_argument("--seeds", help="comma list of seeds (default: --seed)")
    p.add_argument("--eval-split", dest="eval_split")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", help="classify one JSONL sample line")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample", required=True, help="path to a one-line JSONL file, or -")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (UsageError, DatasetError, MetricError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NonFiniteError, DivergenceError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
