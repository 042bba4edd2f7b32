"""Mini-batch training: Adam with bias correction and optional global
norm clipping, feature-noise + modality-dropout augmentation, seeded
deterministic epochs, early stopping on validation weighted F1, and
divergence abort that preserves the best parameters.

RNG draw order per epoch is fixed and documented: shuffle permutation,
then per sample in batch order the augmentation draws (image noise,
audio noise, drop decision, drop choice), then the dropout masks inside
the forward pass. Checkpoint resume reproduces an uninterrupted run
bit-exactly because the full generator state is carried.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import backend
from .data import MultimodalSample, TextSequence, collate
from .metrics import EpochLog, evaluate, fusion_weights_for_log
from .model import (
    ModelConfig,
    ModelParams,
    clone_param_arrays,
    forward_batch,
    named_parameters,
    params_from_named,
)
from .tensor import NonFiniteError, Tape, backward


class DivergenceError(RuntimeError):
    """Training produced non-finite values; aborted."""


@dataclass
class AugmentationConfig:
    gaussian_sigma: float = 0.01
    modality_dropout_p: float = 0.1

    def validate(self) -> "AugmentationConfig":
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if not 0.0 <= self.modality_dropout_p < 1.0:
            raise ValueError("modality_dropout_p must be in [0, 1)")
        return self


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    early_stop_patience: int = 0  # 0 disables
    grad_clip_norm: float = 1.0   # 0 disables

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must be in (0, 1)")
        if self.eps <= 0:
            raise ValueError("adam eps must be > 0")
        if self.early_stop_patience < 0 or self.grad_clip_norm < 0:
            raise ValueError("patience and grad_clip_norm must be >= 0")
        self.augmentation.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "beta1": self.beta1,
            "beta2": self.beta2, "eps": self.eps, "seed": self.seed,
            "gaussian_sigma": self.augmentation.gaussian_sigma,
            "modality_dropout_p": self.augmentation.modality_dropout_p,
            "early_stop_patience": self.early_stop_patience,
            "grad_clip_norm": self.grad_clip_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        aug = AugmentationConfig(
            gaussian_sigma=d.pop("gaussian_sigma", 0.01),
            modality_dropout_p=d.pop("modality_dropout_p", 0.1),
        )
        return cls(augmentation=aug, **d).validate()


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        named = named_parameters(params)
        return cls(
            m={name: np.zeros(t.size, dtype=t.data.dtype) for name, t in named},
            v={name: np.zeros(t.size, dtype=t.data.dtype) for name, t in named},
        )


def adam_step(named_params: list, grads: dict, state: AdamState,
              cfg: TrainConfig) -> None:
    """One optimizer step over all parameters, in place."""
    for name, _ in named_params:
        g = grads[name]
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    if cfg.grad_clip_norm > 0:
        sq = 0.0
        for name, _ in named_params:
            g = grads[name]
            sq += float((g * g).sum())
        total = float(np.sqrt(sq))
        if total > cfg.grad_clip_norm:
            factor = cfg.grad_clip_norm / total  # python float: keeps dtype
            for name, _ in named_params:
                grads[name] = grads[name] * factor
    state.t += 1
    for name, p in named_params:
        if p.data.shape != grads[name].shape:
            raise ValueError(
                f"gradient shape {grads[name].shape} != parameter "
                f"{name!r} shape {p.data.shape}")
        backend.active.adam_update(
            p.data.reshape(-1), np.ascontiguousarray(grads[name].reshape(-1)),
            state.m[name], state.v[name], state.t,
            cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def augment(sample: MultimodalSample, aug: AugmentationConfig,
            rng: np.random.Generator) -> MultimodalSample:
    """Feature noise on image/audio plus at-most-one-modality dropout.

    Returns a new sample (the original is never modified); with sigma=0
    and dropout 0 the sample is returned as-is with no RNG draws.
    """
    sigma = aug.gaussian_sigma
    p = aug.modality_dropout_p
    if sigma == 0.0 and p == 0.0:
        return sample
    img = sample.image.features
    aud = sample.audio.features
    text = sample.text
    if sigma > 0.0:
        img = img + sigma * rng.standard_normal(img.shape)
        aud = aud + sigma * rng.standard_normal(aud.shape)
    if p > 0.0 and rng.random() < p:
        dropped = int(rng.integers(3))
        if dropped == 0:
            img = np.zeros_like(sample.image.features)
        elif dropped == 1:
            aud = np.zeros_like(sample.audio.features)
        elif text.embeddings is not None:
            text = TextSequence(embeddings=np.zeros_like(text.embeddings))
        else:
            text = TextSequence(token_ids=text.token_ids, dropped=True)
    return replace(sample,
                   image=replace(sample.image, features=img),
                   audio=replace(sample.audio, features=aud),
                   text=text)


@dataclass
class TrainState:
    """Everything needed to resume training bit-exactly."""

    params: ModelParams
    adam: AdamState
    rng: np.random.Generator
    epoch: int = 0
    best_arrays: Optional[dict] = None
    best_f1: float = -1.0
    best_epoch: int = 0
    since_improve: int = 0


@dataclass
class TrainResult:
    params: ModelParams          # best-validation parameters
    logs: list
    diverged: bool
    state: TrainState
    divergence_reason: Optional[str] = None


def train(params: ModelParams, cfg: ModelConfig, train_samples: list,
          val_samples: list, tc: TrainConfig, mode: str = "full",
          state: Optional[TrainState] = None) -> TrainResult:
    """Run epochs ``state.epoch + 1 .. tc.epochs``; returns the
    best-validation parameters and one EpochLog row per epoch."""
    tc.validate()
    if not train_samples:
        raise ValueError("training split is empty")
    if not val_samples:
        raise ValueError("validation split is empty")
    if state is None:
        state = TrainState(params=params, adam=AdamState.fresh(params),
                           rng=np.random.default_rng(tc.seed))
    params = state.params
    if state.best_arrays is None:
        # Pre-training snapshot: the fallback "last good" state if the
        # run diverges before any epoch completes (and the epochs=0 result).
        state.best_arrays = clone_param_arrays(params)
    named = named_parameters(params)
    logs: list = []
    diverged = False
    divergence_reason = None
    n = len(train_samples)

    for epoch in range(state.epoch + 1, tc.epochs + 1):
        started = time.perf_counter()
        order = state.rng.permutation(n)
        loss_sum = 0.0
        try:
            for lo in range(0, n, tc.batch_size):
                chunk = [train_samples[j] for j in order[lo: lo + tc.batch_size]]
                batch = collate([augment(s, tc.augmentation, state.rng)
                                 for s in chunk])
                for _, p in named:
                    p.grad = None
                with Tape() as tape:
                    _, loss = forward_batch(batch, params, cfg, training=True,
                                            rng=state.rng, mode=mode)
                backward(loss, tape)
                grads = {
                    name: (p.grad if p.grad is not None
                           else np.zeros_like(p.data))
                    for name, p in named
                }
                adam_step(named, grads, state.adam, tc)
                loss_sum += loss.item() * batch.size
            report = evaluate(params, cfg, val_samples, tc.batch_size, mode)
        except (NonFiniteError, DivergenceError) as e:
            diverged = True
            divergence_reason = str(e)
        if diverged:
            break
        state.epoch = epoch
        train_loss = loss_sum / n
        alpha, beta, chi = fusion_weights_for_log(params, mode)
        logs.append(EpochLog(
            epoch=epoch, train_loss=train_loss,
            val_accuracy=report.accuracy, val_weighted_f1=report.weighted_f1,
            val_macro_auc=report.macro_auc, alpha=alpha, beta=beta, chi=chi,
            seconds=time.perf_counter() - started))
        if report.weighted_f1 > state.best_f1:
            state.best_f1 = report.weighted_f1
            state.best_epoch = epoch
            state.best_arrays = clone_param_arrays(params)
            state.since_improve = 0
        else:
            state.since_improve += 1
            if tc.early_stop_patience > 0 and state.since_improve >= tc.early_stop_patience:
                break

    best_params = params_from_named(cfg, state.best_arrays)
    return TrainResult(params=best_params, logs=logs, diverged=diverged,
                       state=state, divergence_reason=divergence_reason)


# ---------------------------------------------------------------------------
# checkpoint glue


def save_training_checkpoint(path, cfg: ModelConfig, state: TrainState,
                             mode: str = "full", diverged: bool = False,
                             resumable: bool = True) -> None:
    """Write the model (best parameters included) and, when resumable,
    the live parameters, optimizer moments, and RNG state."""
    from .checkpoint import save_checkpoint
    from .tensor import get_default_dtype

    tensors: dict = {}
    best = state.best_arrays or clone_param_arrays(state.params)
    for name, arr in best.items():
        tensors[f"best.{name}"] = arr
    rng_state = None
    if resumable and not diverged:
        for name, t in named_parameters(state.params):
            tensors[f"param.{name}"] = t.data
        for name, m in state.adam.m.items():
            tensors[f"adam.m.{name}"] = m
        for name, v in state.adam.v.items():
            tensors[f"adam.v.{name}"] = v
        rng_state = state.rng.bit_generator.state
    meta = {
        "dtype": str(get_default_dtype()),
        "epoch": state.epoch,
        "adam_t": state.adam.t,
        "best_f1": state.best_f1,
        "best_epoch": state.best_epoch,
        "since_improve": state.since_improve,
        "mode": mode,
        "diverged": diverged,
        "resumable": resumable and not diverged,
    }
    save_checkpoint(path, cfg, tensors, meta, rng_state)


def load_training_checkpoint(path):
    """Rebuild (cfg, TrainState, meta) from a resumable checkpoint."""
    from .checkpoint import CheckpointError, load_checkpoint
    from .tensor import set_default_dtype

    cfg, tensors, meta, rng_state = load_checkpoint(path)
    if not meta.get("resumable"):
        raise CheckpointError(f"{path}: checkpoint is not resumable")
    set_default_dtype(meta.get("dtype", "float64"))
    params = params_from_named(
        cfg, {k[len("param."):]: v for k, v in tensors.items()
              if k.startswith("param.")})
    adam = AdamState(
        m={k[len("adam.m."):]: v.copy() for k, v in tensors.items()
           if k.startswith("adam.m.")},
        v={k[len("adam.v."):]: v.copy() for k, v in tensors.items()
           if k.startswith("adam.v.")},
        t=meta["adam_t"],
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    state = TrainState(
        params=params, adam=adam, rng=rng, epoch=meta["epoch"],
        best_arrays={k[len("best."):]: v for k, v in tensors.items()
                     if k.startswith("best.")},
        best_f1=meta["best_f1"], best_epoch=meta["best_epoch"],
        since_improve=meta["since_improve"],
    )
    return cfg, state, meta
