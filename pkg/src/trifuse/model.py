"""Three modality encoders, the learned weighted fusion, and the
classification head.

Each branch maps a variable-length feature sequence to one d_model
summary vector (project/embed -> positional encoding -> encoder stack
-> masked mean pool). The fused vector is a convex combination of the
three branch vectors with weights softmax(logits), then a linear +
softmax head produces the 7-class distribution.

Every function takes either single-sample tensors (rank 2 sequences,
rank 1 summaries) or batched ones (rank 3 / rank 2) and one extra mask
axis; the ablation ``mode`` argument runs one branch alone with its
fusion weight pinned to 1, skipping the other branches entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import AudioSequence, Batch, ImageSequence, MultimodalSample, TextSequence
from .tensor import (
    DegenerateInputError,
    ShapeError,
    Tensor,
    add,
    add_const,
    embedding_lookup,
    get_default_dtype,
    masked_mean_pool,
    matmul,
    mean,
    mul_const,
    nll_from_probs,
    pick,
    scalar_mul,
    scale,
    softmax_rows,
)
from .transformer import (
    ModelConfig,
    encoder_stack,
    init_encoder_layer,
    positional_encoding,
)

ABLATION_MODES = ("full", "image_only", "audio_only", "text_only")


@dataclass
class FusionWeights:
    """Three free logits; softmax gives the simplex weights (img, audio, text)."""

    logits: Tensor

    def effective(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max()
        e = np.exp(z)
        return e / e.sum()


@dataclass
class ClassifierHead:
    w: Tensor  # [d_model, n_classes]
    b: Tensor  # [n_classes]


@dataclass
class BranchParams:
    layers: list
    proj_w: Optional[Tensor] = None  # [d_in, d_model] (feature branches)
    proj_b: Optional[Tensor] = None
    embed: Optional[Tensor] = None   # [vocab, d_model] (token-mode text)


@dataclass
class ModelParams:
    image: BranchParams
    audio: BranchParams
    text: BranchParams
    fusion: FusionWeights
    head: ClassifierHead


def init_model_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Build all parameters; draw order matches named_parameters order."""
    cfg.validate()
    d = cfg.d_model

    def feature_branch(d_in: int) -> BranchParams:
        bound = 1.0 / np.sqrt(d_in)
        proj_w = Tensor(rng.uniform(-bound, bound, size=(d_in, d)), requires_grad=True)
        proj_b = Tensor(np.zeros(d), requires_grad=True)
        layers = [init_encoder_layer(cfg, rng) for _ in range(cfg.n_layers)]
        return BranchParams(layers=layers, proj_w=proj_w, proj_b=proj_b)

    image = feature_branch(cfg.d_img)
    audio = feature_branch(cfg.d_audio)
    if cfg.text_mode == "tokens":
        bound = 1.0 / np.sqrt(d)
        embed = Tensor(rng.uniform(-bound, bound, size=(cfg.vocab_size, d)),
                       requires_grad=True)
        text = BranchParams(layers=[init_encoder_layer(cfg, rng)
                                    for _ in range(cfg.n_layers)], embed=embed)
    else:
        text = feature_branch(cfg.d_text)
    fusion = FusionWeights(Tensor(np.zeros(3), requires_grad=True))
    bound = 1.0 / np.sqrt(d)
    head = ClassifierHead(
        w=Tensor(rng.uniform(-bound, bound, size=(d, cfg.n_classes)), requires_grad=True),
        b=Tensor(np.zeros(cfg.n_classes), requires_grad=True),
    )
    return ModelParams(image=image, audio=audio, text=text, fusion=fusion, head=head)


def named_parameters(params: ModelParams) -> list:
    """Deterministic (name, Tensor) listing used by the optimizer,
    checkpoints, and gradient checking."""
    out = []
    for branch_name, bp in (("img", params.image), ("audio", params.audio),
                            ("text", params.text)):
        if bp.embed is not None:
            out.append((f"{branch_name}.embed", bp.embed))
        else:
            out.append((f"{branch_name}.proj.w", bp.proj_w))
            out.append((f"{branch_name}.proj.b", bp.proj_b))
        for i, layer in enumerate(bp.layers):
            base = f"{branch_name}.enc{i}"
            for h in range(len(layer.attn.w_q)):
                out.append((f"{base}.attn.h{h}.wq", layer.attn.w_q[h]))
                out.append((f"{base}.attn.h{h}.wk", layer.attn.w_k[h]))
                out.append((f"{base}.attn.h{h}.wv", layer.attn.w_v[h]))
            out.append((f"{base}.attn.wo", layer.attn.w_o))
            out.append((f"{base}.ln1.g", layer.ln1_gain))
            out.append((f"{base}.ln1.b", layer.ln1_bias))
            out.append((f"{base}.ffn.w1", layer.w1))
            out.append((f"{base}.ffn.b1", layer.b1))
            out.append((f"{base}.ffn.w2", layer.w2))
            out.append((f"{base}.ffn.b2", layer.b2))
            out.append((f"{base}.ln2.g", layer.ln2_gain))
            out.append((f"{base}.ln2.b", layer.ln2_bias))
    out.append(("fusion.logits", params.fusion.logits))
    out.append(("head.w", params.head.w))
    out.append(("head.b", params.head.b))
    return out


def params_from_named(cfg: ModelConfig, tensors: dict) -> ModelParams:
    """Rebuild a ModelParams tree from a {name: array} mapping."""
    rng = np.random.default_rng(0)
    params = init_model_params(cfg, rng)
    named = named_parameters(params)
    missing = [n for n, _ in named if n not in tensors]
    if missing:
        raise ValueError(f"missing parameter tensors: {missing[:3]}...")
    for name, t in named:
        arr = np.ascontiguousarray(tensors[name], dtype=get_default_dtype())
        if arr.shape != t.shape:
            raise ShapeError(
                f"parameter {name}: stored shape {arr.shape} != expected {t.shape}")
        t.data = arr
        t.grad = None
    return params


def clone_param_arrays(params: ModelParams) -> dict:
    return {name: t.data.copy() for name, t in named_parameters(params)}


# ---------------------------------------------------------------------------
# branch encoders


def _encode_core(x: Tensor, mask: np.ndarray, bp: BranchParams, cfg: ModelConfig,
                 training: bool, rng) -> Tensor:
    s = x.shape[-2]
    x = add_const(x, positional_encoding(s, cfg.d_model, cfg.max_seq_len))
    x = encoder_stack(x, bp.layers, mask, dropout_p=cfg.dropout_p,
                      training=training, rng=rng)
    return masked_mean_pool(x, mask)


def _full_mask(length: int) -> np.ndarray:
    return np.ones(length, dtype=bool)


def _check_seq(features: np.ndarray, d_expected: int, what: str) -> None:
    if features.ndim != 2 or features.shape[0] < 1:
        raise DegenerateInputError(f"{what} sequence must be [S>=1, d], got {features.shape}")
    if features.shape[1] != d_expected:
        raise ShapeError(
            f"{what} feature dim {features.shape[1]} != configured {d_expected}")


def encode_image(x: ImageSequence, params: ModelParams, cfg: ModelConfig,
                 training: bool = False, rng=None) -> Tensor:
    _check_seq(x.features, cfg.d_img, "image")
    t = Tensor(x.features)
    h = add(matmul(t, params.image.proj_w), params.image.proj_b)
    return _encode_core(h, _full_mask(t.shape[0]), params.image, cfg, training, rng)


def encode_audio(x: AudioSequence, params: ModelParams, cfg: ModelConfig,
                 training: bool = False, rng=None) -> Tensor:
    _check_seq(x.features, cfg.d_audio, "audio")
    t = Tensor(x.features)
    h = add(matmul(t, params.audio.proj_w), params.audio.proj_b)
    return _encode_core(h, _full_mask(t.shape[0]), params.audio, cfg, training, rng)


def encode_text(x: TextSequence, params: ModelParams, cfg: ModelConfig,
                training: bool = False, rng=None) -> Tensor:
    if cfg.text_mode == "tokens":
        if x.token_ids is None:
            raise ShapeError("model is in token mode but sample has embeddings")
        ids = np.asarray(x.token_ids, dtype=np.int64)
        if ids.size < 1:
            raise DegenerateInputError("text token sequence is empty")
        h = embedding_lookup(params.text.embed, ids)
        if x.dropped:
            h = scale(h, 0.0)
        n = ids.shape[0]
    else:
        if x.embeddings is None:
            raise ShapeError("model is in embeddings mode but sample has token ids")
        _check_seq(x.embeddings, cfg.d_text, "text")
        t = Tensor(x.embeddings)
        h = add(matmul(t, params.text.proj_w), params.text.proj_b)
        n = t.shape[0]
    return _encode_core(h, _full_mask(n), params.text, cfg, training, rng)


# ---------------------------------------------------------------------------
# fusion + classification


def fuse(z_img: Tensor, z_audio: Tensor, z_text: Tensor,
         weights: FusionWeights) -> Tensor:
    if not (z_img.shape == z_audio.shape == z_text.shape):
        raise ShapeError(
            f"fusion inputs must share a shape, got {z_img.shape}, "
            f"{z_audio.shape}, {z_text.shape}")
    w = softmax_rows(weights.logits)
    fused = scalar_mul(z_img, pick(w, 0))
    fused = add(fused, scalar_mul(z_audio, pick(w, 1)))
    return add(fused, scalar_mul(z_text, pick(w, 2)))


def classify(z: Tensor, head: ClassifierHead) -> Tensor:
    """Linear head + softmax; returns a probability vector (or batch of them)."""
    return softmax_rows(add(matmul(z, head.w), head.b))


def cross_entropy(probs: Tensor, label) -> Tensor:
    """-log(probs[label] + floor); scalar for rank-1 probs, [B] for rank-2."""
    return nll_from_probs(probs, label)


def _branch_z_single(sample: MultimodalSample, params, cfg, training, rng, branch):
    if branch == "image":
        return encode_image(sample.image, params, cfg, training, rng)
    if branch == "audio":
        return encode_audio(sample.audio, params, cfg, training, rng)
    return encode_text(sample.text, params, cfg, training, rng)


_MODE_BRANCH = {"image_only": "image", "audio_only": "audio", "text_only": "text"}


def forward_full(sample: MultimodalSample, params: ModelParams, cfg: ModelConfig,
                 training: bool = False, rng=None, mode: str = "full"):
    """Single-sample forward; returns (probability Tensor [C], scalar loss)."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {ABLATION_MODES}")
    if mode == "full":
        z = fuse(
            _branch_z_single(sample, params, cfg, training, rng, "image"),
            _branch_z_single(sample, params, cfg, training, rng, "audio"),
            _branch_z_single(sample, params, cfg, training, rng, "text"),
            params.fusion,
        )
    else:
        z = _branch_z_single(sample, params, cfg, training, rng, _MODE_BRANCH[mode])
    probs = classify(z, params.head)
    loss = cross_entropy(probs, sample.label)
    return probs, loss


def forward_batch(batch: Batch, params: ModelParams, cfg: ModelConfig,
                  training: bool = False, rng=None, mode: str = "full"):
    """Batched forward over padded sequences; loss is the batch-mean
    cross-entropy, identical to the mean of per-sample losses."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {ABLATION_MODES}")
    dt = get_default_dtype()

    def z_image() -> Tensor:
        h = add(matmul(Tensor(batch.img), params.image.proj_w), params.image.proj_b)
        return _encode_core(h, batch.img_mask, params.image, cfg, training, rng)

    def z_audio() -> Tensor:
        h = add(matmul(Tensor(batch.audio), params.audio.proj_w), params.audio.proj_b)
        return _encode_core(h, batch.audio_mask, params.audio, cfg, training, rng)

    def z_text() -> Tensor:
        if cfg.text_mode == "tokens":
            h = embedding_lookup(params.text.embed, batch.text_tokens)
            if batch.text_dropped.any():
                keep = (~batch.text_dropped).astype(dt)[:, None, None]
                h = mul_const(h, keep)
        else:
            h = add(matmul(Tensor(batch.text_emb), params.text.proj_w),
                    params.text.proj_b)
        return _encode_core(h, batch.text_mask, params.text, cfg, training, rng)

    if mode == "full":
        z = fuse(z_image(), z_audio(), z_text(), params.fusion)
    else:
        z = {"image_only": z_image, "audio_only": z_audio, "text_only": z_text}[mode]()
    probs = classify(z, params.head)
    loss = mean(cross_entropy(probs, batch.labels))
    return probs, loss


def effective_fusion_weights(params: ModelParams, mode: str) -> np.ndarray:
    """(alpha, beta, chi) actually applied in this mode."""
    if mode == "full":
        return params.fusion.effective()
    onehot = np.zeros(3)
    onehot[("image_only", "audio_only", "text_only").index(mode)] = 1.0
    return onehot
