"""Scaled dot-product attention, multi-head attention, positional
encoding, and the pre-norm encoder layer shared by all three modality
branches.

Masks are boolean "valid position" vectors. Masked key columns are
excluded by adding a large negative constant to the scores before the
(max-subtracted) softmax, which underflows their weights to exactly
zero; queries at padded positions produce rows that downstream pooling
ignores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import (
    DegenerateInputError,
    ShapeError,
    Tensor,
    add,
    add_const,
    concat_last,
    dropout,
    gelu,
    get_default_dtype,
    layer_norm,
    matmul,
    scale,
    softmax_rows,
    transpose_last2,
)

EMOTION_CLASS_COUNT = 7


@dataclass
class ModelConfig:
    """Dimensions and hyperparameters for the three branches and the head.

    Text input mode is implied by the dims: ``vocab_size > 0`` selects the
    learned-embedding-table path, otherwise ``d_text > 0`` selects the
    precomputed-embedding path (exactly one must be set).
    """

    d_model: int = 32
    n_heads: int = 2
    n_layers: int = 1
    d_ff: int = 64
    dropout_p: float = 0.1
    d_img: int = 16
    d_audio: int = 12
    d_text: int = 8
    vocab_size: int = 0
    max_seq_len: int = 64
    n_classes: int = EMOTION_CLASS_COUNT

    def validate(self) -> "ModelConfig":
        for name in ("d_model", "n_heads", "n_layers", "d_ff", "d_img",
                     "d_audio", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.n_classes != EMOTION_CLASS_COUNT:
            raise ValueError(f"n_classes is fixed at {EMOTION_CLASS_COUNT}")
        if (self.d_text > 0) == (self.vocab_size > 0):
            raise ValueError("exactly one of d_text / vocab_size must be positive")
        return self

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def text_mode(self) -> str:
        return "tokens" if self.vocab_size > 0 else "embeddings"

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model, "n_heads": self.n_heads,
            "n_layers": self.n_layers, "d_ff": self.d_ff,
            "dropout_p": self.dropout_p, "d_img": self.d_img,
            "d_audio": self.d_audio, "d_text": self.d_text,
            "vocab_size": self.vocab_size, "max_seq_len": self.max_seq_len,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


@dataclass
class AttentionHeadParams:
    """Per-head Q/K/V projections plus the shared output projection."""

    w_q: list  # one [d_model, d_k] Tensor per head
    w_k: list
    w_v: list
    w_o: Tensor  # [n_heads * d_k, d_model]


@dataclass
class EncoderLayerParams:
    attn: AttentionHeadParams
    ln1_gain: Tensor
    ln1_bias: Tensor
    w1: Tensor  # [d_model, d_ff]
    b1: Tensor
    w2: Tensor  # [d_ff, d_model]
    b2: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


def mask_fill_value() -> float:
    # Finite stand-in for -inf; underflows to weight 0 after max-subtraction.
    return -1e9 if get_default_dtype() == np.dtype(np.float32) else -1e30


def additive_mask(mask: np.ndarray) -> np.ndarray:
    """Boolean valid-mask [S] or [B,S] -> additive score row [1,S] / [B,1,S]."""
    m = np.asarray(mask, dtype=bool)
    if not m.any(axis=-1).all():
        raise DegenerateInputError("attention mask has a fully masked sequence")
    out = np.where(m, 0.0, mask_fill_value()).astype(get_default_dtype())
    return out[..., None, :]


def positional_encoding(length: int, d_model: int, max_seq_len: int) -> np.ndarray:
    """Fixed sinusoidal table [length, d_model]; parameter-free."""
    if length > max_seq_len:
        raise ShapeError(f"sequence length {length} exceeds max_seq_len {max_seq_len}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    angles = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return pe.astype(get_default_dtype())


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: Optional[np.ndarray] = None,
                         *, dropout_p: float = 0.0, training: bool = False,
                         rng: Optional[np.random.Generator] = None) -> Tensor:
    """softmax(Q Kᵀ / sqrt(d_k)) V with masked key columns excluded."""
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ShapeError(f"query dim {q.shape} and key dim {k.shape} differ")
    scores = scale(matmul(q, transpose_last2(k)), 1.0 / np.sqrt(d_k))
    if mask is not None:
        scores = add_const(scores, additive_mask(mask))
    probs = softmax_rows(scores)
    if dropout_p > 0.0:
        probs = dropout(probs, dropout_p, rng, training)
    return matmul(probs, v)


def multi_head_attention(x: Tensor, params: AttentionHeadParams,
                         mask: Optional[np.ndarray] = None,
                         *, dropout_p: float = 0.0, training: bool = False,
                         rng: Optional[np.random.Generator] = None) -> Tensor:
    heads = []
    for w_q, w_k, w_v in zip(params.w_q, params.w_k, params.w_v):
        q = matmul(x, w_q)
        k = matmul(x, w_k)
        v = matmul(x, w_v)
        heads.append(scaled_dot_attention(
            q, k, v, mask, dropout_p=dropout_p, training=training, rng=rng))
    merged = heads[0] if len(heads) == 1 else concat_last(heads)
    return matmul(merged, params.w_o)


def encoder_layer(x: Tensor, params: EncoderLayerParams,
                  mask: Optional[np.ndarray] = None,
                  *, dropout_p: float = 0.0, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """Pre-norm residual block: x + MHA(LN(x)), then x + FFN(LN(x))."""
    a = layer_norm(x, params.ln1_gain, params.ln1_bias)
    x = add(x, multi_head_attention(
        a, params.attn, mask, dropout_p=dropout_p, training=training, rng=rng))
    f = layer_norm(x, params.ln2_gain, params.ln2_bias)
    h = gelu(add(matmul(f, params.w1), params.b1))
    h = dropout(h, dropout_p, rng, training) if dropout_p > 0.0 else h
    return add(x, add(matmul(h, params.w2), params.b2))


def encoder_stack(x: Tensor, layers: list[EncoderLayerParams],
                  mask: Optional[np.ndarray] = None,
                  *, dropout_p: float = 0.0, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    for layer in layers:
        x = encoder_layer(x, layer, mask, dropout_p=dropout_p,
                          training=training, rng=rng)
    return x


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_attention_params(cfg: ModelConfig, rng: np.random.Generator) -> AttentionHeadParams:
    d, dk = cfg.d_model, cfg.d_k
    w_q, w_k, w_v = [], [], []
    for _ in range(cfg.n_heads):
        w_q.append(_uniform(rng, d, (d, dk)))
        w_k.append(_uniform(rng, d, (d, dk)))
        w_v.append(_uniform(rng, d, (d, dk)))
    w_o = _uniform(rng, cfg.n_heads * dk, (cfg.n_heads * dk, d))
    return AttentionHeadParams(w_q, w_k, w_v, w_o)


def init_encoder_layer(cfg: ModelConfig, rng: np.random.Generator) -> EncoderLayerParams:
    d, d_ff = cfg.d_model, cfg.d_ff
    return EncoderLayerParams(
        attn=init_attention_params(cfg, rng),
        ln1_gain=Tensor(np.ones(d), requires_grad=True),
        ln1_bias=Tensor(np.zeros(d), requires_grad=True),
        w1=_uniform(rng, d, (d, d_ff)),
        b1=Tensor(np.zeros(d_ff), requires_grad=True),
        w2=_uniform(rng, d_ff, (d_ff, d)),
        b2=Tensor(np.zeros(d), requires_grad=True),
        ln2_gain=Tensor(np.ones(d), requires_grad=True),
        ln2_bias=Tensor(np.zeros(d), requires_grad=True),
    )
