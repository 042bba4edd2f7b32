"""Multimodal samples, the JSONL interchange format, batching with
padding masks, and the synthetic dataset generator.

JSONL layout: the first line is a header object
``{"format": "trifuse-mmds", "version": 1, "d_img": ..., "d_audio": ...,
"text_mode": "embeddings"|"tokens", "d_text"?: ..., "vocab_size"?: ...,
"splits"?: {...}}``; every following line is one sample
``{"id", "dialogue_id"?, "label", "img", "audio", "text_emb"? |
"text_tokens"?}``. The optional "splits" key carries the named
train/val/test id lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import get_default_dtype

FORMAT_NAME = "trifuse-mmds"
FORMAT_VERSION = 1

EMOTION_LABELS = ("joy", "anger", "sadness", "fear", "surprise", "disgust", "neutral")
_LABEL_TO_CODE = {name: i for i, name in enumerate(EMOTION_LABELS)}


class DatasetError(ValueError):
    """Malformed dataset file or inconsistent dataset contents."""


def label_code(name: str) -> int:
    try:
        return _LABEL_TO_CODE[name]
    except KeyError:
        raise DatasetError(
            f"unknown label {name!r}; legal labels are {', '.join(EMOTION_LABELS)}"
        ) from None


def label_name(code: int) -> str:
    if not 0 <= code < len(EMOTION_LABELS):
        raise DatasetError(f"label code {code} out of range 0..6")
    return EMOTION_LABELS[code]


@dataclass
class ImageSequence:
    features: np.ndarray  # [T, d_img]


@dataclass
class AudioSequence:
    features: np.ndarray  # [L, d_audio]


@dataclass
class TextSequence:
    """Exactly one representation: precomputed embeddings or token ids.

    ``dropped`` is a train-time modality-dropout marker for token mode
    (embeddings are zeroed in place instead); it is never serialized.
    """

    embeddings: Optional[np.ndarray] = None  # [N, d_text]
    token_ids: Optional[np.ndarray] = None   # [N] ints
    dropped: bool = False

    def __post_init__(self):
        if (self.embeddings is None) == (self.token_ids is None):
            raise DatasetError("text needs exactly one of embeddings / token_ids")

    @property
    def length(self) -> int:
        src = self.embeddings if self.embeddings is not None else self.token_ids
        return len(src)


@dataclass
class MultimodalSample:
    id: str
    image: ImageSequence
    audio: AudioSequence
    text: TextSequence
    label: int  # 0..6
    dialogue_id: Optional[str] = None


@dataclass
class Dataset:
    d_img: int
    d_audio: int
    text_mode: str  # "embeddings" | "tokens"
    d_text: int = 0
    vocab_size: int = 0
    samples: list = field(default_factory=list)
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.samples}

    def sample(self, sample_id: str) -> MultimodalSample:
        return self._by_id[sample_id]

    def split(self, name: str) -> list:
        if name not in self.splits:
            raise DatasetError(
                f"split {name!r} not present; available: {sorted(self.splits) or 'none'}")
        return [self._by_id[i] for i in self.splits[name]]

    def validate(self) -> "Dataset":
        if self.text_mode not in ("embeddings", "tokens"):
            raise DatasetError(f"text_mode must be embeddings|tokens, got {self.text_mode!r}")
        if self.text_mode == "embeddings" and self.d_text < 1:
            raise DatasetError("embeddings mode needs d_text >= 1")
        if self.text_mode == "tokens" and self.vocab_size < 1:
            raise DatasetError("tokens mode needs vocab_size >= 1")
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise DatasetError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            _validate_sample(self, s)
        listed: set[str] = set()
        for name, ids in self.splits.items():
            for i in ids:
                if i not in self._by_id:
                    raise DatasetError(f"split {name!r} lists unknown id {i!r}")
                if i in listed:
                    raise DatasetError(f"id {i!r} appears in more than one split")
                listed.add(i)
        return self


def _validate_sample(ds: Dataset, s: MultimodalSample, line: Optional[int] = None) -> None:
    where = f"line {line}: " if line is not None else f"sample {s.id!r}: "
    img, aud = s.image.features, s.audio.features
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] != ds.d_img:
        raise DatasetError(f"{where}img must be [T>=1, {ds.d_img}], got {img.shape}")
    if aud.ndim != 2 or aud.shape[0] < 1 or aud.shape[1] != ds.d_audio:
        raise DatasetError(f"{where}audio must be [L>=1, {ds.d_audio}], got {aud.shape}")
    if not (np.isfinite(img).all() and np.isfinite(aud).all()):
        raise DatasetError(f"{where}non-finite feature values")
    if ds.text_mode == "embeddings":
        emb = s.text.embeddings
        if emb is None:
            raise DatasetError(f"{where}text_emb required in embeddings mode")
        if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] != ds.d_text:
            raise DatasetError(f"{where}text_emb must be [N>=1, {ds.d_text}], got {emb.shape}")
        if not np.isfinite(emb).all():
            raise DatasetError(f"{where}non-finite text embeddings")
    else:
        toks = s.text.token_ids
        if toks is None:
            raise DatasetError(f"{where}text_tokens required in tokens mode")
        if toks.ndim != 1 or len(toks) < 1:
            raise DatasetError(f"{where}text_tokens must be a non-empty id list")
        if toks.min() < 0 or toks.max() >= ds.vocab_size:
            raise DatasetError(
                f"{where}token id out of range [0, {ds.vocab_size})")
    if not 0 <= s.label < len(EMOTION_LABELS):
        raise DatasetError(f"{where}label code {s.label} out of range")


# ---------------------------------------------------------------------------
# JSONL load / save


def load_jsonl(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetError(f"line 1: malformed header JSON ({e.msg})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise DatasetError(f"line 1: header 'format' must be {FORMAT_NAME!r}")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetError(
            f"line 1: unsupported version {header.get('version')!r}, "
            f"expected {FORMAT_VERSION}")
    ds = Dataset(
        d_img=int(header.get("d_img", 0)),
        d_audio=int(header.get("d_audio", 0)),
        text_mode=str(header.get("text_mode", "")),
        d_text=int(header.get("d_text", 0) or 0),
        vocab_size=int(header.get("vocab_size", 0) or 0),
        splits={k: list(v) for k, v in header.get("splits", {}).items()},
    )
    if ds.d_img < 1 or ds.d_audio < 1:
        raise DatasetError("line 1: d_img and d_audio must be >= 1")
    dt = get_default_dtype()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise DatasetError(f"line {lineno}: malformed JSON ({e.msg})") from None
        try:
            sample = _sample_from_json(obj, ds, dt)
        except (DatasetError, KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"line {lineno}: {e}") from None
        if sample.id in ds._by_id:
            raise DatasetError(f"line {lineno}: duplicate sample id {sample.id!r}")
        _validate_sample(ds, sample, line=lineno)
        ds.samples.append(sample)
        ds._by_id[sample.id] = sample
    return ds.validate()


def _sample_from_json(obj: dict, ds: Dataset, dt) -> MultimodalSample:
    text = (
        TextSequence(embeddings=np.asarray(obj["text_emb"], dtype=dt))
        if ds.text_mode == "embeddings"
        else TextSequence(token_ids=np.asarray(obj["text_tokens"], dtype=np.int64))
    )
    return MultimodalSample(
        id=str(obj["id"]),
        image=ImageSequence(np.asarray(obj["img"], dtype=dt)),
        audio=AudioSequence(np.asarray(obj["audio"], dtype=dt)),
        text=text,
        label=label_code(obj["label"]),
        dialogue_id=obj.get("dialogue_id"),
    )


def save_jsonl(ds: Dataset, path) -> None:
    ds.validate()
    header: dict = {
        "format": FORMAT_NAME, "version": FORMAT_VERSION,
        "d_img": ds.d_img, "d_audio": ds.d_audio, "text_mode": ds.text_mode,
    }
    if ds.text_mode == "embeddings":
        header["d_text"] = ds.d_text
    else:
        header["vocab_size"] = ds.vocab_size
    if ds.splits:
        header["splits"] = ds.splits
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for s in ds.samples:
            obj: dict = {"id": s.id}
            if s.dialogue_id is not None:
                obj["dialogue_id"] = s.dialogue_id
            obj["label"] = label_name(s.label)
            obj["img"] = s.image.features.tolist()
            obj["audio"] = s.audio.features.tolist()
            if ds.text_mode == "embeddings":
                obj["text_emb"] = s.text.embeddings.tolist()
            else:
                obj["text_tokens"] = s.text.token_ids.tolist()
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class SynthSpec:
    """Knobs for the class-conditional Gaussian generator.

    Per-modality ``informativeness`` in [0, 1] scales the separation of
    the class means (0 = identical distributions for every class, i.e.
    pure noise); sigma is fixed at 1. Token mode draws each position
    from a class-specific token pool with probability equal to the
    informativeness, else uniformly.
    """

    n_train: int
    n_val: int = 0
    n_test: int = 0
    d_img: int = 16
    d_audio: int = 12
    text_mode: str = "embeddings"
    d_text: int = 8
    vocab_size: int = 0
    img_len: tuple = (4, 10)
    audio_len: tuple = (4, 10)
    text_len: tuple = (4, 10)
    informativeness: tuple = (0.5, 0.5, 0.5)
    seed: int = 0
    mean_scale: float = 1.0

    def validate(self) -> "SynthSpec":
        if len(self.informativeness) != 3 or any(
                not 0.0 <= v <= 1.0 for v in self.informativeness):
            raise ValueError(
                f"informativeness must be three values in [0, 1], got {self.informativeness}")
        for n, tag in ((self.n_train, "n_train"), (self.n_val, "n_val"),
                       (self.n_test, "n_test")):
            if n < 0 or (0 < n < len(EMOTION_LABELS)):
                raise ValueError(
                    f"{tag} must be 0 or >= {len(EMOTION_LABELS)} for stratified labels")
        if self.n_train < 1:
            raise ValueError("n_train must be >= 7")
        for rng_, tag in ((self.img_len, "img_len"), (self.audio_len, "audio_len"),
                          (self.text_len, "text_len")):
            lo, hi = rng_
            if not (1 <= lo <= hi):
                raise ValueError(f"{tag} range must satisfy 1 <= min <= max, got {rng_}")
        if self.text_mode not in ("embeddings", "tokens"):
            raise ValueError(f"text_mode must be embeddings|tokens, got {self.text_mode!r}")
        if self.text_mode == "tokens" and self.vocab_size < len(EMOTION_LABELS):
            raise ValueError("tokens mode needs vocab_size >= 7")
        if self.text_mode == "embeddings" and self.d_text < 1:
            raise ValueError("embeddings mode needs d_text >= 1")
        if self.d_img < 1 or self.d_audio < 1:
            raise ValueError("d_img and d_audio must be >= 1")
        if self.mean_scale < 0:
            raise ValueError("mean_scale must be >= 0")
        return self

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train, "n_val": self.n_val, "n_test": self.n_test,
            "d_img": self.d_img, "d_audio": self.d_audio,
            "text_mode": self.text_mode, "d_text": self.d_text,
            "vocab_size": self.vocab_size,
            "img_len": list(self.img_len), "audio_len": list(self.audio_len),
            "text_len": list(self.text_len),
            "informativeness": list(self.informativeness),
            "seed": self.seed, "mean_scale": self.mean_scale,
        }


def _class_direction(c: int, dim: int) -> np.ndarray:
    # One-hot-like direction with sign alternation once classes wrap the dim.
    v = np.zeros(dim)
    v[c % dim] = 1.0 if (c // dim) % 2 == 0 else -1.0
    return v


def _balanced_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.array([i % len(EMOTION_LABELS) for i in range(n)], dtype=np.int64)
    rng.shuffle(labels)
    return labels


def generate_synthetic(spec: SynthSpec) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dt = get_default_dtype()
    inf_img, inf_audio, inf_text = spec.informativeness
    ds = Dataset(
        d_img=spec.d_img, d_audio=spec.d_audio, text_mode=spec.text_mode,
        d_text=spec.d_text if spec.text_mode == "embeddings" else 0,
        vocab_size=spec.vocab_size if spec.text_mode == "tokens" else 0,
    )

    def gaussian_seq(label: int, dim: int, length: int, inf: float) -> np.ndarray:
        mean = inf * spec.mean_scale * _class_direction(label, dim)
        return (mean + rng.standard_normal((length, dim))).astype(dt)

    def token_seq(label: int, length: int, inf: float) -> np.ndarray:
        v = spec.vocab_size
        pool = np.arange(label, v, len(EMOTION_LABELS))
        toks = np.empty(length, dtype=np.int64)
        for i in range(length):
            if rng.random() < inf:
                toks[i] = pool[rng.integers(len(pool))]
            else:
                toks[i] = rng.integers(v)
        return toks

    for split_name, n in (("train", spec.n_train), ("val", spec.n_val),
                          ("test", spec.n_test)):
        if n == 0:
            ds.splits[split_name] = []
            continue
        labels = _balanced_labels(n, rng)
        ids = []
        for i, label in enumerate(labels):
            label = int(label)
            t = int(rng.integers(spec.img_len[0], spec.img_len[1] + 1))
            img = gaussian_seq(label, spec.d_img, t, inf_img)
            l = int(rng.integers(spec.audio_len[0], spec.audio_len[1] + 1))
            audio = gaussian_seq(label, spec.d_audio, l, inf_audio)
            n_text = int(rng.integers(spec.text_len[0], spec.text_len[1] + 1))
            if spec.text_mode == "embeddings":
                text = TextSequence(embeddings=gaussian_seq(
                    label, spec.d_text, n_text, inf_text))
            else:
                text = TextSequence(token_ids=token_seq(label, n_text, inf_text))
            sid = f"{split_name}-{i:05d}"
            ids.append(sid)
            sample = MultimodalSample(
                id=sid, image=ImageSequence(img), audio=AudioSequence(audio),
                text=text, label=label)
            ds.samples.append(sample)
            ds._by_id[sid] = sample
        ds.splits[split_name] = ids
    return ds.validate()


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    ids: list
    labels: np.ndarray            # [B] int64
    img: np.ndarray               # [B, Tmax, d_img]
    img_mask: np.ndarray          # [B, Tmax] bool
    audio: np.ndarray
    audio_mask: np.ndarray
    text_emb: Optional[np.ndarray]     # [B, Nmax, d_text] (embeddings mode)
    text_tokens: Optional[np.ndarray]  # [B, Nmax] int64 (tokens mode)
    text_mask: np.ndarray
    text_dropped: np.ndarray      # [B] bool, token-mode drop marker

    @property
    def size(self) -> int:
        return len(self.ids)


def _pad_stack(arrays: list, dt) -> tuple[np.ndarray, np.ndarray]:
    b = len(arrays)
    smax = max(a.shape[0] for a in arrays)
    dim = arrays[0].shape[1]
    out = np.zeros((b, smax, dim), dtype=dt)
    mask = np.zeros((b, smax), dtype=bool)
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
        mask[i, : a.shape[0]] = True
    return out, mask


def collate(samples: list) -> Batch:
    """Pad a list of samples to each modality's batch max length."""
    if not samples:
        raise DatasetError("cannot collate an empty sample list")
    dt = get_default_dtype()
    img, img_mask = _pad_stack([s.image.features for s in samples], dt)
    audio, audio_mask = _pad_stack([s.audio.features for s in samples], dt)
    token_mode = samples[0].text.token_ids is not None
    if token_mode:
        lens = [len(s.text.token_ids) for s in samples]
        nmax = max(lens)
        toks = np.zeros((len(samples), nmax), dtype=np.int64)
        tmask = np.zeros((len(samples), nmax), dtype=bool)
        for i, s in enumerate(samples):
            toks[i, : lens[i]] = s.text.token_ids
            tmask[i, : lens[i]] = True
        text_emb = None
        text_tokens = toks
    else:
        text_emb, tmask = _pad_stack([s.text.embeddings for s in samples], dt)
        text_tokens = None
    return Batch(
        ids=[s.id for s in samples],
        labels=np.array([s.label for s in samples], dtype=np.int64),
        img=img, img_mask=img_mask, audio=audio, audio_mask=audio_mask,
        text_emb=text_emb, text_tokens=text_tokens, text_mask=tmask,
        text_dropped=np.array([s.text.dropped for s in samples], dtype=bool),
    )


def make_batches(samples: list, batch_size: int,
                 rng: Optional[np.random.Generator] = None) -> list:
    """Split into padded batches; seeded shuffle when an rng is given,
    original order otherwise; the final partial batch is kept."""
    if not samples:
        raise DatasetError("cannot batch an empty split")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = list(range(len(samples)))
    if rng is not None:
        order = list(rng.permutation(len(samples)))
    return [
        collate([samples[j] for j in order[i: i + batch_size]])
        for i in range(0, len(order), batch_size)
    ]
