"""Versioned binary checkpoint format.

Layout (all integers little-endian):

    magic            8 bytes  b"TRIFUSE1"
    format version   u32
    config JSON      u32 length + UTF-8  {"model": ..., "meta": ...}
    tensor count     u32
    per tensor       u32 name length + UTF-8 name,
                     u32 rank, u64 extents (rank of them),
                     raw values, little-endian, at meta["dtype"]
    RNG state JSON   u32 length + UTF-8 (the literal ``null`` when absent)

Round-trips are bit-exact, including the RNG state.
"""

from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from .transformer import ModelConfig

MAGIC = b"TRIFUSE1"
FORMAT_VERSION = 1

_DTYPE_CODES = {"float64": "<f8", "float32": "<f4"}


class CheckpointError(ValueError):
    """Unreadable, corrupt, or version-incompatible checkpoint file."""


def save_checkpoint(path, cfg: ModelConfig, tensors: dict, meta: dict,
                    rng_state: Optional[dict] = None) -> None:
    dtype = meta.get("dtype", "float64")
    if dtype not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported dtype {dtype!r}")
    code = _DTYPE_CODES[dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        cfg_bytes = json.dumps({"model": cfg.to_dict(), "meta": meta},
                               sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(np.ascontiguousarray(arr, dtype=code).tobytes())
        rng_bytes = json.dumps(rng_state).encode("utf-8")
        fh.write(struct.pack("<I", len(rng_bytes)))
        fh.write(rng_bytes)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    """Returns (ModelConfig, {name: array}, meta dict, rng_state or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(
                f"bad magic {magic!r}: not a {MAGIC.decode()} checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} not supported; "
                f"this build reads version {FORMAT_VERSION}")
        (n_cfg,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        blob = json.loads(_read_exact(fh, n_cfg, "config"))
        meta = blob["meta"]
        cfg = ModelConfig.from_dict(blob["model"])
        dtype = meta.get("dtype", "float64")
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {dtype!r}")
        code = _DTYPE_CODES[dtype]
        itemsize = np.dtype(code).itemsize
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(n_tensors):
            (n_name,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, n_name, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "extent"))[0]
                for _ in range(rank))
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * itemsize, f"tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype=code).reshape(shape).copy()
        (n_rng,) = struct.unpack("<I", _read_exact(fh, 4, "rng length"))
        rng_state = json.loads(_read_exact(fh, n_rng, "rng state"))
    return cfg, tensors, meta, rng_state


def load_model(path):
    """Load the inference-ready parameters (the best-validation snapshot)
    from a checkpoint; returns (cfg, ModelParams, meta)."""
    from .model import params_from_named
    from .tensor import set_default_dtype

    cfg, tensors, meta, _ = load_checkpoint(path)
    set_default_dtype(meta.get("dtype", "float64"))
    best = {k[len("best."):]: v for k, v in tensors.items() if k.startswith("best.")}
    if not best:
        raise CheckpointError(f"{path}: checkpoint holds no model parameters")
    return cfg, params_from_named(cfg, best), meta
