"""Binary model checkpoints.

Layout (all integers little-endian):

    magic   7 bytes  b"S2SCKPT"
    version u32      currently 1
    config  u64 length prefix + UTF-8 JSON (dims, orientation tags, and
                     both vocabularies' content token lists)
    count   u32      number of weight entries
    entry   u16 name length + UTF-8 name
            u8 ndim, then ndim x u64 extents
            row-major float64 payload

Weights are written sorted by name, so save/load/save round-trips are
byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .data import Vocabulary
from .model import ModelConfig, ModelParams

MAGIC = b"S2SCKPT"
VERSION = 1


def save_checkpoint(params, path):
    cfg = params.config
    config_doc = {
        "src_vocab_size": cfg.src_vocab_size,
        "tgt_vocab_size": cfg.tgt_vocab_size,
        "embed_dim": cfg.embed_dim,
        "hidden_dim": cfg.hidden_dim,
        "attn_dim": cfg.attn_dim,
        "direction": cfg.direction,
        "side": cfg.side,
        "src_tokens": params.src_vocab.content_tokens,
        "tgt_tokens": params.tgt_vocab.content_tokens,
    }
    blob = json.dumps(config_doc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        names = sorted(params.weights)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(params.weights[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, not a checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<Q", _read_exact(fh, 8, "config length"))
        doc = json.loads(_read_exact(fh, blob_len, "config").decode("utf-8"))
        cfg = ModelConfig(
            src_vocab_size=doc["src_vocab_size"],
            tgt_vocab_size=doc["tgt_vocab_size"],
            embed_dim=doc["embed_dim"],
            hidden_dim=doc["hidden_dim"],
            attn_dim=doc["attn_dim"],
            direction=doc["direction"],
            side=doc["side"],
        )
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        weights = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "extent"))[0]
                for _ in range(ndim)
            )
            n_items = 1
            for extent in shape:
                n_items *= extent
            raw = _read_exact(fh, 8 * n_items, f"payload of {name}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            weights[name] = arr
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after last entry")
    return ModelParams(
        cfg,
        weights,
        Vocabulary(doc["src_tokens"]),
        Vocabulary(doc["tgt_tokens"]),
    )
