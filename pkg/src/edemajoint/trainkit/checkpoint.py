"""Versioned, checksummed binary checkpoints.

Layout (all integers little-endian)::

    b"EDJCKPT\\0"            8-byte magic
    uint32 version
    uint64 header length
    header                  UTF-8 JSON, sorted keys
    payload                 float64 LE arrays: every parameter, then every
                            first moment, then every second moment, in
                            header order
    sha256                  32-byte digest of everything above
"""

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..encoders import ModelConfig
from ..errors import IntegrityError
from ..gradnet import ParameterStore
from .config import TrainConfig, config_from_dict
from .optim import OptimizerState

MAGIC = b"EDJCKPT\0"
VERSION = 1
_DIGEST = 32


@dataclass
class Checkpoint:
    params: ParameterStore
    optimizer: OptimizerState
    step: int
    config: TrainConfig
    vocabulary: dict

    @property
    def model(self):
        return self.params.model

    def copy(self):
        opt = OptimizerState({k: v.copy() for k, v in self.optimizer.m.items()},
                             {k: v.copy() for k, v in self.optimizer.v.items()},
                             self.optimizer.t)
        return Checkpoint(self.params.copy(), opt, self.step, self.config, dict(self.vocabulary))


def checkpoint_bytes(ckpt):
    names = list(ckpt.params)
    header = {
        "model": ckpt.model.to_dict(),
        "params": [{"name": n, "owner": ckpt.params.owner(n), "shape": list(ckpt.params[n].shape)}
                   for n in names],
        "optimizer_t": ckpt.optimizer.t,
        "step": ckpt.step,
        "config": ckpt.config.to_dict(),
        "vocabulary": [t for t, _ in sorted(ckpt.vocabulary.items(), key=lambda kv: kv[1])],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    for source in (ckpt.params, ckpt.optimizer.m, ckpt.optimizer.v):
        for n in names:
            parts.append(np.ascontiguousarray(source[n], dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def checkpoint_from_bytes(data):
    if len(data) < len(MAGIC) + 12 + _DIGEST or data[:len(MAGIC)] != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic or truncated)")
    version, head_len = struct.unpack_from("<IQ", data, len(MAGIC))
    if version != VERSION:
        raise IntegrityError(f"checkpoint version {version} is not supported (expected {VERSION})")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("checkpoint checksum mismatch (file truncated or corrupt)")
    offset = len(MAGIC) + 12
    header = json.loads(body[offset:offset + head_len].decode("utf-8"))
    offset += head_len

    model_d = header["model"]
    model_d["image_channels"] = tuple(model_d["image_channels"])
    params = ParameterStore(ModelConfig(**model_d))
    sections = ({}, {}, {})
    for section in sections:
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) * 8
            section[spec["name"]] = np.frombuffer(body, "<f8", n // 8, offset).reshape(shape).copy()
            offset += n
    if offset != len(body):
        raise IntegrityError("checkpoint payload length does not match its header")
    for spec in header["params"]:
        params.add(spec["name"], sections[0][spec["name"]], spec["owner"])
    opt = OptimizerState(sections[1], sections[2], header["optimizer_t"])
    vocab = {t: i for i, t in enumerate(header["vocabulary"])}
    return Checkpoint(params, opt, header["step"], config_from_dict(header["config"]), vocab)


def atomic_write_bytes(path, data):
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(ckpt, path):
    atomic_write_bytes(path, checkpoint_bytes(ckpt))


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())
