"""Checkpoint persistence: config block plus named float32 parameters.

Binary layout (little-endian):
  magic "DCAC" | version u8 | lambda index u8 |
  config text block (u32 length + utf-8) |
  param count u32 | per param: name (u16 length + utf-8), ndim u8,
  extents u32 each, float32 payload.

Round-trips are bitwise. CDF tables are always rebuilt from parameters
on load, never stored.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .model import CodecConfig, ImageCodec

MAGIC = b"DCAC"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: CodecConfig
    lambda_index: int
    params: dict  # name -> np.ndarray float32

    @classmethod
    def from_model(cls, model: ImageCodec, lambda_index: int) -> "Checkpoint":
        params = {name: p.data.astype(np.float32).copy()
                  for name, p in model.named_parameters()}
        return cls(config=model.cfg, lambda_index=lambda_index, params=params)

    def build_model(self) -> ImageCodec:
        model = ImageCodec(self.config)
        names = {name for name, _ in model.named_parameters()}
        unknown = set(self.params) - names
        if unknown:
            raise CheckpointError(f"unknown parameter names: {sorted(unknown)[:5]}")
        missing = names - set(self.params)
        if missing:
            raise CheckpointError(f"missing parameter names: {sorted(missing)[:5]}")
        for name, p in model.named_parameters():
            stored = self.params[name]
            if stored.shape != p.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: {stored.shape} vs {p.data.shape}")
            p.data = stored.copy()
        return model

    def serialize(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack("<BB", VERSION, self.lambda_index)
        cfg_text = self.config.to_text().encode()
        out += struct.pack("<I", len(cfg_text)) + cfg_text
        out += struct.pack("<I", len(self.params))
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name], dtype="<f4")
            nb = name.encode()
            out += struct.pack("<H", len(nb)) + nb
            out += struct.pack("<B", arr.ndim)
            for d in arr.shape:
                out += struct.pack("<I", d)
            out += arr.tobytes()
        return bytes(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "Checkpoint":
        try:
            if data[:4] != MAGIC:
                raise CheckpointError("bad checkpoint magic")
            version, lam = struct.unpack_from("<BB", data, 4)
            if version != VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            pos = 6
            (cfg_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            config = CodecConfig.from_text(data[pos : pos + cfg_len].decode())
            pos += cfg_len
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            params = {}
            for _ in range(count):
                (name_len,) = struct.unpack_from("<H", data, pos)
                pos += 2
                name = data[pos : pos + name_len].decode()
                pos += name_len
                if name in params:
                    raise CheckpointError(f"duplicate parameter {name!r}")
                (ndim,) = struct.unpack_from("<B", data, pos)
                pos += 1
                shape = struct.unpack_from(f"<{ndim}I", data, pos)
                pos += 4 * ndim
                size = int(np.prod(shape)) if ndim else 1
                payload = data[pos : pos + 4 * size]
                if len(payload) != 4 * size:
                    raise CheckpointError("truncated parameter payload")
                pos += 4 * size
                params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
            if pos != len(data):
                raise CheckpointError(f"{len(data) - pos} trailing bytes")
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc}") from exc
        return cls(config=config, lambda_index=lam, params=params)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    payload = ckpt.serialize()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        return Checkpoint.deserialize(fh.read())
