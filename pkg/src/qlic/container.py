"""Bitstream container: fixed header plus four length-prefixed substreams.

Layout (all little-endian):
  magic "DCA1" | version u8 | variant u8 | lambda index u8 |
  orig H u32 | orig W u32 | padded H u32 | padded W u32 |
  then four substreams in order z_r, z_g, z_l, y, each u32 length + bytes.

Disabled hyper branches carry zero-length substreams. Parsing must
consume the buffer exactly; anything else is rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"DCA1"
VERSION = 1
SUBSTREAM_ORDER = ("R", "G", "L", "Y")


class ContainerError(ValueError):
    pass


@dataclass
class Header:
    variant: int
    lambda_index: int
    orig_height: int
    orig_width: int
    padded_height: int
    padded_width: int

    def serialize(self) -> bytes:
        for name in ("variant", "lambda_index"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFF:
                raise ContainerError(f"{name} {v} does not fit in one byte")
        for name in ("orig_height", "orig_width", "padded_height", "padded_width"):
            v = getattr(self, name)
            if not 0 < v <= 0xFFFFFFFF:
                raise ContainerError(f"{name} {v} out of range")
        return MAGIC + struct.pack(
            "<BBBIIII", VERSION, self.variant, self.lambda_index,
            self.orig_height, self.orig_width,
            self.padded_height, self.padded_width,
        )


HEADER_SIZE = len(MAGIC) + struct.calcsize("<BBBIIII")


def serialize(header: Header, substreams: dict) -> bytes:
    out = bytearray(header.serialize())
    for key in SUBSTREAM_ORDER:
        payload = substreams.get(key, b"")
        out += struct.pack("<I", len(payload))
        out += payload
    return bytes(out)


def parse(data: bytes) -> tuple[Header, dict]:
    if len(data) < HEADER_SIZE:
        raise ContainerError(f"buffer too short for header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise ContainerError("bad magic")
    version, variant, lam, oh, ow, ph, pw = struct.unpack_from("<BBBIIII", data, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    if oh == 0 or ow == 0 or ph == 0 or pw == 0:
        raise ContainerError("zero image extent in header")
    if ph < oh or pw < ow or ph % 64 != 0 or pw % 64 != 0:
        raise ContainerError("inconsistent padded extents")
    header = Header(variant=variant, lambda_index=lam, orig_height=oh,
                    orig_width=ow, padded_height=ph, padded_width=pw)
    pos = HEADER_SIZE
    substreams = {}
    for key in SUBSTREAM_ORDER:
        if pos + 4 > len(data):
            raise ContainerError(f"missing length prefix for substream {key}")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise ContainerError(f"substream {key} declares {length} bytes "
                                 f"but only {len(data) - pos} remain")
        substreams[key] = data[pos : pos + length]
        pos += length
    if pos != len(data):
        raise ContainerError(f"{len(data) - pos} trailing bytes after substreams")
    return header, substreams
