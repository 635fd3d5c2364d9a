"""rANS range coder over 16-bit integerized CDF tables.

Single non-interleaved stream: 32-bit state, 16-bit renormalization
words, lower bound 2^16. Symbols are processed in reverse at encode
time so that decoding runs in forward order. The flushed final state
(4 bytes) leads the byte stream; an empty sequence is exactly that
flush. Decoding verifies that the state returns to the lower bound and
that the buffer is consumed exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .entropy import CdfTable, PRECISION

RANS_L = 1 << 16
_MASK = RANS_L - 1


class RansError(ValueError):
    pass


def rans_encode(symbols, table_ids, tables: list[CdfTable]) -> bytes:
    """Encode `symbols[k]` under `tables[table_ids[k]]`; returns bytes."""
    symbols = np.asarray(symbols, dtype=np.int64)
    table_ids = np.asarray(table_ids, dtype=np.int64)
    if symbols.shape != table_ids.shape:
        raise RansError("symbols and table_ids must have equal length")
    state = RANS_L
    words: list[int] = []
    for k in range(len(symbols) - 1, -1, -1):
        table = tables[table_ids[k]]
        s = int(symbols[k])
        if not table.contains(s):
            raise RansError(
                f"symbol {s} at index {k} outside table support "
                f"[{table.offset}, {table.offset + table.num_symbols - 1}]"
            )
        start, freq = table.start_freq(s)
        while state >= (freq << 16):
            words.append(state & _MASK)
            state >>= 16
        state = ((state // freq) << PRECISION) + (state % freq) + start
    out = bytearray(struct.pack("<I", state))
    for word in reversed(words):
        out += struct.pack("<H", word)
    return bytes(out)


class RansDecoder:
    """Stateful forward decoder; call `decode` any number of times, then
    `finish` to verify the state returned to the initial constant and the
    buffer was consumed exactly."""

    def __init__(self, data: bytes):
        if len(data) < 4 or len(data) % 2 != 0:
            raise RansError(f"truncated stream ({len(data)} bytes)")
        self.data = data
        self.state = struct.unpack_from("<I", data, 0)[0]
        if self.state < RANS_L:
            raise RansError("corrupt stream: initial state below lower bound")
        self.pos = 4
        self.consumed = 0

    def decode(self, table_ids, tables: list[CdfTable]) -> np.ndarray:
        table_ids = np.asarray(table_ids, dtype=np.int64)
        out = np.empty(len(table_ids), dtype=np.int64)
        state, pos, data = self.state, self.pos, self.data
        for k in range(len(table_ids)):
            table = tables[table_ids[k]]
            cum = state & _MASK
            sym = table.symbol_from_cum(cum)
            start, freq = table.start_freq(sym)
            state = freq * (state >> PRECISION) + cum - start
            while state < RANS_L:
                if pos + 2 > len(data):
                    raise RansError(f"stream exhausted at symbol {self.consumed + k}")
                state = (state << 16) | struct.unpack_from("<H", data, pos)[0]
                pos += 2
            out[k] = sym
        self.state, self.pos = state, pos
        self.consumed += len(table_ids)
        return out

    def finish(self):
        if self.state != RANS_L:
            raise RansError("state desync: final state does not match initial constant")
        if self.pos != len(self.data):
            raise RansError(f"{len(self.data) - self.pos} trailing bytes not consumed")


def rans_decode(data: bytes, table_ids, tables: list[CdfTable]) -> np.ndarray:
    """Exact inverse of `rans_encode`; `table_ids` drives the symbol count."""
    decoder = RansDecoder(data)
    out = decoder.decode(table_ids, tables)
    decoder.finish()
    return out
