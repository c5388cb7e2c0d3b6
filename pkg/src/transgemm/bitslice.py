"""Bit-slicing of signed integer matrices into binary TransRow tiles.

An S-bit matrix becomes S binary matrices, one per bit level; the sign
level carries weight -2^(S-1) under two's complement, every other level s
carries +2^s. Bit p of a TransRow value selects local input element p
(printed strings are MSB-first, so "1011" has bits 0, 1 and 3 set).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .matrix import QuantMatrix

DEFAULT_WIDTH = 8
SUPPORTED_WIDTHS = (2, 4, 8, 10, 12, 16)


def bit_level_weight(bit_level: int, bits: int) -> int:
    """Contribution weight of one bit level of an S-bit two's-complement value."""
    if bit_level == bits - 1:
        return -(1 << bit_level)
    return 1 << bit_level


class TransRowRec(NamedTuple):
    """One binary row: an unsigned T-bit pattern plus its provenance."""

    value: int
    weight_row: int
    bit_level: int


@dataclass(frozen=True)
class TransRowTile:
    """One (S*n x T) binary sub-tile of a sliced weight matrix.

    `n_offset` is the first weight row covered, `k_offset` the first input
    column; `n_rows` counts weight rows, so len(rows) == bits * n_rows.
    """

    width: int
    bits: int
    n_rows: int
    n_offset: int
    k_offset: int
    rows: tuple[TransRowRec, ...]

    def values(self) -> list[int]:
        return [r.value for r in self.rows]


def value_to_bits(value: int, width: int) -> str:
    """MSB-first display string, e.g. value 11 at width 4 prints "1011"."""
    return format(value, f"0{width}b")


def slice_matrix(w: QuantMatrix, width: int = DEFAULT_WIDTH,
                 rows_per_block: int | None = None) -> list[TransRowTile]:
    """Decompose `w` into TransRow tiles of `width` input columns each.

    K is zero-padded up to a multiple of `width` (padded inputs are zero, so
    results are unaffected). `rows_per_block` bounds the weight rows per tile;
    default is all rows in one row block. Tiles are ordered row-block-major,
    then by k block.
    """
    if width < 2:
        raise ValueError("TransRow width must be >= 2")
    s = w.bits
    n, k = w.rows, w.cols
    if rows_per_block is None or rows_per_block > n:
        rows_per_block = n
    if rows_per_block < 1:
        raise ValueError("rows_per_block must be >= 1")
    k_pad = -(-k // width) * width
    # Unsigned bit pattern of each element; bit S-1 is the sign level.
    patterns = np.zeros((n, k_pad), dtype=np.int64)
    patterns[:, :k] = w.data.astype(np.int64) & ((1 << s) - 1)
    pos_weights = (1 << np.arange(width, dtype=np.int64))
    levels = np.arange(s, dtype=np.int64)

    tiles = []
    for n0 in range(0, n, rows_per_block):
        nb = min(rows_per_block, n - n0)
        for k0 in range(0, k_pad, width):
            block = patterns[n0:n0 + nb, k0:k0 + width]
            # bit p of the TransRow value <-> local input element p
            bits = (block[:, :, None] >> levels) & 1           # (nb, width, s)
            vals = (bits * pos_weights[None, :, None]).sum(axis=1)
            recs = tuple(TransRowRec(int(vals[i, lvl]), i, lvl)
                         for i in range(nb) for lvl in range(s))
            tiles.append(TransRowTile(width, s, nb, n0, k0, recs))
    return tiles


def unslice(tiles: list[TransRowTile], bits: int, rows: int, cols: int) -> QuantMatrix:
    """Inverse of slice_matrix; raises if the tile set leaves gaps."""
    k_pad = -(-cols // tiles[0].width) * tiles[0].width if tiles else cols
    patterns = np.full((rows, k_pad), -1, dtype=np.int64)
    seen = np.zeros((rows, k_pad), dtype=np.int64)
    patterns[:] = 0
    for tile in tiles:
        if tile.bits != bits:
            raise ValueError("tile bit width does not match the requested matrix")
        t = tile.width
        for rec in tile.rows:
            gi = tile.n_offset + rec.weight_row
            for p in range(t):
                if rec.value >> p & 1:
                    patterns[gi, tile.k_offset + p] |= 1 << rec.bit_level
            seen[gi, tile.k_offset:tile.k_offset + t] |= 1 << rec.bit_level
    full = (1 << bits) - 1
    if not np.all(seen == full):
        raise ValueError("incomplete tile set: missing tiles or bit levels")
    # Re-apply the sign weighting of the top bit level.
    sign = (patterns >> (bits - 1)) & 1
    values = (patterns & ((1 << (bits - 1)) - 1)) - (sign << (bits - 1))
    return QuantMatrix(rows, cols, bits, values[:, :cols].astype(np.int16))


def tile_to_json(tile: TransRowTile) -> dict:
    return {
        "width": tile.width,
        "bits": tile.bits,
        "n_offset": tile.n_offset,
        "k_offset": tile.k_offset,
        "rows": [
            {
                "value": value_to_bits(r.value, tile.width),
                "weight_row": r.weight_row,
                "bit_level": r.bit_level,
            }
            for r in tile.rows
        ],
    }
