"""Integer matrix containers, deterministic generation, quantization, file I/O,
and the dense reference GEMM that everything else is checked against."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SUPPORTED_BITS = (2, 3, 4, 8)

QTNS_MAGIC = b"QTNS"
QTNS_VERSION = 1

CSV_MAX_DIM = 64


class QTensorError(ValueError):
    """Base error for the QTensor binary format."""


class BadMagicError(QTensorError):
    pass


class TruncatedError(QTensorError):
    pass


class OutOfRangeError(QTensorError):
    pass


def _check_bits(bits: int) -> None:
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {bits}")


def int_range(bits: int) -> tuple[int, int]:
    """Inclusive [lo, hi] of a two's-complement value of the given width."""
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantMatrix:
    """Row-major signed integer matrix, each element fitting in `bits` bits.

    Scales are carried as metadata only; all GEMM math here stays in the
    integer domain.
    """

    rows: int
    cols: int
    bits: int
    data: np.ndarray
    group_size: int | None = None
    scales: np.ndarray | None = None

    def __post_init__(self):
        _check_bits(self.bits)
        if self.rows < 1 or self.cols < 1:
            raise ValueError("matrix must have at least one row and column")
        data = np.ascontiguousarray(self.data, dtype=np.int16)
        if data.shape != (self.rows, self.cols):
            raise ValueError(f"data shape {data.shape} != ({self.rows}, {self.cols})")
        lo, hi = int_range(self.bits)
        if data.min(initial=0) < lo or data.max(initial=0) > hi:
            raise OutOfRangeError(f"element outside [{lo}, {hi}] for {self.bits}-bit matrix")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.scales is not None:
            if self.group_size is None or self.group_size < 1:
                raise ValueError("scales require a positive group_size")
            n_groups = -(-self.cols // self.group_size)
            scales = np.ascontiguousarray(self.scales, dtype=np.float64)
            if scales.shape != (self.rows, n_groups):
                raise ValueError(f"scales shape {scales.shape} != ({self.rows}, {n_groups})")
            scales.setflags(write=False)
            object.__setattr__(self, "scales", scales)

    def __eq__(self, other):
        if not isinstance(other, QuantMatrix):
            return NotImplemented
        same = (
            self.rows == other.rows
            and self.cols == other.cols
            and self.bits == other.bits
            and np.array_equal(self.data, other.data)
            and self.group_size == other.group_size
        )
        if not same:
            return False
        if (self.scales is None) != (other.scales is None):
            return False
        return self.scales is None or np.array_equal(self.scales, other.scales)


@dataclass(frozen=True)
class AccumMatrix:
    """Row-major signed accumulator matrix (64-bit storage)."""

    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.int64)
        if data.shape != (self.rows, self.cols):
            raise ValueError(f"data shape {data.shape} != ({self.rows}, {self.cols})")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def __eq__(self, other):
        if not isinstance(other, AccumMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.data, other.data)
        )


def gen_random(rows: int, cols: int, bits: int, seed: int) -> QuantMatrix:
    """Deterministic i.i.d. uniform matrix over the full two's-complement range.

    Uses numpy's PCG64 seeded through SeedSequence, a fixed 64-bit generator
    with splittable seeding, so results are reproducible across platforms.
    """
    _check_bits(bits)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lo, hi = int_range(bits)
    data = rng.integers(lo, hi + 1, size=(rows, cols), dtype=np.int16)
    return QuantMatrix(rows, cols, bits, data)


def quantize_uniform(values, bits: int, group_size: int | None = None) -> QuantMatrix:
    """Symmetric per-group uniform quantizer: scale = max|v| / (2^(S-1) - 1)."""
    _check_bits(bits)
    vals = np.ascontiguousarray(values, dtype=np.float64)
    if vals.ndim != 2 or vals.size == 0:
        raise ValueError("expected a non-empty 2-D array of reals")
    rows, cols = vals.shape
    if group_size is None:
        group_size = cols
    if cols % group_size != 0:
        raise ValueError(f"group_size {group_size} must divide cols {cols}")
    n_groups = cols // group_size
    lo, hi = int_range(bits)
    grouped = vals.reshape(rows, n_groups, group_size)
    scales = np.abs(grouped).max(axis=2) / hi
    q = np.zeros_like(grouped)
    nz = scales > 0
    q[nz] = np.round(grouped[nz] / scales[nz, None])
    data = np.clip(q, lo, hi).astype(np.int16).reshape(rows, cols)
    return QuantMatrix(rows, cols, bits, data, group_size=group_size, scales=scales)


def reference_gemm(w: QuantMatrix, x: QuantMatrix) -> AccumMatrix:
    """Exact dense integer GEMM oracle: out = W @ X with no saturation.

    Raises OverflowError instead of wrapping if a result cannot be held in
    a 64-bit signed accumulator.
    """
    if w.cols != x.rows:
        raise ValueError(f"shape mismatch: ({w.rows}x{w.cols}) @ ({x.rows}x{x.cols})")
    # Conservative bound: K * max|w| * max|x| per output element.
    bound = w.cols * (1 << (w.bits - 1)) * (1 << (x.bits - 1))
    if bound >= (1 << 62):
        raise OverflowError("reference_gemm result may overflow 64-bit accumulators")
    out = w.data.astype(np.int64) @ x.data.astype(np.int64)
    return AccumMatrix(w.rows, x.cols, out)


def save_qtensor(m: QuantMatrix, path) -> None:
    """QTensor format: "QTNS", version, bits, flags, reserved, rows/cols u32le,
    int8 elements row-major, optional float64le scales."""
    flags = 1 if m.scales is not None else 0
    with open(path, "wb") as f:
        f.write(QTNS_MAGIC)
        f.write(bytes([QTNS_VERSION, m.bits, flags, 0]))
        f.write(struct.pack("<II", m.rows, m.cols))
        f.write(m.data.astype("<i1").tobytes())
        if m.scales is not None:
            f.write(struct.pack("<I", m.group_size))
            f.write(m.scales.astype("<f8").tobytes())


def load_qtensor(path) -> QuantMatrix:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 or raw[:4] != QTNS_MAGIC:
        raise BadMagicError("not a QTensor file (bad magic)")
    if len(raw) < 16:
        raise TruncatedError("QTensor header truncated")
    version, bits, flags, _ = raw[4:8]
    if version != QTNS_VERSION:
        raise QTensorError(f"unsupported QTensor version {version}")
    _check_bits(bits)
    rows, cols = struct.unpack_from("<II", raw, 8)
    off = 16
    n = rows * cols
    if len(raw) < off + n:
        raise TruncatedError("QTensor payload truncated")
    data = np.frombuffer(raw, dtype="<i1", count=n, offset=off).reshape(rows, cols)
    off += n
    lo, hi = int_range(bits)
    if data.min(initial=0) < lo or data.max(initial=0) > hi:
        raise OutOfRangeError(f"element outside declared {bits}-bit range")
    group_size = None
    scales = None
    if flags & 1:
        if len(raw) < off + 4:
            raise TruncatedError("QTensor scale header truncated")
        (group_size,) = struct.unpack_from("<I", raw, off)
        off += 4
        n_groups = -(-cols // group_size)
        need = rows * n_groups * 8
        if len(raw) < off + need:
            raise TruncatedError("QTensor scales truncated")
        scales = np.frombuffer(raw, dtype="<f8", count=rows * n_groups, offset=off)
        scales = scales.reshape(rows, n_groups)
    return QuantMatrix(rows, cols, bits, data.astype(np.int16), group_size=group_size, scales=scales)


def load_csv_matrix(path, bits: int) -> QuantMatrix:
    """Comma-separated integers, one row per line; capped at 64x64."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([int(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError("empty CSV matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged CSV matrix")
    if len(rows) > CSV_MAX_DIM or width > CSV_MAX_DIM:
        raise ValueError(f"CSV import capped at {CSV_MAX_DIM}x{CSV_MAX_DIM}")
    return QuantMatrix(len(rows), width, bits, np.array(rows, dtype=np.int16))
