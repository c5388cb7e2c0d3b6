"""Planning and exact execution of transitive-reuse GEMM tiles.

plan() classifies each tile row: zero rows are skipped (ZR), duplicate
values reuse the first result (FR), materialized intermediates transition
partials only (TR), and everything else adds its prefix result plus the
XOR-difference inputs (PR). execute() replays the plan functionally and is
bit-exact against the dense reference GEMM.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bitslice import TransRowRec, TransRowTile, bit_level_weight, slice_matrix
from .matrix import AccumMatrix, QuantMatrix
from .scoreboard import (DISTANCE_CAP, ScoreboardInfo, build_dynamic_si,
                         build_static_si, hamming_node_order, popcount)

PPE_BITS = 12  # hardware partial-sum adder width, monitored only
APE_BITS = 24  # hardware accumulator width, monitored only

ZR, TR, FR, PR = "ZR", "TR", "FR", "PR"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    node: int
    prefix: int
    transparsity: int
    op_class: str
    consumers: tuple[TransRowRec, ...]


@dataclass
class ExecutionPlan:
    """Lane-partitioned ordered steps plus an outlier tail run from scratch."""

    width: int
    bits: int
    n_rows: int
    zr_rows: int
    bitsparse_ops: int
    lanes: list[list[Step]]
    outliers: list[Step]
    si_mode: str
    si_misses: int
    n_offset: int
    k_offset: int
    # effective distance per present value (dynamic: graph distance,
    # static: popcount of the resolved hop), row-weighted in histograms
    row_distance: dict[int, float] = field(default_factory=dict)

    def all_steps(self):
        for lane in self.lanes:
            yield from lane
        yield from self.outliers

    def pattern_counts(self) -> dict[str, int]:
        c = {ZR: self.zr_rows, TR: 0, FR: 0, PR: 0}
        for s in self.all_steps():
            if s.op_class in (TR, FR, PR):
                c[s.op_class] += 1
        return c


@dataclass
class OpCounts:
    transitive: int
    bitsparse: int
    dense: int

    @property
    def density(self) -> float:
        return self.transitive / self.dense if self.dense else 0.0

    @property
    def bit_density(self) -> float:
        return self.bitsparse / self.dense if self.dense else 0.0

    def __add__(self, other):
        return OpCounts(self.transitive + other.transitive,
                        self.bitsparse + other.bitsparse,
                        self.dense + other.dense)


@dataclass
class ExecDiagnostics:
    """Hardware-width monitors: counts of produced partials / output rows
    that left the 12-bit PPE / 24-bit APE signed ranges (warnings, never
    failures)."""

    ppe_overflows: int = 0
    ape_overflows: int = 0

    def __add__(self, other):
        return ExecDiagnostics(self.ppe_overflows + other.ppe_overflows,
                               self.ape_overflows + other.ape_overflows)


def _group_rows(tile: TransRowTile):
    """Distinct nonzero values -> recs in first-seen order, plus ZR count."""
    groups: OrderedDict[int, list[TransRowRec]] = OrderedDict()
    zr = 0
    for rec in tile.rows:
        if rec.value == 0:
            zr += 1
        else:
            groups.setdefault(rec.value, []).append(rec)
    return groups, zr


def _hamming_key(v):
    return (popcount(v), v)


def plan(tile: TransRowTile, si: ScoreboardInfo, balance: str = "count") -> ExecutionPlan:
    """Turn one tile plus its SI into an ordered, lane-partitioned plan."""
    if si.width != tile.width:
        raise PlanError(f"SI width {si.width} != tile width {tile.width}")
    groups, zr = _group_rows(tile)
    bitsparse = sum(popcount(r.value) for r in tile.rows)
    lanes: list[list[Step]] = [[] for _ in range(tile.width)]
    outliers: list[Step] = []
    row_distance: dict[int, float] = {}
    si_misses = 0

    if si.mode == "dynamic":
        # SI was built from this exact tile: its forest is the plan skeleton.
        stray = set(groups) - si.executed - si.outliers
        if stray:
            raise PlanError(f"dynamic SI does not cover tile values {sorted(stray)}")
        for v in sorted(si.executed, key=_hamming_key):
            p = si.prefix[v]
            recs = groups.get(v)
            cls = PR if recs else TR
            first = (recs[0],) if recs else ()
            lane = lanes[si.lane[v]]
            lane.append(Step(v, p, v ^ p, cls, first))
            if recs:
                row_distance[v] = si.distance[v]
                for rec in recs[1:]:
                    lane.append(Step(v, v, 0, FR, (rec,)))
        for v in sorted(si.outliers & set(groups), key=_hamming_key):
            recs = groups[v]
            row_distance[v] = si.distance[v]
            outliers.append(Step(v, 0, v, PR, (recs[0],)))
            for rec in recs[1:]:
                outliers.append(Step(v, v, 0, FR, (rec,)))
    else:
        # Static SI: resolve each present value's prefix chain against this
        # tile; a chain node absent from the tile is an SI miss and we keep
        # walking until an executed-in-tile ancestor (or node 0).
        def usable(p):
            return p in groups and si.prefix[p] is not None

        resolved: dict[int, int] = {}
        outlier_vals = []
        for v in groups:
            if si.prefix[v] is None:
                outlier_vals.append(v)
                continue
            p = si.prefix[v]
            while p != 0 and not usable(p):
                si_misses += 1
                p = si.prefix[p]
                if p is None:
                    p = 0
            resolved[v] = p
            row_distance[v] = popcount(v ^ p)
        # Balanced per-tile lane assignment over the resolved forest.
        lane_of: dict[int, int] = {}
        workloads = [0] * tile.width
        for v in sorted(resolved, key=_hamming_key):
            p = resolved[v]
            if p == 0:
                lane_id = min(range(tile.width), key=lambda i: (workloads[i], i))
            else:
                lane_id = lane_of[p]
            lane_of[v] = lane_id
            workloads[lane_id] += len(groups[v]) if balance == "count" else 1
            recs = groups[v]
            lanes[lane_id].append(Step(v, p, v ^ p, PR, (recs[0],)))
            for rec in recs[1:]:
                lanes[lane_id].append(Step(v, v, 0, FR, (rec,)))
        for v in sorted(outlier_vals, key=_hamming_key):
            recs = groups[v]
            row_distance[v] = math.inf
            outliers.append(Step(v, 0, v, PR, (recs[0],)))
            for rec in recs[1:]:
                outliers.append(Step(v, v, 0, FR, (rec,)))

    return ExecutionPlan(
        width=tile.width, bits=tile.bits, n_rows=len(tile.rows), zr_rows=zr,
        bitsparse_ops=bitsparse, lanes=lanes, outliers=outliers,
        si_mode=si.mode, si_misses=si_misses,
        n_offset=tile.n_offset, k_offset=tile.k_offset,
        row_distance=row_distance,
    )


def count_ops(p: ExecutionPlan) -> OpCounts:
    """Addition-count model: executed nodes cost popcount(transparsity),
    FR consumers cost one accumulate, zero rows cost nothing, outliers cost
    popcount(value)."""
    transitive = 0
    for s in p.all_steps():
        if s.op_class == FR:
            transitive += 1
        else:
            transitive += popcount(s.transparsity)
    return OpCounts(transitive, p.bitsparse_ops, p.n_rows * p.width)


def execute(p: ExecutionPlan, x_block: np.ndarray, out: np.ndarray) -> ExecDiagnostics:
    """Run the plan over one input block and accumulate into `out`.

    `x_block` is (width x M); bit b of a TransRow selects x_block[b].
    `out` is the (n x M) slice for this tile's weight rows; consumers add
    partial * 2^bit_level (negated at the sign level). Raises on any read
    of an unproduced prefix or a cross-lane prefix read.

    Every partial a chain builds is itself the node sum of a produced node,
    so after validating the plan's dataflow step by step, all partials are
    evaluated in one batch (prefix sum + XOR-difference bits telescopes to
    the plain bit sum) and the width monitors check each produced partial
    and each touched output row against the PPE/APE signed ranges.
    """
    if x_block.shape[0] != p.width:
        raise ValueError(f"x block has {x_block.shape[0]} rows, expected {p.width}")
    x = x_block.astype(np.int64, copy=False)
    # dataflow validation in plan order: production, prefix reads, lanes
    produced_lane: dict[int, int | None] = {0: None}
    produced: list[int] = []
    consumers: list[tuple[int, int, int]] = []  # (node, out row, weight)

    def check(step, lane_id):
        if step.op_class == FR:
            if step.node not in produced_lane:
                raise PlanError(f"FR of unproduced node {step.node}")
        else:
            if step.prefix not in produced_lane:
                raise PlanError(f"unproduced prefix {step.prefix} for node {step.node}")
            if step.prefix != 0 and produced_lane[step.prefix] != lane_id:
                raise PlanError(f"cross-lane prefix read: node {step.node}")
            produced_lane[step.node] = lane_id
            produced.append(step.node)
        for rec in step.consumers:
            consumers.append((step.node, rec.weight_row,
                              bit_level_weight(rec.bit_level, p.bits)))

    for lane_id, lane in enumerate(p.lanes):
        for step in lane:
            check(step, lane_id)
    for step in p.outliers:
        check(step, None)

    diag = ExecDiagnostics()
    if not produced:
        return diag
    nodes = np.array(produced, dtype=np.int64)
    node_bits = (nodes[:, None] >> np.arange(p.width, dtype=np.int64)) & 1
    partials = node_bits @ x
    ppe_hi = (1 << (PPE_BITS - 1)) - 1
    diag.ppe_overflows = int(((partials.max(axis=1) > ppe_hi)
                              | (partials.min(axis=1) < -ppe_hi - 1)).sum())
    if consumers:
        index = {v: i for i, v in enumerate(produced)}
        node_idx = np.array([index[c[0]] for c in consumers])
        row_idx = np.array([c[1] for c in consumers])
        wgt = np.array([c[2] for c in consumers], dtype=np.int64)
        np.add.at(out, row_idx, partials[node_idx] * wgt[:, None])
        rows = np.unique(row_idx)
        ape_hi = (1 << (APE_BITS - 1)) - 1
        diag.ape_overflows = int(((out[rows].max(axis=1) > ape_hi)
                                  | (out[rows].min(axis=1) < -ape_hi - 1)).sum())
    return diag


@dataclass
class GemmReport:
    ops: OpCounts
    diagnostics: ExecDiagnostics
    si_misses: int
    tiles: int
    patterns: dict[str, int]


def _iter_tile_plans(w: QuantMatrix, width: int, si_mode: str,
                     tile_rows: int, balance: str = "count"):
    """Yield (tile, plan) pairs for every sub-tile of W."""
    n_block = max(1, tile_rows // w.bits)
    tiles = slice_matrix(w, width, rows_per_block=n_block)
    static_si = build_static_si(tiles, width, balance) if si_mode == "static" else None
    for tile in tiles:
        si = static_si if static_si is not None else build_dynamic_si(tile, balance)
        yield tile, plan(tile, si, balance)


def transitive_gemm(w: QuantMatrix, x: QuantMatrix, width: int = 8,
                    si_mode: str = "dynamic", tile_rows: int = 256,
                    threads: int = 1,
                    balance: str = "count") -> tuple[AccumMatrix, GemmReport]:
    """Full tiled transitive GEMM; bit-exact equal to reference_gemm(w, x)."""
    if w.cols != x.rows:
        raise ValueError(f"shape mismatch: ({w.rows}x{w.cols}) @ ({x.rows}x{x.cols})")
    if si_mode not in ("static", "dynamic"):
        raise ValueError("si_mode must be 'static' or 'dynamic'")
    k_pad = -(-w.cols // width) * width
    xp = np.zeros((k_pad, x.cols), dtype=np.int64)
    xp[:x.rows] = x.data
    out = np.zeros((w.rows, x.cols), dtype=np.int64)
    ops = OpCounts(0, 0, 0)
    diag = ExecDiagnostics()
    misses = 0
    n_tiles = 0
    patterns = {ZR: 0, TR: 0, FR: 0, PR: 0}

    work = list(_iter_tile_plans(w, width, si_mode, tile_rows, balance))

    def run_tile(item):
        tile, p = item
        block = np.zeros((tile.n_rows, x.cols), dtype=np.int64)
        d = execute(p, xp[tile.k_offset:tile.k_offset + width], block)
        return tile, p, block, d

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_tile, work))
    else:
        results = [run_tile(item) for item in work]

    for tile, p, block, d in results:
        out[tile.n_offset:tile.n_offset + tile.n_rows] += block
        ops = ops + count_ops(p)
        diag = diag + d
        misses += p.si_misses
        n_tiles += 1
        for k, v in p.pattern_counts().items():
            patterns[k] += v

    return (AccumMatrix(w.rows, x.cols, out),
            GemmReport(ops, diag, misses, n_tiles, patterns))
