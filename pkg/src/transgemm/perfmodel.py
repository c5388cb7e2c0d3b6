"""Cycle-level model of the three-stage pipeline (scoreboarding -> prefix
adders -> output accumulators) over the tiling loop, plus aggregate
statistics for design-space exploration.

The formulas below are declared as THE model — reported cycle numbers mean
exactly these equations, with every constant surfaced on ArchConfig:

  sb  = sort_stages(n) + ceil(min(n, 2^T) / ways) + sweep_cycles
  ppe = max over lanes of pipeline slots (PR/TR: popcount of the hop,
        FR: one slot, outliers: popcount of the value), times column passes
  ape = max over lanes of consumer accumulations, times column passes

sort_stages pads n to a power of two 2^k and charges k*(k+1)/2 bitonic
stages; sweep_cycles defaults to 2*(T+1), one forward and one backward
level sweep. Static SI is prefetched, so its sb is 0. ppe >= ape always;
scoreboarding hides under the pipeline once the input block spans a few
column passes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bitslice import TransRowRec, TransRowTile
from .engine import (FR, PR, TR, ZR, ExecutionPlan, OpCounts, count_ops,
                     _iter_tile_plans, plan)
from .matrix import QuantMatrix
from .scoreboard import build_si, popcount

DSE_CSV_HEADER = ("T,rows,trial,density,bit_density,unique_nodes,"
                  "frac_dist_gt1,frac_dist_ge3,zr,tr,fr,pr,si_mode")


@dataclass(frozen=True)
class ArchConfig:
    """One accelerator unit; defaults mirror the evaluated configuration
    (T=8 lanes, 256-row tiles, 8x32 adder arrays, 6 units)."""

    width: int = 8
    tile_rows: int = 256
    ppe_cols: int = 32          # adders per lane; one column pass covers this many
    scoreboard_ways: int | None = None   # None -> width
    num_units: int = 6
    si_mode: str = "dynamic"
    sweep_cycles: int | None = None      # None -> 2 * (width + 1)
    balance: str = "count"

    @property
    def ways(self) -> int:
        return self.scoreboard_ways or self.width

    @property
    def sweeps(self) -> int:
        return self.sweep_cycles if self.sweep_cycles is not None else 2 * (self.width + 1)


@dataclass
class StageCycles:
    sb: int
    ppe: int
    ape: int

    @property
    def bottleneck(self) -> int:
        return max(self.sb, self.ppe, self.ape)

    @property
    def fill(self) -> int:
        return self.sb + self.ppe + self.ape - self.bottleneck


def sort_stages(n: int) -> int:
    """Bitonic sorter stage count for n items padded to a power of two."""
    if n <= 1:
        return 0
    k = (n - 1).bit_length()
    return k * (k + 1) // 2


def _ppe_slots(step) -> int:
    if step.op_class == FR:
        return 1
    return popcount(step.transparsity)


def stage_cycles(p: ExecutionPlan, cfg: ArchConfig, m_cols: int) -> StageCycles:
    """Per-tile stage cycles under the declared model."""
    n = p.n_rows
    if n == 0:
        return StageCycles(0, 0, 0)
    passes = -(-m_cols // cfg.ppe_cols)
    if p.si_mode == "dynamic":
        u = min(n, 1 << p.width)
        sb = sort_stages(n) + -(-u // cfg.ways) + cfg.sweeps
    else:
        sb = 0
    ppe_lane = [0] * p.width
    ape_lane = [0] * p.width
    for i, lane in enumerate(p.lanes):
        for step in lane:
            ppe_lane[i] += _ppe_slots(step)
            ape_lane[i] += len(step.consumers)
    # Outliers run at the end, dispatched round-robin across lanes.
    for j, step in enumerate(p.outliers):
        ppe_lane[j % p.width] += _ppe_slots(step)
        ape_lane[j % p.width] += len(step.consumers)
    return StageCycles(sb, max(ppe_lane) * passes, max(ape_lane) * passes)


@dataclass
class PerfReport:
    """Aggregate simulation output: cycles, op counts, density, histograms."""

    total_cycles: int
    tiles: int
    ops: OpCounts
    patterns: dict[str, int]
    distance_hist: dict[str, int]
    si_misses: int
    mean_unique_nodes: float
    per_tile: list[dict]
    si_mode: str

    @property
    def density(self) -> float:
        return self.ops.density

    def to_json(self) -> str:
        return json.dumps({
            "total_cycles": self.total_cycles,
            "tiles": self.tiles,
            "si_mode": self.si_mode,
            "transitive_ops": self.ops.transitive,
            "bitsparse_ops": self.ops.bitsparse,
            "dense_ops": self.ops.dense,
            "density": self.ops.density,
            "bit_density": self.ops.bit_density,
            "patterns": self.patterns,
            "distance_hist": self.distance_hist,
            "si_misses": self.si_misses,
            "mean_unique_nodes": self.mean_unique_nodes,
            "per_tile": self.per_tile,
        }, indent=2)


def _distance_key(d) -> str:
    return ">=4" if not math.isfinite(d) or d >= 4 else str(int(d))


def _plan_stats(tile: TransRowTile, p: ExecutionPlan):
    """Row-weighted distance histogram and unique-value count for one tile."""
    hist: dict[str, int] = {}
    counts: dict[int, int] = {}
    for rec in tile.rows:
        counts[rec.value] = counts.get(rec.value, 0) + 1
    for v, d in p.row_distance.items():
        key = _distance_key(d)
        hist[key] = hist.get(key, 0) + counts[v]
    return hist, len(counts)


def simulate(w: QuantMatrix, x: QuantMatrix, cfg: ArchConfig) -> PerfReport:
    """Tiled three-stage pipeline with double buffering.

    Per unit: total = first tile's fill + sum over its tiles of the
    bottleneck stage; tiles are dealt round-robin across units and the
    slowest unit sets the total.
    """
    if w.cols != x.rows:
        raise ValueError(f"shape mismatch: ({w.rows}x{w.cols}) @ ({x.rows}x{x.cols})")
    ops = OpCounts(0, 0, 0)
    patterns = {ZR: 0, TR: 0, FR: 0, PR: 0}
    dist_hist: dict[str, int] = {}
    misses = 0
    per_tile = []
    unit_cycles = [0] * cfg.num_units
    unit_fill = [None] * cfg.num_units
    uniques = []
    i = 0
    for tile, p in _iter_tile_plans(w, cfg.width, cfg.si_mode, cfg.tile_rows,
                                    cfg.balance):
        sc = stage_cycles(p, cfg, x.cols)
        unit = i % cfg.num_units
        unit_cycles[unit] += sc.bottleneck
        if unit_fill[unit] is None:
            unit_fill[unit] = sc.fill
        ops = ops + count_ops(p)
        for k, v in p.pattern_counts().items():
            patterns[k] += v
        h, uniq = _plan_stats(tile, p)
        for k, v in h.items():
            dist_hist[k] = dist_hist.get(k, 0) + v
        uniques.append(uniq)
        misses += p.si_misses
        per_tile.append({
            "n_offset": tile.n_offset, "k_offset": tile.k_offset,
            "scoreboard_cycles": sc.sb, "ppe_cycles": sc.ppe,
            "ape_cycles": sc.ape,
        })
        i += 1
    total = max((f or 0) + c for f, c in zip(unit_fill, unit_cycles)) if i else 0
    return PerfReport(
        total_cycles=total, tiles=i, ops=ops, patterns=patterns,
        distance_hist=dict(sorted(dist_hist.items())), si_misses=misses,
        mean_unique_nodes=float(np.mean(uniques)) if uniques else 0.0,
        per_tile=per_tile, si_mode=cfg.si_mode,
    )


def random_transrow_tile(width: int, rows: int, rng) -> TransRowTile:
    """Uniform random binary TransRows, as a 1-bit-level tile."""
    values = rng.integers(0, 1 << width, size=rows)
    recs = tuple(TransRowRec(int(v), i, 0) for i, v in enumerate(values))
    return TransRowTile(width, 1, rows, 0, 0, recs)


def tile_dse_stats(tile: TransRowTile, si_mode: str = "dynamic",
                   balance: str = "count") -> dict:
    """Density, pattern and distance statistics of one tile under its own SI."""
    si = build_si(tile.values(), tile.width, si_mode, balance)
    p = plan(tile, si, balance)
    ops = count_ops(p)
    hist, uniq = _plan_stats(tile, p)
    executed_rows = p.n_rows - p.zr_rows
    gt1 = sum(v for k, v in hist.items() if k == ">=4" or int(k.lstrip(">=")) > 1)
    ge3 = sum(v for k, v in hist.items() if k == ">=4" or int(k.lstrip(">=")) >= 3)
    pat = p.pattern_counts()
    return {
        "density": ops.density,
        "bit_density": ops.bit_density,
        "unique_nodes": uniq,
        "frac_dist_gt1": gt1 / executed_rows if executed_rows else 0.0,
        "frac_dist_ge3": ge3 / executed_rows if executed_rows else 0.0,
        "zr": pat[ZR], "tr": pat[TR], "fr": pat[FR], "pr": pat[PR],
        "si_mode": si_mode,
    }


def dse_sweep(widths, rows_list, trials: int, seed: int,
              si_mode: str = "dynamic") -> list[dict]:
    """Sweep (T, rows, trial) over uniform random TransRows; deterministic
    for a fixed seed (every trial derives its own SeedSequence)."""
    out = []
    for t in widths:
        for rows in rows_list:
            for trial in range(trials):
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence((seed, t, rows, trial))))
                tile = random_transrow_tile(t, rows, rng)
                stats = tile_dse_stats(tile, si_mode)
                out.append({"T": t, "rows": rows, "trial": trial, **stats})
    return out


def dse_rows_to_csv(rows: list[dict]) -> str:
    lines = [DSE_CSV_HEADER]
    cols = DSE_CSV_HEADER.split(",")
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)
