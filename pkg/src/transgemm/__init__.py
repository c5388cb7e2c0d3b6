"""Transitive-sparsity integer GEMM: bit-sliced TransRows, scoreboard-built
execution orders, exact result-reuse execution, and a cycle-level model."""

__version__ = "0.1.0"

from .bitslice import TransRowRec, TransRowTile, slice_matrix, unslice
from .engine import (ExecutionPlan, OpCounts, count_ops, execute, plan,
                     transitive_gemm)
from .matrix import (AccumMatrix, QuantMatrix, gen_random, load_qtensor,
                     quantize_uniform, reference_gemm, save_qtensor)
from .perfmodel import ArchConfig, PerfReport, dse_sweep, simulate, stage_cycles
from .scoreboard import (HasseForest, Scoreboard, ScoreboardInfo,
                         build_dynamic_si, build_si, build_static_si,
                         deserialize_si, hamming_sort, serialize_si,
                         translate_prefix, translate_suffix)

__all__ = [
    "AccumMatrix", "ArchConfig", "ExecutionPlan", "HasseForest", "OpCounts",
    "PerfReport", "QuantMatrix", "Scoreboard", "ScoreboardInfo",
    "TransRowRec", "TransRowTile", "build_dynamic_si", "build_si",
    "build_static_si", "count_ops", "deserialize_si", "dse_sweep", "execute",
    "gen_random", "hamming_sort", "load_qtensor", "plan", "quantize_uniform",
    "reference_gemm", "save_qtensor", "serialize_si", "simulate",
    "slice_matrix", "stage_cycles", "transitive_gemm", "translate_prefix",
    "translate_suffix", "unslice",
]
