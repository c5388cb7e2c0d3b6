"""Command-line front end: verification runs, DSE sweeps, pipeline
simulation, and scoreboard/forest inspection.

Every command is deterministic given its inputs and seed. Exit codes:
0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import __version__
from .bitslice import slice_matrix, tile_to_json, value_to_bits
from .engine import count_ops, plan, transitive_gemm
from .matrix import (QuantMatrix, gen_random, load_csv_matrix, load_qtensor,
                     reference_gemm)
from .perfmodel import (ArchConfig, dse_rows_to_csv, dse_sweep,
                        random_transrow_tile, simulate)
from .scoreboard import build_si, popcount


def _parse_gen(spec: str) -> QuantMatrix:
    try:
        rows, cols, bits, seed = (int(x) for x in spec.split(","))
    except ValueError:
        raise click.UsageError(f"--gen expects rows,cols,bits,seed; got {spec!r}")
    return gen_random(rows, cols, bits, seed)


def _load_operand(path: str | None, gen: str | None, bits: int, name: str) -> QuantMatrix:
    if (path is None) == (gen is None):
        raise click.UsageError(f"give exactly one of --{name} or --gen-{name}")
    if gen is not None:
        return _parse_gen(gen)
    if path.endswith(".csv"):
        return load_csv_matrix(path, bits)
    return load_qtensor(path)


def _write(text: str, out: str | None):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


@click.group()
@click.version_option(__version__)
def main():
    """Transitive-sparsity GEMM tools."""


@main.command()
@click.option("--w", "w_path", type=click.Path(exists=True), help="weight matrix file")
@click.option("--x", "x_path", type=click.Path(exists=True), help="input matrix file")
@click.option("--gen-w", help="generate weights: rows,cols,bits,seed")
@click.option("--gen-x", help="generate inputs: rows,cols,bits,seed")
@click.option("--bits", default=8, show_default=True, help="bit width for CSV operands")
@click.option("--T", "width", default=8, show_default=True, help="TransRow width")
@click.option("--tile-rows", default=256, show_default=True)
@click.option("--si", type=click.Choice(["static", "dynamic"]), default="dynamic",
              show_default=True)
@click.option("--threads", default=1, show_default=True)
def verify(w_path, x_path, gen_w, gen_x, bits, width, tile_rows, si, threads):
    """Run transitive GEMM against the dense reference; exit 1 on mismatch."""
    w = _load_operand(w_path, gen_w, bits, "w")
    x = _load_operand(x_path, gen_x, bits, "x")
    got, report = transitive_gemm(w, x, width=width, si_mode=si,
                                  tile_rows=tile_rows, threads=threads)
    want = reference_gemm(w, x)
    max_diff = int(np.abs(got.data - want.data).max())
    ops = report.ops
    click.echo(f"exact: {'true' if max_diff == 0 else 'false'}")
    click.echo(f"max_diff: {max_diff}")
    click.echo(f"ops: transitive={ops.transitive} bitsparse={ops.bitsparse} "
               f"dense={ops.dense}")
    click.echo(f"density: {ops.density:.6f}")
    click.echo(f"ppe_overflows: {report.diagnostics.ppe_overflows} "
               f"ape_overflows: {report.diagnostics.ape_overflows}")
    if max_diff != 0:
        sys.exit(1)


@main.command()
@click.option("--T", "widths", multiple=True, type=int, default=(8,),
              show_default=True, help="TransRow widths to sweep")
@click.option("--rows", "rows_list", multiple=True, type=int,
              default=(16, 32, 64, 128, 256, 512, 1024), show_default=True)
@click.option("--trials", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--si", type=click.Choice(["static", "dynamic"]), default="dynamic",
              show_default=True)
@click.option("--out", type=click.Path(), help="CSV output path (default stdout)")
def dse(widths, rows_list, trials, seed, si, out):
    """Design-space sweep over random TransRows; emits CSV."""
    rows = dse_sweep(widths, rows_list, trials, seed, si_mode=si)
    _write(dse_rows_to_csv(rows), out)


@main.command("simulate")
@click.option("--w", "w_path", type=click.Path(exists=True))
@click.option("--x", "x_path", type=click.Path(exists=True))
@click.option("--gen-w", help="generate weights: rows,cols,bits,seed")
@click.option("--gen-x", help="generate inputs: rows,cols,bits,seed")
@click.option("--bits", default=8, show_default=True)
@click.option("--T", "width", default=8, show_default=True)
@click.option("--tile-rows", default=256, show_default=True)
@click.option("--si", type=click.Choice(["static", "dynamic"]), default="dynamic",
              show_default=True)
@click.option("--units", default=6, show_default=True)
@click.option("--out", type=click.Path(), help="JSON output path (default stdout)")
def simulate_cmd(w_path, x_path, gen_w, gen_x, bits, width, tile_rows, si, units, out):
    """Cycle-level simulation of W @ X; emits a JSON performance report."""
    w = _load_operand(w_path, gen_w, bits, "w")
    x = _load_operand(x_path, gen_x, bits, "x")
    cfg = ArchConfig(width=width, tile_rows=tile_rows, si_mode=si, num_units=units)
    report = simulate(w, x, cfg)
    _write(report.to_json() + "\n", out)


@main.command()
@click.option("--values", help="comma-separated TransRow values, e.g. 2,3,11,15")
@click.option("--gen", "gen_spec", help="generate a weight matrix: rows,cols,bits,seed")
@click.option("--T", "width", default=4, show_default=True)
@click.option("--tile-rows", default=256, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "dot"]), default="json",
              show_default=True)
@click.option("--out", type=click.Path())
def inspect(values, gen_spec, width, tile_rows, fmt, out):
    """Dump the balanced forest (node/count/distance/lane/parent) for one tile."""
    if (values is None) == (gen_spec is None):
        raise click.UsageError("give exactly one of --values or --gen")
    if values is not None:
        vals = [int(v) for v in values.split(",") if v.strip()]
        if any(v < 0 or v >= (1 << width) for v in vals):
            raise click.UsageError(f"values must be in [0, 2^{width})")
    else:
        w = _parse_gen(gen_spec)
        tiles = slice_matrix(w, width, rows_per_block=max(1, tile_rows // w.bits))
        vals = tiles[0].values()
    si = build_si(vals, width, "dynamic")
    nodes = sorted(si.executed | si.outliers, key=lambda v: (popcount(v), v))
    if fmt == "json":
        payload = [{
            "node": value_to_bits(v, width),
            "value": v,
            "count": si.counts[v],
            "distance": None if si.distance[v] == float("inf") else si.distance[v],
            "lane": si.lane[v],
            "parent": si.prefix[v],
            "outlier": v in si.outliers,
        } for v in nodes]
        _write(json.dumps(payload, indent=2) + "\n", out)
    else:
        lines = ["digraph forest {"]
        for v in nodes:
            label = (f"{value_to_bits(v, width)}\\ncount={si.counts[v]} "
                     f"lane={si.lane[v]}")
            lines.append(f'  n{v} [label="{label}"];')
        lines.append('  n0 [label="0"];')
        for v in nodes:
            if si.prefix[v] is not None:
                lines.append(f"  n{si.prefix[v]} -> n{v};")
        lines.append("}")
        _write("\n".join(lines) + "\n", out)


if __name__ == "__main__":
    main()
