"""Execution-order construction over the subset lattice of TransRow values.

Nodes are the 2^T possible TransRow values; edges connect values one bit
apart (a Hasse graph over the bitmask partial order, level = popcount).
A forward pass assigns each node the distance to its nearest computed
ancestor, a backward pass materializes absent intermediates for nodes
whose best prefix is more than one level away, and a balancing step links
everything into at most T independent trees, one per execution lane.

The distilled node->prefix table is the Scoreboard Information (SI); it
serializes to exactly 2 * T * 2^T bits plus an 8-byte header.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

DISTANCE_CAP = 4
COUNT_MAX = 255  # 8-bit count field; counts saturate here

SI_MAGIC = b"TASI"
_SI_MODES = {"static": 0, "dynamic": 1}
_SI_MODES_REV = {v: k for k, v in _SI_MODES.items()}


def popcount(v: int) -> int:
    return int(v).bit_count()


@lru_cache(maxsize=None)
def hamming_node_order(width: int) -> tuple[int, ...]:
    """All node values level-major: popcount ascending, value ascending within."""
    return tuple(sorted(range(1 << width), key=lambda v: (popcount(v), v)))


def hamming_sort(recs):
    """Stable sort by number of set bits; ties keep input order."""
    return sorted(recs, key=lambda r: popcount(r.value))


def bitmap_bit_positions(bitmap: int, width: int) -> list[int]:
    """Set bit positions of a bitmap, first-to-last in MSB-first display
    order (i.e. highest position first)."""
    return [b for b in range(width - 1, -1, -1) if bitmap >> b & 1]


def translate_prefix(node: int, bitmap: int, width: int) -> list[int]:
    """Each bitmap bit yields the node with that bit flipped 1 -> 0."""
    if bitmap & ~node:
        raise ValueError("prefix bitmap bit not set in node")
    return [node & ~(1 << b) for b in bitmap_bit_positions(bitmap, width)]


def translate_suffix(node: int, bitmap: int, width: int) -> list[int]:
    """Each bitmap bit yields the node with that bit flipped 0 -> 1."""
    if bitmap & node:
        raise ValueError("suffix bitmap bit already set in node")
    return [node | (1 << b) for b in bitmap_bit_positions(bitmap, width)]


def record(values, width: int) -> list[int]:
    """Multiplicity of each node value, saturating at the 8-bit count field."""
    counts = [0] * (1 << width)
    for v in values:
        if counts[v] < COUNT_MAX:
            counts[v] += 1
    return counts


@dataclass
class ScoreboardEntry:
    """Per-node record: count, distance to nearest computed ancestor, prefix
    bitmaps indexed by distance-1, suffix bitmap, and lane id."""

    node: int
    count: int = 0
    distance: float = math.inf
    prefix_bitmaps: list[int] = field(default_factory=lambda: [0] * DISTANCE_CAP)
    suffix_bitmap: int = 0
    lane: int | None = None


@dataclass(frozen=True)
class HasseForest:
    """Per-lane trees: one parent per node, parent one level below its child."""

    width: int
    parent: dict[int, int]
    lane: dict[int, int]
    roots: tuple[int, ...]
    workloads: tuple[int, ...]


class Scoreboard:
    """Builds the execution order for one set of TransRow values."""

    def __init__(self, width: int):
        if width < 2:
            raise ValueError("width must be >= 2")
        self.width = width
        self.entries = [ScoreboardEntry(v) for v in range(1 << width)]
        self.entries[0].distance = 0

    def record(self, values) -> None:
        counts = record(values, self.width)
        for e, c in zip(self.entries, counts):
            e.count = c

    def forward_pass(self) -> None:
        """Level-by-level propagation of prefix candidates and distances.

        A node with count > 0 (or node 0) resets its outgoing distance to 0;
        propagation stops once a node's own distance reaches the cap.
        """
        width = self.width
        for idx in hamming_node_order(width):
            e = self.entries[idx]
            dis = e.distance
            if idx != 0 and dis >= DISTANCE_CAP:
                continue
            if idx == 0 or e.count > 0:
                dis = 0
            d = int(dis) + 1
            for b in range(width):
                if not idx >> b & 1:
                    suf = self.entries[idx | (1 << b)]
                    suf.prefix_bitmaps[d - 1] |= 1 << b
                    if d < suf.distance:
                        suf.distance = d

    def backward_pass(self) -> None:
        """Reverse-order pass: materialize one intermediate chain for every
        present node whose distance is in (1, cap), then keep only each
        node's smallest-distance prefix bitmap."""
        for idx in reversed(hamming_node_order(self.width)):
            e = self.entries[idx]
            if e.count > 0 and 1 < e.distance < DISTANCE_CAP:
                bitmap = e.prefix_bitmaps[int(e.distance) - 1]
                parent = translate_prefix(idx, bitmap, self.width)[0]
                pe = self.entries[parent]
                pe.suffix_bitmap |= idx ^ parent
                pe.count = max(pe.count, 1)
        for e in self.entries:
            if math.isfinite(e.distance) and e.node != 0:
                keep = int(e.distance) - 1
                for d in range(DISTANCE_CAP):
                    if d != keep:
                        e.prefix_bitmaps[d] = 0

    def executed_nodes(self) -> list[int]:
        """Non-outlier nodes that will run, in Hamming order."""
        return [v for v in hamming_node_order(self.width)
                if v != 0 and self.entries[v].count > 0
                and self.entries[v].distance < DISTANCE_CAP]

    def outlier_nodes(self) -> list[int]:
        """Present nodes unreachable within the distance cap; run from scratch."""
        return [v for v in hamming_node_order(self.width)
                if v != 0 and self.entries[v].count > 0
                and self.entries[v].distance >= DISTANCE_CAP]

    def build_forest(self, balance: str = "count") -> HasseForest:
        """Assign one parent and one lane per executed node.

        Level-1 nodes are roots, given lanes in ascending node order. A child
        picks, among its valid smallest-distance parents, the one whose lane
        carries the least workload (ties toward the lowest lane id) and joins
        that lane. Workload is the saturated count per node by default;
        balance="nodes" counts one per node instead.
        """
        if balance not in ("count", "nodes"):
            raise ValueError("balance must be 'count' or 'nodes'")
        width = self.width
        parent: dict[int, int] = {}
        lane: dict[int, int] = {}
        workloads = [0] * width
        roots = []
        next_root_lane = 0
        for v in self.executed_nodes():
            e = self.entries[v]
            if popcount(v) == 1:
                parent[v] = 0
                lane[v] = next_root_lane
                next_root_lane += 1
                roots.append(v)
            else:
                bitmap = e.prefix_bitmaps[int(e.distance) - 1]
                candidates = [p for p in translate_prefix(v, bitmap, width)
                              if p in parent]
                if not candidates:
                    raise RuntimeError(f"node {v} has no executed parent (plan bug)")
                choice = min(candidates, key=lambda p: (workloads[lane[p]], lane[p]))
                parent[v] = choice
                lane[v] = lane[choice]
            workloads[lane[v]] += e.count if balance == "count" else 1
            e.lane = lane[v]
        return HasseForest(width, parent, lane, tuple(roots), tuple(workloads))


@dataclass(frozen=True)
class ScoreboardInfo:
    """Distilled TransRow -> prefix table plus metadata for planning.

    `prefix[v]` is the chosen parent value, or None for absent/outlier/zero
    nodes. `executed` holds every non-outlier node in the forest (including
    materialized intermediates); `outliers` the nodes run from scratch.
    """

    width: int
    mode: str
    prefix: tuple
    distance: tuple
    counts: tuple
    lane: tuple
    executed: frozenset
    outliers: frozenset

    def size_bits(self) -> int:
        return 2 * self.width * (1 << self.width)


def build_si(values, width: int, mode: str = "dynamic",
             balance: str = "count") -> ScoreboardInfo:
    """Full pipeline: record -> forward -> backward -> balanced forest."""
    if mode not in _SI_MODES:
        raise ValueError("mode must be 'static' or 'dynamic'")
    sb = Scoreboard(width)
    sb.record(values)
    sb.forward_pass()
    sb.backward_pass()
    forest = sb.build_forest(balance)
    n = 1 << width
    prefix = [None] * n
    lane = [None] * n
    for v, p in forest.parent.items():
        prefix[v] = p
        lane[v] = forest.lane[v]
    distance = tuple(e.distance for e in sb.entries)
    counts = tuple(e.count for e in sb.entries)
    return ScoreboardInfo(
        width=width,
        mode=mode,
        prefix=tuple(prefix),
        distance=distance,
        counts=counts,
        lane=tuple(lane),
        executed=frozenset(forest.parent),
        outliers=frozenset(sb.outlier_nodes()),
    )


def build_dynamic_si(tile, balance: str = "count") -> ScoreboardInfo:
    """Private SI for one tile, built from exactly that tile's rows."""
    return build_si(tile.values(), tile.width, "dynamic", balance)


def build_static_si(tiles, width: int, balance: str = "count") -> ScoreboardInfo:
    """One SI shared by every tile: counts aggregated over the whole tensor."""
    values = [v for t in tiles for v in t.values()]
    return build_si(values, width, "static", balance)


def serialize_si(si: ScoreboardInfo) -> bytes:
    """8-byte header (magic, T, mode, reserved) + 2*T*2^T bits of payload.

    Each of the 2^T entries packs (node, prefix) as two T-bit fields,
    MSB-first; absent nodes store their own value as prefix.
    """
    t = si.width
    stream = 0
    for v in range(1 << t):
        p = si.prefix[v]
        if p is None:
            p = v
        stream = (stream << (2 * t)) | (v << t) | p
    payload = stream.to_bytes((2 * t * (1 << t)) // 8, "big")
    header = SI_MAGIC + bytes([t, _SI_MODES[si.mode], 0, 0])
    return header + payload


def deserialize_si(raw: bytes) -> ScoreboardInfo:
    """Recover the prefix table from the binary layout.

    Only the table survives serialization; distances, counts and lanes are
    re-derived per tile at planning time.
    """
    if len(raw) < 8 or raw[:4] != SI_MAGIC:
        raise ValueError("not a serialized SI (bad magic)")
    t = raw[4]
    mode = _SI_MODES_REV.get(raw[5])
    if mode is None:
        raise ValueError(f"unknown SI mode byte {raw[5]}")
    n = 1 << t
    need = 8 + (2 * t * n) // 8
    if len(raw) < need:
        raise ValueError("serialized SI truncated")
    stream = int.from_bytes(raw[8:need], "big")
    mask = (1 << t) - 1
    prefix = [None] * n
    executed = set()
    for v in range(n - 1, -1, -1):
        entry = stream & ((1 << (2 * t)) - 1)
        stream >>= 2 * t
        node, p = entry >> t, entry & mask
        if node != v:
            raise ValueError("corrupt SI table")
        if p != v and v != 0:
            prefix[v] = p
            executed.add(v)
    return ScoreboardInfo(
        width=t,
        mode=mode,
        prefix=tuple(prefix),
        distance=tuple([math.inf] * n),
        counts=tuple([0] * n),
        lane=tuple([None] * n),
        executed=frozenset(executed),
        outliers=frozenset(),
    )
