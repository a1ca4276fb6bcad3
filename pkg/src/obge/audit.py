"""Leakage auditing over recorded access traces.

Given the server-visible trace and the experimenter's ground truth, the
auditor checks the scheme's observable contract: exactly path-length + 1
rounds per query, constant message widths, uniformly distributed leaf
ids, indistinguishable equal-length queries, and attack accuracy no
better than uniform guessing within a length class.
"""

from __future__ import annotations

import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .exceptions import ProtocolError
from .graph import Graph, compute_sp_matrix
from .storage import AccessTrace, TraceRecord

SIGNIFICANCE = 0.01


@dataclass
class QueryTruth:
    """Ground truth the harness supplies: one row per executed query."""

    u: int
    v: int
    path_len: int  # edge count; 0 for diagonal or disconnected pairs

    @property
    def expected_rounds(self) -> int:
        return self.path_len + 1

    def to_csv(self) -> str:
        return f"{self.u},{self.v},{self.path_len}"


def save_query_log(path: str | Path, rows: list[QueryTruth]) -> None:
    with open(path, "w") as f:
        f.write("u,v,path_len\n")
        for r in rows:
            f.write(r.to_csv() + "\n")


def load_query_log(path: str | Path) -> list[QueryTruth]:
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != "u,v,path_len":
            raise ProtocolError(f"unrecognized query log header {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            u, v, plen = line.split(",")
            rows.append(QueryTruth(int(u), int(v), int(plen)))
    return rows


def bin_leaves(leaves: list[int], leaf_space: int, max_bins: int = 64) -> np.ndarray:
    """Histogram leaf ids into equal power-of-two bins so chi-square cells
    stay adequately filled."""
    bins = min(leaf_space, max_bins)
    counts = np.zeros(bins, dtype=np.int64)
    for leaf in leaves:
        counts[leaf * bins // leaf_space] += 1
    return counts


def uniformity_pvalue(leaves: list[int], leaf_space: int, max_bins: int = 64) -> float:
    if leaf_space == 1:
        return 1.0
    counts = bin_leaves(leaves, leaf_space, max_bins)
    return float(stats.chisquare(counts).pvalue)


def two_sample_pvalue(a: list[int], b: list[int], leaf_space: int, max_bins: int = 64) -> float:
    """Chi-square homogeneity test: can the two leaf samples be told apart?"""
    if leaf_space == 1:
        return 1.0
    table = np.vstack([bin_leaves(a, leaf_space, max_bins), bin_leaves(b, leaf_space, max_bins)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table).pvalue)


def repeat_rate_zscore(leaves: list[int], leaf_space: int) -> float:
    """Lag-1 collision rate against the independent-uniform expectation."""
    n = len(leaves) - 1
    if n <= 0 or leaf_space == 1:
        return 0.0
    repeats = sum(1 for x, y in zip(leaves, leaves[1:]) if x == y)
    p = 1.0 / leaf_space
    sd = (n * p * (1 - p)) ** 0.5
    if sd == 0:
        return 0.0
    return (repeats - n * p) / sd


@dataclass
class QuerySlice:
    truth: QueryTruth
    data_reads: list[TraceRecord]
    data_writes: list[TraceRecord]
    pm_reads: list[TraceRecord]


def slice_trace(trace: AccessTrace, truths: list[QueryTruth], data_tree: int = 0) -> list[QuerySlice]:
    """Partition a single-client trace into per-query segments.

    Queries ran sequentially, so the i-th query owns the next
    expected_rounds data-tree read/write pairs (plus any position-map tree
    work interleaved before its data rounds).
    """
    slices: list[QuerySlice] = []
    reads = [r for r in trace.records if r.msg_type == "ReadPath"]
    writes = [r for r in trace.records if r.msg_type == "WritePath"]
    data_reads = [r for r in reads if r.tree_id == data_tree]
    data_writes = [w for w in writes if w.tree_id == data_tree]
    pm_reads = [r for r in reads if r.tree_id != data_tree]
    expected_data = sum(t.expected_rounds for t in truths)
    if len(data_reads) != expected_data or len(data_writes) != expected_data:
        raise ProtocolError(
            f"trace holds {len(data_reads)} data reads / {len(data_writes)} writes, "
            f"ground truth implies {expected_data}"
        )
    pm_per_round = 0
    if pm_reads:
        if len(pm_reads) % expected_data:
            raise ProtocolError("position-map rounds do not divide evenly across queries")
        pm_per_round = len(pm_reads) // expected_data
    ri = wi = pi = 0
    for t in truths:
        k = t.expected_rounds
        slices.append(
            QuerySlice(
                truth=t,
                data_reads=data_reads[ri : ri + k],
                data_writes=data_writes[wi : wi + k],
                pm_reads=pm_reads[pi : pi + k * pm_per_round],
            )
        )
        ri += k
        wi += k
        pi += k * pm_per_round
    return slices


@dataclass
class AuditReport:
    n_queries: int
    rounds_ok: bool
    round_mismatches: list[tuple[QueryTruth, int]]
    widths_ok: bool
    width_sets: dict[tuple[str, int], set[int]]
    uniformity_p: float
    uniformity_ok: bool
    repeat_z: float
    pairwise_p: dict[tuple[str, str], float] = field(default_factory=dict)
    indistinguishable: bool = True
    attack_rows: list[dict] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"queries audited: {self.n_queries}",
            f"rounds = path length + 1: {'PASS' if self.rounds_ok else 'FAIL'}"
            + (f" ({len(self.round_mismatches)} mismatches)" if self.round_mismatches else ""),
            f"constant message widths per tree: {'PASS' if self.widths_ok else 'FAIL'}",
            f"leaf uniformity: p={self.uniformity_p:.4f} "
            f"({'PASS' if self.uniformity_ok else 'FAIL'} at {SIGNIFICANCE})",
            f"lag-1 repeat-rate z: {self.repeat_z:+.2f}",
        ]
        for pair, p in self.pairwise_p.items():
            lines.append(f"two-sample {pair[0]} vs {pair[1]}: p={p:.4f}")
        lines.append(f"equal-length indistinguishability: {'PASS' if self.indistinguishable else 'FAIL'}")
        for row in self.attack_rows:
            lines.append(
                "length {path_len}: class size {class_size}, attack accuracy {accuracy:.3f}, "
                "uniform baseline {baseline:.3f}".format(**row)
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = [
            ("n_queries", self.n_queries),
            ("rounds_ok", int(self.rounds_ok)),
            ("widths_ok", int(self.widths_ok)),
            ("uniformity_p", f"{self.uniformity_p:.6f}"),
            ("repeat_z", f"{self.repeat_z:.4f}"),
            ("indistinguishable", int(self.indistinguishable)),
        ]
        for pair, p in self.pairwise_p.items():
            rows.append((f"two_sample_{pair[0]}_{pair[1]}", f"{p:.6f}"))
        for row in self.attack_rows:
            rows.append(
                (f"attack_len_{row['path_len']}", f"{row['accuracy']:.6f};baseline={row['baseline']:.6f}")
            )
        return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows)


def path_length_classes(g: Graph) -> dict[tuple[int, int], int]:
    """Edge count of the canonical shortest path for every connected pair."""
    matrix = compute_sp_matrix(g)
    out: dict[tuple[int, int], int] = {}
    for (u, v), _ in matrix.items():
        d = 0
        cur = u
        while cur != v:
            cur = matrix.next_hop(cur, v)
            d += 1
        out[(u, v)] = d
    return out


def audit_trace(
    trace: AccessTrace,
    truths: list[QueryTruth],
    graph: Graph | None = None,
    data_tree: int = 0,
    leaf_space: int | None = None,
    rng: random.Random | None = None,
) -> AuditReport:
    """Full audit: round counts, shape constancy, leaf statistics, and
    (when the plaintext graph is supplied) length-only attack accuracy
    against the uniform-guess baseline."""
    slices = slice_trace(trace, truths, data_tree=data_tree)

    mismatches = [
        (s.truth, len(s.data_reads))
        for s in slices
        if len(s.data_reads) != s.truth.expected_rounds or len(s.data_writes) != s.truth.expected_rounds
    ]

    width_sets: dict[tuple[str, int], set[int]] = defaultdict(set)
    for rec in trace.records:
        if rec.msg_type in ("ReadPath", "WritePath", "PathData", "EnclaveRequest"):
            width_sets[(rec.msg_type, rec.tree_id if rec.tree_id is not None else -1)].add(rec.byte_count)
    widths_ok = all(len(ws) == 1 for ws in width_sets.values())

    leaves = [r.leaf for s in slices for r in s.data_reads]
    if leaf_space is None:
        leaf_space = 1 << max((r.leaf for r in trace.records if r.leaf is not None), default=0).bit_length()
    uni_p = uniformity_pvalue(leaves, leaf_space)
    rep_z = repeat_rate_zscore(leaves, leaf_space)

    # two-sample tests between the two most frequent queries of equal length
    by_query: dict[tuple[int, int, int], list[int]] = defaultdict(list)
    for s in slices:
        by_query[(s.truth.u, s.truth.v, s.truth.path_len)].extend(r.leaf for r in s.data_reads)
    pairwise: dict[tuple[str, str], float] = {}
    indistinguishable = True
    by_len: dict[int, list[tuple[int, int, int]]] = defaultdict(list)
    for key in by_query:
        by_len[key[2]].append(key)
    for plen, keys in sorted(by_len.items()):
        keys = sorted(keys, key=lambda k: -len(by_query[k]))
        if len(keys) < 2:
            continue
        a, b = keys[0], keys[1]
        p = two_sample_pvalue(by_query[a], by_query[b], leaf_space)
        pairwise[(f"({a[0]},{a[1]})", f"({b[0]},{b[1]})")] = p
        if p < SIGNIFICANCE:
            indistinguishable = False

    attack_rows: list[dict] = []
    if graph is not None:
        lengths = path_length_classes(graph)
        class_sizes = Counter(lengths.values())
        rng = rng if rng is not None else random.Random(0)
        per_len: dict[int, list[QueryTruth]] = defaultdict(list)
        for s in slices:
            if s.truth.path_len >= 1:
                per_len[s.truth.path_len].append(s.truth)
        for plen, members in sorted(per_len.items()):
            cls = [pair for pair, d in lengths.items() if d == plen]
            if not cls:
                continue
            guesses = 10_000
            hits = 0
            for _ in range(guesses):
                t = rng.choice(members)
                if rng.choice(cls) == (t.u, t.v):
                    hits += 1
            attack_rows.append(
                {
                    "path_len": plen,
                    "class_size": class_sizes[plen],
                    "accuracy": hits / guesses,
                    "baseline": 1.0 / len(cls),
                }
            )

    return AuditReport(
        n_queries=len(truths),
        rounds_ok=not mismatches,
        round_mismatches=mismatches,
        widths_ok=widths_ok,
        width_sets=dict(width_sets),
        uniformity_p=uni_p,
        uniformity_ok=uni_p >= SIGNIFICANCE,
        repeat_z=rep_z,
        pairwise_p=pairwise,
        indistinguishable=indistinguishable,
        attack_rows=attack_rows,
    )
