import random

import pytest

from obge.audit import (
    QueryTruth,
    audit_trace,
    load_query_log,
    save_query_log,
    slice_trace,
    two_sample_pvalue,
    uniformity_pvalue,
)
from obge.exceptions import ProtocolError
from obge.graph import Graph
from obge.protocol import setup
from obge.server import deploy_inprocess
from obge.storage import AccessTrace


def run_workload(g, queries, mode="trivial", seed=2):
    rng = random.Random(seed)
    result = setup(g, mode=mode, rng=rng)
    host, _, client = deploy_inprocess(result, rng=rng)
    truths = []
    for u, v in queries:
        path = client.query_path(u, v)
        truths.append(QueryTruth(u, v, len(path) - 1 if path else 0))
    return host, truths


@pytest.fixture
def two_branch_graph():
    """Two disjoint chains: (0,2) and (3,5) are distinct length-2 queries."""
    g = Graph(6, directed=True)
    for u, v in [(0, 1), (1, 2), (3, 4), (4, 5)]:
        g.add_edge(u, v)
    return g


class TestSlicing:
    def test_round_partition(self, two_branch_graph):
        host, truths = run_workload(two_branch_graph, [(0, 2), (3, 5), (0, 0), (5, 3)])
        slices = slice_trace(host.trace, truths)
        assert [len(s.data_reads) for s in slices] == [3, 3, 1, 1]

    def test_mismatched_ground_truth_rejected(self, two_branch_graph):
        host, truths = run_workload(two_branch_graph, [(0, 2)])
        truths[0] = QueryTruth(0, 2, 5)
        with pytest.raises(ProtocolError):
            slice_trace(host.trace, truths)


class TestStatistics:
    def test_uniformity_accepts_uniform(self, rng):
        leaves = [rng.randrange(64) for _ in range(8000)]
        assert uniformity_pvalue(leaves, 64) >= 0.01

    def test_uniformity_rejects_skew(self, rng):
        leaves = [rng.randrange(8) for _ in range(8000)]  # stuck in low leaves
        assert uniformity_pvalue(leaves, 64) < 0.01

    def test_two_sample_accepts_same_distribution(self, rng):
        a = [rng.randrange(32) for _ in range(3000)]
        b = [rng.randrange(32) for _ in range(3000)]
        assert two_sample_pvalue(a, b, 32) >= 0.01

    def test_two_sample_rejects_different(self, rng):
        a = [rng.randrange(32) for _ in range(3000)]
        b = [rng.randrange(16) for _ in range(3000)]
        assert two_sample_pvalue(a, b, 32) < 0.01


class TestAuditReport:
    def test_healthy_trace_passes(self, two_branch_graph, rng):
        queries = [(0, 2), (3, 5)] * 150 + [(0, 0)] * 20
        host, truths = run_workload(two_branch_graph, queries)
        report = audit_trace(host.trace, truths, graph=two_branch_graph, leaf_space=1 << host.trees[0].params.depth)
        assert report.rounds_ok
        assert report.widths_ok
        assert report.uniformity_ok
        assert report.indistinguishable
        assert report.pairwise_p  # the two length-2 queries were compared
        summary = report.summary()
        assert "PASS" in summary and "FAIL" not in summary

    def test_attack_rows_match_uniform_baseline(self, two_branch_graph):
        queries = [(0, 2), (3, 5)] * 40
        host, truths = run_workload(two_branch_graph, queries)
        report = audit_trace(host.trace, truths, graph=two_branch_graph)
        row = next(r for r in report.attack_rows if r["path_len"] == 2)
        assert row["baseline"] == pytest.approx(0.5)
        assert abs(row["accuracy"] - row["baseline"]) <= 0.05

    def test_csv_emission(self, two_branch_graph, tmp_path):
        host, truths = run_workload(two_branch_graph, [(0, 2), (3, 5)])
        report = audit_trace(host.trace, truths)
        csv = report.to_csv()
        assert csv.startswith("metric,value")
        assert "rounds_ok,1" in csv


class TestPersistedArtifacts:
    def test_trace_round_trip(self, two_branch_graph, tmp_path):
        host, truths = run_workload(two_branch_graph, [(0, 2), (0, 0)])
        path = tmp_path / "trace.csv"
        host.trace.save(path)
        loaded = AccessTrace.load(path)
        assert len(loaded) == len(host.trace)
        assert [r.msg_type for r in loaded.records] == [r.msg_type for r in host.trace.records]
        assert [r.leaf for r in loaded.records] == [r.leaf for r in host.trace.records]

    def test_query_log_round_trip(self, tmp_path):
        rows = [QueryTruth(0, 2, 2), QueryTruth(5, 3, 0)]
        save_query_log(tmp_path / "q.csv", rows)
        assert load_query_log(tmp_path / "q.csv") == rows

    def test_enhanced_trace_audits_cleanly(self, two_branch_graph):
        host, truths = run_workload(
            two_branch_graph, [(0, 2), (3, 5)] * 30, mode="enhanced"
        )
        report = audit_trace(host.trace, truths, graph=two_branch_graph)
        assert report.rounds_ok and report.widths_ok
