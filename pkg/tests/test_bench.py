from obge.bench import CSV_HEADER, chain_graph, latency_stats, rows_to_csv, run_bench


def test_chain_graph_shape():
    g = chain_graph(5)
    assert g.vertex_count == 5
    assert len(g.edges) == 4


def test_bench_rows_and_csv():
    rows = run_bench([1, 2, 3], reps=4, seed=1)
    assert len(rows) == 12
    csv = rows_to_csv(rows)
    assert csv.splitlines()[0] == CSV_HEADER
    assert len(csv.splitlines()) == 13


def test_latency_grows_with_length():
    rows = run_bench([1, 4, 8], reps=25, seed=3)
    st = latency_stats(rows)
    assert st["slope"] > 0
    assert st["means"][1] < st["means"][8]
