import random

import pytest

from obge.crypto import Cipher, encode_pair
from obge.exceptions import IntegrityError, ProtocolError
from obge.graph import Graph, spath_oracle
from obge.protocol import (
    EnclaveController,
    load_client_state,
    load_controller,
    load_keyfile,
    reveal,
    save_client_state,
    save_controller,
    save_keyfile,
    setup,
)
from obge.server import InternalStore, ObgeServer, deploy_inprocess
from conftest import random_graph


def deploy(g, mode, rng_seed=1, **kw):
    rng = random.Random(rng_seed)
    result = setup(g, mode=mode, rng=rng, **kw)
    host, server, client = deploy_inprocess(result, rng=rng)
    return result, host, server, client


class TestSetup:
    def test_four_vertex_undirected_pm_size(self, four_vertex_undirected):
        result, _, _, _ = deploy(four_vertex_undirected, "trivial")
        assert len(result.client.position_map) == 12  # ordered connected pairs

    def test_empty_graph_answers_everything_empty(self):
        g = Graph(3, directed=True)
        _, _, _, client = deploy(g, "trivial")
        for u in range(3):
            for v in range(3):
                assert client.query(u, v) == []

    def test_enhanced_budget_installs_recursive_chain(self, rng):
        g = random_graph(rng, 64, 0.1)
        result, _, server, _ = deploy(g, "enhanced", budget=64 * 64 * 8 // 16)
        assert server.controller.state.positions.chain_depth >= 1

    def test_server_side_state_contains_no_plaintext(self, four_vertex_directed):
        result, host, _, _ = deploy(four_vertex_directed, "trivial")
        blob = bytes(host.trees[0].buckets)
        keys = result.keys
        for u in range(4):
            for v in range(4):
                assert encode_pair(u, v) not in blob

    def test_pad_full_sizes_past_vertex_square(self, four_vertex_directed):
        result, host, _, _ = deploy(four_vertex_directed, "trivial", pad_mode="full")
        params = host.trees[0].params
        assert params.node_count * params.bucket_size >= 4 * 4 - 4


class TestQueryReveal:
    def test_worked_example(self, four_vertex_directed):
        result, _, _, client = deploy(four_vertex_directed, "trivial")
        resp = client.query(0, 3)
        assert len(resp) == 2
        k1 = Cipher(result.keys.k1)
        assert [k1.decrypt(ct) for ct in resp] == [encode_pair(2, 3), encode_pair(3, 3)]
        assert reveal(resp, 0, 3, result.keys.k1) == [0, 2, 3]

    def test_diagonal_empty(self, four_vertex_directed):
        _, _, _, client = deploy(four_vertex_directed, "trivial")
        assert client.query(2, 2) == []

    def test_disconnected_single_round(self, four_vertex_directed):
        _, host, _, client = deploy(four_vertex_directed, "trivial")
        before = len(host.trace)
        assert client.query(3, 0) == []
        reads = [r for r in host.trace.records[before:] if r.msg_type == "ReadPath"]
        assert len(reads) == 1

    def test_reveal_empty_cases(self):
        assert reveal([], 2, 2, b"\x00" * 16) == []
        assert reveal([], 2, 3, b"\x00" * 16) is None

    def test_reveal_tampered_ct(self, four_vertex_directed):
        result, _, _, client = deploy(four_vertex_directed, "trivial")
        resp = client.query(0, 3)
        bad = bytearray(resp[0])
        bad[5] ^= 1
        with pytest.raises(IntegrityError):
            reveal([bytes(bad)] + resp[1:], 0, 3, result.keys.k1)

    def test_out_of_range_query(self, four_vertex_directed):
        _, _, _, client = deploy(four_vertex_directed, "trivial")
        with pytest.raises(IndexError):
            client.query(0, 99)

    @pytest.mark.parametrize("mode", ["trivial", "enhanced"])
    def test_rounds_equal_path_length_plus_one(self, mode):
        g = Graph(7, directed=True)
        for i in range(6):
            g.add_edge(i, i + 1)
        _, host, _, client = deploy(g, mode)
        for u, v in [(0, 6), (0, 1), (4, 4), (6, 0), (2, 5)]:
            before = len(host.trace)
            path = client.query_path(u, v)
            plen = len(path) - 1 if path else 0
            reads = [
                r for r in host.trace.records[before:]
                if r.msg_type == "ReadPath" and r.tree_id == 0
            ]
            assert len(reads) == plen + 1


class TestModeEquivalence:
    def test_identical_paths_across_modes(self, rng):
        for trial in range(6):
            g = random_graph(rng, rng.randrange(5, 30), 0.18, weighted=trial % 2 == 0)
            _, _, _, c1 = deploy(g, "trivial", rng_seed=trial)
            _, _, _, c2 = deploy(g, "enhanced", rng_seed=trial + 100)
            _, _, _, c3 = deploy(
                g, "enhanced", rng_seed=trial + 200,
                budget=max(512, g.vertex_count**2 * 8 // 16),
            )
            n = g.vertex_count
            for u in range(n):
                for v in range(n):
                    want = spath_oracle(g, u, v)
                    assert c1.query_path(u, v) == want
                    assert c2.query_path(u, v) == want
                    assert c3.query_path(u, v) == want


class TestController:
    def test_request_width_content_independent(self, four_vertex_directed):
        result, _, _, client = deploy(four_vertex_directed, "enhanced")
        session = Cipher(result.client.session_key)
        widths = {len(session.encrypt(encode_pair(u, v), 12)) for u in range(4) for v in range(4)}
        assert len(widths) == 1

    def test_repeated_query_fresh_trace(self, four_vertex_directed):
        _, host, _, client = deploy(four_vertex_directed, "enhanced")
        def leaf_seq():
            before = len(host.trace)
            client.query(0, 3)
            return [r.leaf for r in host.trace.records[before:] if r.msg_type == "ReadPath"]
        seqs = [tuple(leaf_seq()) for _ in range(30)]
        assert len(set(seqs)) > 1  # deterministic replay would repeat the sequence

    def test_malformed_session_frame_rejected_before_access(self, four_vertex_directed):
        result, host, server, client = deploy(four_vertex_directed, "enhanced")
        before = len(host.trace)
        with pytest.raises(ProtocolError):
            client.transport(b"\x00" * 42)
        storage_msgs = [
            r for r in host.trace.records[before:] if r.msg_type in ("ReadPath", "WritePath")
        ]
        assert storage_msgs == []

    def test_out_of_range_pair_rejected_before_access(self, four_vertex_directed):
        result, host, server, client = deploy(four_vertex_directed, "enhanced")
        session = Cipher(result.client.session_key)
        before = len(host.trace)
        with pytest.raises(ProtocolError):
            client.transport(session.encrypt(encode_pair(0, 99), 12))
        storage_msgs = [
            r for r in host.trace.records[before:] if r.msg_type in ("ReadPath", "WritePath")
        ]
        assert storage_msgs == []


class TestPersistence:
    def test_keyfile_round_trip(self, tmp_path, four_vertex_directed):
        for mode in ("trivial", "enhanced"):
            result, _, _, _ = deploy(four_vertex_directed, mode)
            path = tmp_path / f"keys-{mode}.bin"
            save_keyfile(path, result.client)
            loaded = load_keyfile(path)
            assert loaded.keys == result.keys
            assert loaded.params.mode == mode
            assert loaded.params.vertex_count == 4
            if mode == "enhanced":
                assert loaded.session_key == result.client.session_key

    def test_client_state_round_trip(self, tmp_path, four_vertex_directed):
        result, _, _, client = deploy(four_vertex_directed, "trivial")
        client.query(0, 3)
        keyfile = tmp_path / "keys.bin"
        statefile = tmp_path / "state.bin"
        save_keyfile(keyfile, result.client)
        save_client_state(statefile, result.client)
        fresh = load_keyfile(keyfile)
        load_client_state(statefile, fresh)
        assert fresh.position_map == result.client.position_map
        assert len(fresh.stash) == len(result.client.stash)

    def test_controller_round_trip_preserves_answers(self, tmp_path, rng):
        g = random_graph(rng, 20, 0.2)
        result, host, server, client = deploy(g, "enhanced", budget=512, chi=8)
        want = {(u, v): client.query_path(u, v) for u in range(20) for v in range(20)}
        path = tmp_path / "controller.bin"
        save_controller(path, server.controller.state)
        state, binder = load_controller(path, rng=random.Random(9))
        server2 = ObgeServer(host)
        istore = InternalStore(server2)
        binder.bind(istore)
        server2.controller = EnclaveController(state, istore, rng=random.Random(9))
        from obge.protocol import EnhancedClient
        from obge.server import LoopbackConnection, enclave_transport
        client2 = EnhancedClient(result.client, enclave_transport(LoopbackConnection(server2)))
        for u in range(20):
            for v in range(20):
                got = client2.query_path(u, v)
                assert got == spath_oracle(g, u, v), (u, v)
