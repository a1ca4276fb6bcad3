"""Command-line front end.

Subcommands: setup, serve, query, bench, audit, attack.  Exit codes:
0 success, 1 usage, 2 protocol or integrity failure, 3 capacity.
"""

from __future__ import annotations

import argparse
import random
import signal
import sys
from pathlib import Path

from .audit import audit_trace, load_query_log
from .bench import latency_stats, rows_to_csv, run_bench
from .exceptions import (
    CapacityError,
    ConfigError,
    GraphFormatError,
    IntegrityError,
    ProtocolError,
)
from .gkt import load_token_log
from .graph import load_graph
from .storage import AccessTrace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROTOCOL = 2
EXIT_CAPACITY = 3


def _parse_lengths(expr: str) -> list[int]:
    if ".." in expr:
        lo, hi = expr.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in expr.split(",")]


def cmd_setup(args) -> int:
    from .protocol import (
        MODE_ENHANCED,
        save_client_state,
        save_controller,
        save_keyfile,
        setup,
    )
    from .server import ServerConfig, save_config

    with open(args.graph) as f:
        g = load_graph(f, directed=not args.undirected)
    rng = random.Random(args.seed) if args.seed is not None else None
    result = setup(
        g,
        mode=args.mode,
        lambda_bits=args.lambda_bits,
        bucket_size=args.Z,
        pad_mode=args.pad,
        chi=args.chi,
        budget=args.budget,
        stash_max=args.stash_max,
        rng=rng,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for tree in result.trees:
        tree.save(out / f"tree_{tree.tree_id:03d}.bin")
    save_keyfile(out / "keys.bin", result.client)
    if result.controller is not None:
        save_controller(out / "controller.bin", result.controller)
    else:
        save_client_state(out / "client_state.bin", result.client)
    cfg = ServerConfig(
        mode=args.mode,
        tree_path=str(out),
        listen_addr=args.listen,
        budget_bytes=args.budget,
        Z=args.Z,
        stash_max=args.stash_max,
        trace_path=str(out / "trace.csv"),
    )
    save_config(out / "server.cfg", cfg)
    depth = result.params.data_depth
    print(
        f"encrypted {g.vertex_count} vertices / {result.spdx_size} next-hop entries "
        f"into {len(result.trees)} tree(s), data depth {depth}; wrote {out}/"
    )
    if args.mode == MODE_ENHANCED:
        print(f"position map: chain depth {result.controller.positions.chain_depth}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import Daemon, build_server, load_config

    cfg = load_config(args.config)
    server = build_server(cfg)
    daemon = Daemon(server, cfg)

    def _stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _stop)
    print(f"serving {cfg.mode} mode on {cfg.listen_addr} (trees: {sorted(server.host.trees)})")
    try:
        daemon.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        daemon.shutdown()
        print("state flushed, bye")
    return EXIT_OK


def cmd_query(args) -> int:
    from .protocol import (
        EnhancedClient,
        MODE_ENHANCED,
        TrivialClient,
        load_client_state,
        load_keyfile,
        save_client_state,
    )
    from .server import RemoteStore, TcpConnection, enclave_transport

    client_state = load_keyfile(args.keys)
    n = client_state.params.vertex_count
    if not (0 <= args.u < n and 0 <= args.v < n):
        print(f"vertex pair ({args.u},{args.v}) out of range for {n} vertices", file=sys.stderr)
        return EXIT_USAGE
    host, _, port = args.addr.rpartition(":")
    conn = TcpConnection((host or "127.0.0.1", int(port)))
    try:
        if client_state.params.mode == MODE_ENHANCED:
            driver = EnhancedClient(client_state, enclave_transport(conn))
            path = driver.query_path(args.u, args.v)
        else:
            state_path = Path(args.state) if args.state else Path(args.keys).parent / "client_state.bin"
            load_client_state(state_path, client_state)
            driver = TrivialClient(client_state, RemoteStore(conn))
            path = driver.query_path(args.u, args.v)
            save_client_state(state_path, client_state)
    finally:
        conn.close()
    if path is None:
        print(f"no path from {args.u} to {args.v}", file=sys.stderr)
    else:
        print(" ".join(str(x) for x in path))
    return EXIT_OK


def cmd_bench(args) -> int:
    lengths = _parse_lengths(args.lengths)
    if not lengths or min(lengths) < 1:
        print("lengths must be positive", file=sys.stderr)
        return EXIT_USAGE
    rows = run_bench(lengths, args.reps, mode=args.mode, bucket_size=args.Z, seed=args.seed)
    csv = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(csv + "\n")
    else:
        print(csv)
    st = latency_stats(rows)
    print(
        f"slope {st['slope']:.1f} us/hop, one-sided p={st['p_one_sided']:.2e}, "
        f"monotone means: {st['monotone']}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_audit(args) -> int:
    trace = AccessTrace.load(args.trace)
    truths = load_query_log(args.queries)
    graph = None
    if args.graph:
        with open(args.graph) as f:
            graph = load_graph(f, directed=not args.undirected)
    report = audit_trace(trace, truths, graph=graph)
    print(report.summary())
    if args.out:
        Path(args.out).write_text(report.to_csv() + "\n")
    ok = report.rounds_ok and report.widths_ok and report.uniformity_ok and report.indistinguishable
    return EXIT_OK if ok else EXIT_PROTOCOL


def cmd_attack(args) -> int:
    from .attack import query_recovery

    with open(args.graph) as f:
        g = load_graph(f, directed=not args.undirected)
    sequences, truths = load_token_log(args.trace)
    candidates = query_recovery(g, sequences, assume_complete=args.complete)
    hits = 0
    for i, cands in enumerate(candidates):
        shown = " ".join(f"({u},{v})" for u, v in sorted(cands))
        print(f"observation {i}: {len(cands)} candidate(s): {shown}")
        if truths is not None and truths[i] in cands and len(cands) == 1:
            hits += 1
    if truths is not None:
        print(f"exactly recovered: {hits}/{len(candidates)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obge", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("setup", help="encrypt a graph and write server/client state")
    p.add_argument("graph", help="edge-list file (u<TAB>v[<TAB>weight])")
    p.add_argument("--mode", choices=["trivial", "enhanced"], default="trivial")
    p.add_argument("--Z", type=int, default=5, help="bucket size")
    p.add_argument("--pad", choices=["none", "full"], default="none")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--budget", type=int, default=None, help="controller memory budget in bytes")
    p.add_argument("--chi", type=int, default=64)
    p.add_argument("--lambda-bits", type=int, default=128, dest="lambda_bits")
    p.add_argument("--stash-max", type=int, default=128, dest="stash_max")
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--listen", default="127.0.0.1:7399")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("serve", help="run the storage daemon")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("query", help="run one shortest-path query")
    p.add_argument("u", type=int)
    p.add_argument("v", type=int)
    p.add_argument("--keys", required=True)
    p.add_argument("--state", default=None, help="client state file (trivial mode)")
    p.add_argument("--addr", default="127.0.0.1:7399")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="latency vs path length CSV")
    p.add_argument("--lengths", default="1..10", help="range a..b or comma list")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--mode", choices=["trivial", "enhanced"], default="trivial")
    p.add_argument("--Z", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="run leakage checks on an access trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--queries", required=True, help="ground-truth query log CSV")
    p.add_argument("--graph", default=None)
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("attack", help="query recovery from a token-sequence log")
    p.add_argument("--graph", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--complete", action="store_true", help="assume all queries per destination observed")
    p.add_argument("--undirected", action="store_true")
    p.set_defaults(func=cmd_attack)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (GraphFormatError, ConfigError, FileNotFoundError, IndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProtocolError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY


if __name__ == "__main__":
    sys.exit(main())
