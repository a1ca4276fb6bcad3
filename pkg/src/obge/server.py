"""Server daemon, transports, and deployment wiring.

The server owns the bucket storage (and, in the controller deployment, the
trust-boundary controller).  All interaction happens through wire
messages; the in-process loopback runs the identical byte-level framing so
tests observe exactly the shapes a TCP peer would.
"""

from __future__ import annotations

import random
import socket
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path

from . import wire
from .exceptions import CapacityError, IntegrityError, ObgeError, ProtocolError
from .protocol import (
    EnclaveController,
    EnhancedClient,
    SetupResult,
    TrivialClient,
    load_controller,
    MODE_ENHANCED,
)
from .storage import StorageHost, TreeStorage


class ObgeServer:
    """Message dispatcher over one storage host."""

    def __init__(self, host: StorageHost, controller: EnclaveController | None = None):
        self.host = host
        self.controller = controller
        self._ctrl_lock = threading.Lock()

    def dispatch(self, msg: wire.Message) -> wire.Message:
        try:
            if isinstance(msg, wire.ReadPath):
                return wire.PathData(self.host.read_path(msg.tree_id, msg.leaf))
            if isinstance(msg, wire.WritePath):
                self.host.write_path(msg.tree_id, msg.leaf, msg.buckets)
                return wire.Ack()
            if isinstance(msg, wire.EnclaveRequest):
                if self.controller is None:
                    return wire.Error(wire.ERR_USAGE, "no controller deployed on this server")
                self.host.trace.append("EnclaveRequest", None, None, len(msg.ct))
                with self._ctrl_lock:  # controller state admits one query at a time
                    ct = self.controller.handle_request(msg.ct)
                self.host.trace.append("EnclaveResponse", None, None, len(ct))
                return wire.EnclaveResponse(ct)
            if isinstance(msg, wire.UploadTree):
                tree = TreeStorage.from_bytes(msg.blob)
                self.host.add_tree(tree)
                self.host.trace.append("UploadTree", tree.tree_id, None, len(msg.blob))
                return wire.Ack()
        except (ProtocolError, IntegrityError, IndexError) as exc:
            return wire.Error(wire.ERR_PROTOCOL, str(exc))
        except CapacityError as exc:
            return wire.Error(wire.ERR_CAPACITY, str(exc))
        return wire.Error(wire.ERR_PROTOCOL, f"unsupported message {type(msg).__name__}")

    def handle_frame(self, frame: bytes) -> bytes:
        try:
            msg = wire.decode(frame)
        except ProtocolError as exc:
            return wire.encode(wire.Error(wire.ERR_PROTOCOL, str(exc)))
        return wire.encode(self.dispatch(msg))

    def handle_raw(self, mt: int, payload: bytes) -> bytes:
        try:
            msg = wire.decode_payload(mt, payload)
        except ProtocolError as exc:
            return wire.encode(wire.Error(wire.ERR_PROTOCOL, str(exc)))
        return wire.encode(self.dispatch(msg))


class LoopbackConnection:
    """Byte-exact in-process transport: frames are encoded, dispatched, and
    decoded just as over a socket."""

    def __init__(self, server: ObgeServer):
        self.server = server

    def request(self, msg: wire.Message) -> wire.Message:
        resp = wire.decode(self.server.handle_frame(wire.encode(msg)))
        if isinstance(resp, wire.Error):
            raise ProtocolError(f"server error {resp.code}: {resp.detail}")
        return resp

    def close(self) -> None:
        pass


class MessageConnection:
    """In-process transport at message granularity, skipping byte framing.
    Shapes and traces are identical to the framed path (widths are recorded
    by the storage host), just without the encode/decode cost."""

    def __init__(self, server: ObgeServer):
        self.server = server

    def request(self, msg: wire.Message) -> wire.Message:
        resp = self.server.dispatch(msg)
        if isinstance(resp, wire.Error):
            raise ProtocolError(f"server error {resp.code}: {resp.detail}")
        return resp

    def close(self) -> None:
        pass


class TcpConnection:
    """Client end of the TCP transport."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self._rfile = self.sock.makefile("rb")

    def request(self, msg: wire.Message) -> wire.Message:
        self.sock.sendall(wire.encode(msg))
        got = wire.read_frame(self._rfile)
        if got is None:
            raise ProtocolError("connection closed by server")
        resp = wire.decode_payload(*got)
        if isinstance(resp, wire.Error):
            raise ProtocolError(f"server error {resp.code}: {resp.detail}")
        return resp

    def close(self) -> None:
        self._rfile.close()
        self.sock.close()


class RemoteStore:
    """Path store adapter over any connection with ``request``."""

    def __init__(self, conn):
        self.conn = conn

    def read_path(self, tree_id: int, leaf: int) -> bytes:
        resp = self.conn.request(wire.ReadPath(tree_id, leaf))
        if not isinstance(resp, wire.PathData):
            raise ProtocolError(f"expected PathData, got {type(resp).__name__}")
        return resp.buckets

    def write_path(self, tree_id: int, leaf: int, data: bytes) -> None:
        resp = self.conn.request(wire.WritePath(tree_id, leaf, data))
        if not isinstance(resp, wire.Ack):
            raise ProtocolError(f"expected Ack, got {type(resp).__name__}")


class InternalStore:
    """The controller's view of storage: messages through the dispatcher,
    never direct bucket access, so the trace records the full boundary."""

    def __init__(self, server: ObgeServer):
        self.server = server

    def read_path(self, tree_id: int, leaf: int) -> bytes:
        resp = self.server.dispatch(wire.ReadPath(tree_id, leaf))
        if isinstance(resp, wire.Error):
            raise ProtocolError(resp.detail)
        return resp.buckets

    def write_path(self, tree_id: int, leaf: int, data: bytes) -> None:
        resp = self.server.dispatch(wire.WritePath(tree_id, leaf, data))
        if isinstance(resp, wire.Error):
            raise ProtocolError(resp.detail)


def enclave_transport(conn):
    """Request/response closure the EnhancedClient drives."""

    def send(ct: bytes) -> bytes:
        resp = conn.request(wire.EnclaveRequest(ct))
        if not isinstance(resp, wire.EnclaveResponse):
            raise ProtocolError(f"expected EnclaveResponse, got {type(resp).__name__}")
        return resp.ct

    return send


def deploy_inprocess(
    result: SetupResult, rng: random.Random | None = None, framed: bool = True
) -> tuple[StorageHost, ObgeServer, TrivialClient | EnhancedClient]:
    """Wire a setup result into a loopback server and a ready client.

    framed=False skips byte-level frame encoding on the in-process hop;
    useful for statistics-heavy test workloads."""
    host = StorageHost()
    for tree in result.trees:
        host.add_tree(tree)
    server = ObgeServer(host)
    conn = LoopbackConnection(server) if framed else MessageConnection(server)
    if result.controller is not None:
        istore = InternalStore(server)
        result.rpm_binder.bind(istore)
        server.controller = EnclaveController(result.controller, istore, rng=rng)
        client = EnhancedClient(result.client, enclave_transport(conn))
    else:
        client = TrivialClient(result.client, RemoteStore(conn), rng=rng)
    return host, server, client


# ---------------------------------------------------------------------------
# daemon

@dataclass
class ServerConfig:
    mode: str = "trivial"
    tree_path: str = "."
    listen_addr: str = "127.0.0.1:7399"
    budget_bytes: int | None = None
    Z: int = 5
    stash_max: int = 128
    trace_path: str | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, _, port = self.listen_addr.rpartition(":")
        return host or "127.0.0.1", int(port)


def load_config(path: str | Path) -> ServerConfig:
    cfg = ServerConfig()
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ProtocolError(f"config line {line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "mode":
            cfg.mode = value
        elif key == "tree_path":
            cfg.tree_path = value
        elif key == "listen_addr":
            cfg.listen_addr = value
        elif key == "budget_bytes":
            cfg.budget_bytes = int(value) or None
        elif key == "Z":
            cfg.Z = int(value)
        elif key == "stash_max":
            cfg.stash_max = int(value)
        elif key == "trace_path":
            cfg.trace_path = value
        else:
            raise ProtocolError(f"config line {line_no}: unknown key {key!r}")
    return cfg


def save_config(path: str | Path, cfg: ServerConfig) -> None:
    lines = [
        f"mode = {cfg.mode}",
        f"tree_path = {cfg.tree_path}",
        f"listen_addr = {cfg.listen_addr}",
        f"budget_bytes = {cfg.budget_bytes or 0}",
        f"Z = {cfg.Z}",
        f"stash_max = {cfg.stash_max}",
    ]
    if cfg.trace_path:
        lines.append(f"trace_path = {cfg.trace_path}")
    Path(path).write_text("\n".join(lines) + "\n")


def tree_files(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("tree_*.bin"))


def build_server(cfg: ServerConfig, rng: random.Random | None = None) -> ObgeServer:
    """Load persisted trees (and controller state) into a dispatcher."""
    host = StorageHost()
    files = tree_files(cfg.tree_path)
    if not files:
        raise ProtocolError(f"no tree files under {cfg.tree_path!r}")
    for f in files:
        host.add_tree(TreeStorage.load(f))
    server = ObgeServer(host)
    if cfg.mode == MODE_ENHANCED:
        state_path = Path(cfg.tree_path) / "controller.bin"
        if not state_path.exists():
            raise ProtocolError(f"enhanced mode needs {state_path}")
        state, binder = load_controller(state_path, rng=rng)
        istore = InternalStore(server)
        binder.bind(istore)
        server.controller = EnclaveController(state, istore, rng=rng)
    return server


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        rfile = self.request.makefile("rb")
        try:
            while True:
                try:
                    got = wire.read_frame(rfile)
                except ProtocolError as exc:
                    self.request.sendall(wire.encode(wire.Error(wire.ERR_PROTOCOL, str(exc))))
                    continue
                if got is None:
                    return
                self.request.sendall(self.server.obge.handle_raw(*got))
        except (ConnectionError, OSError):
            return
        finally:
            rfile.close()


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class Daemon:
    """TCP front end; flushes storage, controller, and trace on shutdown."""

    def __init__(self, server: ObgeServer, cfg: ServerConfig):
        self.server = server
        self.cfg = cfg
        try:
            self.tcp = _ThreadingServer(cfg.address, _Handler)
        except OSError as exc:
            raise ObgeError(f"cannot bind {cfg.listen_addr}: {exc}")
        self.tcp.obge = server
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.tcp.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.tcp.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.tcp.serve_forever()

    def shutdown(self) -> None:
        self.tcp.shutdown()
        self.tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.flush()

    def flush(self) -> None:
        out = Path(self.cfg.tree_path)
        for tree_id, tree in self.server.host.trees.items():
            tree.save(out / f"tree_{tree_id:03d}.bin")
        if self.server.controller is not None:
            from .protocol import save_controller

            save_controller(out / "controller.bin", self.server.controller.state)
        if self.cfg.trace_path:
            self.server.host.trace.save(self.cfg.trace_path)
