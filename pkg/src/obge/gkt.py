"""Baseline scheme: the next-hop dictionary behind a plain encrypted
dictionary, accessed directly with deterministic tokens.

This is the construction the oblivious scheme improves on.  Every query
walks its token chain in place, so the server sees the exact token
sequence: repeated queries repeat it (query pattern), and queries sharing
a destination share suffixes (path intersection pattern).  The attack
module consumes these sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .blocks import PAIR_PAD
from .crypto import Cipher, KeySet, decode_pair, encode_pair, keygen, prf_eval
from .exceptions import IntegrityError
from .graph import Graph, compute_spdx


@dataclass
class GktEncryptedDict:
    """Token-indexed encrypted next-hop entries plus the per-query access
    log an honest-but-curious host would keep."""

    entries: dict[bytes, tuple[bytes, bytes]]
    access_log: list[list[bytes]] = field(default_factory=list)


class GktScheme:
    def __init__(self, g: Graph, keys: KeySet | None = None):
        self.keys = keys if keys is not None else keygen(128)
        self.vertex_count = g.vertex_count
        self._k1 = Cipher(self.keys.k1)
        entries: dict[bytes, tuple[bytes, bytes]] = {}
        for (u, v), (w, _) in compute_spdx(g).items():
            tk = prf_eval(self.keys.kprf, encode_pair(u, v))
            entries[tk] = (
                prf_eval(self.keys.kprf, encode_pair(w, v)),
                self._k1.encrypt(encode_pair(w, v), PAIR_PAD),
            )
        self.server = GktEncryptedDict(entries)

    def query(self, u: int, v: int) -> tuple[list[bytes], list[bytes]]:
        """Chase the chain; returns (encrypted path, observed token
        sequence).  The sequence ends with the token of the final missing
        probe, so its length is path length + 1."""
        if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
            raise IndexError(f"vertex pair ({u},{v}) out of range")
        resp: list[bytes] = []
        seq: list[bytes] = []
        tk = prf_eval(self.keys.kprf, encode_pair(u, v))
        while True:
            seq.append(tk)
            hit = self.server.entries.get(tk)
            if hit is None:
                break
            tk, ct = hit
            resp.append(ct)
        self.server.access_log.append(seq)
        return resp, seq

    def reveal(self, resp: list[bytes], source: int, dest: int) -> list[int] | None:
        if not resp:
            return [] if source == dest else None
        hops = [decode_pair(self._k1.decrypt(ct)) for ct in resp]
        if hops[-1] != (dest, dest):
            raise IntegrityError("response does not terminate at the queried destination")
        return [source] + [w for w, _ in hops]


def save_token_log(path: str | Path, sequences: list[list[bytes]], truths: list[tuple[int, int]] | None = None) -> None:
    """One JSON line per observed query: hex token sequence, optionally the
    ground-truth pair for accuracy scoring."""
    with open(path, "w") as f:
        for i, seq in enumerate(sequences):
            rec: dict = {"tokens": [t.hex() for t in seq]}
            if truths is not None:
                rec["query"] = list(truths[i])
            f.write(json.dumps(rec) + "\n")


def load_token_log(path: str | Path) -> tuple[list[list[bytes]], list[tuple[int, int]] | None]:
    sequences: list[list[bytes]] = []
    truths: list[tuple[int, int]] = []
    have_truth = True
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sequences.append([bytes.fromhex(t) for t in rec["tokens"]])
            if "query" in rec:
                truths.append(tuple(rec["query"]))
            else:
                have_truth = False
    return sequences, truths if have_truth and truths else None
