"""Recursive position map: the map itself lives in smaller ORAM trees.

Level 0 packs the data blocks' leaf positions, chi 8-byte entries per
block; level i+1 packs the positions of level-i blocks; levels are added
until the remaining top-level array fits the configured memory budget.
The controller then keeps only the top array and the per-level stashes
resident, emulating an enclave with bounded internal storage.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass

from .blocks import ABSENT
from .crypto import Cipher
from .exceptions import ConfigError, IntegrityError
from .oram import DEFAULT_STASH_MAX, BlockInput, PathOram, oram_init
from .storage import TreeStorage

ENTRY_BYTES = 8


def level_token(level: int, index: int) -> bytes:
    """Block identity for packed position blocks; distinct from data tokens
    by construction (data tokens are PRF outputs, these are structured)."""
    return b"\xf0" + bytes([level]) + index.to_bytes(14, "big")


def pack_entries(entries: list[int]) -> bytes:
    return b"".join(struct.pack(">Q", e) for e in entries)


def unpack_entries(raw: bytes) -> list[int]:
    return [v[0] for v in struct.iter_unpack(">Q", raw)]


@dataclass
class RpmLevel:
    engine: PathOram
    n_blocks: int


class RecursivePM:
    """Position lookup with remap-on-access through the level chain.

    levels[0] holds data positions; levels[-1] is the level whose block
    positions sit in the plain top array.  An empty chain is the flat
    base case: the top array holds the data positions directly.
    """

    def __init__(
        self,
        address_space: int,
        data_leaves: int,
        chi: int,
        levels: list[RpmLevel],
        top: list[int],
        rng: random.Random,
    ):
        self.address_space = address_space
        self.data_leaves = data_leaves
        self.chi = chi
        self.levels = levels
        self.top = top
        self.rng = rng

    @property
    def chain_depth(self) -> int:
        return len(self.levels)

    def resident_bytes(self) -> int:
        """Controller-resident state: top array plus all level stashes."""
        total = len(self.top) * ENTRY_BYTES
        for lvl in self.levels:
            total += len(lvl.engine.stash) * lvl.engine.params.block_width
        return total

    def get_and_remap(self, addr: int) -> tuple[int, int]:
        """Resolve the data leaf for an address and install a fresh one.

        Returns (old_leaf, new_leaf); old_leaf is ABSENT for addresses with
        no stored block, in which case the stored entry stays ABSENT.  The
        chain performs one full-shape oblivious access per level whether or
        not the address is present.
        """
        if not (0 <= addr < self.address_space):
            raise IndexError(f"address {addr} out of range [0, {self.address_space})")

        if not self.levels:
            old = self.top[addr]
            fresh = self.rng.randrange(self.data_leaves)
            if old != ABSENT:
                self.top[addr] = fresh
            return old, fresh

        # block index containing the entry, per level
        indices = []
        i = addr
        for _ in self.levels:
            i //= self.chi
            indices.append(i)

        top_idx = indices[-1]
        cur_leaf = self.top[top_idx]
        incoming = self.rng.randrange(self.levels[-1].engine.params.leaves)
        self.top[top_idx] = incoming

        for j in range(len(self.levels) - 1, -1, -1):
            lvl = self.levels[j]
            offset = (addr // self.chi**j) % self.chi
            if j > 0:
                fresh = self.rng.randrange(self.levels[j - 1].engine.params.leaves)
            else:
                fresh = self.rng.randrange(self.data_leaves)

            captured: list[int] = []

            def rewrite(payload: bytes, offset=offset, fresh=fresh, captured=captured) -> bytes:
                entries = unpack_entries(payload)
                captured.append(entries[offset])
                if entries[offset] != ABSENT:
                    entries[offset] = fresh
                return pack_entries(entries)

            blk = lvl.engine.access(level_token(j, indices[j]), cur_leaf, incoming, rewrite)
            if blk is None or not captured:
                raise IntegrityError(f"position block {indices[j]} missing at level {j}")
            old_entry = captured[0]
            if j > 0:
                if old_entry == ABSENT:
                    raise IntegrityError(f"level {j} entry unexpectedly absent")
                cur_leaf = old_entry
                incoming = fresh
            else:
                return old_entry, fresh
        raise AssertionError("unreachable")


def rpm_build(
    assignments: dict[int, int],
    address_space: int,
    data_leaves: int,
    chi: int,
    budget: int,
    bucket_size: int,
    cipher: Cipher,
    rng: random.Random,
    stash_max: int = DEFAULT_STASH_MAX,
    first_tree_id: int = 1,
) -> tuple[RecursivePM, list[TreeStorage], "object"]:
    """Build the chain for a data-level leaf assignment.

    Returns (map, level trees to hand to the server, store binder): the
    engines inside the map read and write paths through whatever store the
    binder is later pointed at; call ``binder.bind(store)`` once the trees
    are registered.
    """
    if chi < 2:
        raise ConfigError(f"packing factor chi must be >= 2, got {chi}")
    if address_space * ENTRY_BYTES > budget and budget < chi * ENTRY_BYTES:
        raise ConfigError(
            f"budget of {budget} bytes is smaller than one packed block ({chi * ENTRY_BYTES} bytes)"
        )

    entries = [ABSENT] * address_space
    for addr, leaf in assignments.items():
        entries[addr] = leaf

    binder = _StoreBinder()
    levels: list[RpmLevel] = []
    trees: list[TreeStorage] = []
    cur = entries
    level_no = 0
    tree_id = first_tree_id
    while len(cur) * ENTRY_BYTES > budget:
        n_blocks = -(-len(cur) // chi)
        inputs = []
        for b in range(n_blocks):
            chunk = cur[b * chi : (b + 1) * chi]
            chunk += [ABSENT] * (chi - len(chunk))
            inputs.append(
                BlockInput(level_token(level_no, b), b"\x00" * 16, 0, pack_entries(chunk))
            )
        tree, params, leaves, stash = oram_init(
            inputs,
            bucket_size=bucket_size,
            payload_width=chi * ENTRY_BYTES,
            cipher=cipher,
            rng=rng,
            stash_max=stash_max,
            tree_id=tree_id,
        )
        engine = PathOram(tree_id, params, binder, cipher, stash=stash, stash_max=stash_max, rng=rng)
        levels.append(RpmLevel(engine=engine, n_blocks=n_blocks))
        trees.append(tree)
        cur = list(leaves)
        level_no += 1
        tree_id += 1

    rpm = RecursivePM(
        address_space=address_space,
        data_leaves=data_leaves,
        chi=chi,
        levels=levels,
        top=cur,
        rng=rng,
    )
    return rpm, trees, binder


class _StoreBinder:
    """Late-bound store handle so engines can be built before the trees are
    registered with their eventual host."""

    def __init__(self):
        self._store = None

    def bind(self, store) -> None:
        self._store = store

    def read_path(self, tree_id: int, leaf: int) -> bytes:
        return self._store.read_path(tree_id, leaf)

    def write_path(self, tree_id: int, leaf: int, data: bytes) -> None:
        self._store.write_path(tree_id, leaf, data)
