"""Path ORAM engine: oblivious single-block access over a bucket tree.

Every access, hit or miss, reads one root-to-leaf path and writes it back
re-encrypted, so the storage owner sees a fixed-shape (read, write) pair
per access and a leaf id that is always a fresh uniform sample.  Real
blocks displaced from the path wait in the controller-side stash until a
later write-back can evict them to a compatible bucket.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass

from .blocks import Block, TreeParams, dummy_plaintext, tree_depth_for, unpack_block
from .crypto import Cipher
from .exceptions import CapacityError, IntegrityError, StashOverflowError
from .storage import TreeStorage

DEFAULT_STASH_MAX = 128


class PathOram:
    """Controller-side access logic for one tree.

    The store argument is anything exposing ``read_path(tree_id, leaf)``
    and ``write_path(tree_id, leaf, data)``; local storage and the wire
    client both qualify.  Position lookup is the caller's job: access takes
    the block's current leaf (or None for a dummy round) and the fresh leaf
    it should move to.  One access may be in flight at a time.
    """

    def __init__(
        self,
        tree_id: int,
        params: TreeParams,
        store,
        cipher: Cipher,
        stash: list[Block] | None = None,
        stash_max: int = DEFAULT_STASH_MAX,
        rng: random.Random | None = None,
    ):
        self.tree_id = tree_id
        self.params = params
        self.store = store
        self.cipher = cipher
        self.stash: list[Block] = stash if stash is not None else []
        self.stash_max = stash_max
        self.rng = rng if rng is not None else secrets.SystemRandom()
        self.max_stash_seen = len(self.stash)
        self.access_count = 0

    def random_leaf(self) -> int:
        return self.rng.randrange(self.params.leaves)

    def access(
        self,
        tk: bytes | None,
        cur_leaf: int | None,
        new_leaf: int | None,
        update_payload=None,
    ) -> Block | None:
        """One oblivious access.

        With a token and its current leaf: fetch the path, pull the block
        into the stash, remap it to new_leaf, optionally rewrite its
        payload, evict, and return it.  With tk or cur_leaf None: a dummy
        round over a uniformly random path with identical wire shape,
        returning None.
        """
        p = self.params
        is_real = tk is not None and cur_leaf is not None
        x = cur_leaf if is_real else self.random_leaf()
        raw = self.store.read_path(self.tree_id, x)

        decrypt = self.cipher.decrypt
        width = p.payload_width
        for i in range(0, len(raw), p.slot_width):
            plain = decrypt(raw[i : i + p.slot_width])
            if plain[-1]:  # flag byte: dummies skip deserialization
                self.stash.append(unpack_block(plain, width))

        found: Block | None = None
        if is_real:
            for blk in self.stash:
                if blk.tk == tk:
                    found = blk
                    break
            if found is None:
                raise IntegrityError("mapped block missing from its path and stash")
            found.leaf = new_leaf
            if update_payload is not None:
                found.payload = update_payload(found.payload)

        self._evict_and_write(x)
        self.access_count += 1
        if len(self.stash) > self.stash_max:
            raise StashOverflowError(
                f"stash holds {len(self.stash)} blocks, limit {self.stash_max}"
            )
        self.max_stash_seen = max(self.max_stash_seen, len(self.stash))
        return found

    def _evict_and_write(self, x: int) -> None:
        """Greedy write-back: place stash blocks in the deepest bucket of
        the path to x that their own leaf also passes through."""
        p = self.params
        encrypt = self.cipher.encrypt
        width, block_width, z = p.payload_width, p.block_width, p.bucket_size
        dummy = dummy_plaintext(width)
        chunks: list[bytes] = []
        for level in range(p.depth, -1, -1):
            picked: list[Block] = []
            rest: list[Block] = []
            for blk in self.stash:
                if len(picked) < z and p.shares_bucket(blk.leaf, x, level):
                    picked.append(blk)
                else:
                    rest.append(blk)
            # in-place so external aliases (persisted party state) stay live
            self.stash[:] = rest
            slots = [encrypt(b.pack(width), block_width) for b in picked]
            slots.extend(encrypt(dummy, block_width) for _ in range(z - len(picked)))
            chunks.append(b"".join(slots))
        chunks.reverse()
        self.store.write_path(self.tree_id, x, b"".join(chunks))


@dataclass
class BlockInput:
    """One real block to load at initialization time."""

    tk: bytes
    next_tk: bytes
    next_addr: int
    payload: bytes


def oram_init(
    blocks: list[BlockInput],
    bucket_size: int,
    payload_width: int,
    cipher: Cipher,
    rng: random.Random,
    pad_slots: int | None = None,
    stash_max: int = DEFAULT_STASH_MAX,
    tree_id: int = 0,
):
    """Build the encrypted tree for a set of real blocks.

    The tree is sized for pad_slots real slots (defaults to the actual
    block count); each block gets an independent uniform leaf and is placed
    in the deepest free bucket on that leaf's path, overflowing into the
    returned stash.  All remaining slots hold encrypted dummies.

    Returns (TreeStorage, params, leaf assignment per input block, stash).
    """
    real_slots = len(blocks) if pad_slots is None else max(pad_slots, len(blocks))
    depth = tree_depth_for(real_slots, bucket_size)
    params = TreeParams(depth=depth, bucket_size=bucket_size, payload_width=payload_width)
    if len(blocks) > params.node_count * bucket_size + stash_max:
        raise CapacityError(
            f"{len(blocks)} blocks exceed tree capacity "
            f"{params.node_count * bucket_size} plus stash {stash_max}"
        )

    leaves = [rng.randrange(params.leaves) for _ in blocks]
    placed: dict[int, list[Block]] = {}
    stash: list[Block] = []
    for inp, leaf in zip(blocks, leaves):
        blk = Block(inp.tk, inp.next_tk, inp.next_addr, inp.payload, leaf)
        for node in reversed(params.path_nodes(leaf)):
            slot_list = placed.setdefault(node, [])
            if len(slot_list) < bucket_size:
                slot_list.append(blk)
                break
        else:
            stash.append(blk)
    if len(stash) > stash_max:
        raise CapacityError(f"initial placement overflowed the stash ({len(stash)} blocks)")

    buckets = bytearray()
    dummy = dummy_plaintext(payload_width)
    for node in range(params.node_count):
        slots = placed.get(node, [])
        for blk in slots:
            buckets += cipher.encrypt(blk.pack(payload_width), params.block_width)
        for _ in range(bucket_size - len(slots)):
            buckets += cipher.encrypt(dummy, params.block_width)

    tree = TreeStorage(tree_id=tree_id, params=params, buckets=buckets)
    return tree, params, leaves, stash


class PathOramKV:
    """Token-keyed view with an internal flat position map.

    This is the client-held-state deployment: lookups hit the local map,
    unknown tokens trigger a dummy round so hits and misses are
    indistinguishable on the wire.
    """

    def __init__(self, engine: PathOram, position_map: dict[bytes, int]):
        self.engine = engine
        self.position_map = position_map

    def access(self, tk: bytes) -> Block | None:
        leaf = self.position_map.get(tk)
        if leaf is None:
            return self.engine.access(None, None, None)
        new_leaf = self.engine.random_leaf()
        self.position_map[tk] = new_leaf
        return self.engine.access(tk, leaf, new_leaf)


def verify_placement(tree, cipher: Cipher, position_map: dict[bytes, int], stash: list[Block]) -> None:
    """Debug walker: decrypt the whole tree and confirm every mapped block
    sits either in the stash or on the path to its mapped leaf."""
    p = tree.params
    located: dict[bytes, int] = {}
    for node in range(p.node_count):
        raw = tree.get_bucket(node)
        for i in range(0, len(raw), p.slot_width):
            blk = unpack_block(cipher.decrypt(raw[i : i + p.slot_width]), p.payload_width)
            if not blk.is_dummy:
                if blk.tk in located:
                    raise AssertionError("token stored twice in the tree")
                located[blk.tk] = node
    stash_tokens = {b.tk for b in stash}
    if len(stash_tokens) != len(stash):
        raise AssertionError("token appears twice in the stash")
    for tk, leaf in position_map.items():
        if tk in stash_tokens:
            continue
        node = located.get(tk)
        if node is None:
            raise AssertionError("mapped block absent from tree and stash")
        if node not in p.path_nodes(leaf):
            raise AssertionError("block stored off the path to its mapped leaf")
