"""Fixed-width block serialization and binary-tree geometry.

Every block in a tree serializes to the same width, dummy or real:

    tk (16) | next_tk (16) | next_addr (8) | payload (W) | leaf (8) | flag (1)

The payload width W is fixed per tree: the data tree carries a k1
ciphertext of a vertex pair, position-map trees carry chi packed 8-byte
leaf entries.  On the wire each block is individually encrypted under k2,
so a slot occupies block_width + ciphertext overhead bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

from .crypto import CT_OVERHEAD, TOKEN_BYTES, ciphertext_width

# payload of a data-tree block: ciphertext of an 8-byte pair padded to 12
PAIR_PAD = 12
DATA_PAYLOAD_WIDTH = ciphertext_width(PAIR_PAD)

# reserved leaf value marking "no block stored at this address"
ABSENT = (1 << 64) - 1

_FIXED = TOKEN_BYTES * 2 + 8 + 8 + 1  # tk, next_tk, next_addr, leaf, flag

_BLOCK_STRUCTS: dict[int, struct.Struct] = {}
_DUMMY_PLAIN: dict[int, bytes] = {}


def _block_struct(payload_width: int) -> struct.Struct:
    s = _BLOCK_STRUCTS.get(payload_width)
    if s is None:
        s = _BLOCK_STRUCTS[payload_width] = struct.Struct(f">16s16sQ{payload_width}sQB")
    return s


@dataclass
class Block:
    tk: bytes
    next_tk: bytes
    next_addr: int
    payload: bytes
    leaf: int
    is_dummy: bool = False

    def pack(self, payload_width: int) -> bytes:
        if len(self.payload) != payload_width:
            raise ValueError(f"payload is {len(self.payload)} bytes, tree expects {payload_width}")
        return _block_struct(payload_width).pack(
            self.tk, self.next_tk, self.next_addr, self.payload, self.leaf,
            0 if self.is_dummy else 1,
        )


def unpack_block(raw: bytes, payload_width: int) -> Block:
    if len(raw) != _FIXED + payload_width:
        raise ValueError(f"block is {len(raw)} bytes, expected {_FIXED + payload_width}")
    tk, next_tk, next_addr, payload, leaf, flag = _block_struct(payload_width).unpack(raw)
    return Block(tk, next_tk, next_addr, payload, leaf, is_dummy=(flag == 0))


def dummy_plaintext(payload_width: int) -> bytes:
    """Serialized all-zero dummy block; constant per width, so buildable
    once and re-encrypted freshly wherever a slot needs filling."""
    cached = _DUMMY_PLAIN.get(payload_width)
    if cached is None:
        cached = _DUMMY_PLAIN[payload_width] = dummy_block(payload_width).pack(payload_width)
    return cached


def dummy_block(payload_width: int) -> Block:
    return Block(
        tk=b"\x00" * TOKEN_BYTES,
        next_tk=b"\x00" * TOKEN_BYTES,
        next_addr=0,
        payload=b"\x00" * payload_width,
        leaf=0,
        is_dummy=True,
    )


@dataclass(frozen=True)
class TreeParams:
    """Geometry of one ORAM tree: depth, bucket size, block payload width."""

    depth: int  # L; path holds depth+1 buckets
    bucket_size: int  # Z
    payload_width: int

    @cached_property
    def leaves(self) -> int:
        return 1 << self.depth

    @cached_property
    def node_count(self) -> int:
        return (1 << (self.depth + 1)) - 1

    @cached_property
    def block_width(self) -> int:
        return _FIXED + self.payload_width

    @cached_property
    def slot_width(self) -> int:
        return self.block_width + CT_OVERHEAD

    @cached_property
    def bucket_width(self) -> int:
        return self.bucket_size * self.slot_width

    @cached_property
    def path_width(self) -> int:
        return (self.depth + 1) * self.bucket_width

    def leaf_node(self, leaf: int) -> int:
        return (1 << self.depth) - 1 + leaf

    def path_nodes(self, leaf: int) -> list[int]:
        """Heap indices of the buckets on the root-to-leaf path, root first."""
        if not (0 <= leaf < self.leaves):
            raise IndexError(f"leaf {leaf} out of range [0, {self.leaves})")
        nodes = []
        i = self.leaf_node(leaf)
        while True:
            nodes.append(i)
            if i == 0:
                break
            i = (i - 1) // 2
        nodes.reverse()
        return nodes

    def shares_bucket(self, leaf_a: int, leaf_b: int, level: int) -> bool:
        """True when the paths to both leaves pass through the same bucket
        at the given level (0 = root)."""
        shift = self.depth - level
        return (leaf_a >> shift) == (leaf_b >> shift)


def tree_depth_for(real_slots: int, bucket_size: int) -> int:
    """Depth rule: the leaf count is the number of real slots divided by Z,
    rounded up to a power of two."""
    if real_slots <= 0:
        return 0
    min_leaves = -(-real_slots // bucket_size)
    return (min_leaves - 1).bit_length()
