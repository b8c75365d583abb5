"""Hide bits in token choices over a solved tree.

Every leaf carries a canonical codeword. Encoding walks the payload (behind a
32-bit big-endian length header) codeword by codeword and emits one token per
leaf visited, drawn from the leaf's tokens in proportion to their mass.
Decoding concatenates the codewords of the received tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import TokenDistribution
from .solver import Solution
from .tree import HeightVector, Partition, canonical_labels

HEADER_BITS = 32


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Codec:
    heights: HeightVector
    partition: Partition
    path_labels: tuple[str, ...]
    token_to_leaf: dict[int, int]
    leaf_tokens: tuple[np.ndarray, ...]
    leaf_cdf: tuple[np.ndarray, ...]

    @property
    def intra_leaf(self) -> list[dict[int, float]]:
        out = []
        for toks, cdf in zip(self.leaf_tokens, self.leaf_cdf):
            pmf = np.diff(np.concatenate([[0.0], cdf]))
            out.append({int(t): float(p) for t, p in zip(toks, pmf)})
        return out


def build_codec(sol: Solution, dist: TokenDistribution) -> Codec:
    part = sol.partition
    if not part.surjective:
        raise ValueError("codec needs every leaf to hold at least one token")
    if sol.heights.L < 2:
        raise ValueError("a single-leaf tree carries no bits")
    labels = canonical_labels(sol.heights)
    assert len(set(labels)) == len(labels)
    for a in labels:
        for b in labels:
            assert a == b or not b.startswith(a), "labels are not prefix-free"

    token_to_leaf = {}
    leaf_tokens = []
    leaf_cdf = []
    for j, members in enumerate(part.sets):
        ids = np.array([dist.token_ids[i] for i in members], dtype=np.int64)
        p = np.array([dist.probs[i] for i in members])
        cdf = np.cumsum(p) / p.sum()
        cdf[-1] = 1.0
        leaf_tokens.append(ids)
        leaf_cdf.append(cdf)
        for t in ids:
            token_to_leaf[int(t)] = j
    return Codec(sol.heights, part, tuple(labels), token_to_leaf,
                 tuple(leaf_tokens), tuple(leaf_cdf))


def bits_from_bytes(data: bytes) -> str:
    return "".join(format(b, "08b") for b in data)


def bytes_from_bits(bits: str) -> bytes:
    if len(bits) % 8:
        raise ValueError("bit count is not a multiple of 8")
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def walk_leaves(codec: Codec, stream: str) -> list[int]:
    """Leaf indices visited while consuming ``stream``; the last path is zero-padded."""
    depth = codec.heights.max_depth
    lookup = np.empty(1 << depth, dtype=np.int64)
    for j, label in enumerate(codec.path_labels):
        lo = int(label, 2) << (depth - len(label))
        lookup[lo:lo + (1 << (depth - len(label)))] = j
    lengths = [len(label) for label in codec.path_labels]
    padded = stream + "0" * depth
    leaves = []
    pos = 0
    while pos < len(stream):
        j = int(lookup[int(padded[pos:pos + depth], 2)])
        leaves.append(j)
        pos += lengths[j]
    return leaves


def encode(codec: Codec, bits: str, rng_seed: int) -> list[int]:
    if any(c not in "01" for c in bits):
        raise ValueError("payload must be a string of 0/1 characters")
    if len(bits) >= 1 << HEADER_BITS:
        raise ValueError("payload too long for the length header")
    leaves = np.array(walk_leaves(codec, format(len(bits), f"0{HEADER_BITS}b") + bits))
    rng = np.random.Generator(np.random.Philox(rng_seed))
    u = rng.random(len(leaves))
    tokens = np.empty(len(leaves), dtype=np.int64)
    for j, (toks, cdf) in enumerate(zip(codec.leaf_tokens, codec.leaf_cdf)):
        at = leaves == j
        k = np.searchsorted(cdf, u[at], side="right")
        tokens[at] = toks[np.minimum(k, len(toks) - 1)]
    return tokens.tolist()


def decode(codec: Codec, tokens) -> str:
    parts = []
    for t in tokens:
        j = codec.token_to_leaf.get(int(t))
        if j is None:
            raise DecodeError(f"token {t} is not in the codec's support")
        parts.append(codec.path_labels[j])
    stream = "".join(parts)
    if len(stream) < HEADER_BITS:
        raise DecodeError(f"stream has {len(stream)} bits, shorter than the length header")
    size = int(stream[:HEADER_BITS], 2)
    if len(stream) < HEADER_BITS + size:
        raise DecodeError(f"header declares {size} payload bits, stream holds "
                          f"{len(stream) - HEADER_BITS}")
    return stream[HEADER_BITS:HEADER_BITS + size]
