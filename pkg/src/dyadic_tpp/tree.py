"""Height vectors of full binary trees, partitions, rate and divergence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

MAX_ENUM_DEPTH = 20
RATE_TOL = 1e-12


def kraft_check(depths: Sequence[int]) -> bool:
    """True iff sum(2^-h) == 1, evaluated in integer units of 2^-max."""
    if not depths:
        return False
    top = max(depths)
    if min(depths) < 0:
        return False
    return sum(1 << (top - h) for h in depths) == 1 << top


@dataclass(frozen=True)
class HeightVector:
    depths: tuple[int, ...]

    def __post_init__(self):
        depths = tuple(sorted(int(h) for h in self.depths))
        object.__setattr__(self, "depths", depths)
        if not depths or depths[0] < 0:
            raise ValueError(f"depths must be a non-empty list of non-negative ints: {depths}")
        if not kraft_check(depths):
            raise ValueError(f"depths {list(depths)} violate Kraft equality")

    @property
    def L(self) -> int:
        return len(self.depths)

    @property
    def max_depth(self) -> int:
        return self.depths[-1]

    @property
    def kraft_units(self) -> int:
        return sum(1 << (self.max_depth - h) for h in self.depths)

    @property
    def targets(self) -> tuple[float, ...]:
        return tuple(2.0 ** -h for h in self.depths)

    @property
    def rate(self) -> float:
        return rate(self)

    def has_leaf_at(self, depth: int) -> bool:
        return depth in self.depths

    def to_list(self) -> list[int]:
        return list(self.depths)


def _depths_of(heights) -> tuple[int, ...]:
    if isinstance(heights, HeightVector):
        return heights.depths
    return tuple(heights)


def rate(heights) -> float:
    """Expected leaf depth under the dyadic leaf distribution."""
    return math.fsum(h * 2.0 ** -h for h in _depths_of(heights))


def divergence(masses: Sequence[float], heights) -> float:
    """Unhalved total variation between leaf masses and the dyadic targets."""
    depths = _depths_of(heights)
    if len(masses) != len(depths):
        raise ValueError(f"{len(masses)} masses for {len(depths)} leaves")
    return math.fsum(abs(2.0 ** -h - m) for m, h in zip(masses, depths))


@dataclass(frozen=True)
class Partition:
    """Token positions per leaf, leaves in the order of the height vector.

    Construction does not enforce disjointness or coverage so that
    corrupted solutions can still be represented and verified.
    """

    sets: tuple[tuple[int, ...], ...]
    masses: tuple[float, ...]

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]], probs: Sequence[float]) -> "Partition":
        frozen = tuple(tuple(sorted(s)) for s in sets)
        masses = tuple(math.fsum(probs[i] for i in s) for s in frozen)
        return cls(frozen, masses)

    @property
    def L(self) -> int:
        return len(self.sets)

    @property
    def surjective(self) -> bool:
        return all(self.sets)

    @property
    def disjoint(self) -> bool:
        seen: set[int] = set()
        for s in self.sets:
            for i in s:
                if i in seen:
                    return False
                seen.add(i)
        return True

    def covers(self, n: int) -> bool:
        return sorted(i for s in self.sets for i in s) == list(range(n))

    def leaf_of(self) -> dict[int, int]:
        return {i: j for j, s in enumerate(self.sets) for i in s}


def canonical_labels(heights) -> list[str]:
    """Canonical prefix code for non-decreasing depths.

    Each codeword is the previous one plus one, left-shifted to the new length.
    """
    depths = _depths_of(heights)
    labels = []
    code = 0
    prev = depths[0] if depths else 0
    for k, h in enumerate(depths):
        if h < prev:
            raise ValueError("depths must be sorted non-decreasing")
        if k:
            code = (code + 1) << (h - prev)
        if code >= 1 << h:
            raise ValueError(f"depths {list(depths)} do not admit a prefix code")
        labels.append(format(code, f"0{h}b") if h else "")
        prev = h
    return labels


def _level_choices(budget: int, nodes: int, level: int, prefix: list[int], out: list) -> None:
    # `nodes` open nodes sit at `level`; each is a leaf or splits into two
    if nodes == 0 or level == budget:
        out.append(tuple(prefix + [level] * nodes))
        return
    for leaves in range(nodes, -1, -1):
        _level_choices(budget, 2 * (nodes - leaves), level + 1, prefix + [level] * leaves, out)


def enumerate_height_vectors(d_max: int) -> list[tuple[HeightVector, bool]]:
    """Every Kraft-tight depth multiset with max depth <= d_max, each once.

    Returned in lexicographic order of the sorted depth lists, paired with a
    flag saying whether some leaf sits at depth exactly ``d_max``.
    """
    if not 0 <= d_max <= MAX_ENUM_DEPTH:
        raise ValueError(f"d_max must be in [0, {MAX_ENUM_DEPTH}], got {d_max}")
    raw: list[tuple[int, ...]] = []
    _level_choices(d_max, 1, 0, [], raw)
    raw.sort()
    return [(HeightVector(depths), depths[-1] == d_max) for depths in raw]
