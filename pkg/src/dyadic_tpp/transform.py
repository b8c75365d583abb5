"""Structural moves on (partition, height vector) pairs.

Leaves are always listed in the sorted order of the height vector, and the
tree shape behind a depth multiset is the canonical one (see
``tree.canonical_labels``), so the subtree below any node is a contiguous run
of leaves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .distribution import ProblemInstance, TokenDistribution
from .tree import RATE_TOL, HeightVector, Partition, canonical_labels, divergence, rate

BOUND_TOL = 1e-12


class RepairError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSet:
    seeds: tuple[int, ...]
    repair_reserve: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if set(self.seeds) & set(self.repair_reserve):
            raise ValueError("repair reserve overlaps the seeds")


def select_seeds(inst: ProblemInstance, L: int, with_reserve: bool) -> SeedSet:
    """The L lightest small tokens as seeds, the next T_L lightest as reserve."""
    # positions are sorted by non-increasing mass, so larger position = lighter
    pool = sorted(inst.classification.small_indices, reverse=True)
    need = L + (inst.T_L if with_reserve else 0)
    if len(pool) < need:
        raise ValueError(f"need {need} small tokens, only {len(pool)} available")
    reserve = tuple(pool[L:L + inst.T_L]) if with_reserve else ()
    return SeedSet(tuple(pool[:L]), reserve)


def truncate(partition: Partition, heights: HeightVector, d: int,
             probs: Sequence[float]) -> tuple[Partition, HeightVector]:
    """Collapse every subtree rooted at depth ``d`` into a single leaf."""
    if heights.max_depth <= d:
        return partition, heights
    labels = canonical_labels(heights)
    sets: list[list[int]] = []
    depths: list[int] = []
    group_of: dict[str, int] = {}
    for j, (label, h) in enumerate(zip(labels, heights.depths)):
        if h <= d:
            sets.append(list(partition.sets[j]))
            depths.append(h)
            continue
        key = label[:d]
        if key not in group_of:
            group_of[key] = len(sets)
            sets.append([])
            depths.append(d)
        sets[group_of[key]].extend(partition.sets[j])
    return Partition.from_sets(sets, probs), HeightVector(depths)


def monotone_reorder(partition: Partition, heights: HeightVector) -> Partition:
    """Reassign leaf sets so masses are non-increasing along the depth order."""
    order = sorted(range(partition.L), key=lambda j: -partition.masses[j])
    out = Partition(tuple(partition.sets[j] for j in order),
                    tuple(partition.masses[j] for j in order))
    assert divergence(out.masses, heights) <= divergence(partition.masses, heights) + BOUND_TOL
    return out


def seed(partition: Partition, heights: HeightVector, seeds: SeedSet,
         dist: TokenDistribution) -> Partition:
    """Move seed ``r_j`` into leaf ``j`` for every leaf, making the partition surjective."""
    L = heights.L
    if len(seeds.seeds) < L:
        raise ValueError(f"{len(seeds.seeds)} seeds for {L} leaves")
    sets = [set(s) for s in partition.sets]
    for j, r in enumerate(seeds.seeds[:L]):
        if r in sets[j]:
            continue
        for s in sets:
            s.discard(r)
        sets[j].add(r)
    out = Partition.from_sets(sets, dist.probs)

    budget = 2 * math.fsum(dist.probs[r] for r in seeds.seeds[:L])
    change = abs(divergence(out.masses, heights) - divergence(partition.masses, heights))
    assert change <= budget + BOUND_TOL, f"seeding moved divergence by {change} > {budget}"
    assert out.surjective
    return out


@dataclass(frozen=True)
class RepairTrace:
    migrated_mass: float
    slack: float

    @property
    def bound(self) -> float:
        """Divergence increase allowed by migration plus expansion."""
        return 2 * self.migrated_mass + 2 * self.slack


def repair(partition: Partition, heights: HeightVector, reserve: Sequence[int],
           inst: ProblemInstance) -> tuple[Partition, HeightVector, RepairTrace]:
    """Replace the lightest depth-d leaf by a complete subtree of T_L leaves.

    The reserve tokens are first moved into that leaf, then spread one per
    sub-leaf; everything else the leaf held goes to the first sub-leaf.
    """
    d = inst.d
    T = inst.T_L
    k = inst.subtree_exp
    probs = inst.dist.probs
    if not heights.has_leaf_at(d) or heights.max_depth != d:
        raise RepairError(f"heights {heights.to_list()} have no leaf at depth {d}")
    if len(reserve) < T:
        raise RepairError(f"repair needs {T} reserve tokens, got {len(reserve)}")
    reserve = list(reserve[:T])

    ordered = monotone_reorder(partition, heights)
    before = divergence(ordered.masses, heights)
    last = heights.L - 1

    moved = set(reserve)
    sets = [[i for i in s if i not in moved] for s in ordered.sets]
    leftovers = sets[last]
    sub_sets = [[r] for r in reserve]
    sub_sets[0].extend(leftovers)

    new_sets = sets[:last] + sub_sets
    new_heights = HeightVector(list(heights.depths[:last]) + [d + k] * T)
    out = Partition.from_sets(new_sets, probs)

    target = 2.0 ** -(d + k)
    trace = RepairTrace(
        migrated_mass=math.fsum(probs[r] for r in reserve),
        slack=math.fsum(abs(target - probs[r]) for r in reserve[1:]),
    )
    after = divergence(out.masses, new_heights)
    assert after - before <= trace.bound + BOUND_TOL, (
        f"repair raised divergence by {after - before} > {trace.bound}")
    if rate(new_heights) < inst.rate - RATE_TOL:
        raise RepairError(
            f"expanded heights reach rate {rate(new_heights)} < {inst.rate}")
    return out, new_heights, trace
