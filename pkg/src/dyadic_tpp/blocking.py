"""Aggregation of tiny tokens into atomic units."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .distribution import TokenDistribution
from .tree import Partition

HEAVY = "heavy"
BLOCK = "block"
RESIDUAL = "residual"


@dataclass(frozen=True)
class AtomicUnit:
    kind: str
    members: tuple[int, ...]
    mass: float


def build_atomic_units(dist: TokenDistribution, epsilon: float) -> list[AtomicUnit]:
    """Heavy tokens (p >= eps^2) as singletons, then greedy blocks of the rest.

    Tiny tokens are taken in non-increasing mass order and a block is closed
    as soon as its mass reaches eps^2, so completed blocks lie in
    [eps^2, 2 eps^2). Leftover tiny mass forms at most one residual unit.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    eps2 = epsilon * epsilon
    probs = dist.probs
    units = [AtomicUnit(HEAVY, (i,), probs[i]) for i in range(dist.n) if probs[i] >= eps2]

    current: list[int] = []
    running = 0.0
    for i in range(dist.n):
        if probs[i] >= eps2:
            continue
        current.append(i)
        running += probs[i]
        if running < eps2:
            continue
        # the closing decision must agree with the exactly rounded mass
        mass = math.fsum(probs[j] for j in current)
        if mass >= eps2:
            units.append(AtomicUnit(BLOCK, tuple(current), mass))
            current = []
            running = 0.0
        else:
            running = mass
    if current:
        units.append(AtomicUnit(RESIDUAL, tuple(current), math.fsum(probs[j] for j in current)))
    return units


def unit_bound(epsilon: float) -> int:
    return math.ceil(1 / (epsilon * epsilon) - 1e-9) + 1


def unpack(leaf_of: Sequence[int], units: Sequence[AtomicUnit], L: int,
           probs: Sequence[float]) -> Partition:
    """Expand a unit-to-leaf assignment into a token-level partition."""
    if len(leaf_of) != len(units):
        raise ValueError(f"assignment covers {len(leaf_of)} units, expected {len(units)}")
    sets: list[list[int]] = [[] for _ in range(L)]
    for u, leaf in enumerate(leaf_of):
        if not 0 <= leaf < L:
            raise ValueError(f"unit {u} assigned to leaf {leaf}, outside [0, {L})")
        sets[leaf].extend(units[u].members)
    return Partition.from_sets(sets, probs)


def units_to_json(units: Sequence[AtomicUnit], dist: TokenDistribution | None = None) -> str:
    rows = []
    for u in units:
        members = list(u.members)
        if dist is not None:
            members = [dist.token_ids[i] for i in members]
        rows.append({"kind": u.kind, "members": members, "mass": u.mass})
    return json.dumps(rows)
