"""Lattice discretization and the reachability DP over rounded leaf loads.

A DP state is the vector of rounded loads ``(a_1, ..., a_{L-1})`` of all but
the last leaf, in units of ``delta``. States are packed into a single integer
in mixed radix ``W + 1`` with ``a_1`` most significant, so integer order is
lexicographic order on the load vectors. Each step keeps the sorted array of
reachable packed states; assignments are recovered by walking back through
those layers instead of storing one assignment per state.
"""
from __future__ import annotations

import bisect
import io
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tree import HeightVector

DEFAULT_STATE_CAP = 50_000_000
OBJ_TIE_TOL = 1e-12
# floor(q / delta) is taken with this relative slack so that masses such as
# 0.3 with delta = 0.001 land on 300 rather than 299
FLOOR_SLACK = 1e-9
# packed states at or above this use Python ints instead of int64 arrays
PACK_LIMIT = 2 ** 62


class StateCapExceeded(RuntimeError):
    def __init__(self, size: int, cap: int, epsilon: float | None, heights: HeightVector):
        self.size = size
        self.cap = cap
        self.epsilon = epsilon
        self.heights = heights
        super().__init__(
            f"DP frontier reached {size} states (cap {cap}) for epsilon={epsilon} "
            f"and heights {heights.to_list()}"
        )


def default_state_cap() -> int:
    env = os.environ.get("TPP_STATE_CAP")
    if env:
        return int(float(env))
    return DEFAULT_STATE_CAP


@dataclass(frozen=True)
class DiscretizedInstance:
    delta: float
    weights: tuple[int, ...]
    masses: tuple[float, ...]
    epsilon: float | None = None

    @property
    def W(self) -> int:
        return sum(self.weights)

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def rounding_loss(self) -> float:
        return math.fsum(abs(q - self.delta * w) for q, w in zip(self.masses, self.weights))


def discretize(units: Sequence, epsilon: float | None = None, *,
               delta: float | None = None) -> DiscretizedInstance:
    """Round unit masses down to the lattice of step ``eps^3 / 2``.

    ``units`` may be AtomicUnits or plain masses. ``delta`` overrides the
    lattice step derived from ``epsilon``.
    """
    if delta is None:
        if epsilon is None:
            raise ValueError("need epsilon or delta")
        delta = epsilon ** 3 / 2
    if not delta > 0:
        raise ValueError(f"lattice step must be positive, got {delta!r}")
    masses = tuple(float(getattr(u, "mass", u)) for u in units)
    weights = tuple(max(0, math.floor(q / delta + FLOOR_SLACK)) for q in masses)
    return DiscretizedInstance(delta=delta, weights=weights, masses=masses, epsilon=epsilon)


def rounded_objective(loads: Sequence[int], heights: HeightVector, disc: DiscretizedInstance) -> float:
    """Objective of a full terminal state ``(a_1..a_{L-1})``; the last leaf takes the rest."""
    targets = heights.targets
    if len(loads) != len(targets) - 1:
        raise ValueError(f"expected {len(targets) - 1} loads, got {len(loads)}")
    last = disc.W - sum(loads)
    terms = [abs(t - disc.delta * a) for t, a in zip(targets, loads)]
    terms.append(abs(targets[-1] - disc.delta * last))
    return math.fsum(terms)


@dataclass(frozen=True)
class DpResult:
    leaf_of: tuple[int, ...]
    objective: float
    terminal: tuple[int, ...]
    frontier_sizes: tuple[int, ...] = field(default=())

    @property
    def frontier_max(self) -> int:
        return max(self.frontier_sizes, default=1)


def frontier_csv(result: DpResult) -> str:
    buf = io.StringIO()
    buf.write("step,frontier_size\n")
    for t, size in enumerate(result.frontier_sizes):
        buf.write(f"{t},{size}\n")
    return buf.getvalue()


def true_objective(leaf_of: Sequence[int], masses: Sequence[float], heights: HeightVector) -> float:
    loads = [[] for _ in range(heights.L)]
    for u, j in enumerate(leaf_of):
        loads[j].append(masses[u])
    return math.fsum(abs(t - math.fsum(m)) for t, m in zip(heights.targets, loads))


def run_dp(disc: DiscretizedInstance, heights: HeightVector,
           state_cap: int | None = None) -> DpResult:
    """Assignment of units to leaves minimizing the rounded objective.

    Ties between terminal states go to the lexicographically largest load
    vector, i.e. more mass on the shallower leaves listed first.
    Reconstruction prefers the smallest leaf index and puts zero-weight units
    on the last leaf.
    """
    cap = default_state_cap() if state_cap is None else state_cap
    L = heights.L
    K = disc.K
    W = disc.W
    if L == 1:
        obj = abs(1.0 - disc.delta * W)
        return DpResult((0,) * K, obj, (), (1,) * (K + 1))

    dims = L - 1
    base = W + 1
    strides = [base ** (dims - 1 - j) for j in range(dims)]
    packed_fits = base ** dims < PACK_LIMIT

    layers = _reachable_layers(disc.weights, strides, packed_fits, cap, disc.epsilon, heights)
    terminal_states = layers[-1]
    coords = _unpack(terminal_states, strides, base, packed_fits)

    targets = np.array(heights.targets)
    last = W - coords.sum(axis=1)
    obj = (np.abs(targets[:-1] - disc.delta * coords).sum(axis=1)
           + np.abs(targets[-1] - disc.delta * last))
    best = obj.min()
    # states are sorted, so the last near-minimal one is lexicographically largest
    pick = int(np.flatnonzero(obj <= best + OBJ_TIE_TOL)[-1])
    terminal = tuple(int(a) for a in coords[pick])
    state = int(terminal_states[pick])

    leaf_of = [0] * K
    for t in range(K, 0, -1):
        w = disc.weights[t - 1]
        prev = layers[t - 1]
        leaf = L - 1
        if w:
            for j in range(dims):
                cand = state - w * strides[j]
                if (state // strides[j]) % base >= w and _contains(prev, cand, packed_fits):
                    leaf = j
                    state = cand
                    break
        leaf_of[t - 1] = leaf
    assert state == 0, "DP reconstruction did not return to the origin"

    objective = rounded_objective(terminal, heights, disc)
    sizes = tuple(len(layer) for layer in layers)
    result = DpResult(tuple(leaf_of), objective, terminal, sizes)
    gap = abs(true_objective(result.leaf_of, disc.masses, heights) - objective)
    assert gap <= disc.rounding_loss + 1e-12, f"rounding gap {gap} exceeds rounding loss"
    return result


def _reachable_layers(weights, strides, packed_fits, cap, epsilon, heights):
    if packed_fits:
        layers = [np.zeros(1, dtype=np.int64)]
        for w in weights:
            cur = layers[-1]
            if w == 0:
                layers.append(cur)
                continue
            if len(cur) * (len(strides) + 1) > 4 * cap:
                raise StateCapExceeded(len(cur) * (len(strides) + 1), cap, epsilon, heights)
            parts = [cur] + [cur + np.int64(w * s) for s in strides]
            nxt = np.unique(np.concatenate(parts))
            if len(nxt) > cap:
                raise StateCapExceeded(len(nxt), cap, epsilon, heights)
            layers.append(nxt)
        return layers

    # packed states overflow int64: same scheme with Python ints
    layers = [[0]]
    for w in weights:
        cur = layers[-1]
        if w == 0:
            layers.append(cur)
            continue
        nxt = set(cur)
        for s in strides:
            nxt.update(x + w * s for x in cur)
            if len(nxt) > cap:
                raise StateCapExceeded(len(nxt), cap, epsilon, heights)
        layers.append(sorted(nxt))
    return layers


def _unpack(states, strides, base, packed_fits) -> np.ndarray:
    if packed_fits:
        states = np.asarray(states, dtype=np.int64)
        return np.stack([(states // s) % base for s in strides], axis=1)
    return np.array([[(x // s) % base for s in strides] for x in states], dtype=np.int64)


def _contains(layer, value: int, packed_fits: bool) -> bool:
    if value < 0:
        return False
    if packed_fits:
        k = int(np.searchsorted(layer, value))
        return k < len(layer) and int(layer[k]) == value
    k = bisect.bisect_left(layer, value)
    return k < len(layer) and layer[k] == value
