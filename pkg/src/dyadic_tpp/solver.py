"""End-to-end approximation scheme, exact oracle and solution verification."""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment_dp import DiscretizedInstance, discretize, run_dp
from .blocking import AtomicUnit, build_atomic_units, unpack
from .distribution import (
    AssumptionReport,
    ProblemInstance,
    TokenDistribution,
    check_assumptions,
)
from .transform import RepairError, repair, seed, select_seeds
from .tree import RATE_TOL, HeightVector, Partition, divergence, enumerate_height_vectors, kraft_check, rate

log = logging.getLogger(__name__)

DIRECT = "direct"
REPAIRED = "repaired"
ORACLE_MAX_N = 10
ORACLE_MAX_DEPTH = 4


class AssumptionError(ValueError):
    def __init__(self, report: AssumptionReport):
        self.report = report
        names = ", ".join(f"assumption {c.number} ({c.description})" for c in report.failures)
        super().__init__(f"instance violates {names}\n{report.describe()}")


class NoCandidateError(RuntimeError):
    def __init__(self, reasons: list[tuple[list[int], str]]):
        self.reasons = reasons
        lines = [f"  {h}: {why}" for h, why in reasons]
        super().__init__("no candidate tree was accepted:\n" + "\n".join(lines))


@dataclass(frozen=True)
class Solution:
    partition: Partition
    heights: HeightVector
    divergence: float
    rate: float
    branch: str
    candidate_count: int
    source_heights: HeightVector
    token_ids: tuple[int, ...]
    frontier_max: int = 0
    elapsed: float = 0.0
    discarded: tuple[tuple[tuple[int, ...], str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "heights": self.heights.to_list(),
            "partition": [sorted(self.token_ids[i] for i in s) for s in self.partition.sets],
            "divergence": self.divergence,
            "rate": self.rate,
            "branch": self.branch,
            "candidate_count": self.candidate_count,
            "source_heights": self.source_heights.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def solution_from_dict(data: dict, dist: TokenDistribution) -> Solution:
    """Rebuild a Solution from its JSON form against the same distribution."""
    pos = dist.position_of()
    try:
        sets = [[pos[t] for t in leaf] for leaf in data["partition"]]
    except KeyError as exc:
        raise ValueError(f"solution mentions token {exc.args[0]} outside the distribution") from None
    heights = HeightVector(data["heights"])
    source = HeightVector(data.get("source_heights", data["heights"]))
    return Solution(
        partition=Partition.from_sets(sets, dist.probs),
        heights=heights,
        divergence=float(data["divergence"]),
        rate=float(data["rate"]),
        branch=data.get("branch", DIRECT),
        candidate_count=int(data.get("candidate_count", 0)),
        source_heights=source,
        token_ids=dist.token_ids,
    )


@dataclass(frozen=True)
class _Candidate:
    index: int
    heights: HeightVector
    partition: Partition | None = None
    final_heights: HeightVector | None = None
    divergence: float = math.inf
    branch: str = ""
    reason: str = ""
    frontier_max: int = 0


def _evaluate(inst: ProblemInstance, units: list[AtomicUnit], disc: DiscretizedInstance,
              index: int, heights: HeightVector, has_depth_d: bool,
              state_cap: int | None) -> _Candidate:
    L = heights.L
    n_small = len(inst.classification.small_indices)
    if L > inst.dist.n:
        return _Candidate(index, heights, reason=f"{L} leaves exceed support size {inst.dist.n}")
    if rate(heights) >= inst.rate - RATE_TOL:
        branch = DIRECT
    elif has_depth_d:
        branch = REPAIRED
    else:
        return _Candidate(index, heights, reason="rate below floor and no leaf at truncation depth")
    need = L + (inst.T_L if branch == REPAIRED else 0)
    if branch == REPAIRED and n_small < need:
        return _Candidate(index, heights, reason=f"needs {need} small tokens, have {n_small}")

    dp = run_dp(disc, heights, state_cap)
    part = unpack(dp.leaf_of, units, L, inst.dist.probs)
    if n_small >= need:
        seeds = select_seeds(inst, L, with_reserve=branch == REPAIRED)
        part = seed(part, heights, seeds, inst.dist)
    elif not part.surjective:
        # only reachable when the small-token assumption fails
        return _Candidate(index, heights, reason=f"empty leaves and only {n_small} small tokens "
                          f"to seed {L} leaves", frontier_max=dp.frontier_max)
    final = heights
    if branch == REPAIRED:
        try:
            part, final, _ = repair(part, heights, seeds.repair_reserve, inst)
        except RepairError as exc:
            return _Candidate(index, heights, reason=f"repair failed: {exc}",
                              frontier_max=dp.frontier_max)
    return _Candidate(index, heights, part, final, divergence(part.masses, final), branch,
                      frontier_max=dp.frontier_max)


def _evaluate_star(args):
    return _evaluate(*args)


def solve(inst: ProblemInstance, *, strict: bool = True, jobs: int = 1,
          state_cap: int | None = None) -> Solution:
    """Best feasible candidate over all trees of depth at most ``inst.d``.

    With ``strict`` an assumption failure raises AssumptionError; otherwise it
    is logged and the search runs without the approximation guarantee.
    """
    started = time.perf_counter()
    report = check_assumptions(inst)
    if not report.passed:
        if strict:
            raise AssumptionError(report)
        log.warning("instance assumptions fail; guarantee does not apply\n%s", report.describe())

    units = build_atomic_units(inst.dist, inst.epsilon)
    disc = discretize(units, inst.epsilon)
    candidates = enumerate_height_vectors(inst.d)
    tasks = [(inst, units, disc, k, h, flag, state_cap) for k, (h, flag) in enumerate(candidates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_star, tasks))
    else:
        results = [_evaluate(*t) for t in tasks]

    accepted = [c for c in results if c.partition is not None]
    discarded = tuple((c.heights.depths, c.reason) for c in results if c.partition is None)
    if not accepted:
        raise NoCandidateError([(list(h), why) for h, why in discarded])
    # enumeration index breaks ties, so the winner does not depend on scheduling
    best = min(accepted, key=lambda c: (c.divergence, c.index))
    return Solution(
        partition=best.partition,
        heights=best.final_heights,
        divergence=best.divergence,
        rate=rate(best.final_heights),
        branch=best.branch,
        candidate_count=len(candidates),
        source_heights=best.heights,
        token_ids=inst.dist.token_ids,
        frontier_max=max(c.frontier_max for c in results),
        elapsed=time.perf_counter() - started,
        discarded=discarded,
    )


@dataclass(frozen=True)
class OracleResult:
    opt_divergence: float
    opt_partition: Partition
    opt_heights: HeightVector
    search_space_size: int
    token_ids: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        ids = self.token_ids or tuple(range(sum(len(s) for s in self.opt_partition.sets)))
        return {
            "opt_divergence": self.opt_divergence,
            "opt_heights": self.opt_heights.to_list(),
            "opt_partition": [sorted(ids[i] for i in s) for s in self.opt_partition.sets],
            "search_space_size": self.search_space_size,
        }


def _kraft_vectors(max_depth: int) -> list[tuple[int, ...]]:
    # count vectors (c_1..c_D) checked directly against Kraft equality
    found = [(0,)]
    ranges = [range(0, 2 ** h + 1) for h in range(1, max_depth + 1)]
    for counts in itertools.product(*ranges):
        if sum(c << (max_depth - h) for h, c in enumerate(counts, 1)) == 1 << max_depth:
            found.append(tuple(h for h, c in enumerate(counts, 1) for _ in range(c)))
    return sorted(found)


def _set_partitions(n: int):
    """Restricted growth strings: block label of each element, labels in first-use order."""
    labels = [0] * n

    def rec(i: int, used: int):
        if i == n:
            yield labels[:], used
            return
        for b in range(used + 1):
            labels[i] = b
            yield from rec(i + 1, max(used, b + 1))

    if n == 0:
        return
    labels[0] = 0
    yield from rec(1, 1)


def brute_force(dist: TokenDistribution, rate_floor: float, max_depth: int = ORACLE_MAX_DEPTH,
                *, forced_heights: Sequence[int] | None = None) -> OracleResult:
    """Exact minimum divergence over trees of depth <= max_depth with rate >= floor.

    For every set partition of the tokens into L blocks, the blocks are
    matched to leaves by sorting both block masses and dyadic targets in
    decreasing order, which is optimal for an L1 matching cost.
    """
    n = dist.n
    if n > ORACLE_MAX_N or not 0 <= max_depth <= ORACLE_MAX_DEPTH:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_N} and depth <= {ORACLE_MAX_DEPTH}")
    if forced_heights is not None:
        vectors = [tuple(sorted(forced_heights))]
        if not kraft_check(vectors[0]):
            raise ValueError(f"forced heights {list(forced_heights)} violate Kraft equality")
    else:
        vectors = [h for h in _kraft_vectors(max_depth)
                   if len(h) <= n and math.fsum(x * 2.0 ** -x for x in h) >= rate_floor - RATE_TOL]
    if not vectors:
        raise ValueError("no feasible height vector within the oracle's depth limit")

    probs = np.array(dist.probs)
    by_blocks: dict[int, tuple[list[list[int]], np.ndarray]] = {}
    wanted = {len(h) for h in vectors}
    for labels, used in _set_partitions(n):
        if used not in wanted:
            continue
        masses = np.bincount(labels, weights=probs, minlength=used)
        lst, rows = by_blocks.setdefault(used, ([], []))
        lst.append(labels)
        rows.append(masses)
    space = 0
    best = None
    for h in vectors:
        labels_list, rows = by_blocks.get(len(h), ([], []))
        if not labels_list:
            continue
        mat = np.array(rows)
        order = np.argsort(-mat, axis=1, kind="stable")
        sorted_masses = np.take_along_axis(mat, order, axis=1)
        targets = 2.0 ** -np.array(h, dtype=float)  # h ascending -> targets descending
        scores = np.abs(sorted_masses - targets).sum(axis=1)
        space += len(labels_list)
        k = int(np.argmin(scores))
        score = float(scores[k])
        if best is None or score < best[0] - 1e-12:
            sets = [[] for _ in h]
            for i, b in enumerate(labels_list[k]):
                sets[int(np.flatnonzero(order[k] == b)[0])].append(i)
            part = Partition.from_sets(sets, dist.probs)
            best = (divergence(part.masses, h), part, HeightVector(h))
    if best is None:
        raise ValueError("no feasible solution within the oracle's search space")
    return OracleResult(best[0], best[1], best[2], space, dist.token_ids)


@dataclass(frozen=True)
class VerificationReport:
    checks: dict[str, bool]
    details: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks, "details": self.details}


def verify(sol: Solution, inst: ProblemInstance) -> VerificationReport:
    """Recompute every feasibility property of ``sol`` from scratch."""
    probs = inst.dist.probs
    n = inst.dist.n
    depths = sol.heights.depths
    sets = sol.partition.sets
    masses = [math.fsum(probs[i] for i in s if 0 <= i < n) for s in sets]
    flat = [i for s in sets for i in s]
    recomputed_rate = math.fsum(h * 2.0 ** -h for h in depths)
    recomputed_div = (math.fsum(abs(2.0 ** -h - m) for h, m in zip(depths, masses))
                      if len(sets) == len(depths) else math.inf)
    top = max(depths)
    checks = {
        "kraft": sum(1 << (top - h) for h in depths) == 1 << top,
        "leaf_count": len(sets) == len(depths),
        "rate": recomputed_rate >= inst.rate - RATE_TOL and abs(recomputed_rate - sol.rate) <= 1e-12,
        "divergence": abs(recomputed_div - sol.divergence) <= 1e-12,
        "surjective": all(len(s) > 0 for s in sets),
        "disjoint": len(flat) == len(set(flat)),
        "coverage": set(flat) == set(range(n)),
    }
    details = {
        "rate": f"recomputed {recomputed_rate!r}, reported {sol.rate!r}, floor {inst.rate!r}",
        "divergence": f"recomputed {recomputed_div!r}, reported {sol.divergence!r}",
        "kraft": f"units {sum(1 << (top - h) for h in depths)} of {1 << top}",
    }
    return VerificationReport(checks, details)
