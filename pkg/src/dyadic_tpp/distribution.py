"""Input distributions, small/large classification and instance assumptions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

SUM_TOL = 1e-9


@dataclass(frozen=True)
class TokenDistribution:
    """Categorical distribution sorted by non-increasing probability.

    ``token_ids[i]`` is the original index of the token now at position ``i``.
    ``dropped`` lists original indices that had zero mass.
    """

    probs: tuple[float, ...]
    token_ids: tuple[int, ...]
    dropped: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return len(self.probs)

    def position_of(self) -> dict[int, int]:
        return {tid: pos for pos, tid in enumerate(self.token_ids)}


def load_distribution(raw: Sequence[float], normalize: bool = False) -> TokenDistribution:
    values = [float(x) for x in raw]
    if not values:
        raise ValueError("empty distribution")
    for i, x in enumerate(values):
        if not math.isfinite(x) or x < 0:
            raise ValueError(f"invalid probability at index {i}: {x!r}")
    total = math.fsum(values)
    if total <= 0:
        raise ValueError("distribution has zero total mass")
    if abs(total - 1.0) > SUM_TOL:
        if not normalize:
            raise ValueError(f"probabilities sum to {total!r}, not 1 (pass normalize=True)")
        values = [x / total for x in values]

    kept = [i for i, x in enumerate(values) if x > 0]
    dropped = tuple(i for i, x in enumerate(values) if x == 0)
    # stable: equal masses keep input order
    order = sorted(kept, key=lambda i: -values[i])
    return TokenDistribution(
        probs=tuple(values[i] for i in order),
        token_ids=tuple(order),
        dropped=dropped,
    )


def load_distribution_json(text: str) -> TokenDistribution:
    """Parse ``{"probs": [...], "normalize": bool}``."""
    data = json.loads(text)
    if not isinstance(data, dict) or "probs" not in data:
        raise ValueError('distribution JSON must be an object with a "probs" array')
    probs = data["probs"]
    if not isinstance(probs, list):
        raise ValueError('"probs" must be an array')
    return load_distribution(probs, normalize=bool(data.get("normalize", False)))


@dataclass(frozen=True)
class Classification:
    theta: float
    small_indices: tuple[int, ...]
    large_indices: tuple[int, ...]


def _check_params(rate: float, epsilon: float) -> None:
    if not rate > 0:
        raise ValueError(f"rate floor must be positive, got {rate!r}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")


def threshold(rate: float, epsilon: float) -> float:
    return epsilon * 2.0 ** (-rate / epsilon)


def classify(dist: TokenDistribution, rate: float, epsilon: float) -> Classification:
    _check_params(rate, epsilon)
    theta = threshold(rate, epsilon)
    small = tuple(i for i, p in enumerate(dist.probs) if p <= theta)
    large = tuple(i for i, p in enumerate(dist.probs) if p > theta)
    return Classification(theta=theta, small_indices=small, large_indices=large)


def truncation_depth(epsilon: float) -> int:
    """Smallest d >= 1 with 2^-d <= epsilon."""
    d = 1
    while 2.0 ** -d > epsilon:
        d += 1
    return d


def subtree_exponent(rate: float, epsilon: float) -> int:
    # R/eps is meant to be an integer; absorb float noise such as 0.3/0.1
    q = rate / epsilon
    k = math.ceil(q)
    if k - q > 1 - 1e-9:
        k -= 1
    return max(k, 1)


@dataclass(frozen=True)
class ProblemInstance:
    dist: TokenDistribution
    rate: float
    epsilon: float
    d: int
    subtree_exp: int
    classification: Classification

    @property
    def T_L(self) -> int:
        return 2 ** self.subtree_exp


def make_instance(dist: TokenDistribution, rate: float, epsilon: float) -> ProblemInstance:
    _check_params(rate, epsilon)
    return ProblemInstance(
        dist=dist,
        rate=float(rate),
        epsilon=float(epsilon),
        d=truncation_depth(epsilon),
        subtree_exp=subtree_exponent(rate, epsilon),
        classification=classify(dist, rate, epsilon),
    )


@dataclass(frozen=True)
class AssumptionCheck:
    number: int
    description: str
    passed: bool
    observed: float
    required: float


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def describe(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed else "FAILED"
            lines.append(
                f"assumption {c.number} ({c.description}): {status}"
                f" [observed {c.observed:g}, required {c.required:g}]"
            )
        return "\n".join(lines)


def check_assumptions(inst: ProblemInstance) -> AssumptionReport:
    n = inst.dist.n
    n_small = len(inst.classification.small_indices)
    inv_eps = math.ceil(1 / inst.epsilon - 1e-12)
    need_small = inst.T_L + inv_eps
    checks = (
        AssumptionCheck(1, "n >= 2^R", n >= 2.0 ** inst.rate, n, 2.0 ** inst.rate),
        AssumptionCheck(
            2, "|small| >= T_L + ceil(1/eps)", n_small >= need_small, n_small, need_small
        ),
        AssumptionCheck(3, "T_L >= ceil(1/eps)", inst.T_L >= inv_eps, inst.T_L, inv_eps),
    )
    return AssumptionReport(checks)
