"""Policy evaluation metrics and the weighted aggregate objective."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Set

import numpy as np

from .engine import VULNERABLE_FRACTION, AllocationOutcome, designate_vulnerable
from .scenario import HouseResource, ParticipantProfile

METRIC_NAMES = ("avg_size", "avg_wt", "sw", "var_size", "rop", "co_gini", "f_gap")
# column order for tables: satisfaction block, then fairness block
SATISFACTION_METRICS = ("avg_size", "avg_wt", "sw")
FAIRNESS_METRICS = ("var_size", "rop", "co_gini", "f_gap")

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"
DIRECTIONS: Dict[str, str] = {
    "avg_size": HIGHER_BETTER,
    "avg_wt": LOWER_BETTER,
    "sw": HIGHER_BETTER,
    "var_size": LOWER_BETTER,
    "rop": LOWER_BETTER,
    "co_gini": LOWER_BETTER,
    "f_gap": HIGHER_BETTER,
}


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    avg_size: float
    avg_wt: float
    sw: float
    var_size: float
    rop: int
    co_gini: float
    f_gap: float
    n: int
    allocated_count: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def values(self) -> Dict[str, float]:
        return {k: float(getattr(self, k)) for k in METRIC_NAMES}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "MetricsReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class MetricWeights:
    w: Dict[str, float]
    direction: Dict[str, str] = field(default_factory=lambda: dict(DIRECTIONS))

    def __post_init__(self) -> None:
        missing = [m for m in METRIC_NAMES if m not in self.w or m not in self.direction]
        if missing:
            raise MetricsError(f"weights missing metrics: {', '.join(missing)}")

    @property
    def total(self) -> float:
        return sum(self.w[m] for m in METRIC_NAMES)


SATISFACTION_WEIGHTS = MetricWeights(
    {"avg_size": 5, "avg_wt": 5, "sw": 10, "var_size": 1, "rop": 5, "co_gini": 1, "f_gap": 1})
FAIRNESS_WEIGHTS = MetricWeights(
    {"avg_size": 1, "avg_wt": 1, "sw": 5, "var_size": 10, "rop": 10, "co_gini": 10, "f_gap": 5})
WEIGHT_PRESETS = {"satisfaction": SATISFACTION_WEIGHTS, "fairness": FAIRNESS_WEIGHTS}


def rop(outcome: AllocationOutcome, participants: Sequence[ParticipantProfile],
        resources: Mapping[int, HouseResource]) -> int:
    """Ordered pairs where the larger family got the smaller house."""
    family = {p.id: p.family_size for p in participants}
    held = sorted((family[pid], resources[rid].size) for pid, rid in outcome.allocated.items())
    # sort by family, then count pairs (i, j) with f_i > f_j and s_i < s_j
    count = 0
    for i, (fi, si) in enumerate(held):
        for fj, sj in held[:i]:
            if fi > fj and si < sj:
                count += 1
    return count


def gini(values: Iterable[float]) -> float:
    """Mean absolute pairwise difference over twice the mean."""
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        raise MetricsError("gini needs at least one value")
    if np.any(x < 0):
        raise MetricsError("gini expects non-negative values")
    total = x.sum()
    if total == 0:
        return 0.0
    x = np.sort(x)
    n = x.size
    # sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n + 1) x_(i) for sorted x
    ranks = 2 * np.arange(n) - n + 1
    return float(2 * np.dot(ranks, x) / (2 * n * total))


def group_gap(outcome: AllocationOutcome, vulnerable: Iterable[int], how: str = "mean") -> float:
    vul = set(vulnerable)
    v = [u for pid, u in outcome.satisfaction.items() if pid in vul]
    nv = [u for pid, u in outcome.satisfaction.items() if pid not in vul]
    if not v or not nv:
        raise MetricsError("undefined gap: both groups must be non-empty")
    if how == "mean":
        return sum(v) / len(v) - sum(nv) / len(nv)
    if how == "sum":
        return sum(v) - sum(nv)
    raise MetricsError(f"unknown gap aggregation {how!r}")


def per_capita_sizes(outcome: AllocationOutcome, participants: Sequence[ParticipantProfile],
                     resources: Mapping[int, HouseResource]) -> Dict[int, float]:
    out = {}
    for p in participants:
        rid = outcome.assignment.get(p.id)
        out[p.id] = resources[rid].size / p.family_size if rid is not None else 0.0
    return out


def compute_metrics(outcome: AllocationOutcome, participants: Sequence[ParticipantProfile],
                    resources: Mapping[int, HouseResource] | Sequence[HouseResource],
                    vulnerable: Optional[Set[int]] = None, gap: str = "mean") -> MetricsReport:
    """All seven metrics over every participant (unallocated ones count as 0).

    ``vulnerable`` defaults to the bottom 20% per-capita budgets of the whole
    population.  When either group is empty the gap is reported as 0.
    """
    if not isinstance(resources, Mapping):
        resources = {r.id: r for r in resources}
    if vulnerable is None:
        vulnerable = designate_vulnerable(participants, "VFA", VULNERABLE_FRACTION)
    n = len(participants)
    sizes = per_capita_sizes(outcome, participants, resources)
    arr = np.array([sizes[p.id] for p in participants], dtype=float)
    try:
        f_gap = group_gap(outcome, vulnerable, gap)
    except MetricsError:
        f_gap = 0.0
    return MetricsReport(
        avg_size=float(arr.mean()) if n else 0.0,
        avg_wt=sum(outcome.wait_rounds.get(p.id, 0) for p in participants) / n if n else 0.0,
        sw=float(sum(outcome.satisfaction.get(p.id, 0.0) for p in participants)),
        var_size=float(arr.var()) if n else 0.0,
        rop=rop(outcome, participants, resources),
        co_gini=gini(arr) if n else 0.0,
        f_gap=float(f_gap),
        n=n,
        allocated_count=len(outcome.allocated),
    )


def normalization_stats(reports: Sequence[MetricsReport]) -> Dict[str, tuple]:
    """Per-metric ``(min, max)`` over a pool of evaluated policies."""
    if not reports:
        raise MetricsError("need at least one report")
    return {m: (min(getattr(r, m) for r in reports), max(getattr(r, m) for r in reports)) for m in METRIC_NAMES}


def aggregate_f(report: MetricsReport | Mapping[str, float], weights: MetricWeights,
                stats: Mapping[str, tuple]) -> float:
    """Weighted sum of min-max normalised metrics, lower-better ones inverted."""
    values = report.values() if isinstance(report, MetricsReport) else dict(report)
    unknown = sorted(set(values) - set(METRIC_NAMES))
    if unknown:
        raise MetricsError(f"unknown metric(s): {', '.join(unknown)}")
    total = 0.0
    for m in METRIC_NAMES:
        if m not in values or m not in stats:
            raise MetricsError(f"missing metric {m!r}")
        lo, hi = stats[m]
        if math.isclose(hi, lo, rel_tol=0.0, abs_tol=1e-12):
            norm = 0.5
        else:
            norm = (values[m] - lo) / (hi - lo)
            if weights.direction[m] == LOWER_BETTER:
                norm = 1.0 - norm
        total += weights.w[m] * norm
    return total
