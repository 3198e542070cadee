"""Genetic search over encoded policies (tournament selection, two-point crossover, Gaussian mutation)."""

from __future__ import annotations

import csv
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..policy import GENE_DOMAINS, Policy, PolicyVector, decode_policy, encode_policy, repair_vector
from .ridge import random_vector

log = logging.getLogger(__name__)

Fitness = Callable[[PolicyVector], float]


@dataclass(frozen=True)
class GAParams:
    pool_size: int = 24
    tournament_size: int = 3
    crossover_prob: float = 0.9
    mutation_prob: float = 0.2
    sigma_frac: float = 0.2  # Gaussian sigma as a fraction of each gene's range
    mutation_sigma: Optional[Tuple[float, ...]] = None  # explicit per-gene sigma overrides sigma_frac
    iterations: int = 50
    elitism: int = 2
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        problems = []
        if self.pool_size < 2:
            problems.append("pool_size must be >= 2")
        if not 1 <= self.tournament_size <= self.pool_size:
            problems.append("tournament_size must lie in 1..pool_size")
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism <= self.pool_size:
            problems.append("elitism must lie in 0..pool_size")
        if self.iterations < 0:
            problems.append("iterations must be >= 0")
        if self.mutation_sigma is not None and len(self.mutation_sigma) != len(GENE_DOMAINS):
            problems.append("mutation_sigma needs one entry per gene")
        if problems:
            raise ValueError("; ".join(problems))

    def sigmas(self) -> Tuple[float, ...]:
        if self.mutation_sigma is not None:
            return tuple(self.mutation_sigma)
        return tuple(self.sigma_frac * d.span for d in GENE_DOMAINS)


def tournament_select(pool: Sequence[PolicyVector], fitness: Sequence[float], t: int,
                      rng: random.Random) -> PolicyVector:
    """Best of ``t`` distinct random entrants; ties go to the lower pool index."""
    if not 1 <= t <= len(pool):
        raise ValueError("tournament size must lie in 1..len(pool)")
    entrants = rng.sample(range(len(pool)), t)
    winner = min(entrants, key=lambda i: (-fitness[i], i))
    return pool[winner]


def two_point_crossover(a: Sequence[float], b: Sequence[float], rng: Optional[random.Random] = None,
                        cuts: Optional[Tuple[int, int]] = None) -> List[float]:
    """``a[:p1] + b[p1:p2] + a[p2:]`` with ``0 < p1 < p2 < len``."""
    a = list(a.genes if isinstance(a, PolicyVector) else a)
    b = list(b.genes if isinstance(b, PolicyVector) else b)
    if len(a) != len(b):
        raise ValueError("parents must have equal length")
    if len(a) < 3:
        raise ValueError("two-point crossover needs at least 3 genes")
    if cuts is None:
        if rng is None:
            raise ValueError("need rng or explicit cuts")
        p1, p2 = sorted(rng.sample(range(1, len(a)), 2))
    else:
        p1, p2 = cuts
        if not 0 < p1 < p2 < len(a):
            raise ValueError("cuts must satisfy 0 < p1 < p2 < len")
    return a[:p1] + b[p1:p2] + a[p2:]


def gaussian_mutate(v: PolicyVector | Sequence[float], prob: float, sigmas: Sequence[float],
                    rng: random.Random) -> PolicyVector:
    """Per gene, with probability ``prob`` add N(0, sigma); then repair into the domain."""
    genes = list(v.genes if isinstance(v, PolicyVector) else v)
    for i, s in enumerate(sigmas):
        if rng.random() < prob and s > 0:
            genes[i] += rng.gauss(0.0, s)
    return repair_vector(genes)


@dataclass
class OptimizationResult:
    best_policy: Policy
    best_vector: PolicyVector
    best_fitness: float
    history: List[Dict[str, float]] = field(default_factory=list)  # iteration, mean, max
    evaluations: int = 0

    @property
    def improvement(self) -> float:
        """Relative gain of the final pool mean over the initial pool mean."""
        first, last = self.history[0]["mean"], self.history[-1]["mean"]
        if first == 0:
            return 0.0 if last == first else float("inf")
        return (last - first) / abs(first)

    def history_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "mean_f", "max_f"])
            for row in self.history:
                w.writerow([row["iteration"], repr(row["mean"]), repr(row["max"])])


class _Evaluator:
    """Memoised fitness calls; concurrent when ``jobs > 1`` with results kept in input order."""

    def __init__(self, fn: Fitness, jobs: int = 1):
        self.fn = fn
        self.jobs = jobs
        self.cache: Dict[Tuple[float, ...], float] = {}
        self.calls = 0

    def __call__(self, pool: Sequence[PolicyVector]) -> List[float]:
        todo = []
        for v in pool:
            if v.genes not in self.cache and v.genes not in {u.genes for u in todo}:
                todo.append(v)
        if todo:
            if self.jobs > 1:
                with ThreadPoolExecutor(max_workers=self.jobs) as ex:
                    scores = list(ex.map(self.fn, todo))
            else:
                scores = [self.fn(v) for v in todo]
            self.calls += len(todo)
            for v, s in zip(todo, scores):
                self.cache[v.genes] = float(s)
        return [self.cache[v.genes] for v in pool]


def initial_pool(historical: Sequence[Policy | PolicyVector], size: int, rng: random.Random) -> List[PolicyVector]:
    pool = [h if isinstance(h, PolicyVector) else encode_policy(h) for h in historical]
    if len(pool) > size:
        raise ValueError(f"{len(pool)} historical policies exceed pool size {size}")
    while len(pool) < size:
        pool.append(repair_vector(random_vector(rng).genes))
    return pool


def _record(history: List[Dict[str, float]], it: int, scores: Sequence[float]) -> None:
    history.append({"iteration": it, "mean": sum(scores) / len(scores), "max": max(scores)})


def poa_optimize(historical: Sequence[Policy | PolicyVector], fitness: Fitness,
                 params: GAParams = GAParams()) -> OptimizationResult:
    """Evolve a policy pool and return the best policy seen.

    The pool starts from ``historical`` and is topped up with random valid
    vectors.  Each iteration keeps the ``elitism`` best, fills the rest with
    mutated two-point-crossover children of tournament winners, and logs the
    pool mean and max.
    """
    rng = random.Random(params.seed)
    evaluate = _Evaluator(fitness, params.jobs)
    sigmas = params.sigmas()
    pool = initial_pool(historical, params.pool_size, rng)
    scores = evaluate(pool)
    history: List[Dict[str, float]] = []
    _record(history, 0, scores)
    best_i = min(range(len(pool)), key=lambda i: (-scores[i], i))
    best_v, best_f = pool[best_i], scores[best_i]

    for it in range(1, params.iterations + 1):
        order = sorted(range(len(pool)), key=lambda i: (-scores[i], i))
        nxt = [pool[i] for i in order[:params.elitism]]
        while len(nxt) < params.pool_size:
            a = tournament_select(pool, scores, params.tournament_size, rng)
            b = tournament_select(pool, scores, params.tournament_size, rng)
            if rng.random() < params.crossover_prob:
                cuts = tuple(sorted(rng.sample(range(1, len(a)), 2)))
                kids = [two_point_crossover(a, b, cuts=cuts), two_point_crossover(b, a, cuts=cuts)]
            else:
                kids = [list(a.genes), list(b.genes)]
            for kid in kids:
                if len(nxt) < params.pool_size:
                    nxt.append(gaussian_mutate(kid, params.mutation_prob, sigmas, rng))
        pool = nxt
        scores = evaluate(pool)
        _record(history, it, scores)
        i = min(range(len(pool)), key=lambda j: (-scores[j], j))
        if scores[i] > best_f:
            best_v, best_f = pool[i], scores[i]
        log.debug("iteration %d: mean %.4f max %.4f", it, history[-1]["mean"], history[-1]["max"])

    return OptimizationResult(decode_policy(best_v), best_v, best_f, history, evaluate.calls)


def distance_landscape(target: PolicyVector) -> Fitness:
    """Negative squared range-normalised distance to ``target``; its maximum 0 sits at ``target``."""
    spans = [d.span or 1.0 for d in GENE_DOMAINS]

    def fitness(v: PolicyVector) -> float:
        return -sum(((g - t) / s) ** 2 for g, t, s in zip(v.genes, target.genes, spans))

    return fitness
