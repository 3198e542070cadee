"""Particle swarm comparator over the same gene space and repair rule as the GA."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import List, Optional

from ..policy import GENE_DOMAINS, PolicyVector, decode_policy, repair_vector
from .ga import Fitness, OptimizationResult, _Evaluator, _record
from .ridge import random_vector


@dataclass(frozen=True)
class PSOParams:
    swarm_size: int = 24
    iterations: int = 50
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    vmax_frac: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def pso_optimize(fitness: Fitness, params: PSOParams = PSOParams()) -> OptimizationResult:
    """Continuous positions inside the gene box; every evaluation uses the repaired vector."""
    rng = random.Random(params.seed)
    evaluate = _Evaluator(fitness)
    lows = [float(d.low) for d in GENE_DOMAINS]
    highs = [float(d.high) for d in GENE_DOMAINS]
    vmax = [params.vmax_frac * (h - l) for l, h in zip(lows, highs)]

    pos: List[List[float]] = [list(random_vector(rng).genes) for _ in range(params.swarm_size)]
    vel = [[rng.uniform(-vm, vm) for vm in vmax] for _ in pos]
    scores = evaluate([repair_vector(x) for x in pos])
    pbest = [list(x) for x in pos]
    pbest_f = list(scores)
    g = min(range(len(pos)), key=lambda i: (-scores[i], i))
    gbest, gbest_f = list(pos[g]), scores[g]
    history: List[dict] = []
    _record(history, 0, scores)

    for it in range(1, params.iterations + 1):
        for i, x in enumerate(pos):
            for d in range(len(x)):
                r1, r2 = rng.random(), rng.random()
                v = (params.inertia * vel[i][d]
                     + params.cognitive * r1 * (pbest[i][d] - x[d])
                     + params.social * r2 * (gbest[d] - x[d]))
                vel[i][d] = max(-vmax[d], min(vmax[d], v))
                x[d] = max(lows[d], min(highs[d], x[d] + vel[i][d]))
        scores = evaluate([repair_vector(x) for x in pos])
        for i, s in enumerate(scores):
            if s > pbest_f[i]:
                pbest[i], pbest_f[i] = list(pos[i]), s
            if s > gbest_f:
                gbest, gbest_f = list(pos[i]), s
        _record(history, it, scores)

    best = repair_vector(gbest)
    return OptimizationResult(decode_policy(best), best, gbest_f, history, evaluate.calls)
