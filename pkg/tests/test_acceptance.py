"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the "acceptance criteria" section of the pytest
terminal summary (see conftest.py).  Running this file as a script prints
them directly.
"""

import itertools
import json
import math
import random
import string
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, house, person, scenario_51_28
from allocsim.agents.base import CommunicationPlan
from allocsim.agents.llm import LlmBackend, LlmConfig
from allocsim.agents.memory import initial_memory
from allocsim.agents.prompts import TEMPLATE_IDS, parse_structured, placeholders, render_prompt
from allocsim.cli import SWEEP_GRIDS, run_command
from allocsim.engine import AllocationOutcome, audit_trace, run_simulation
from allocsim.metrics import compute_metrics, gini, rop
from allocsim.optimizer import (
    FeatureEncoder,
    GAParams,
    distance_landscape,
    exhaustive_assignment,
    fit_ridge,
    km_baseline,
    poa_optimize,
    random_vector,
    satisfaction_matrix,
    train_predictor_incremental,
)
from allocsim.policy import GENE_DOMAINS, Policy, decode_policy


def record(num, title, passed, detail):
    ACCEPTANCE[(num, title)] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] C{num} {title}: {detail}")
    assert passed, detail


# -- 1 ---------------------------------------------------------------------

def _random_outcome(rng):
    n = rng.randint(1, 50)
    people = [person(i, family=rng.randint(1, 6)) for i in range(n)]
    homes = {j: house(j, size=float(rng.choice(range(20, 121, 5)))) for j in range(n)}
    rids = list(homes)
    rng.shuffle(rids)
    assignment = {p.id: (rids[p.id] if rng.random() < 0.7 else None) for p in people}
    outcome = AllocationOutcome(assignment, {p.id: 0 for p in people}, {p.id: 0.0 for p in people}, set())
    return outcome, people, homes


def _rop_oracle(outcome, people, homes):
    count = 0
    for a in people:
        for b in people:
            ra, rb = outcome.assignment[a.id], outcome.assignment[b.id]
            if ra is None or rb is None:
                continue
            if a.family_size > b.family_size and homes[ra].size < homes[rb].size:
                count += 1
    return count


def test_c1_rop_oracle():
    rng = random.Random(1)
    cases = [_random_outcome(rng) for _ in range(200)]
    start = time.perf_counter()
    mismatches = sum(rop(o, ps, hs) != _rop_oracle(o, ps, hs) for o, ps, hs in cases)
    elapsed = time.perf_counter() - start
    record(1, "rop oracle", mismatches == 0 and elapsed < 1.0,
           f"{200 - mismatches}/200 match double loop in {elapsed:.3f}s")


# -- 2 ---------------------------------------------------------------------

def test_c2_gini():
    flat = gini([10, 10, 10, 10])
    skew = gini([0, 0, 0, 12])
    rng = random.Random(2)
    worst = 0.0
    for _ in range(100):
        x = [rng.uniform(0, 100) for _ in range(rng.randint(1, 30))]
        alpha = rng.uniform(0.01, 100)
        worst = max(worst, abs(gini([alpha * v for v in x]) - gini(x)))
    ok = abs(flat) <= 1e-9 and abs(skew - 0.75) <= 1e-9 and worst <= 1e-9
    record(2, "gini analytic", ok, f"flat={flat:.3g} skew={skew:.12g} max scale drift={worst:.2e}")


# -- 3 ---------------------------------------------------------------------

def test_c3_km_matches_exhaustive():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    exact = 0
    for _ in range(100):
        U = rng.uniform(0, 20, size=(6, 6))
        km = km_baseline(U)[1]
        brute = max(U[range(6), list(p)].sum() for p in itertools.permutations(range(6)))
        exact += km == exhaustive_assignment(U)[1]
        worst = max(worst, abs(km - brute))
    elapsed = time.perf_counter() - start
    record(3, "KM vs 720-permutation oracle", exact == 100 and worst <= 1e-9 and elapsed < 5.0,
           f"{exact}/100 equal to exhaustive, max gap to brute force {worst:.1e}, {elapsed:.2f}s")


# -- 4 ---------------------------------------------------------------------

def test_c4_km_upper_bound():
    sc = scenario_51_28(7)
    km_sw = km_baseline(satisfaction_matrix(sc))[1]
    worst = -float("inf")
    for policy in SWEEP_GRIDS["entry_resource"]():
        trace = run_simulation(sc, policy, seed=7)
        sw = compute_metrics(trace.outcome, sc.participants, sc.resources).sw
        worst = max(worst, sw)
    record(4, "KM upper bound on entry x resource grid", worst <= km_sw + 1e-9,
           f"max simulated SW {worst:.2f} <= KM SW {km_sw:.2f} over 9 policies")


# -- 5 ---------------------------------------------------------------------

def test_c5_conservation():
    rng = random.Random(5)
    failures = []
    for run in range(100):
        policy = decode_policy(random_vector(rng))
        seed = rng.randrange(10_000)
        sc = scenario_51_28(seed % 10)
        trace = run_simulation(sc, policy, seed=seed, parallel=run % 2 == 1)
        problems = audit_trace(trace)
        if problems:
            failures.append((policy.label(), seed, problems[:3]))
    record(5, "conservation suite", not failures,
           f"{100 - len(failures)}/100 runs with zero violations" + (f"; first: {failures[0]}" if failures else ""))


# -- 6 ---------------------------------------------------------------------

def test_c6_waitlist_trend():
    start = time.perf_counter()
    means = {}
    for k, c in ((1, 1.2), (3, 1.8)):
        waits = []
        for seed in range(5):
            sc = scenario_51_28(seed)
            policy = Policy(m=3, entry_rule="select", sort_rule="FIFO", k=k, c=c, resource_rule="size")
            trace = run_simulation(sc, policy, seed=seed)
            waits.append(compute_metrics(trace.outcome, sc.participants, sc.resources).avg_wt)
        means[(k, c)] = sum(waits) / len(waits)
    elapsed = time.perf_counter() - start
    lo, hi = means[(3, 1.8)], means[(1, 1.2)]
    record(6, "waitlist trend", lo <= hi and elapsed < 120,
           f"mean WT k=3,c=1.8: {lo:.3f} <= k=1,c=1.2: {hi:.3f} ({elapsed:.1f}s)")


# -- 7 ---------------------------------------------------------------------

def test_c7_vfa_priority():
    rng = random.Random(7)
    rounds = bad = 0
    for seed in range(20):
        policy = Policy(m=rng.randint(1, 4), entry_rule=rng.choice(["rent", "family", "select", "random"]),
                        sort_rule="VFA", k=rng.randint(1, 4), c=rng.uniform(1.0, 3.0),
                        resource_rule=rng.choice(["size", "rent", "random"]))
        sc = scenario_51_28(seed % 5)
        ranked = sorted(sc.participants, key=lambda p: (p.rent_budget / p.family_size, p.id))
        vul = {p.id for p in ranked[:math.ceil(0.2 * len(ranked))]}
        trace = run_simulation(sc, policy, seed=seed)
        for rec in trace.rounds:
            if set(rec["vulnerable"]) != vul:
                bad += 1
            for prom in rec["promotions"]:
                rounds += 1
                order = prom["promoted"] + prom["waiting_after"]
                flags = [pid in vul for pid in order]
                # every vulnerable id must come before every non-vulnerable one
                if flags != sorted(flags, reverse=True):
                    bad += 1
    record(7, "VFA priority prefix", bad == 0 and rounds > 0,
           f"{rounds - bad}/{rounds} queue-rounds with vulnerable-first promotion order")


# -- 8 ---------------------------------------------------------------------

def _hit(found, target, c_tol=0.05):
    for g, t, d in zip(found.genes, target.genes, GENE_DOMAINS):
        if d.kind == "real":
            if abs(g - t) > c_tol:
                return False
        elif g != t:
            return False
    return True


def test_c8_poa_convergence():
    start = time.perf_counter()
    hits, gains = 0, []
    for s in range(20):
        target = random_vector(random.Random(1000 + s))
        result = poa_optimize([], distance_landscape(target), GAParams(seed=s, iterations=50))
        hits += _hit(result.best_vector, target)
        gains.append(result.improvement)
    elapsed = time.perf_counter() - start
    ok = hits >= 18 and min(gains) >= 0.2 and elapsed < 60
    record(8, "POA convergence", ok,
           f"optimum found in {hits}/20 runs, pool-mean gain min {min(gains):.0%} "
           f"mean {sum(gains) / len(gains):.0%}, {elapsed:.1f}s")


# -- 9 ---------------------------------------------------------------------

def test_c9_ridge():
    beta = fit_ridge([[1], [2], [3]], [2, 4, 6], lam=1.0, fit_intercept=False).coefficients[0]
    enc = FeatureEncoder()
    coef = np.random.default_rng(9).uniform(-1, 1, enc.width)
    noise = random.Random(9)

    def oracle(v):
        return float(enc.encode(v) @ coef) + noise.gauss(0.0, 0.01)

    result = train_predictor_incremental(oracle, enc, mae_threshold=0.05, batch=20, max_samples=400, seed=9)
    ok = abs(beta - 28 / 15) <= 1e-9 and result.converged and result.test_mae <= 0.05
    record(9, "ridge predictor", ok,
           f"beta={beta:.12f} (28/15={28 / 15:.12f}); noisy oracle MAE {result.test_mae:.4f} "
           f"after {len(result.dataset)} samples")


# -- 10 --------------------------------------------------------------------

def test_c10_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"scenario_spec": {"n_participants": 51, "n_resources": 28},
                               "scenario_seed": 7, "preset": "pi_B"}))
    blobs = []
    for name in ("a", "b"):
        code = run_command(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / name)])
        assert code == 0
        blobs.append((tmp_path / name / "metrics.json").read_bytes())
    same_metrics = blobs[0] == blobs[1]
    same_traces = 0
    for seed in range(5):
        sc = scenario_51_28(seed)
        serial = run_simulation(sc, Policy(), seed=seed).to_jsonl()
        parallel = run_simulation(sc, Policy(), seed=seed, parallel=True).to_jsonl()
        same_traces += serial == parallel
    record(10, "determinism", same_metrics and same_traces == 5,
           f"metrics.json byte-identical={same_metrics}; serial==parallel traces {same_traces}/5")


# -- 11 --------------------------------------------------------------------

FIXTURES = {
    "decision": ("Thought: too pricey for us\nAction: Give up\nAction Input: none",
                 {"thought": "too pricey for us", "action": "give_up", "action_input": "none"}),
    "broadcasting": ("Thought: share it\nAction: Publish\nCommunity: 2\nInfo: house 5 is quiet",
                     {"thought": "share it", "action": "publish", "community": "2", "info": "house 5 is quiet"}),
    "utterance_generation": (
        "Thought: be nice\nAcquaintance: Ben\nOutput: Hi Ben!\n\nThought: warn\nAcquaintance: Mia\nOutput: Careful.",
        [{"thought": "be nice", "acquaintance": "Ben", "output": "Hi Ben!"},
         {"thought": "warn", "acquaintance": "Mia", "output": "Careful."}]),
    "communication_plan": ("Intent: Deceptive\nAudience: Ben\nPlan: talk up house 3",
                           {"intent": "deceptive", "audience": "Ben", "plan": "talk up house 3"}),
    "memory_assessment": ("Trusted: house 4 rent is 900\nSuspicious: house 2 is damp\nReason: Ben is a rival",
                          {"trusted": "house 4 rent is 900", "suspicious": "house 2 is damp",
                           "reason": "Ben is a rival"}),
    "relation_evaluation": ("My Relation with Ben: competitor\nHe keeps steering me away.",
                            {"acquaintance": "Ben", "relation": "competitor", "view": "He keeps steering me away."}),
    "memory_reflection": ("House 4 is cheap and quiet.", {"summary": "House 4 is cheap and quiet."}),
}


def test_c11_prompt_layer():
    problems = []
    for tid in TEMPLATE_IDS:
        names = placeholders(tid)
        context = {n: f"<<{n}>>" for n in names}
        text = render_prompt(tid, context)
        leftover = [f for _, f, _, _ in string.Formatter().parse(text) if f]
        if not names or leftover or any(f"<<{n}>>" not in text for n in names):
            problems.append(f"render {tid}")
        reply, expected = FIXTURES[tid]
        if parse_structured(reply, tid) != expected:
            problems.append(f"parse {tid}")

    calls = []

    def transport(url, body, headers, timeout):
        calls.append(body)
        return json.dumps({"choices": [{"message": {"content": "I would rather not say."}}]}).encode()

    backend = LlmBackend(LlmConfig(), transport=transport, parse_retries=2, sleep=lambda s: None)
    p = person(1)
    out = backend.speak(p, 2, [], initial_memory({2: "friend"}), None, CommunicationPlan("honest", 2), [house(1)],
                        scenario_51_28(7).rating_table)
    fallback_ok = len(calls) == 3 and backend.fallbacks == 1 and out.intent == "withhold" and not out.claims
    if not fallback_ok:
        problems.append(f"fallback path (calls={len(calls)}, fallbacks={backend.fallbacks})")
    record(11, "prompt layer", not problems,
           f"7/7 templates render and parse; malformed reply retried {len(calls)}x then fell back"
           if not problems else "; ".join(problems))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
