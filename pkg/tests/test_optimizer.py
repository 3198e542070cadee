import random

import numpy as np
import pytest

from conftest import scenario_51_28
from allocsim.optimizer import (
    FeatureEncoder,
    FitnessDataset,
    GAParams,
    PSOParams,
    RidgeError,
    distance_landscape,
    exhaustive_assignment,
    fit_ridge,
    gaussian_mutate,
    km_baseline,
    poa_optimize,
    pso_optimize,
    random_vector,
    satisfaction_matrix,
    tournament_select,
    train_predictor_incremental,
    two_point_crossover,
)
from allocsim.policy import GENE_DOMAINS, PRESETS, PolicyVector, encode_policy

X3 = [[1], [2], [3]]


# -- ridge ---------------------------------------------------------------------

def test_exact_fit_without_penalty():
    assert fit_ridge(X3, [2, 4, 6], lam=0.0, fit_intercept=False).coefficients[0] == pytest.approx(2.0)


def test_hand_derived_shrinkage():
    assert fit_ridge(X3, [2, 4, 6], lam=1.0, fit_intercept=False).coefficients[0] == pytest.approx(28 / 15, abs=1e-12)


def test_constant_target():
    model = fit_ridge([[1, 0], [0, 1], [1, 1]], [3, 3, 3], lam=0.5)
    assert np.allclose(model.coefficients, 0) and model.intercept == pytest.approx(3)


def test_singular_system_needs_penalty():
    with pytest.raises(RidgeError, match="lambda > 0"):
        fit_ridge([[1, 1], [2, 2]], [1, 2], lam=0.0)
    with pytest.raises(RidgeError):
        fit_ridge(X3, [1, 2], lam=1.0)
    with pytest.raises(RidgeError):
        fit_ridge(X3, [1, 2, 3], lam=-1.0)


def test_encoder_layout():
    enc = FeatureEncoder()
    assert enc.width == 19 == len(enc.feature_names())
    row = enc.encode(encode_policy(PRESETS["pi_B"]))
    assert row.shape == (19,) and ((row >= 0) & (row <= 1)).all()
    assert row[1:5].sum() == 1  # one-hot entry rule


def _linear_oracle(noise=0.0, seed=0):
    enc = FeatureEncoder()
    coef = np.random.default_rng(seed).uniform(-1, 1, enc.width)
    rng = random.Random(seed)
    return lambda v: float(enc.encode(v) @ coef) + (rng.gauss(0, noise) if noise else 0.0)


def test_realizable_oracle_stops_at_first_check():
    result = train_predictor_incremental(_linear_oracle(), mae_threshold=0.05, batch=40, lam=1e-6)
    assert result.converged and len(result.history) == 1
    assert result.test_mae < 1e-4


def test_noisy_oracle_converges():
    predictor, data = train_predictor_incremental(_linear_oracle(0.01, 3), mae_threshold=0.05, batch=20, seed=3)
    assert len(data) <= 400
    _, test = data.split()
    X = FeatureEncoder().encode_many(data.vectors)
    assert np.mean(np.abs(predictor.predict_matrix(X[test]) - np.array(data.fitness)[test])) <= 0.05


def test_unreachable_threshold_sets_warning():
    result = train_predictor_incremental(_linear_oracle(0.01), mae_threshold=0.0, batch=20, max_samples=60)
    assert result.warning and len(result.dataset) == 60


def test_dataset_csv_round_trip(tmp_path):
    data = FitnessDataset()
    rng = random.Random(0)
    for _ in range(6):
        assert data.add(random_vector(rng), rng.random())
    assert not data.add(data.vectors[0], 1.0)
    path = tmp_path / "d.csv"
    data.to_csv(str(path))
    back = FitnessDataset.from_csv(str(path))
    assert back.vectors == data.vectors and back.fitness == data.fitness
    assert data.split() == ([0, 1, 2, 4, 5], [3])


# -- GA operators ----------------------------------------------------------------

POOL = [PolicyVector((float(i),) * 8) for i in range(3)]


def test_tournament_full_pool_takes_best():
    assert tournament_select(POOL, [1, 5, 3], 3, random.Random(0)) is POOL[1]


def test_tournament_of_one_is_random():
    picks = {tournament_select(POOL, [1, 5, 3], 1, random.Random(s)).genes for s in range(30)}
    assert len(picks) == 3


def test_tournament_tie_goes_low():
    assert tournament_select(POOL[:2], [4, 4], 2, random.Random(1)) is POOL[0]
    with pytest.raises(ValueError):
        tournament_select(POOL, [1, 2, 3], 4, random.Random(0))


def test_two_point_crossover():
    a, b = [1, 2, 3, 4, 5], [9, 8, 7, 6, 5]
    assert two_point_crossover(a, b, cuts=(1, 3)) == [1, 8, 7, 4, 5]
    child = two_point_crossover(a, b, cuts=(1, 2))
    assert sum(x != y for x, y in zip(child, a)) == 1
    assert two_point_crossover(a, a, random.Random(0)) == a
    with pytest.raises(ValueError):
        two_point_crossover(a, b, cuts=(0, 3))


def test_mutation_identities():
    v = encode_policy(PRESETS["pi_B"])
    sig = GAParams().sigmas()
    assert gaussian_mutate(v, 0.0, sig, random.Random(0)) == v
    assert gaussian_mutate(v, 1.0, [0.0] * 8, random.Random(0)) == v


def test_mutation_clamps_upper_bound():
    genes = list(encode_policy(PRESETS["pi_s_star"]).genes)
    genes[0] = 5.0
    sig = [10.0] + [0.0] * 7
    out = [gaussian_mutate(genes, 1.0, sig, random.Random(s)).genes[0] for s in range(20)]
    assert all(1 <= m <= 5 for m in out) and 5.0 in out


# -- POA -------------------------------------------------------------------------

def test_zero_iterations_returns_best_initial():
    target = random_vector(random.Random(5))
    fit = distance_landscape(target)
    result = poa_optimize(list(PRESETS.values()), fit, GAParams(iterations=0, seed=1))
    assert len(result.history) == 1
    assert result.best_fitness == result.history[0]["max"]


def test_full_elitism_freezes_pool():
    fit = distance_landscape(random_vector(random.Random(6)))
    result = poa_optimize([], fit, GAParams(iterations=10, elitism=24, seed=2))
    assert len({round(h["mean"], 12) for h in result.history}) == 1
    assert len({h["max"] for h in result.history}) == 1
    assert result.evaluations == 24


def test_poa_is_deterministic_and_parallel_safe():
    fit = distance_landscape(random_vector(random.Random(7)))
    a = poa_optimize([], fit, GAParams(iterations=15, seed=3))
    b = poa_optimize([], fit, GAParams(iterations=15, seed=3, jobs=3))
    assert a.history == b.history and a.best_vector == b.best_vector


def test_poa_validates_inputs():
    with pytest.raises(ValueError):
        GAParams(pool_size=1)
    with pytest.raises(ValueError):
        poa_optimize([PRESETS["pi_B"]] * 3, lambda v: 0.0, GAParams(pool_size=2, tournament_size=2))


def test_history_is_monotone_in_max_with_elitism():
    fit = distance_landscape(random_vector(random.Random(8)))
    result = poa_optimize([], fit, GAParams(iterations=30, seed=4))
    maxima = [h["max"] for h in result.history]
    assert maxima == sorted(maxima)


# -- assignment baselines --------------------------------------------------------

def test_km_two_by_two():
    assert km_baseline([[1, 2], [3, 1]]) == ({0: 1, 1: 0}, 5.0)
    assert exhaustive_assignment([[1, 2], [3, 1]])[1] == 5.0
    assert km_baseline([[7]]) == ({0: 0}, 7.0)


def test_exhaustive_degenerate_cases():
    assert exhaustive_assignment(np.zeros((3, 3)))[1] == 0
    diag = np.eye(4) * 10 + 1
    assert exhaustive_assignment(diag)[0] == {i: i for i in range(4)}
    with pytest.raises(ValueError):
        exhaustive_assignment(np.ones((9, 9)))


def test_rectangular_matrices():
    tall = np.array([[5.0, 1.0], [4.0, 2.0], [1.0, 9.0]])
    assignment, sw = km_baseline(tall)
    assert sw == 14.0 and list(assignment.values()).count(None) == 1
    wide = tall.T
    assert km_baseline(wide)[1] == exhaustive_assignment(wide)[1] == 14.0
    with pytest.raises(ValueError):
        km_baseline([[-1.0]])


def test_satisfaction_matrix_shape():
    U = satisfaction_matrix(scenario_51_28(7))
    assert U.shape == (51, 28) and (U >= 0).all()


# -- PSO -------------------------------------------------------------------------

def test_frozen_swarm_keeps_initial_best():
    fit = distance_landscape(random_vector(random.Random(9)))
    result = pso_optimize(fit, PSOParams(iterations=10, inertia=0, cognitive=0, social=0, seed=1))
    assert len({h["mean"] for h in result.history}) == 1
    assert result.best_fitness == result.history[0]["max"]


def test_pso_deterministic_and_in_domain():
    fit = distance_landscape(random_vector(random.Random(10)))
    a = pso_optimize(fit, PSOParams(iterations=20, seed=5))
    b = pso_optimize(fit, PSOParams(iterations=20, seed=5))
    assert a.history == b.history
    assert a.best_vector.in_domain()


def test_pso_success_rate_on_landscape():
    hits = 0
    for s in range(5):
        target = random_vector(random.Random(1000 + s))
        found = pso_optimize(distance_landscape(target), PSOParams(seed=s)).best_vector
        assert found.in_domain()
        hits += all(abs(g - t) <= 0.05 if d.kind == "real" else g == t
                    for g, t, d in zip(found.genes, target.genes, GENE_DOMAINS))
    # recorded for comparison with the GA, not gated
    print(f"PSO recovered the optimum in {hits}/5 runs")
