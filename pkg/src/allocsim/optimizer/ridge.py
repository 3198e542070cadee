"""Ridge-regression surrogate for policy fitness."""

from __future__ import annotations

import csv
import io
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..policy import GENE_DOMAINS, GENE_NAMES, GeneDomain, PolicyVector

log = logging.getLogger(__name__)


class RidgeError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureEncoder:
    """One-hot for categorical genes, min-max scaling for numeric ones."""

    domains: Tuple[GeneDomain, ...] = GENE_DOMAINS

    @property
    def width(self) -> int:
        return sum(len(d.categories) if d.kind == "categorical" else 1 for d in self.domains)

    def feature_names(self) -> List[str]:
        names = []
        for d in self.domains:
            if d.kind == "categorical":
                names += [f"{d.name}={c}" for c in d.categories]
            else:
                names.append(d.name)
        return names

    def encode(self, v: PolicyVector | Sequence[float]) -> np.ndarray:
        genes = v.genes if isinstance(v, PolicyVector) else tuple(v)
        if len(genes) != len(self.domains):
            raise RidgeError(f"expected {len(self.domains)} genes, got {len(genes)}")
        row: List[float] = []
        for g, d in zip(genes, self.domains):
            if d.kind == "categorical":
                hot = [0.0] * len(d.categories)
                hot[int(round(g))] = 1.0
                row += hot
            else:
                row.append((g - d.low) / d.span if d.span else 0.0)
        return np.array(row)

    def encode_many(self, vectors: Sequence[PolicyVector]) -> np.ndarray:
        return np.vstack([self.encode(v) for v in vectors]) if vectors else np.zeros((0, self.width))


@dataclass(frozen=True)
class Predictor:
    coefficients: np.ndarray
    intercept: float
    lam: float
    encoder: Optional[FeatureEncoder] = None

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients + self.intercept

    def predict(self, v: PolicyVector | Sequence[float]) -> float:
        if self.encoder is None:
            x = np.asarray(v.genes if isinstance(v, PolicyVector) else v, dtype=float)
        else:
            x = self.encoder.encode(v)
        return float(x @ self.coefficients + self.intercept)

    __call__ = predict


def fit_ridge(X, y, lam: float = 1.0, fit_intercept: bool = True,
              encoder: Optional[FeatureEncoder] = None) -> Predictor:
    """Closed-form ridge; the intercept is left unpenalised via column centring."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise RidgeError("need at least one row")
    if X.shape[0] != y.shape[0]:
        raise RidgeError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if lam < 0:
        raise RidgeError("lambda must be >= 0")
    if fit_intercept:
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
    else:
        x_mean, y_mean = np.zeros(X.shape[1]), 0.0
        Xc, yc = X, y
    gram = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise RidgeError("singular system with lambda=0; use lambda > 0")
    beta = np.linalg.solve(gram, Xc.T @ yc)
    intercept = float(y_mean - x_mean @ beta)
    return Predictor(beta, intercept, lam, encoder)


def mae(predictor: Predictor, X: np.ndarray, y: Sequence[float]) -> float:
    if len(y) == 0:
        return float("inf")
    return float(np.mean(np.abs(predictor.predict_matrix(X) - np.asarray(y, dtype=float))))


@dataclass
class FitnessDataset:
    """(policy vector, fitness) rows; row ``i`` is held out when ``i % test_every == test_every - 1``."""

    vectors: List[PolicyVector] = field(default_factory=list)
    fitness: List[float] = field(default_factory=list)
    test_every: int = 4

    def __len__(self) -> int:
        return len(self.vectors)

    def add(self, v: PolicyVector, f: float) -> bool:
        if any(v.genes == u.genes for u in self.vectors):
            log.debug("skipping duplicate vector %s", v.genes)
            return False
        self.vectors.append(v)
        self.fitness.append(float(f))
        return True

    def split(self) -> Tuple[List[int], List[int]]:
        test = [i for i in range(len(self)) if i % self.test_every == self.test_every - 1]
        held = set(test)
        return [i for i in range(len(self)) if i not in held], test

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(GENE_NAMES) + ["fitness"])
        for v, f in zip(self.vectors, self.fitness):
            w.writerow([repr(g) for g in v.genes] + [repr(f)])
        return buf.getvalue()

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    @classmethod
    def from_csv(cls, path: str) -> "FitnessDataset":
        ds = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:-1] != list(GENE_NAMES) or header[-1] != "fitness":
                raise RidgeError(f"unexpected dataset header {header}")
            for row in reader:
                ds.add(PolicyVector(tuple(float(x) for x in row[:-1])), float(row[-1]))
        return ds


@dataclass
class TrainResult:
    predictor: Predictor
    dataset: FitnessDataset
    test_mae: float
    converged: bool
    history: List[Tuple[int, float]] = field(default_factory=list)  # (samples, test MAE)

    @property
    def warning(self) -> bool:
        return not self.converged

    def __iter__(self):
        # allows ``predictor, dataset = train_predictor_incremental(...)``
        return iter((self.predictor, self.dataset))


def random_vector(rng: random.Random, domains: Sequence[GeneDomain] = GENE_DOMAINS) -> PolicyVector:
    genes = []
    for d in domains:
        if d.kind == "real":
            genes.append(rng.uniform(d.low, d.high))
        else:
            genes.append(float(rng.randint(int(d.low), int(d.high))))
    return PolicyVector(tuple(genes))


def train_predictor_incremental(
    simulate: Callable[[PolicyVector], float],
    encoder: Optional[FeatureEncoder] = None,
    mae_threshold: float = 0.05,
    batch: int = 20,
    max_samples: int = 400,
    seed: int = 0,
    lam: float = 1.0,
    dataset: Optional[FitnessDataset] = None,
) -> TrainResult:
    """Grow the dataset ``batch`` samples at a time until held-out MAE <= threshold.

    If ``max_samples`` is reached first the best predictor seen is returned
    with ``converged=False``.
    """
    if mae_threshold < 0:
        raise RidgeError("mae_threshold must be >= 0")
    if batch < 1:
        raise RidgeError("batch must be >= 1")
    encoder = encoder or FeatureEncoder()
    rng = random.Random(seed)
    data = dataset if dataset is not None else FitnessDataset()
    best: Optional[Tuple[float, Predictor]] = None
    history: List[Tuple[int, float]] = []
    attempts = 0
    while len(data) < max_samples and attempts < 50 * max_samples:
        target = min(max_samples, len(data) + batch)
        while len(data) < target and attempts < 50 * max_samples:
            attempts += 1
            v = random_vector(rng, encoder.domains)
            if any(v.genes == u.genes for u in data.vectors):
                continue
            data.add(v, simulate(v))
        train, test = data.split()
        if not train or not test:
            continue
        X = encoder.encode_many(data.vectors)
        y = np.asarray(data.fitness)
        model = fit_ridge(X[train], y[train], lam, encoder=encoder)
        err = mae(model, X[test], y[test])
        history.append((len(data), err))
        if best is None or err < best[0]:
            best = (err, model)
        if err <= mae_threshold:
            return TrainResult(model, data, err, True, history)
    if best is None:
        raise RidgeError("not enough samples to form a train/test split")
    log.warning("surrogate stopped at %d samples with test MAE %.4f > %.4f", len(data), best[0], mae_threshold)
    return TrainResult(best[1], data, best[0], False, history)
