"""Participants, housing resources, social graphs and seeded scenario generation."""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

FEATURES = ("rent", "size", "orientation", "floor")
ORIENTATIONS = ("N", "S", "E", "W", "SE", "SW", "NE", "NW")
BATHROOMS = ("private", "shared")
DECORATIONS = ("basic", "standard", "premium")
PERSONALITIES = ("conservative", "astute", "neutral")
RELATIONS = ("friend", "colleague", "mate", "competitor", "enemy", "stranger")

# Hidden condition revealed only to a participant who inspects the house.
UNDISCLOSED_DETAILS: Tuple[Tuple[str, str], ...] = (
    ("Quiet courtyard view and recently renovated kitchen.", "good"),
    ("Good natural light; neighbours are friendly.", "good"),
    ("Window faces a busy road and is noisy at night.", "bad"),
    ("Damp patches on the bathroom ceiling.", "bad"),
    ("Ordinary flat with no notable issues.", "neutral"),
    ("Appliances are old but working.", "neutral"),
)
CONDITION_BY_DETAIL = dict(UNDISCLOSED_DETAILS)

_FIRST_NAMES = (
    "Ava", "Ben", "Chloe", "Dan", "Emma", "Finn", "Grace", "Hugo", "Iris", "Jack",
    "Kate", "Leo", "Mia", "Noah", "Olive", "Paul", "Quinn", "Rosa", "Sam", "Tess",
)


class ScenarioError(ValueError):
    """Raised for invalid scenario specifications or inconsistent scenarios."""


@dataclass(frozen=True)
class ParticipantProfile:
    id: int
    name: str
    family_size: int
    monthly_income: float
    rent_budget: float
    feature_weights: Dict[str, float]
    personality: str
    honesty: float
    entry_round: int

    def __post_init__(self) -> None:
        if self.family_size < 1:
            raise ScenarioError(f"participant {self.id}: family_size must be >= 1")
        if self.rent_budget < 0:
            raise ScenarioError(f"participant {self.id}: rent_budget must be >= 0")
        if set(self.feature_weights) - set(FEATURES):
            raise ScenarioError(f"participant {self.id}: unknown feature weight")
        if abs(sum(self.feature_weights.values()) - 1.0) > 1e-9:
            raise ScenarioError(f"participant {self.id}: feature_weights must sum to 1")
        if self.personality not in PERSONALITIES:
            raise ScenarioError(f"participant {self.id}: unknown personality {self.personality!r}")
        if not 0.0 <= self.honesty <= 1.0:
            raise ScenarioError(f"participant {self.id}: honesty must lie in [0, 1]")


@dataclass(frozen=True)
class HouseResource:
    id: int
    community_id: int
    size: float
    rent: float
    orientation: str
    floor: int
    bathroom: str
    decoration: str
    disclosed: str
    undisclosed: str
    entry_round: int

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ScenarioError(f"resource {self.id}: size must be > 0")
        if self.rent < 0:
            raise ScenarioError(f"resource {self.id}: rent must be >= 0")
        if self.orientation not in ORIENTATIONS:
            raise ScenarioError(f"resource {self.id}: unknown orientation {self.orientation!r}")
        if self.bathroom not in BATHROOMS:
            raise ScenarioError(f"resource {self.id}: unknown bathroom {self.bathroom!r}")

    @property
    def condition(self) -> str:
        return CONDITION_BY_DETAIL.get(self.undisclosed, "neutral")


@dataclass(frozen=True)
class SocialGraph:
    edges: Tuple[Tuple[int, int, str], ...] = ()

    def neighbours(self, pid: int) -> Dict[int, str]:
        out = {}
        for a, b, rel in self.edges:
            if a == pid:
                out[b] = rel
            elif b == pid:
                out[a] = rel
        return out

    def relation(self, a: int, b: int) -> str:
        return self.neighbours(a).get(b, "stranger")


@dataclass(frozen=True)
class RatingTable:
    """Score lookup for resource features.

    Numeric features hold ascending ``(upper_exclusive, score)`` buckets; an
    upper bound of ``None`` closes the last bucket.  Categorical features map a
    value straight to its score.
    """

    numeric: Dict[str, Tuple[Tuple[Optional[float], float], ...]]
    categorical: Dict[str, Dict[str, float]]

    def bucket(self, feature: str, value: Any) -> str:
        if feature in self.categorical:
            if value not in self.categorical[feature]:
                raise ScenarioError(f"rating table has no bucket for feature {feature!r} value {value!r}")
            return f"{feature}={value}"
        if feature in self.numeric:
            lower = None
            for upper, _ in self.numeric[feature]:
                if upper is None or value < upper:
                    lo = "" if lower is None else f"{lower:g}<="
                    hi = "" if upper is None else f"<{upper:g}"
                    return f"{lo}{feature}{hi}"
                lower = upper
            raise ScenarioError(f"rating table has no bucket for feature {feature!r} value {value!r}")
        raise ScenarioError(f"rating table has no entry for feature {feature!r}")

    def score(self, feature: str, value: Any) -> float:
        if feature in self.categorical:
            try:
                return self.categorical[feature][value]
            except KeyError:
                raise ScenarioError(
                    f"rating table has no bucket for feature {feature!r} value {value!r}"
                ) from None
        if feature in self.numeric:
            for upper, score in self.numeric[feature]:
                if upper is None or value < upper:
                    return score
            raise ScenarioError(f"rating table has no bucket for feature {feature!r} value {value!r}")
        raise ScenarioError(f"rating table has no entry for feature {feature!r}")

    def covers(self, resource: HouseResource) -> bool:
        try:
            for feature in FEATURES:
                self.score(feature, getattr(resource, feature))
        except ScenarioError:
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "numeric": {k: [[u, s] for u, s in v] for k, v in self.numeric.items()},
            "categorical": {k: dict(v) for k, v in self.categorical.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RatingTable":
        return cls(
            numeric={k: tuple((u, float(s)) for u, s in v) for k, v in data["numeric"].items()},
            categorical={k: {c: float(s) for c, s in v.items()} for k, v in data["categorical"].items()},
        )


DEFAULT_RATING_TABLE = RatingTable(
    numeric={
        "size": ((20.0, 2.0), (50.0, 5.0), (90.0, 8.0), (None, 10.0)),
        "rent": ((1000.0, 10.0), (2000.0, 7.0), (3000.0, 4.0), (None, 2.0)),
        "floor": ((2.0, 4.0), (7.0, 8.0), (16.0, 6.0), (None, 5.0)),
    },
    categorical={
        "orientation": {"S": 10.0, "SE": 8.0, "SW": 8.0, "E": 6.0, "W": 6.0, "NE": 4.0, "NW": 4.0, "N": 2.0},
    },
)


@dataclass(frozen=True)
class Scenario:
    participants: Tuple[ParticipantProfile, ...]
    resources: Tuple[HouseResource, ...]
    graph: SocialGraph = field(default_factory=SocialGraph)
    rating_table: RatingTable = DEFAULT_RATING_TABLE

    def __post_init__(self) -> None:
        if not self.participants or not self.resources:
            raise ScenarioError("scenario needs at least one participant and one resource")
        pids = [p.id for p in self.participants]
        rids = [r.id for r in self.resources]
        if len(set(pids)) != len(pids):
            raise ScenarioError("participant ids must be unique")
        if len(set(rids)) != len(rids):
            raise ScenarioError("resource ids must be unique")
        known = set(pids)
        for a, b, rel in self.graph.edges:
            if a == b:
                raise ScenarioError(f"self edge on participant {a}")
            if a not in known or b not in known:
                raise ScenarioError(f"edge ({a}, {b}) references an unknown participant")
            if rel not in RELATIONS:
                raise ScenarioError(f"unknown relation {rel!r}")
        for r in self.resources:
            if not self.rating_table.covers(r):
                raise ScenarioError(f"rating table does not cover resource {r.id}")

    def participant(self, pid: int) -> ParticipantProfile:
        return self._pindex()[pid]

    def resource(self, rid: int) -> HouseResource:
        return self._rindex()[rid]

    def _pindex(self) -> Dict[int, ParticipantProfile]:
        cache = self.__dict__.get("_pidx")
        if cache is None:
            cache = {p.id: p for p in self.participants}
            object.__setattr__(self, "_pidx", cache)
        return cache

    def _rindex(self) -> Dict[int, HouseResource]:
        cache = self.__dict__.get("_ridx")
        if cache is None:
            cache = {r.id: r for r in self.resources}
            object.__setattr__(self, "_ridx", cache)
        return cache

    def to_dict(self) -> Dict[str, Any]:
        return {
            "participants": [asdict(p) for p in self.participants],
            "resources": [asdict(r) for r in self.resources],
            "graph": {"edges": [list(e) for e in self.graph.edges]},
            "rating_table": self.rating_table.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        try:
            return cls(
                participants=tuple(ParticipantProfile(**p) for p in data["participants"]),
                resources=tuple(HouseResource(**r) for r in data["resources"]),
                graph=SocialGraph(tuple((int(a), int(b), str(rel)) for a, b, rel in data["graph"]["edges"])),
                rating_table=RatingTable.from_dict(data["rating_table"])
                if "rating_table" in data
                else DEFAULT_RATING_TABLE,
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs for synthetic scenario generation.

    Budgets are log-normal around ``budget_median``; house sizes are uniform in
    ``[size_min, size_max]`` and rents scale with size, a per-community
    multiplier and ``rent_noise`` relative noise.
    """

    n_participants: int
    n_resources: int
    community_count: int = 3
    budget_median: float = 2500.0
    budget_sigma: float = 0.6
    family_min: int = 1
    family_max: int = 5
    size_min: float = 15.0
    size_max: float = 120.0
    rent_per_m2: float = 30.0
    community_spread: float = 0.25
    rent_noise: float = 0.10
    participant_arrival_rounds: int = 5
    resource_arrival_rounds: int = 3
    social_group_size: int = 10
    p_intra: float = 0.6
    p_inter: float = 0.02

    def validate(self) -> "ScenarioSpec":
        errors = []
        if self.n_participants < 1:
            errors.append("n_participants must be >= 1")
        if self.n_resources < 1:
            errors.append("n_resources must be >= 1")
        if self.community_count < 1:
            errors.append("community_count must be >= 1")
        for name in ("budget_median", "budget_sigma", "rent_per_m2", "community_spread", "rent_noise"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if not 1 <= self.family_min <= self.family_max:
            errors.append("family bounds must satisfy 1 <= family_min <= family_max")
        if not 0 < self.size_min <= self.size_max:
            errors.append("size bounds must satisfy 0 < size_min <= size_max")
        if self.rent_noise >= 1:
            errors.append("rent_noise must be < 1")
        if self.community_spread >= 1:
            errors.append("community_spread must be < 1")
        if self.participant_arrival_rounds < 1 or self.resource_arrival_rounds < 1:
            errors.append("arrival rounds must be >= 1")
        if self.social_group_size < 1:
            errors.append("social_group_size must be >= 1")
        for name in ("p_intra", "p_inter"):
            if not 0 <= getattr(self, name) <= 1:
                errors.append(f"{name} must lie in [0, 1]")
        if errors:
            raise ScenarioError("; ".join(errors))
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioError(f"unknown scenario spec keys: {', '.join(unknown)}")
        return cls(**data)


def per_capita_budget(p: ParticipantProfile) -> float:
    return p.rent_budget / p.family_size


def _dirichlet(rng: random.Random, k: int) -> List[float]:
    draws = [rng.gammavariate(1.0, 1.0) for _ in range(k)]
    total = sum(draws)
    weights = [round(d / total, 6) for d in draws]
    # absorb rounding drift in the largest weight so the sum is exact
    i = max(range(k), key=lambda j: weights[j])
    weights[i] = round(1.0 - sum(w for j, w in enumerate(weights) if j != i), 6)
    return weights


def _participants(spec: ScenarioSpec, rng: random.Random) -> List[ParticipantProfile]:
    mu = math.log(spec.budget_median) if spec.budget_median > 0 else 0.0
    rows = []
    for pid in range(spec.n_participants):
        family = rng.randint(spec.family_min, spec.family_max)
        budget = rng.lognormvariate(mu, spec.budget_sigma) if spec.budget_median > 0 else 0.0
        share = rng.uniform(0.25, 0.40)
        rows.append([pid, family, budget, share])

    # keep at least a 5x per-capita spread so a bottom-20% group is meaningful
    if len(rows) >= 2:
        per_cap = [r[2] / r[1] for r in rows]
        hi = max(per_cap)
        lo_i = min(range(len(rows)), key=lambda i: (per_cap[i], rows[i][0]))
        if per_cap[lo_i] > 0 and hi / per_cap[lo_i] < 5.0:
            rows[lo_i][2] = hi / 5.5 * rows[lo_i][1]

    out = []
    for pid, family, budget, share in rows:
        weights = _dirichlet(rng, len(FEATURES))
        budget = round(budget, 2)
        out.append(
            ParticipantProfile(
                id=pid,
                name=f"{_FIRST_NAMES[pid % len(_FIRST_NAMES)]}{pid}",
                family_size=family,
                monthly_income=round(budget / share, 2),
                rent_budget=budget,
                feature_weights=dict(zip(FEATURES, weights)),
                personality=rng.choice(PERSONALITIES),
                honesty=round(rng.uniform(0.3, 1.0), 3),
                entry_round=rng.randrange(spec.participant_arrival_rounds),
            )
        )
    return out


def _resources(spec: ScenarioSpec, rng: random.Random) -> List[HouseResource]:
    multipliers = [
        round(rng.uniform(1 - spec.community_spread, 1 + spec.community_spread), 4)
        for _ in range(spec.community_count)
    ]
    out = []
    for rid in range(spec.n_resources):
        community = rng.randrange(spec.community_count)
        size = round(rng.uniform(spec.size_min, spec.size_max), 1)
        noise = rng.uniform(-spec.rent_noise, spec.rent_noise)
        rent = round(size * spec.rent_per_m2 * multipliers[community] * (1 + noise), 2)
        orientation = rng.choice(ORIENTATIONS)
        floor = rng.randint(1, 20)
        decoration = rng.choice(DECORATIONS)
        detail, _ = rng.choice(UNDISCLOSED_DETAILS)
        out.append(
            HouseResource(
                id=rid,
                community_id=community,
                size=size,
                rent=rent,
                orientation=orientation,
                floor=floor,
                bathroom="private",
                decoration=decoration,
                disclosed=f"{size:g} m2 {decoration} flat, floor {floor}, facing {orientation}, rent {rent:.2f}",
                undisclosed=detail,
                entry_round=rng.randrange(spec.resource_arrival_rounds),
            )
        )
    return out


def _social_graph(spec: ScenarioSpec, pids: Sequence[int], rng: random.Random) -> SocialGraph:
    n = len(pids)
    n_groups = math.ceil(n / spec.social_group_size)
    order = list(pids)
    rng.shuffle(order)
    group = {pid: i % n_groups for i, pid in enumerate(order)}
    labels = ("friend", "colleague", "competitor", "stranger")
    label_weights = (0.4, 0.3, 0.2, 0.1)
    edges = []
    for i, a in enumerate(pids):
        for b in pids[i + 1:]:
            p = spec.p_intra if group[a] == group[b] else spec.p_inter
            if rng.random() < p:
                edges.append((a, b, rng.choices(labels, label_weights)[0]))
    return SocialGraph(tuple(edges))


def generate_scenario(spec: ScenarioSpec, seed: int) -> Scenario:
    """Build a synthetic scenario; a pure function of ``(spec, seed)``."""
    spec.validate()
    rng = random.Random(seed)
    participants = _participants(spec, rng)
    resources = _resources(spec, rng)
    graph = _social_graph(spec, [p.id for p in participants], rng)
    return Scenario(tuple(participants), tuple(resources), graph, DEFAULT_RATING_TABLE)


def apply_quality_variant(resources: Sequence[HouseResource], variant: str) -> List[HouseResource]:
    """Return the standard (S), halved (H) or shared-bathroom (B) housing stock.

    Halved houses get ids ``2*id`` and ``2*id + 1`` so ids stay unique.
    """
    if variant == "S":
        return list(resources)
    if variant == "H":
        out = []
        for r in resources:
            for j in (0, 1):
                out.append(replace(r, id=2 * r.id + j, size=r.size / 2, rent=r.rent / 2))
        return out
    if variant == "B":
        return [replace(r, bathroom="shared") for r in resources]
    raise ScenarioError(f"unknown quality variant {variant!r}; expected S, H or B")
