"""Allocation policies and their fixed-length gene encoding."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

ENTRY_RULES = ("rent", "family", "select", "random")
SORT_RULES = ("FIFO", "VFA", "VFR")
RESOURCE_RULES = ("size", "rent", "random")
BATCH_SIZES = (5, 10, 20)

M_RANGE = (1, 5)
K_RANGE = (1, 5)
C_RANGE = (1.0, 4.0)


class PolicyError(ValueError):
    """A policy or gene vector violates its invariants.

    ``problems`` holds one message per violated invariant, each naming the field.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def equal_shares(m: int) -> Tuple[float, ...]:
    return tuple(1.0 / m for _ in range(m)) if m > 0 else ()


@dataclass(frozen=True)
class Policy:
    m: int = 3
    entry_rule: str = "select"
    sort_rule: str = "FIFO"
    k: int = 2
    c: float = 1.5
    resource_rule: str = "size"
    batch_p: int = 10
    batch_r: int = 10
    proportions: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.proportions is None:
            object.__setattr__(self, "proportions", equal_shares(self.m))
        else:
            object.__setattr__(self, "proportions", tuple(float(x) for x in self.proportions))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["proportions"] = list(self.proportions)
        return d

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Policy":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise PolicyError([f"unknown policy field {k!r}" for k in unknown])
        return cls(**data)

    def label(self) -> str:
        return (
            f"m={self.m} entry={self.entry_rule} sort={self.sort_rule} k={self.k} "
            f"c={self.c:g} res={self.resource_rule} bp={self.batch_p} br={self.batch_r}"
        )


def validate_policy(p: Policy) -> Policy:
    problems = []
    if not (isinstance(p.m, int) and M_RANGE[0] <= p.m <= M_RANGE[1]):
        problems.append(f"m out of range: expected {M_RANGE[0]}..{M_RANGE[1]}, got {p.m!r}")
    if p.entry_rule not in ENTRY_RULES:
        problems.append(f"entry_rule must be one of {ENTRY_RULES}, got {p.entry_rule!r}")
    if p.sort_rule not in SORT_RULES:
        problems.append(f"sort_rule must be one of {SORT_RULES}, got {p.sort_rule!r}")
    if p.resource_rule not in RESOURCE_RULES:
        problems.append(f"resource_rule must be one of {RESOURCE_RULES}, got {p.resource_rule!r}")
    if not (isinstance(p.k, int) and p.k >= 1):
        problems.append(f"k must be an integer >= 1, got {p.k!r}")
    if not (isinstance(p.c, (int, float)) and p.c >= 1.0):
        problems.append(f"c must be >= 1.0, got {p.c!r}")
    if not (isinstance(p.batch_p, int) and p.batch_p >= 1):
        problems.append(f"batch_p must be an integer >= 1, got {p.batch_p!r}")
    if not (isinstance(p.batch_r, int) and p.batch_r >= 1):
        problems.append(f"batch_r must be an integer >= 1, got {p.batch_r!r}")
    props = p.proportions or ()
    if isinstance(p.m, int) and len(props) != p.m:
        problems.append(f"proportions must have m={p.m} entries, got {len(props)}")
    if any(x <= 0 for x in props):
        problems.append("proportions must all be > 0")
    if abs(sum(props) - 1.0) > 1e-9:
        problems.append(f"proportions sum ≠ 1 (got {sum(props):.12g})")
    if problems:
        raise PolicyError(problems)
    return p


@dataclass(frozen=True)
class GeneDomain:
    name: str
    kind: str  # "categorical", "integer" or "real"
    low: float
    high: float
    categories: Tuple[Any, ...] = ()

    @property
    def span(self) -> float:
        return self.high - self.low


def _categorical(name: str, cats: Tuple[Any, ...]) -> GeneDomain:
    return GeneDomain(name, "categorical", 0, len(cats) - 1, cats)


GENE_DOMAINS: Tuple[GeneDomain, ...] = (
    GeneDomain("m", "integer", *M_RANGE),
    _categorical("entry_rule", ENTRY_RULES),
    _categorical("sort_rule", SORT_RULES),
    GeneDomain("k", "integer", *K_RANGE),
    GeneDomain("c", "real", *C_RANGE),
    _categorical("resource_rule", RESOURCE_RULES),
    _categorical("batch_p", BATCH_SIZES),
    _categorical("batch_r", BATCH_SIZES),
)
GENE_NAMES = tuple(d.name for d in GENE_DOMAINS)


@dataclass(frozen=True)
class PolicyVector:
    genes: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "genes", tuple(float(g) for g in self.genes))

    def __len__(self) -> int:
        return len(self.genes)

    def in_domain(self) -> bool:
        if len(self.genes) != len(GENE_DOMAINS):
            return False
        for g, d in zip(self.genes, GENE_DOMAINS):
            if not d.low <= g <= d.high:
                return False
            if d.kind != "real" and g != int(g):
                return False
        return True


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def repair_gene(value: float, domain: GeneDomain) -> float:
    """Snap one raw gene into its domain: round (non-real kinds) then clamp."""
    if domain.kind == "real":
        return min(max(float(value), domain.low), domain.high)
    return float(min(max(round_half_away(value), int(domain.low)), int(domain.high)))


def encode_policy(p: Policy) -> PolicyVector:
    validate_policy(p)
    genes: List[float] = []
    for d in GENE_DOMAINS:
        value = getattr(p, d.name)
        if d.kind == "categorical":
            if value not in d.categories:
                raise PolicyError([f"{d.name}={value!r} is not encodable; allowed {d.categories}"])
            genes.append(float(d.categories.index(value)))
        elif d.kind == "integer":
            if not d.low <= value <= d.high:
                raise PolicyError([f"{d.name}={value!r} outside gene range {d.low}..{d.high}"])
            genes.append(float(value))
        else:
            if not d.low <= value <= d.high:
                raise PolicyError([f"{d.name}={value!r} outside gene range {d.low}..{d.high}"])
            genes.append(float(value))
    return PolicyVector(tuple(genes))


def repair_vector(genes: Sequence[float]) -> PolicyVector:
    if len(genes) != len(GENE_DOMAINS):
        raise PolicyError([f"gene vector length {len(genes)} != {len(GENE_DOMAINS)}"])
    return PolicyVector(tuple(repair_gene(g, d) for g, d in zip(genes, GENE_DOMAINS)))


def decode_policy(v: PolicyVector) -> Policy:
    """Decode to the nearest valid policy; proportions become equal shares of m."""
    fixed = repair_vector(v.genes).genes
    values: Dict[str, Any] = {}
    for g, d in zip(fixed, GENE_DOMAINS):
        if d.kind == "categorical":
            values[d.name] = d.categories[int(g)]
        elif d.kind == "integer":
            values[d.name] = int(g)
        else:
            values[d.name] = float(g)
    return validate_policy(Policy(**values))


def gene_domain_table() -> List[Dict[str, Any]]:
    return [
        {"index": i, "name": d.name, "kind": d.kind, "low": d.low, "high": d.high, "categories": list(d.categories)}
        for i, d in enumerate(GENE_DOMAINS)
    ]


# Named presets: three real-world housing schemes plus the two optimised
# policies. Schemes with no deferral option use a single choice (k=1).
PRESETS: Dict[str, Policy] = {
    "pi_S": Policy(m=1, entry_rule="random", sort_rule="FIFO", k=1, c=3.0, resource_rule="random"),
    "pi_B": Policy(m=3, entry_rule="select", sort_rule="FIFO", k=1, c=2.0, resource_rule="size"),
    "pi_H": Policy(m=1, entry_rule="random", sort_rule="VFR", k=2, c=3.0, resource_rule="random"),
    "pi_s_star": Policy(m=3, entry_rule="select", sort_rule="FIFO", k=4, c=4.0, resource_rule="size"),
    "pi_f_star": Policy(m=3, entry_rule="select", sort_rule="VFA", k=3, c=3.0, resource_rule="size"),
}


def preset(name: str) -> Policy:
    try:
        return PRESETS[name]
    except KeyError:
        raise PolicyError([f"unknown preset {name!r}; known: {', '.join(PRESETS)}"]) from None
