"""Round-based allocation engine: admission, queues, the k/c waitlist and the social phase.

Every random draw comes from a ``random.Random`` seeded by a string that
names its context (seed, round, actors), so the trace never depends on the
order in which independent pieces of work are scheduled.
"""

from __future__ import annotations

import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .agents.base import CHOOSE, DECLINE, QUIT, Backend, BackendError, QueueSummary
from .agents.memory import AgentMemory, MemoryEntry, Utterance, initial_memory, observe
from .agents.rule import RuleBackend, score_resource
from .policy import Policy, validate_policy
from .scenario import HouseResource, ParticipantProfile, Scenario, per_capita_budget

log = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 200
VULNERABLE_FRACTION = 0.2
FORUM_WINDOW = 10


def _ctx_rng(*parts: Any) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def _ceil(x: float) -> int:
    # guard against 0.2 * 15 = 3.0000000000000004 style drift
    return math.ceil(round(x, 9))


# ---------------------------------------------------------------------------
# pure building blocks
# ---------------------------------------------------------------------------

def designate_vulnerable(
    participants: Sequence[ParticipantProfile],
    mode: str = "VFA",
    fraction: float = VULNERABLE_FRACTION,
    round: int = 0,
    present: Optional[Iterable[int]] = None,
) -> Set[int]:
    """Lowest per-capita budgets, ``ceil(fraction * eligible)`` of them.

    VFA always ranks the whole population; VFR ranks only ``present`` (the
    participants still in the system at ``round``) when it is given.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if mode not in ("VFA", "VFR"):
        raise ValueError(f"unknown vulnerability mode {mode!r}")
    eligible = list(participants)
    if mode == "VFR" and present is not None:
        keep = set(present)
        eligible = [p for p in eligible if p.id in keep]
    if not eligible:
        return set()
    ranked = sorted(eligible, key=lambda p: (per_capita_budget(p), p.id))
    return {p.id for p in ranked[:_ceil(fraction * len(eligible))]}


def _split_counts(n: int, weights: Sequence[float]) -> List[int]:
    counts = [int(math.floor(round(w * n, 9))) for w in weights]
    counts[-1] += n - sum(counts)
    return counts


def _split(items: Sequence[Any], weights: Sequence[float]) -> List[List[Any]]:
    out, start = [], 0
    for count in _split_counts(len(items), weights):
        out.append(list(items[start:start + count]))
        start += count
    return out


def compute_entry_bands(participants: Sequence[ParticipantProfile], rule: str,
                        proportions: Sequence[float]) -> Dict[int, int]:
    """Queue index per participant for the ``rent`` and ``family`` entry rules.

    Participants are ranked from the highest budget (or largest family) down
    and cut into contiguous bands of ``floor(w * n)``; queue 0 is the top band.
    """
    if rule == "rent":
        key = lambda p: (-p.rent_budget, p.id)  # noqa: E731
    elif rule == "family":
        key = lambda p: (-p.family_size, p.id)  # noqa: E731
    else:
        raise ValueError(f"entry bands only exist for rent/family rules, got {rule!r}")
    bands = _split(sorted(participants, key=key), proportions)
    return {p.id: q for q, band in enumerate(bands) for p in band}


def partition_resources(resources: Sequence[HouseResource], rule: str, queue_weights: Sequence[float],
                        rng: Optional[random.Random] = None) -> List[List[HouseResource]]:
    """Split resources into ``len(queue_weights)`` disjoint contiguous blocks.

    ``size``/``rent`` rank from the largest key down so queue 0 (the top
    participant band) holds the biggest or dearest houses and the last queue
    holds the lowest-key block plus the rounding remainder.
    """
    if abs(sum(queue_weights) - 1.0) > 1e-9:
        raise ValueError("queue weights must sum to 1")
    if rule in ("size", "rent"):
        ordered = sorted(resources, key=lambda r: (-getattr(r, rule), r.id))
    elif rule == "random":
        ordered = sorted(resources, key=lambda r: r.id)
        (rng or random.Random(0)).shuffle(ordered)
    else:
        raise ValueError(f"unknown resource rule {rule!r}")
    return _split(ordered, queue_weights)


def sort_queue(waiting: Sequence[int], rule: str, vulnerable: Iterable[int] = (),
               entry_rounds: Optional[Mapping[int, int]] = None) -> List[int]:
    """FIFO by ``(entry_round, id)``; VFA/VFR put vulnerable ids first."""
    entry_rounds = entry_rounds or {}
    fifo = sorted(waiting, key=lambda pid: (entry_rounds.get(pid, 0), pid))
    if rule == "FIFO":
        return fifo
    if rule not in ("VFA", "VFR"):
        raise ValueError(f"unknown sort rule {rule!r}")
    vul = set(vulnerable)
    return [p for p in fifo if p in vul] + [p for p in fifo if p not in vul]


@dataclass
class SelectionEntry:
    participant_id: int
    remaining_choices: int
    joined_round: int


@dataclass
class QueueState:
    queue_id: int
    waiting: List[int] = field(default_factory=list)
    selection: List[SelectionEntry] = field(default_factory=list)
    pool: List[int] = field(default_factory=list)
    pending: List[int] = field(default_factory=list)  # partition members not yet admitted
    allocated: List[int] = field(default_factory=list)
    closed: bool = False

    def capacity(self, c: float) -> int:
        return _ceil(c * len(self.pool))

    def snapshot(self) -> Dict[str, Any]:
        return {
            "queue": self.queue_id,
            "waiting": list(self.waiting),
            "selection": [[e.participant_id, e.remaining_choices] for e in self.selection],
            "pool": list(self.pool),
            "closed": self.closed,
        }


@dataclass(frozen=True)
class CompetitivenessReport:
    """Resources left per contender, by queue; shown to participants."""

    queues: Tuple[Dict[str, Any], ...]
    text: str

    def ratio_for(self, queue: int) -> float:
        for q in self.queues:
            if q["queue"] == queue:
                return q["ratio"]
        return math.inf

    @property
    def overall_ratio(self) -> float:
        remaining = sum(q["remaining"] for q in self.queues)
        contenders = sum(q["waiting"] + q["selection"] for q in self.queues)
        return remaining / contenders if contenders else math.inf

    def to_dict(self) -> List[Dict[str, Any]]:
        return [{**q, "ratio": None if math.isinf(q["ratio"]) else round(q["ratio"], 6)} for q in self.queues]


def compute_competitiveness(states: Sequence[QueueState], resources: Optional[Mapping[int, HouseResource]] = None,
                            band_of=None) -> CompetitivenessReport:
    rows, sentences = [], []
    for s in states:
        contenders = len(s.waiting) + len(s.selection)
        ratio = len(s.pool) / contenders if contenders else math.inf
        bands: Dict[str, int] = {}
        if resources is not None and band_of is not None:
            for rid in s.pool:
                b = band_of(resources[rid])
                bands[b] = bands.get(b, 0) + 1
        rows.append({"queue": s.queue_id, "remaining": len(s.pool), "by_size_band": dict(sorted(bands.items())),
                     "waiting": len(s.waiting), "selection": len(s.selection), "ratio": ratio})
        ratio_txt = "uncontested" if math.isinf(ratio) else f"{ratio:.2f} houses per applicant"
        sentences.append(f"Queue {s.queue_id} has {len(s.pool)} houses left, {len(s.waiting)} waiting and "
                         f"{len(s.selection)} choosing ({ratio_txt}).")
    return CompetitivenessReport(tuple(rows), " ".join(sentences))


# ---------------------------------------------------------------------------
# outcome and trace
# ---------------------------------------------------------------------------

@dataclass
class AllocationOutcome:
    assignment: Dict[int, Optional[int]]
    wait_rounds: Dict[int, int]
    satisfaction: Dict[int, float]
    quit: Set[int]
    rounds: int = 0

    @property
    def allocated(self) -> Dict[int, int]:
        return {p: r for p, r in self.assignment.items() if r is not None}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rounds": self.rounds,
            "assignment": {str(p): r for p, r in sorted(self.assignment.items())},
            "wait_rounds": {str(p): w for p, w in sorted(self.wait_rounds.items())},
            "satisfaction": {str(p): round(u, 9) for p, u in sorted(self.satisfaction.items())},
            "quit": sorted(self.quit),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AllocationOutcome":
        return cls(
            assignment={int(p): r for p, r in data["assignment"].items()},
            wait_rounds={int(p): int(w) for p, w in data["wait_rounds"].items()},
            satisfaction={int(p): float(u) for p, u in data["satisfaction"].items()},
            quit=set(data["quit"]),
            rounds=int(data.get("rounds", 0)),
        )


@dataclass
class SimulationTrace:
    seed: int
    policy: Dict[str, Any]
    rounds: List[Dict[str, Any]] = field(default_factory=list)
    outcome: Optional[AllocationOutcome] = None

    def lines(self) -> List[str]:
        head = {"type": "meta", "seed": self.seed, "policy": self.policy}
        out = [json.dumps(head, separators=(",", ":"))]
        out += [json.dumps({"type": "round", **r}, separators=(",", ":")) for r in self.rounds]
        return out

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"


# ---------------------------------------------------------------------------
# the simulation
# ---------------------------------------------------------------------------

class Simulation:
    """Mutable round-by-round state for one (scenario, policy, backend, seed).

    Args:
        scenario: participants, houses and the social graph.
        policy: validated allocation policy.
        backend: participant model; defaults to :class:`RuleBackend`.
        seed: root of every random draw.
        social: run the messaging/forum phase after decisions.
        parallel: generate messages per social-graph component on a thread pool.
    """

    def __init__(self, scenario: Scenario, policy: Policy, backend: Optional[Backend] = None, seed: int = 0,
                 social: bool = True, parallel: bool = False, forum_window: int = FORUM_WINDOW,
                 vulnerable_fraction: float = VULNERABLE_FRACTION, workers: int = 4):
        self.scenario = scenario
        self.policy = validate_policy(policy)
        self.backend = backend or RuleBackend()
        self.seed = seed
        self.social = social
        self.parallel = parallel
        self.forum_window = forum_window
        self.vulnerable_fraction = vulnerable_fraction
        self.workers = workers
        self.table = scenario.rating_table
        self.people = {p.id: p for p in scenario.participants}
        self.houses = {r.id: r for r in scenario.resources}

        self.round = 0
        self.queues = [QueueState(i) for i in range(policy.m)]
        blocks = partition_resources(scenario.resources, policy.resource_rule, policy.proportions,
                                     _ctx_rng(seed, "partition"))
        self.resource_queue: Dict[int, int] = {}
        for q, block in enumerate(blocks):
            for r in block:
                self.resource_queue[r.id] = q
        self.pending_resources = sorted(scenario.resources, key=lambda r: (r.entry_round, r.id))
        self.pending_participants = sorted(scenario.participants, key=lambda p: (p.entry_round, p.id))
        for r in self.pending_resources:
            self.queues[self.resource_queue[r.id]].pending.append(r.id)

        self.bands: Dict[int, int] = {}
        if policy.entry_rule in ("rent", "family"):
            self.bands = compute_entry_bands(scenario.participants, policy.entry_rule, policy.proportions)
        self.vfa_cache: Optional[Set[int]] = None
        if policy.sort_rule == "VFA":
            self.vfa_cache = designate_vulnerable(scenario.participants, "VFA", vulnerable_fraction, 0)

        self.queue_of: Dict[int, int] = {}
        self.memory: Dict[int, AgentMemory] = {}
        for p in scenario.participants:
            self.memory[p.id] = initial_memory(scenario.graph.neighbours(p.id))
        self.assignment: Dict[int, Optional[int]] = {p.id: None for p in scenario.participants}
        self.satisfaction: Dict[int, float] = {p.id: 0.0 for p in scenario.participants}
        self.wait: Dict[int, int] = {}
        self.quit: Set[int] = set()
        self.forum: List[Utterance] = []
        self.trace = SimulationTrace(seed, policy.to_dict())

    # -- helpers -----------------------------------------------------------
    def resolved(self, pid: int) -> bool:
        return pid in self.quit or self.assignment[pid] is not None

    def present(self) -> List[int]:
        return sorted(pid for pid in self.queue_of if not self.resolved(pid))

    @property
    def done(self) -> bool:
        return all(self.resolved(p.id) for p in self.scenario.participants)

    def queue_summaries(self) -> List[QueueSummary]:
        out = []
        for q in self.queues:
            ids = q.pool + q.pending
            houses = [self.houses[r] for r in ids]
            if not houses:
                out.append(QueueSummary(q.queue_id, 0))
                continue
            out.append(QueueSummary(
                q.queue_id, len(houses),
                min(h.size for h in houses), max(h.size for h in houses),
                min(h.rent for h in houses), max(h.rent for h in houses),
                sum(self.table.score("orientation", h.orientation) for h in houses) / len(houses),
                sum(self.table.score("floor", h.floor) for h in houses) / len(houses),
                len(q.waiting) + len(q.selection),
            ))
        return out

    def competitiveness(self) -> CompetitivenessReport:
        return compute_competitiveness(self.queues, self.houses, lambda r: self.table.bucket("size", r.size))

    def _quit(self, pid: int, log_: List[Dict[str, Any]], reason: str) -> None:
        self.quit.add(pid)
        self.wait[pid] = max(0, self.round - self.people[pid].entry_round)
        self.satisfaction[pid] = 0.0
        log_.append({"participant": pid, "reason": reason})

    # -- round phases ------------------------------------------------------
    def _admit(self, rec: Dict[str, Any]) -> None:
        pol = self.policy
        admitted_r = []
        while self.pending_resources and len(admitted_r) < pol.batch_r \
                and self.pending_resources[0].entry_round <= self.round:
            r = self.pending_resources.pop(0)
            q = self.queues[self.resource_queue[r.id]]
            q.pending.remove(r.id)
            q.pool.append(r.id)
            admitted_r.append(r.id)
        rec["admitted_resources"] = admitted_r

        admitted_p, deferred = [], []
        budget = pol.batch_p
        keep = []
        for p in self.pending_participants:
            if budget == 0 or p.entry_round > self.round:
                keep.append(p)
                continue
            if pol.entry_rule in ("rent", "family"):
                qi = self.bands[p.id]
            elif pol.entry_rule == "random":
                qi = _ctx_rng(self.seed, "entry", p.id).randrange(pol.m)
            else:
                try:
                    summaries = self.queue_summaries()
                    qi = int(self.backend.select_queue(p, summaries, self.memory[p.id], self.table))
                except BackendError as exc:
                    log.warning("round %d: participant %d queue choice failed, retrying next round: %s",
                                self.round, p.id, exc)
                    deferred.append(p.id)
                    keep.append(p)
                    budget -= 1
                    continue
                qi = min(max(qi, 0), pol.m - 1)
            budget -= 1
            self.queue_of[p.id] = qi
            admitted_p.append([p.id, qi])
            if self.queues[qi].closed:
                self._quit(p.id, rec["quits"], "queue closed")
            else:
                self.queues[qi].waiting.append(p.id)
        self.pending_participants = keep
        rec["admitted_participants"] = admitted_p
        if deferred:
            rec["deferred"] = deferred

    def _vulnerable(self) -> Set[int]:
        if self.policy.sort_rule == "VFA":
            return set(self.vfa_cache or ())
        if self.policy.sort_rule == "VFR":
            return designate_vulnerable(self.scenario.participants, "VFR", self.vulnerable_fraction,
                                        self.round, present=self.present())
        return set()

    def _promote(self, vulnerable: Set[int], rec: Dict[str, Any]) -> None:
        entry_rounds = {pid: self.people[pid].entry_round for pid in self.people}
        promotions = []
        for q in self.queues:
            q.waiting = sort_queue(q.waiting, self.policy.sort_rule, vulnerable, entry_rounds)
            promoted = []
            cap = q.capacity(self.policy.c)
            while q.waiting and len(q.selection) < cap:
                pid = q.waiting.pop(0)
                q.selection.append(SelectionEntry(pid, self.policy.k, self.round))
                promoted.append(pid)
            promotions.append({"queue": q.queue_id, "promoted": promoted, "waiting_after": list(q.waiting),
                               "capacity": cap, "selection_size": len(q.selection), "pool_size": len(q.pool)})
        rec["promotions"] = promotions

    def _decide(self, rec: Dict[str, Any]) -> None:
        report = self.competitiveness()
        rec["competitiveness"] = report.to_dict()
        decisions = []
        for q in self.queues:
            for entry in list(q.selection):
                if not q.pool:
                    break  # the rest wait for new houses; _settle trims them back to waiting
                pid = entry.participant_id
                p = self.people[pid]
                visible = [self.houses[r] for r in sorted(q.pool)]
                row: Dict[str, Any] = {"participant": pid, "queue": q.queue_id, "visible": [r.id for r in visible]}
                try:
                    d = self.backend.decide(p, visible, self.memory[pid], report, self.table, q.queue_id)
                except BackendError as exc:
                    log.warning("round %d: participant %d decision failed, turn skipped: %s", self.round, pid, exc)
                    row.update(action="skipped", reason=str(exc))
                    decisions.append(row)
                    continue
                row.update(action=d.action, resource=d.resource_id, inspected=d.inspected, reason=d.reason)
                if d.action == CHOOSE and d.resource_id in q.pool:
                    r = self.houses[d.resource_id]
                    q.pool.remove(r.id)
                    q.allocated.append(r.id)
                    q.selection.remove(entry)
                    self.assignment[pid] = r.id
                    self.satisfaction[pid] = score_resource(p, r, self.table, self.backend)[2]
                    self.wait[pid] = max(0, self.round - p.entry_round)
                elif d.action == QUIT:
                    q.selection.remove(entry)
                    self._quit(pid, rec["quits"], d.reason or "declined to continue")
                else:
                    if d.action == CHOOSE:  # picked something outside its pool: count as a decline
                        row["action"] = DECLINE
                        row["reason"] = "choice not in pool"
                    self._decline(q, entry, d.inspected)
                row["remaining"] = entry.remaining_choices
                decisions.append(row)
        rec["decisions"] = decisions

    def _decline(self, q: QueueState, entry: SelectionEntry, inspected: Optional[int]) -> None:
        pid = entry.participant_id
        mem = replace(self.memory[pid], declines=self.memory[pid].declines + 1)
        if inspected is not None and inspected in self.houses:
            fact = MemoryEntry("self", inspected, "condition", self.houses[inspected].condition, self.round)
            mem, liars = observe(mem, [fact])
            for liar in sorted(set(liars)):
                mem = self.backend.relate(self.people[pid], liar, ["lie"] * liars.count(liar), mem)
        self.memory[pid] = mem
        entry.remaining_choices -= 1
        q.selection.remove(entry)
        if entry.remaining_choices <= 0:
            q.waiting.append(pid)
        else:
            q.selection.append(entry)

    def _settle(self, rec: Dict[str, Any]) -> None:
        closures = []
        for q in self.queues:
            cap = q.capacity(self.policy.c)
            while len(q.selection) > cap:
                q.waiting.append(q.selection.pop().participant_id)
            if not q.closed and not q.pool and not q.pending:
                # nothing left to hand out and nothing still to arrive
                q.closed = True
                closures.append(q.queue_id)
                for pid in [e.participant_id for e in q.selection] + q.waiting:
                    self._quit(pid, rec["quits"], "queue closed")
                q.selection.clear()
                q.waiting.clear()
        if closures:
            rec["closed"] = closures

    # -- social phase ------------------------------------------------------
    def _visible_for(self, pid: int) -> List[HouseResource]:
        q = self.queues[self.queue_of[pid]]
        return [self.houses[r] for r in sorted(q.pool)]

    def _components(self, people: Sequence[int]) -> List[List[int]]:
        alive = set(people)
        parent = {p: p for p in people}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, _ in self.scenario.graph.edges:
            if a in alive and b in alive:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: Dict[int, List[int]] = {}
        for p in people:
            groups.setdefault(find(p), []).append(p)
        return [sorted(g) for _, g in sorted(groups.items())]

    def _generate(self, speakers: Sequence[int], alive: Set[int], memory: Mapping[int, AgentMemory],
                  report: CompetitivenessReport) -> List[Utterance]:
        out: List[Utterance] = []
        for i in speakers:
            p = self.people[i]
            visible = self._visible_for(i)
            mem = memory[i]
            qi = self.queue_of[i]
            for j, _rel in sorted(self.scenario.graph.neighbours(i).items()):
                if j not in alive:
                    continue
                rng = _ctx_rng(self.seed, self.round, i, j)
                plan = self.backend.plan(p, mem, report, j, rng, qi)
                relevant = sorted(self.queues[self.queue_of[j]].pool)
                utt = self.backend.speak(p, j, (), mem, report, plan, visible, self.table, relevant=relevant)
                if utt is not None:
                    out.append(utt)
            communities = sorted({r.community_id for r in visible})
            if communities:
                rng = _ctx_rng(self.seed, self.round, i, "forum")
                topic = rng.choice(communities)
                plan = self.backend.plan(p, mem, report, None, rng, qi)
                post = self.backend.speak(p, None, (), mem, report, plan, visible, self.table, topic=topic)
                if post is not None:
                    out.append(post)
        return out

    def _social(self, rec: Dict[str, Any]) -> None:
        people = self.present()
        if not people:
            return
        alive = set(people)
        snapshot = dict(self.memory)
        report = self.competitiveness()
        if self.parallel:
            groups = self._components(people)
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                chunks = list(pool.map(lambda g: self._generate(g, alive, snapshot, report), groups))
            utterances = [u for chunk in chunks for u in chunk]
        else:
            utterances = self._generate(people, alive, snapshot, report)
        private = sorted((u for u in utterances if not u.is_broadcast), key=lambda u: (u.listener_id, u.speaker_id))
        posts = sorted((u for u in utterances if u.is_broadcast), key=lambda u: u.speaker_id)

        for u in private:
            listener = self.people[u.listener_id]
            mem, outcome = self.backend.assess(listener, u, self.memory[listener.id], self.round)
            if outcome:
                mem = self.backend.relate(listener, u.speaker_id, [outcome], mem, (u,))
            self.memory[listener.id] = self.backend.reflect(mem)

        start = len(self.forum)
        self.forum.extend(posts)
        for pid in people:
            topics = {r.community_id for r in self._visible_for(pid)}
            mem = self.memory[pid]
            by_topic: Dict[int, List[int]] = {}
            for idx, post in enumerate(self.forum):
                if post.topic in topics:
                    by_topic.setdefault(post.topic, []).append(idx)
            window = sorted(i for ids in by_topic.values() for i in ids[-self.forum_window:])
            fresh = [i for i in window if i not in mem.seen_posts and self.forum[i].speaker_id != pid]
            for idx in fresh:
                mem, _ = self.backend.assess(self.people[pid], self.forum[idx], mem, self.round)
            if fresh:
                mem = replace(mem, seen_posts=mem.seen_posts | frozenset(fresh))
            self.memory[pid] = self.backend.reflect(mem)
        rec["messages"] = [u.to_dict() for u in private]
        rec["posts"] = [{"index": start + n, **u.to_dict()} for n, u in enumerate(posts)]

    # -- driver ------------------------------------------------------------
    def step_round(self) -> Dict[str, Any]:
        rec: Dict[str, Any] = {"round": self.round, "quits": []}
        self._admit(rec)
        vulnerable = self._vulnerable()
        if self.policy.sort_rule != "FIFO":
            rec["vulnerable"] = sorted(vulnerable)
        self._promote(vulnerable, rec)
        self._decide(rec)
        self._settle(rec)
        if self.social:
            self._social(rec)
        rec["queues"] = [q.snapshot() for q in self.queues]
        self.trace.rounds.append(rec)
        self.round += 1
        return rec

    def finish(self) -> AllocationOutcome:
        wait = dict(self.wait)
        for p in self.scenario.participants:
            if not self.resolved(p.id):
                wait[p.id] = max(0, self.round - p.entry_round)
        outcome = AllocationOutcome(dict(self.assignment), wait, dict(self.satisfaction), set(self.quit),
                                    self.round)
        self.trace.outcome = outcome
        return outcome


def run_simulation(scenario: Scenario, policy: Policy, backend: Optional[Backend] = None, seed: int = 0,
                   max_rounds: int = DEFAULT_MAX_ROUNDS, **options: Any) -> SimulationTrace:
    """Run rounds until everyone is allocated or has quit, or ``max_rounds`` is hit."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    sim = Simulation(scenario, policy, backend, seed, **options)
    while sim.round < max_rounds and not sim.done:
        sim.step_round()
    sim.finish()
    return sim.trace


def audit_trace(trace: SimulationTrace) -> List[str]:
    """Check a finished trace for conservation, capacity and deferral violations."""
    policy = trace.policy
    k, c = policy["k"], policy["c"]
    problems: List[str] = []
    owner: Dict[int, int] = {}
    stint: Dict[int, int] = {}
    for rec in trace.rounds:
        rnd = rec["round"]
        for prom in rec["promotions"]:
            if prom["selection_size"] > _ceil(c * prom["pool_size"]):
                problems.append(f"round {rnd} queue {prom['queue']}: selection over capacity after promotion")
            for pid in prom["promoted"]:
                stint[pid] = 0
        for d in rec["decisions"]:
            pid = d["participant"]
            if d["action"] == CHOOSE:
                rid = d["resource"]
                if rid not in d["visible"]:
                    problems.append(f"round {rnd}: participant {pid} got resource {rid} outside its pool")
                if rid in owner:
                    problems.append(f"round {rnd}: resource {rid} allocated twice")
                owner[rid] = pid
            elif d["action"] == DECLINE:
                stint[pid] = stint.get(pid, 0) + 1
                if stint[pid] > k:
                    problems.append(f"round {rnd}: participant {pid} declined {stint[pid]} times in one stint")
        for q in rec["queues"]:
            if len(q["selection"]) > _ceil(c * len(q["pool"])):
                problems.append(f"round {rnd} queue {q['queue']}: selection over capacity at round end")
            for pid, remaining in q["selection"]:
                if not 0 <= remaining <= k:
                    problems.append(f"round {rnd}: participant {pid} has {remaining} choices left")
    if trace.outcome is not None:
        held = [r for r in trace.outcome.assignment.values() if r is not None]
        if len(held) != len(set(held)):
            problems.append("outcome assignment is not injective")
        if any(w < 0 for w in trace.outcome.wait_rounds.values()):
            problems.append("negative wait")
    return problems
