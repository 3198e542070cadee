import functools

import pytest

from allocsim.scenario import (
    HouseResource, ParticipantProfile, Scenario, ScenarioSpec, SocialGraph, generate_scenario,
)

# (criterion number, title) -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def scenario_51_28(seed=7):
    return generate_scenario(ScenarioSpec(51, 28), seed)


def person(pid, family=1, budget=2000.0, weights=None, personality="neutral", honesty=1.0, entry_round=0):
    return ParticipantProfile(
        id=pid, name=f"P{pid}", family_size=family, monthly_income=budget * 3, rent_budget=budget,
        feature_weights=weights or {"size": 1.0}, personality=personality, honesty=honesty,
        entry_round=entry_round,
    )


def house(rid, size=60.0, rent=1000.0, community=0, orientation="S", floor=3, entry_round=0,
          undisclosed="Ordinary flat with no notable issues."):
    return HouseResource(
        id=rid, community_id=community, size=size, rent=rent, orientation=orientation, floor=floor,
        bathroom="private", decoration="standard", disclosed=f"{size:g} m2 flat", undisclosed=undisclosed,
        entry_round=entry_round,
    )


def tiny_scenario(people, houses, edges=()):
    return Scenario(tuple(people), tuple(houses), SocialGraph(tuple(edges)))


@pytest.fixture(scope="session")
def scenario():
    return scenario_51_28(7)


@pytest.fixture
def small_scenario():
    return generate_scenario(ScenarioSpec(12, 6), 3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), (passed, detail) in sorted(ACCEPTANCE.items()):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] C{num:>2} {title}: {detail}")
