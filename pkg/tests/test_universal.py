from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eventual_broadcasters
from stabcon.model import BINARY, SyncExecution, alpha, beta, eta, parse_pattern
from stabcon.universal import (
    DecisionLabeling,
    LabelingError,
    Member,
    Unsolvable,
    algorithm_labeling,
    candidate_set,
    check_stabilizing,
    decide_candidates,
    evidence_holds,
    one_message_labeling,
    pattern_id,
    properify,
    strong_reshuffle,
    three_label_family,
    universal_decide,
    validate,
)

ONE = one_message_labeling(8)
THREE = three_label_family()


@pytest.mark.parametrize(
    "cands,value,case",
    [
        ({"f1", "f2"}, 0, "a"),
        ({"f1", "f4"}, 0, "b"),
        ({"f1", "f3"}, 0, "c"),
        ({"f3", "f5"}, 1, "d"),
        ({"f4", "f6"}, 1, "d"),
        ({"f6", "f7"}, 2, "a"),
    ],
)
def test_decision_cases(cands, value, case):
    d = decide_candidates(THREE, cands)
    assert (d.value, d.case) == (value, case)


def test_one_message_family_stabilizes_without_case_c():
    rep = check_stabilizing(ONE)
    assert rep.passed
    assert rep.cases_used() <= {"a", "b", "d"}
    for m in rep.members:
        assert m.stabilized_value == m.label and m.certified
    doc = rep.document()
    assert doc["passed"] and len(doc["members"]) == 16


def test_three_label_family_hits_every_case():
    rep = check_stabilizing(THREE)
    assert rep.passed and rep.cases_used() == {"a", "b", "c", "d"}


def test_round_zero_cases_on_three_label_family():
    assert universal_decide(THREE, "f1", 0, 0).case == "b"
    assert universal_decide(THREE, "f3", 1, 0).case == "c"
    assert universal_decide(THREE, "f5", 0, 0).case == "d"


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ONE.ids), st.integers(0, 1), st.integers(0, 15))
def test_candidate_sets_shrink_and_contain_self(mid, p, t):
    a, b = candidate_set(ONE, mid, p, t), candidate_set(ONE, mid, p, t + 1)
    assert mid in a and mid in b
    assert b <= a


def test_silent_run_breaks_the_decider():
    extra = Member("eta", SyncExecution(eta(), (0, 1)), 0)
    lab = DecisionLabeling(ONE.members + (extra,), BINARY, dict(ONE.broadcasters))
    rep = check_stabilizing(lab)
    assert not rep.passed
    assert [m.id for m in rep.violations()] == ["eta"]


@pytest.mark.parametrize("lab", [ONE, THREE], ids=["one-message", "three-label"])
def test_decisions_depend_only_on_the_view(lab):
    for t in range(6):
        for p in range(lab.n):
            for mid in lab.ids:
                d = universal_decide(lab, mid, p, t)
                for other in d.candidates:
                    assert universal_decide(lab, other, p, t).value == d.value


def test_properify_moves_member_to_evidenced_set():
    I = (0, 1)
    gamma = Member(
        "gamma",
        SyncExecution(parse_pattern(":<"), I),
        0,
        "included-boundary",
        evidence={1: ("d1", "d2", "d3")},
    )
    deltas = tuple(
        Member(f"d{i}", SyncExecution(parse_pattern("<" * i + "=:<"), (1, 1)), 1) for i in range(1, 4)
    )
    lab = DecisionLabeling((gamma,) + deltas, BINARY)
    with pytest.raises(LabelingError):
        validate(lab)
    assert evidence_holds(lab, gamma, 1)
    fixed = properify(lab)
    assert fixed.member("gamma").label == 1
    validate(fixed)
    assert properify(fixed) == fixed


def test_properify_keeps_valent_members_and_reports_stuck_ones():
    lone = Member("g", SyncExecution(parse_pattern(":<"), (0, 1)), 0, "included-boundary")
    with pytest.raises(LabelingError):
        properify(DecisionLabeling((lone,), BINARY))
    valent = Member("v", SyncExecution(parse_pattern(":<"), (1, 1)), 1, "included-boundary")
    lab = DecisionLabeling((valent,), BINARY)
    assert properify(lab) == lab


def test_properify_fixes_nothing_on_proper_families():
    assert properify(ONE) == ONE
    assert properify(THREE) == THREE


def test_strong_reshuffle_uses_broadcaster_inputs():
    ms = (
        Member("x", SyncExecution(parse_pattern(":>"), (0, 1)), 1, component="A"),
        Member("y", SyncExecution(parse_pattern("<:>"), (0, 0)), 1, component="A"),
        Member("z", SyncExecution(parse_pattern(":<"), (0, 1)), 0, component="B"),
    )
    lab = DecisionLabeling(ms, BINARY, {"A": (0,), "B": (1,)})
    out = strong_reshuffle(lab)
    assert out.labels() == {"x": 0, "y": 0, "z": 1}
    for m in out.members:
        assert m.label == m.execution.inputs[min(eventual_broadcasters(m.execution.pattern))]


def test_unsolvable_components():
    m = Member("x", SyncExecution(eta(), (0, 1)), 0, component="A")
    with pytest.raises(Unsolvable):
        strong_reshuffle(DecisionLabeling((m,), BINARY))
    loose = Member("y", SyncExecution(alpha(1), (0, 1)), 0)
    with pytest.raises(Unsolvable):
        strong_reshuffle(DecisionLabeling((loose,), BINARY))


@pytest.mark.parametrize(
    "members,bc",
    [
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 0), Member("a", SyncExecution(beta(1), (0, 1)), 1)), {}),
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 3),), {}),
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 0, "weird"),), {}),
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 0, evidence={0: ("q",)}),), {}),
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 0, component="A"),), {"A": (1,)}),
        ((Member("a", SyncExecution(alpha(1), (0, 1)), 0),), {"Z": (0,)}),
        (
            (
                Member("a", SyncExecution(alpha(1), (0, 1)), 0, component="A"),
                Member("b", SyncExecution(alpha(1), (1, 1)), 0, component="A"),
            ),
            {"A": (0,)},
        ),
    ],
)
def test_validate_rejects(members, bc):
    with pytest.raises(LabelingError):
        validate(DecisionLabeling(members, BINARY, bc))


def test_component_must_be_chained():
    ms = (
        Member("a", SyncExecution(parse_pattern(":="), (0, 0)), 0, component="A"),
        Member("b", SyncExecution(parse_pattern(":="), (1, 1)), 1, component="A"),
    )
    with pytest.raises(LabelingError, match="chained"):
        validate(DecisionLabeling(ms, BINARY))


def test_document_round_trip():
    for lab in (ONE, THREE):
        back = DecisionLabeling.from_document(json.loads(lab.to_json()))
        assert back == lab
    with pytest.raises(LabelingError):
        DecisionLabeling.from_document({"members": [{"id": "x"}]})


def test_algorithm_labeling_and_ids():
    exs = [SyncExecution(alpha(1), (0, 1)), SyncExecution(beta(1), (0, 1))]
    lab = algorithm_labeling(exs, [0, 1])
    assert lab.ids == ("m0", "m1")
    assert pattern_id(alpha(1), (0, 1)) == "->:-|01"
