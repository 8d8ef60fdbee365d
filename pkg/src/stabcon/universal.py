"""Universal decision function over a finite, labeled execution family.

A :class:`DecisionLabeling` declares which members decide which value and
how they sit topologically: interior, included boundary, or isolated;
second-order boundary flags; connected components and their broadcasters.
Declarations are checked against computed evidence (limit sequences,
broadcaster sets, distances) before any decision is made.

A process decides by collecting the members that its current view cannot
rule out (the candidate set) and applying four cases in order: (a) all
candidates share a label; (b) exactly one label's boundary is hit; (c) the
second-order boundary points among the candidates lie in one boundary;
(d) the smallest label present.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .model import (
    BINARY,
    LassoPattern,
    SyncExecution,
    ValueSet,
    alpha,
    beta,
    is_valent,
    lcm,
    pattern_broadcasters,
    pattern_document,
    pattern_from_document,
)
from .topology import (
    SequenceFamily,
    _rows,
    certified_zero,
    d_nonuniform,
    horizon_cap,
    verify_limit,
)

STRUCTURES = ("interior", "included-boundary", "isolated")


class LabelingError(ValueError):
    """A labeling's declared structure is inconsistent or lacks evidence."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Unsolvable(ValueError):
    """A connected component has no broadcaster, so no algorithm can meet strong validity."""


@dataclass(frozen=True)
class Member:
    id: str
    execution: SyncExecution
    label: int
    structure: str = "interior"
    bd2: frozenset[int] = frozenset()
    component: str | None = None
    evidence: tuple[tuple[int, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "bd2", frozenset(self.bd2))
        ev = self.evidence.items() if isinstance(self.evidence, Mapping) else self.evidence
        object.__setattr__(self, "evidence", tuple(sorted((int(w), tuple(ids)) for w, ids in ev)))

    def evidence_for(self, w: int) -> tuple[str, ...] | None:
        for v, ids in self.evidence:
            if v == w:
                return ids
        return None


@dataclass(frozen=True)
class DecisionLabeling:
    members: tuple[Member, ...]
    values: ValueSet = BINARY
    broadcasters: tuple[tuple[str, tuple[int, ...]], ...] = ()
    horizon: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        bc = self.broadcasters.items() if isinstance(self.broadcasters, Mapping) else self.broadcasters
        object.__setattr__(self, "broadcasters", tuple(sorted((str(c), tuple(sorted(ps))) for c, ps in bc)))

    # lookups -----------------------------------------------------------

    def member(self, mid: str) -> Member:
        for m in self.members:
            if m.id == mid:
                return m
        raise KeyError(mid)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.members)

    @property
    def n(self) -> int:
        return self.members[0].execution.n

    def sigma(self, v: int) -> frozenset[str]:
        return frozenset(m.id for m in self.members if m.label == v)

    def bdin(self, v: int) -> frozenset[str]:
        return frozenset(m.id for m in self.members if m.label == v and m.structure == "included-boundary")

    def bd2(self, w: int) -> frozenset[str]:
        return frozenset(m.id for m in self.members if w in m.bd2)

    def components(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for m in self.members:
            if m.component is not None:
                out.setdefault(m.component, []).append(m.id)
        return out

    def component_broadcasters(self, comp: str) -> tuple[int, ...]:
        for c, ps in self.broadcasters:
            if c == comp:
                return ps
        return ()

    def labels(self) -> dict[str, int]:
        return {m.id: m.label for m in self.members}

    def relabel(self, labels: Mapping[str, int]) -> DecisionLabeling:
        ms = tuple(replace(m, label=labels.get(m.id, m.label)) for m in self.members)
        return replace(self, members=ms)

    def default_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        pre = max(len(m.execution.pattern.prefix) for m in self.members)
        per = lcm(*(len(m.execution.pattern.loop) for m in self.members))
        return min(2 * pre + 4 * self.n * per, horizon_cap())

    # documents ---------------------------------------------------------

    def document(self) -> dict:
        return {
            "values": list(self.values.values),
            "horizon": self.horizon,
            "members": [
                {
                    "id": m.id,
                    "pattern": pattern_document(m.execution.pattern),
                    "inputs": list(m.execution.inputs),
                    "label": m.label,
                    "structure": m.structure,
                    "bd2": sorted(m.bd2),
                    "component": m.component,
                    "evidence": {str(w): list(ids) for w, ids in m.evidence},
                }
                for m in self.members
            ],
            "components": {c: {"broadcasters": list(ps)} for c, ps in self.broadcasters},
        }

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2)

    @classmethod
    def from_document(cls, doc: dict) -> DecisionLabeling:
        try:
            values = ValueSet(tuple(int(v) for v in doc.get("values", (0, 1))))
            members = []
            for d in doc["members"]:
                ex = SyncExecution(pattern_from_document(d["pattern"]), tuple(d["inputs"]), values)
                members.append(
                    Member(
                        id=str(d["id"]),
                        execution=ex,
                        label=int(d["label"]),
                        structure=d.get("structure", "interior"),
                        bd2=frozenset(int(w) for w in d.get("bd2", ())),
                        component=d.get("component"),
                        evidence={int(w): tuple(ids) for w, ids in d.get("evidence", {}).items()},
                    )
                )
            comps = {c: tuple(int(p) for p in v.get("broadcasters", ())) for c, v in doc.get("components", {}).items()}
            horizon = doc.get("horizon")
        except (KeyError, TypeError, AttributeError) as e:
            raise LabelingError([f"malformed labeling document: {e!r}"]) from None
        return cls(tuple(members), values, comps, None if horizon is None else int(horizon))


# ---------------------------------------------------------------------------
# validation


def _sequence(labeling: DecisionLabeling, ids: Sequence[str], limit: Member) -> SequenceFamily:
    exs = [labeling.member(i).execution for i in ids]
    return SequenceFamily(lambda i: exs[i - 1], limit.execution, len(exs), name=f"->{limit.id}")


def evidence_holds(labeling: DecisionLabeling, m: Member, w: int) -> bool:
    """Whether ``m`` carries a verified sequence inside ``Sigma_w`` converging to it."""
    ids = m.evidence_for(w)
    if ids is None or len(ids) < 3:
        return False
    if any(labeling.member(i).label != w for i in ids):
        return False
    return verify_limit(_sequence(labeling, ids, m), "nonuniform").passed


def validate(labeling: DecisionLabeling, require_proper: bool = True) -> None:
    """Raise :class:`LabelingError` listing every violated declaration."""
    problems: list[str] = []
    if not labeling.members:
        raise LabelingError(["empty family"])
    ids = labeling.ids
    if len(set(ids)) != len(ids):
        problems.append("duplicate member ids")
    known = set(ids)
    ns = {m.execution.n for m in labeling.members}
    if len(ns) != 1:
        problems.append(f"members disagree on n: {sorted(ns)}")
    for m in labeling.members:
        if not isinstance(m.execution, SyncExecution):
            problems.append(f"{m.id}: only synchronous members are supported")
        if m.label not in labeling.values:
            problems.append(f"{m.id}: label {m.label} not in value set")
        if m.structure not in STRUCTURES:
            problems.append(f"{m.id}: unknown structure {m.structure!r}")
        if not m.bd2 <= set(labeling.values):
            problems.append(f"{m.id}: second-order boundary flags outside the value set")
        for w, seq in m.evidence:
            missing = [i for i in seq if i not in known]
            if missing:
                problems.append(f"{m.id}: evidence refers to unknown members {missing}")
    if problems:
        raise LabelingError(problems)
    if require_proper:
        for m in labeling.members:
            if m.structure == "included-boundary" and not evidence_holds(labeling, m, m.label):
                problems.append(f"{m.id}: no verified sequence in its own decision set converges to it")
    comps = labeling.components()
    for c, _ in labeling.broadcasters:
        if c not in comps:
            problems.append(f"broadcasters declared for unknown component {c!r}")
    for c, mids in comps.items():
        problems.extend(_check_component(labeling, c, mids))
    if problems:
        raise LabelingError(problems)


def _check_component(labeling: DecisionLabeling, comp: str, mids: list[str]) -> list[str]:
    out = []
    exs = [labeling.member(i).execution for i in mids]
    for p in labeling.component_broadcasters(comp):
        for mid, ex in zip(mids, exs):
            if p not in pattern_broadcasters(ex.pattern):
                out.append(f"component {comp}: {p} is not a broadcaster of {mid}")
        if len({ex.inputs[p] for ex in exs}) > 1:
            out.append(f"component {comp}: broadcaster {p} has differing inputs")
    # chain-connectedness under d_nu < 1
    reached = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(len(exs)):
            if j not in reached and d_nonuniform(exs[i], exs[j]).exponent != 0:
                reached.add(j)
                frontier.append(j)
    if len(reached) != len(exs):
        out.append(f"component {comp} is not chained by distances below 1")
    return out


# ---------------------------------------------------------------------------
# candidate sets and decisions


class _Index:
    """Digest lookup ``(t, p, digest) -> members`` for a labeling, filled lazily."""

    def __init__(self, labeling: DecisionLabeling):
        self.labeling = labeling
        self.by_round: dict[tuple[int, int], dict[bytes, list[str]]] = {}

    def digest(self, mid: str, p: int, t: int) -> bytes:
        rows, _ = _rows(self.labeling.member(mid).execution, t)
        return rows[t][p]

    def lookup(self, p: int, t: int, digest: bytes) -> list[str]:
        key = (t, p)
        if key not in self.by_round:
            table: dict[bytes, list[str]] = {}
            for m in self.labeling.members:
                rows, _ = _rows(m.execution, t)
                table.setdefault(rows[t][p], []).append(m.id)
            self.by_round[key] = table
        return self.by_round[key].get(digest, [])


_INDEXES: dict[int, tuple[DecisionLabeling, _Index]] = {}


def _index(labeling: DecisionLabeling) -> _Index:
    hit = _INDEXES.get(id(labeling))
    if hit is not None and hit[0] is labeling:
        return hit[1]
    if len(_INDEXES) > 32:
        _INDEXES.clear()
    idx = _Index(labeling)
    _INDEXES[id(labeling)] = (labeling, idx)
    return idx


def candidate_set(labeling: DecisionLabeling, gamma: str, p: int, t: int) -> frozenset[str]:
    """Members in which ``p`` has, at some configuration, the view it has in ``gamma`` at ``C^t``.

    Synchronous views carry their round number, so only configuration ``t``
    of each member can match.
    """
    idx = _index(labeling)
    return frozenset(idx.lookup(p, t, idx.digest(gamma, p, t)))


@dataclass(frozen=True)
class UniversalDecision:
    value: int
    case: str
    candidates: frozenset[str] = field(repr=False)


def decide_candidates(labeling: DecisionLabeling, cands: Iterable[str]) -> UniversalDecision:
    """Apply cases (a)-(d) to a candidate set.

    The result depends on the candidate set alone, so runs in which ``p`` has
    the same view get the same decision.
    """
    D = frozenset(cands)
    vals = labeling.values.values
    for v in vals:
        if D <= labeling.sigma(v):
            return UniversalDecision(v, "a", D)
    hit = [w for w in vals if D & labeling.bdin(w)]
    if len(hit) == 1:
        return UniversalDecision(hit[0], "b", D)
    if len(hit) >= 2:
        X = set(D)
        for w in hit:
            X &= labeling.bd2(w)
        if X:
            for v in vals:
                if X <= labeling.bdin(v):
                    return UniversalDecision(v, "c", D)
    for w in vals:
        if D & labeling.sigma(w):
            return UniversalDecision(w, "d", D)
    raise AssertionError("candidate set is never empty")


def universal_decide(labeling: DecisionLabeling, gamma: str, p: int, t: int) -> UniversalDecision:
    return decide_candidates(labeling, candidate_set(labeling, gamma, p, t))


# ---------------------------------------------------------------------------
# stabilization check


@dataclass(frozen=True)
class MemberReport:
    id: str
    label: int
    outputs: tuple[tuple[int, ...], ...]
    cases: tuple[tuple[str, ...], ...]
    stabilized_value: int | None
    stabilization_round: int | None
    certified: bool

    @property
    def passed(self) -> bool:
        return self.certified and self.stabilized_value == self.label


@dataclass(frozen=True)
class StabilizationReport:
    members: tuple[MemberReport, ...]
    horizon: int

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.members)

    def violations(self) -> list[MemberReport]:
        return [m for m in self.members if not m.passed]

    def cases_used(self) -> set[str]:
        return {c for m in self.members for row in m.cases for c in row}

    def document(self) -> dict:
        return {
            "horizon": self.horizon,
            "passed": self.passed,
            "cases_used": sorted(self.cases_used()),
            "members": [
                {
                    "id": m.id,
                    "label": m.label,
                    "stabilized_value": m.stabilized_value,
                    "stabilization_round": m.stabilization_round,
                    "certified": m.certified,
                    "passed": m.passed,
                }
                for m in self.members
            ],
        }


Decider = Callable[[DecisionLabeling, str, int, int], UniversalDecision]


def check_stabilizing(
    labeling: DecisionLabeling,
    decide: Decider = universal_decide,
    horizon: int | None = None,
) -> StabilizationReport:
    """Run the decider for every member, process and round up to ``horizon``.

    Candidate sets only shrink; once every remaining candidate is at certified
    ``d_p``-distance zero from the member they can never shrink again, so the
    decisions are final.  That is the certification condition.
    """
    validate(labeling)
    H = labeling.default_horizon() if horizon is None else horizon
    reports = []
    for m in labeling.members:
        outs, cases = [], []
        for t in range(H + 1):
            ds = [decide(labeling, m.id, p, t) for p in range(labeling.n)]
            outs.append(tuple(d.value for d in ds))
            cases.append(tuple(d.case for d in ds))
        last = [candidate_set(labeling, m.id, p, H) for p in range(labeling.n)]
        cert = all(
            certified_zero(m.execution, labeling.member(o).execution, p) for p in range(labeling.n) for o in last[p]
        )
        final = set(outs[-1])
        if len(final) == 1:
            v = outs[-1][0]
            s = H
            while s > 0 and set(outs[s - 1]) == {v}:
                s -= 1
            reports.append(MemberReport(m.id, m.label, tuple(outs), tuple(cases), v, s, cert))
        else:
            reports.append(MemberReport(m.id, m.label, tuple(outs), tuple(cases), None, None, cert))
    return StabilizationReport(tuple(reports), H)


# ---------------------------------------------------------------------------
# reductions


def _offending(labeling: DecisionLabeling) -> list[Member]:
    return [
        m
        for m in labeling.members
        if m.structure == "included-boundary" and not evidence_holds(labeling, m, m.label)
    ]


def properify(labeling: DecisionLabeling, max_passes: int = 64) -> DecisionLabeling:
    """Relabel boundary members that are not limits of their own decision set.

    Each such member moves to a value ``w`` for which it carries a verified
    sequence in ``Sigma_w``.  Members whose inputs are all equal keep their
    label.  Repeats until nothing changes, so the result is a fixpoint.
    """
    validate(labeling, require_proper=False)
    cur = labeling
    for _ in range(max_passes):
        changes: dict[str, int] = {}
        stuck = []
        for m in _offending(cur):
            if is_valent(m.execution.inputs):
                continue
            target = next(
                (w for w in cur.values.values if w != m.label and evidence_holds(cur, m, w)),
                None,
            )
            if target is None:
                stuck.append(m.id)
            else:
                changes[m.id] = target
        if stuck:
            raise LabelingError([f"{i}: not a limit of its decision set and no other set is evidenced" for i in stuck])
        if not changes:
            return cur
        cur = cur.relabel(changes)
    raise LabelingError(["relabeling did not reach a fixpoint"])


def strong_reshuffle(labeling: DecisionLabeling) -> DecisionLabeling:
    """Relabel each component with the input of its smallest declared broadcaster."""
    validate(labeling, require_proper=False)
    comps = labeling.components()
    loose = [m.id for m in labeling.members if m.component is None]
    if loose:
        raise Unsolvable(f"members without a declared component: {loose}")
    labels = {}
    for c, mids in comps.items():
        bcs = labeling.component_broadcasters(c)
        if not bcs:
            raise Unsolvable(f"component {c!r} has no broadcaster")
        b = min(bcs)
        for mid in mids:
            labels[mid] = labeling.member(mid).execution.inputs[b]
    return labeling.relabel(labels)


# ---------------------------------------------------------------------------
# families


def one_message_labeling(i_max: int = 8) -> DecisionLabeling:
    """``{alpha_i, beta_i : 1 <= i <= i_max}`` with inputs ``(0, 1)``.

    ``Sigma_0`` holds the ``alpha_i`` (only the left process is ever heard
    of), ``Sigma_1`` the ``beta_i``.  Every member is an included boundary
    point: the other family accumulates at it.  The silent run is left out:
    it is indistinguishable to the left process from every ``alpha_i`` and to
    the right one from every ``beta_i``, so no decision can stabilize on it.
    """
    a_ids = [f"alpha{i}" for i in range(1, i_max + 1)]
    b_ids = [f"beta{i}" for i in range(1, i_max + 1)]
    members = []
    for i in range(1, i_max + 1):
        own_a = tuple(x for x in a_ids if x != f"alpha{i}")[:3]
        own_b = tuple(x for x in b_ids if x != f"beta{i}")[:3]
        members.append(
            Member(f"alpha{i}", SyncExecution(alpha(i), (0, 1)), 0, "included-boundary", {1}, "A", {0: own_a})
        )
        members.append(
            Member(f"beta{i}", SyncExecution(beta(i), (0, 1)), 1, "included-boundary", {0}, "B", {1: own_b})
        )
    return DecisionLabeling(tuple(members), BINARY, {"A": (0,), "B": (1,)})


def three_label_family() -> DecisionLabeling:
    """Small three-valued family whose early rounds hit every decision case.

    One-message runs where the sender is the only broadcaster; the label is
    the sender's input.  At ``C^0`` the left process with input 0 sees one
    boundary (case b), the right process with input 1 sees two boundaries
    meeting in a flagged point (case c), and the left process with input 2
    sees two boundaries without one (case d).  Later rounds settle via (a).
    """
    V = ValueSet((0, 1, 2))
    ex = lambda pat, inp: SyncExecution(pat, inp, V)  # noqa: E731
    members = (
        Member("f1", ex(alpha(1), (0, 1)), 0, "included-boundary", {0, 1}, "c0", {0: ("f2", "f2", "f2")}),
        Member("f2", ex(alpha(2), (0, 1)), 0, "included-boundary", (), "c0", {0: ("f1", "f1", "f1")}),
        Member("f3", ex(beta(1), (2, 1)), 1, "included-boundary", (), "c1", {1: ("f4", "f4", "f4")}),
        Member("f4", ex(beta(2), (2, 1)), 1, "interior", (), "c1"),
        Member("f5", ex(alpha(1), (2, 0)), 2, "included-boundary", (), "c2", {2: ("f7", "f7", "f7")}),
        Member("f6", ex(beta(1), (0, 2)), 2, "interior", (), "c3"),
        Member("f7", ex(alpha(2), (2, 0)), 2, "interior", (), "c2"),
    )
    return DecisionLabeling(members, V, {"c0": (0,), "c1": (1,), "c2": (0,), "c3": (1,)})


def algorithm_labeling(
    executions: Sequence[SyncExecution],
    labels: Sequence[int],
    values: ValueSet = BINARY,
    ids: Sequence[str] | None = None,
) -> DecisionLabeling:
    """All-interior labeling (no declared boundary structure)."""
    ids = list(ids) if ids is not None else [f"m{i}" for i in range(len(executions))]
    return DecisionLabeling(tuple(Member(i, e, v) for i, e, v in zip(ids, executions, labels)), values)


def pattern_id(pattern: LassoPattern, inputs: Sequence[int]) -> str:
    return f"{pattern.literal}|{''.join(str(v) for v in inputs)}"
