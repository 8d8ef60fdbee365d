"""Full-information execution engine.

Synchronous runs apply one communication graph per round.  Asynchronous runs
replay an explicit event schedule (steps, message deliveries, crashes) over
fair-lossy links.  Both produce a :class:`Trace` holding, for every
configuration, the outputs, heard-of sets, view digests, obedience and clocks.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .algorithms import AlgorithmSpec, batch_outputs
from .model import (
    BINARY,
    LassoPattern,
    SyncExecution,
    ValueSet,
    check_inputs,
    heard_of_settle_round,
    pattern_document,
)
from .views import KnowledgeState, initial_view

DEFAULT_WINDOW = 4


class ScheduleError(ValueError):
    """An asynchronous schedule is malformed or violates its fairness window."""


# ---------------------------------------------------------------------------
# asynchronous schedules


@dataclass(frozen=True)
class AsyncSchedule:
    """Event list over ``n`` processes.

    Events are ``("step", p)``, ``("deliver", q, k, p)`` (hand ``q``'s message
    from its ``k``-th step to ``p``) and ``("crash", p)``.  A step consumes
    everything delivered so far, updates the view and broadcasts it.

    The finite list is read as the prefix of an infinite execution in which
    messages still undelivered at the end are lost and, afterwards, every
    alive process keeps stepping and receiving every other alive process'
    newest message.  That continuation is fair, so obedient processes are
    exactly those that never crash.
    """

    n: int
    events: tuple[tuple, ...]
    window: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(tuple(e) for e in self.events))

    def crashed(self) -> frozenset[int]:
        return frozenset(e[1] for e in self.events if e[0] == "crash")

    def obedient(self) -> frozenset[int]:
        return frozenset(range(self.n)) - self.crashed()

    def validate(self) -> None:
        """Raise :class:`ScheduleError` on malformed events or a fairness violation."""
        n, w = self.n, self.window
        if n < 1 or w < 1:
            raise ScheduleError("need n >= 1 and window >= 1")
        never_crash = self.obedient()
        if not never_crash:
            raise ScheduleError("at least one process must stay alive")
        steps = [0] * n
        dead: set[int] = set()
        delivered: set[tuple[int, int, int]] = set()
        # open[(q, p)]: list of (k, deadline step number of p)
        open_: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for i, ev in enumerate(self.events):
            kind = ev[0]
            if kind == "step" and len(ev) == 2:
                p = _pid(ev[1], n, i)
                if p in dead:
                    raise ScheduleError(f"event {i}: crashed process {p} steps")
                steps[p] += 1
                for q in range(n):
                    for k, due in open_.get((q, p), ()):
                        if due == steps[p]:
                            raise ScheduleError(
                                f"event {i}: fairness window {w} violated, "
                                f"{p} took {w} steps without a message from {q} (sent at step {k})"
                            )
                if p in never_crash:
                    for r in never_crash - {p}:
                        open_.setdefault((p, r), []).append((steps[p], steps[r] + w))
            elif kind == "deliver" and len(ev) == 4:
                q, k, p = _pid(ev[1], n, i), int(ev[2]), _pid(ev[3], n, i)
                if q == p:
                    raise ScheduleError(f"event {i}: self-delivery")
                if p in dead:
                    raise ScheduleError(f"event {i}: delivery to crashed process {p}")
                if not 1 <= k <= steps[q]:
                    raise ScheduleError(f"event {i}: {q} has not broadcast step {k}")
                if (q, k, p) in delivered:
                    raise ScheduleError(f"event {i}: message ({q}, {k}) delivered to {p} twice")
                delivered.add((q, k, p))
                if (q, p) in open_:
                    open_[(q, p)] = [(kk, due) for kk, due in open_[(q, p)] if kk > k]
            elif kind == "crash" and len(ev) == 2:
                p = _pid(ev[1], n, i)
                if p in dead:
                    raise ScheduleError(f"event {i}: process {p} crashes twice")
                dead.add(p)
            else:
                raise ScheduleError(f"event {i}: malformed event {ev!r}")

    def document(self) -> dict:
        return {"n": self.n, "window": self.window, "events": [list(e) for e in self.events]}

    @classmethod
    def from_document(cls, doc: dict) -> AsyncSchedule:
        return cls(int(doc["n"]), tuple(tuple(e) for e in doc["events"]), int(doc.get("window", DEFAULT_WINDOW)))


def _pid(x, n: int, i: int) -> int:
    p = int(x)
    if not 0 <= p < n:
        raise ScheduleError(f"event {i}: process id {p} out of range")
    return p


@dataclass(frozen=True)
class AsyncExecution:
    """Asynchronous execution: schedule plus input assignment."""

    schedule: AsyncSchedule
    inputs: tuple[int, ...]
    values: ValueSet = BINARY

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))
        check_inputs(self.inputs, self.values, self.schedule.n)

    @property
    def n(self) -> int:
        return self.schedule.n

    def canonical_key(self) -> tuple:
        return ("async", self.schedule, self.inputs, self.values)


def random_schedule(
    n: int,
    steps: int,
    seed: int,
    max_crashes: int | None = None,
    window: int = DEFAULT_WINDOW,
    loss: float = 0.5,
    flush_rounds: int | None = None,
) -> AsyncSchedule:
    """Seeded fair-lossy schedule with up to ``max_crashes`` (default ``n - 1``) crashes.

    Each step is preceded by random deliveries of senders' newest messages;
    a delivery is forced when skipping it would break the window.  The
    schedule ends with ``flush_rounds`` round-robin rounds of full delivery.
    """
    if n < 1 or steps < 0:
        raise ValueError("need n >= 1 and steps >= 0")
    rng = random.Random(seed)
    fmax = n - 1 if max_crashes is None else min(max_crashes, n - 1)
    f = rng.randint(0, max(fmax, 0))
    victims = rng.sample(range(n), f)
    crash_at = {p: rng.randint(0, max(steps // 2, 0)) for p in victims}
    alive = set(range(n))
    taken = [0] * n
    got = [[0] * n for _ in range(n)]  # got[q][p]: newest step of q delivered to p
    due: dict[tuple[int, int], int] = {}  # (q, p) -> step number of p by which q must arrive
    events: list[tuple] = []

    def deliver(q: int, p: int) -> None:
        events.append(("deliver", q, taken[q], p))
        got[q][p] = taken[q]
        due.pop((q, p), None)

    def step(p: int) -> None:
        events.append(("step", p))
        taken[p] += 1
        for r in alive - {p}:
            due.setdefault((p, r), taken[r] + window)

    def crash(p: int) -> None:
        events.append(("crash", p))
        alive.discard(p)
        for key in [k for k in due if p in k]:
            del due[key]

    for s in range(steps):
        for p in sorted(crash_at):
            if crash_at[p] == s and p in alive:
                crash(p)
        p = rng.choice(sorted(alive))
        for q in range(n):
            if q == p or taken[q] == 0 or got[q][p] == taken[q]:
                continue
            if due.get((q, p)) == taken[p] + 1 or rng.random() >= loss:
                deliver(q, p)
        step(p)
    for p in sorted(crash_at):
        if p in alive:
            crash(p)
    for _ in range(n + 1 if flush_rounds is None else flush_rounds):
        for p in sorted(alive):
            for q in sorted(alive - {p}):
                if taken[q] and got[q][p] != taken[q]:
                    deliver(q, p)
            step(p)
    return AsyncSchedule(n, tuple(events), window)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class Verdict:
    """Stabilization verdict: ``stabilized(value, round)`` or not-stabilized-by-horizon."""

    stabilized: bool
    value: int | None = None
    round: int | None = None
    certified: bool = False

    def __str__(self) -> str:
        if not self.stabilized:
            return "not-stabilized-by-horizon"
        return f"stabilized({self.value}, {self.round})"

    def document(self) -> dict:
        return {"stabilized": self.stabilized, "value": self.value, "round": self.round, "certified": self.certified}


@dataclass(frozen=True)
class Trace:
    """Per-configuration record of a run, indexed ``[t][p]`` for ``t = 0..horizon``."""

    spec: dict = field(compare=False)
    n: int
    horizon: int
    outputs: tuple[tuple[int, ...], ...]
    ho: tuple[tuple[int, ...], ...]
    digests: tuple[tuple[str, ...], ...]
    obedient: tuple[tuple[bool, ...], ...]
    clocks: tuple[tuple[int, ...], ...]
    views: tuple[tuple[KnowledgeState, ...], ...] = field(compare=False, repr=False)
    pattern: LassoPattern | None = None
    quiescent: bool = False

    @property
    def synchronous(self) -> bool:
        return self.pattern is not None

    def final_obedient(self) -> frozenset[int]:
        return frozenset(p for p in range(self.n) if self.obedient[-1][p])

    def document(self) -> dict:
        return trace_document(self)

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2)


def ho_set(trace: Trace, p: int, t: int) -> frozenset[int]:
    """``HO_p(C^t)``."""
    if not 0 <= t <= trace.horizon:
        raise ValueError(f"round {t} outside 0..{trace.horizon}")
    m = trace.ho[t][p]
    return frozenset(q for q in range(trace.n) if m >> q & 1)


def broadcasters(trace: Trace, t: int | None = None) -> frozenset[int]:
    """Processes heard of by every obedient process at ``C^t`` (default: last configuration)."""
    t = trace.horizon if t is None else t
    m = (1 << trace.n) - 1
    for p in range(trace.n):
        if trace.obedient[t][p]:
            m &= trace.ho[t][p]
    return frozenset(q for q in range(trace.n) if m >> q & 1)


def broadcasters_certified(trace: Trace, t: int | None = None) -> bool:
    """Whether :func:`broadcasters` at ``t`` is already the eventual broadcaster set."""
    t = trace.horizon if t is None else t
    if trace.pattern is not None:
        return t >= heard_of_settle_round(trace.pattern)
    return trace.quiescent and t == trace.horizon


def _certification_horizon(pattern: LassoPattern, multiplier: int | None) -> int:
    c = 4 * pattern.n if multiplier is None else multiplier
    return len(pattern.prefix) + c * len(pattern.loop)


def recommended_horizon(pattern: LassoPattern, multiplier: int | None = None) -> int:
    """A horizon comfortably past the certification threshold."""
    c = 4 * pattern.n if multiplier is None else multiplier
    return len(pattern.prefix) + 2 * c * len(pattern.loop)


def verdict_from_outputs(outputs, obedient: Iterable[int], certified: bool = False) -> Verdict:
    """Stabilization verdict for an output array ``[t][p]`` restricted to ``obedient``."""
    out = np.asarray(outputs)
    cols = sorted(obedient)
    if not cols:
        return Verdict(False)
    sub = out[:, cols]
    v = sub[-1, 0]
    if (sub[-1] != v).any():
        return Verdict(False)
    bad = np.nonzero((sub != v).any(axis=1))[0]
    s = int(bad[-1]) + 1 if bad.size else 0
    return Verdict(True, int(v), s, certified)


def _periodic_tail(outputs, period: int) -> bool:
    out = np.asarray(outputs)
    if out.shape[0] < 2 * period + 1:
        return False
    return bool((out[-period:] == out[-2 * period : -period]).all())


def stabilization_verdict(trace: Trace, multiplier: int | None = None) -> Verdict:
    """Minimal ``s`` from which all obedient outputs agree, with a certification flag.

    Synchronous verdicts are certified when the horizon reaches
    ``|prefix| + C * |loop|`` (``C = 4n`` by default) and the outputs over the
    last loop period repeat the previous period.  Asynchronous verdicts are
    certified when the run ends quiescent (no obedient process can learn of
    anything new).
    """
    if trace.pattern is not None:
        p = trace.pattern
        cert = trace.horizon >= _certification_horizon(p, multiplier) and _periodic_tail(trace.outputs, len(p.loop))
    else:
        cert = trace.quiescent
    return verdict_from_outputs(trace.outputs, trace.final_obedient(), cert)


# ---------------------------------------------------------------------------
# synchronous runs


def sync_views(pattern: LassoPattern, inputs: Sequence[int], horizon: int) -> list[tuple[KnowledgeState, ...]]:
    """Full-information views ``V_p(C^t)`` for ``t = 0..horizon``."""
    n = pattern.n
    cur = tuple(initial_view(p, inputs[p]) for p in range(n))
    rows = [cur]
    for t in range(1, horizon + 1):
        g = pattern.at(t)
        cur = tuple(KnowledgeState(p, t, inputs[p], tuple(cur[q] for q in g.in_neighbors[p])) for p in range(n))
        rows.append(cur)
    return rows


def run_sync(
    pattern: LassoPattern,
    inputs: Sequence[int],
    algorithm: AlgorithmSpec,
    horizon: int,
    values: ValueSet = BINARY,
) -> Trace:
    """Lock-step fault-free run of ``pattern`` for ``horizon`` rounds."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ex = SyncExecution(pattern, inputs, values)
    n = pattern.n
    rows = sync_views(pattern, ex.inputs, horizon)
    outputs = tuple(tuple(algorithm.decide(v, values) for v in row) for row in rows)
    spec = {
        "model": "sync",
        "algorithm": algorithm.id,
        "pattern": pattern_document(pattern),
        "inputs": list(ex.inputs),
        "values": list(values.values),
    }
    return Trace(
        spec=spec,
        n=n,
        horizon=horizon,
        outputs=outputs,
        ho=tuple(tuple(v.ho for v in row) for row in rows),
        digests=tuple(tuple(v.hexdigest for v in row) for row in rows),
        obedient=tuple((True,) * n for _ in rows),
        clocks=tuple((t,) * n for t in range(horizon + 1)),
        views=tuple(rows),
        pattern=pattern,
    )


def run_execution(execution, algorithm: AlgorithmSpec, horizon: int | None = None) -> Trace:
    """Dispatch on the execution kind."""
    if isinstance(execution, SyncExecution):
        h = recommended_horizon(execution.pattern) if horizon is None else horizon
        return run_sync(execution.pattern, execution.inputs, algorithm, h, execution.values)
    if isinstance(execution, AsyncExecution):
        return run_async(execution.schedule, execution.inputs, algorithm, horizon, execution.values)
    raise TypeError(f"not an execution: {execution!r}")


def sync_verdicts(
    algorithm: AlgorithmSpec,
    patterns: Sequence[LassoPattern],
    inputs: Sequence[Sequence[int]],
    horizon: int,
    values: ValueSet = BINARY,
    multiplier: int | None = None,
    backend: str | None = None,
) -> list[tuple[Verdict, frozenset[int]]]:
    """Batched verdicts and eventual broadcaster sets (one shared horizon)."""
    out = batch_outputs(algorithm, patterns, inputs, horizon, values, backend=backend)
    adj = np.stack([p.unroll(horizon) for p in patterns]) if patterns else None
    res = []
    if adj is None:
        return res
    ho = kernels.heard_of_masks(adj, backend=backend)
    for b, p in enumerate(patterns):
        cert = horizon >= _certification_horizon(p, multiplier) and _periodic_tail(out[b], len(p.loop))
        cert = cert and horizon >= heard_of_settle_round(p)
        m = int(np.bitwise_and.reduce(ho[b, -1]))
        bc = frozenset(q for q in range(p.n) if m >> q & 1)
        res.append((verdict_from_outputs(out[b], range(p.n), cert), bc))
    return res


# ---------------------------------------------------------------------------
# asynchronous runs


def run_async(
    schedule: AsyncSchedule,
    inputs: Sequence[int],
    algorithm: AlgorithmSpec,
    horizon: int | None = None,
    values: ValueSet = BINARY,
) -> Trace:
    """Replay ``schedule`` (first ``horizon`` events, default all)."""
    schedule.validate()
    ex = AsyncExecution(schedule, inputs, values)
    n = schedule.n
    events = schedule.events if horizon is None else schedule.events[:horizon]
    views = [initial_view(p, ex.inputs[p]) for p in range(n)]
    outs = [algorithm.decide(v, values) for v in views]
    sent: dict[tuple[int, int], KnowledgeState] = {}
    inbox: list[dict[bytes, KnowledgeState]] = [{} for _ in range(n)]
    alive = [True] * n
    rows_v, rows_o, rows_a = [tuple(views)], [tuple(outs)], [tuple(alive)]
    for ev in events:
        if ev[0] == "step":
            p = ev[1]
            received = (views[p],) + tuple(inbox[p].values())
            inbox[p] = {}
            views[p] = KnowledgeState(p, views[p].round + 1, ex.inputs[p], received)
            outs[p] = algorithm.decide(views[p], values)
            sent[(p, views[p].round)] = views[p]
        elif ev[0] == "deliver":
            msg = sent[(ev[1], ev[2])]
            inbox[ev[3]][msg.digest] = msg
        else:
            alive[ev[1]] = False
        rows_v.append(tuple(views))
        rows_o.append(tuple(outs))
        rows_a.append(tuple(alive))
    live = [p for p in range(n) if alive[p]]
    quiescent = horizon is None and len({views[p].ho for p in live}) == 1
    spec = {
        "model": "async",
        "algorithm": algorithm.id,
        "schedule": schedule.document(),
        "inputs": list(ex.inputs),
        "values": list(values.values),
    }
    return Trace(
        spec=spec,
        n=n,
        horizon=len(events),
        outputs=tuple(rows_o),
        ho=tuple(tuple(v.ho for v in row) for row in rows_v),
        digests=tuple(tuple(v.hexdigest for v in row) for row in rows_v),
        obedient=tuple(rows_a),
        clocks=tuple(tuple(v.round for v in row) for row in rows_v),
        views=tuple(rows_v),
        pattern=None,
        quiescent=quiescent,
    )


# ---------------------------------------------------------------------------
# serialization


def _members(mask: int, n: int) -> list[int]:
    return [q for q in range(n) if mask >> q & 1]


def trace_document(trace: Trace) -> dict:
    """Canonical document: spec echo, horizon, verdict and per-round arrays."""
    verdict = stabilization_verdict(trace)
    rounds = []
    for t in range(trace.horizon + 1):
        rounds.append(
            {
                "t": t,
                "outputs": list(trace.outputs[t]),
                "ho_sets": [_members(m, trace.n) for m in trace.ho[t]],
                "digests": list(trace.digests[t]),
                "obedient": list(trace.obedient[t]),
                "clocks": list(trace.clocks[t]),
            }
        )
    return {
        "spec": trace.spec,
        "horizon": trace.horizon,
        "verdict": verdict.document(),
        "verdict_text": str(verdict),
        "broadcasters": sorted(broadcasters(trace)),
        "broadcasters_certified": broadcasters_certified(trace),
        "rounds": rounds,
    }
