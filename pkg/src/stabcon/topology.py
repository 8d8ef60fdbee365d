"""Distances between executions, limits of sequences, and the LL prefix order.

``d_p(a, b) = 2^-t`` where ``t`` is the first configuration at which ``p``'s
views differ (or ``p`` is not obedient in one of the runs); it is ``0`` when no
such configuration exists.  Divergence times come from simulated view
digests.  Exact zeros come from a structural test on ``p``'s causal cone, so a
finite horizon never has to be mistaken for infinity.
"""

from __future__ import annotations

import csv
import io
import os
from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .model import (
    LL_ALPHABET,
    BOTH,
    LEFT,
    RIGHT,
    CommGraph,
    LassoPattern,
    SyncExecution,
    lcm,
)
from .simulator import AsyncExecution, run_async, sync_views
from .algorithms import from_callback

HORIZON_CAP_ENV = "STABCON_HORIZON_CAP"
DEFAULT_HORIZON_CAP = 512


@dataclass(frozen=True, order=False)
class DistanceValue:
    """``zero``, ``dyadic`` (exactly ``2^-exponent``) or ``upper`` (``0 < d <= 2^-exponent``)."""

    kind: str
    exponent: int | None = None
    certified: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "dyadic", "upper"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if (self.kind == "zero") != (self.exponent is None):
            raise ValueError("zero carries no exponent; other kinds need one")

    @classmethod
    def zero(cls) -> DistanceValue:
        return cls("zero")

    @classmethod
    def dyadic(cls, t: int) -> DistanceValue:
        return cls("dyadic", int(t))

    @classmethod
    def upper(cls, t: int) -> DistanceValue:
        return cls("upper", int(t), certified=False)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def bound(self) -> Fraction:
        """Exact value (``zero``/``dyadic``) or upper bound (``upper``)."""
        return Fraction(0) if self.exponent is None else Fraction(1, 2**self.exponent)

    def __str__(self) -> str:
        if self.kind == "zero":
            return "0"
        if self.kind == "dyadic":
            return f"2^-{self.exponent}"
        return f"<=2^-{self.exponent}"

    @classmethod
    def parse(cls, text: str) -> DistanceValue:
        text = text.strip()
        if text == "0":
            return cls.zero()
        if text.startswith("<=2^-"):
            return cls.upper(int(text[5:]))
        if text.startswith("2^-"):
            return cls.dyadic(int(text[3:]))
        raise ValueError(f"not a distance literal: {text!r}")


def _sort_key(d: DistanceValue) -> tuple:
    # zero < upper(e) <= 2^-e; an upper bound always sits strictly below the
    # dyadic values computed with the same horizon
    if d.kind == "zero":
        return (0, 0)
    return (1, -d.exponent, 0 if d.kind == "upper" else 1)


def min_distance(ds: Iterable[DistanceValue]) -> DistanceValue:
    ds = list(ds)
    if not ds:
        raise ValueError("empty minimum")
    best = min(ds, key=_sort_key)
    if best.kind == "dyadic" and any(d.kind == "upper" and d.exponent <= best.exponent for d in ds):
        # an upper bound at least as large as the dyadic value: only a bound survives
        return DistanceValue.upper(best.exponent)
    return best


def max_distance(ds: Iterable[DistanceValue]) -> DistanceValue:
    ds = list(ds)
    if not ds:
        return DistanceValue.zero()
    best = max(ds, key=_sort_key)
    if best.kind == "upper" or not any(d.kind == "upper" for d in ds):
        return best
    # dyadic maximum; an upper bound above it leaves the sup undetermined
    loose = [d for d in ds if d.kind == "upper" and d.exponent < best.exponent]
    return DistanceValue.upper(min(d.exponent for d in loose)) if loose else best


# ---------------------------------------------------------------------------
# view digests


def horizon_cap() -> int:
    raw = os.environ.get(HORIZON_CAP_ENV)
    return int(raw) if raw else DEFAULT_HORIZON_CAP


def default_horizon(a, b) -> int:
    if isinstance(a, SyncExecution) and isinstance(b, SyncExecution):
        pa, pb = a.pattern, b.pattern
        h = len(pa.prefix) + len(pb.prefix) + 4 * a.n * lcm(len(pa.loop), len(pb.loop))
        return min(h, horizon_cap())
    return max(len(x.schedule.events) if isinstance(x, AsyncExecution) else 0 for x in (a, b))


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 8192
_VIEW_ONLY = from_callback("views-only", lambda view, values: view.input, domain=("sync", "async"))


def _rows(execution, horizon: int) -> tuple[tuple[tuple[bytes, ...], ...], tuple[tuple[bool, ...], ...]]:
    """Digests ``[t][p]`` and obedience ``[t][p]`` for ``t = 0..horizon``."""
    key = execution.canonical_key() if isinstance(execution, SyncExecution) else execution
    hit = _CACHE.get(key)
    if hit is not None and len(hit[0]) > horizon:
        _CACHE.move_to_end(key)
        return hit[0][: horizon + 1], hit[1][: horizon + 1]
    if isinstance(execution, SyncExecution):
        views = sync_views(execution.pattern, execution.inputs, horizon)
        dig = tuple(tuple(v.digest for v in row) for row in views)
        ob = ((True,) * execution.n,) * (horizon + 1)
    elif isinstance(execution, AsyncExecution):
        tr = run_async(execution.schedule, execution.inputs, _VIEW_ONLY, values=execution.values)
        dig = tuple(tuple(v.digest for v in row) for row in tr.views)
        ob = tr.obedient
    else:
        raise TypeError(f"not an execution: {execution!r}")
    _CACHE[key] = (dig, ob)
    if len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return dig[: horizon + 1], ob[: horizon + 1]


def divergence_round(a, b, p: int, horizon: int) -> int | None:
    """First ``t <= horizon`` at which ``p``'s views differ or ``p`` is not obedient."""
    da, oa = _rows(a, horizon)
    db, ob = _rows(b, horizon)
    for t in range(min(len(da), len(db))):
        if not (oa[t][p] and ob[t][p]) or da[t][p] != db[t][p]:
            return t
    return None


# ---------------------------------------------------------------------------
# structural zero test


def causal_cone(pattern: LassoPattern, p: int, upto: int) -> list[int]:
    """``K[s]`` for ``s = 0..upto``: processes whose state at ``C^s`` eventually reaches ``p``.

    ``K[s]`` is ``{p}`` plus every in-neighbour in round ``s + 1`` of ``K[s + 1]``;
    it only shrinks as ``s`` grows and is loop-periodic after the prefix, so the
    periodic part is a backward fixpoint.
    """
    n, k, period = pattern.n, len(pattern.prefix), len(pattern.loop)
    upto = max(upto, k + period)
    # phase[j]: K at s = k + j (j in 0..period-1), grown to a fixpoint
    phase = [1 << p] * period
    changed = True
    while changed:
        changed = False
        for j in reversed(range(period)):
            nxt = phase[(j + 1) % period]
            m = (1 << p) | _in_union(pattern.at(k + j + 1), nxt, n)
            if m | phase[j] != phase[j]:
                phase[j] |= m
                changed = True
    K = [0] * (upto + 1)
    for s in range(k, upto + 1):
        K[s] = phase[(s - k) % period]
    for s in reversed(range(k)):
        K[s] = (1 << p) | _in_union(pattern.at(s + 1), K[s + 1], n)
    return K


def _in_union(g: CommGraph, mask: int, n: int) -> int:
    m = 0
    for r in range(n):
        if mask >> r & 1:
            m |= g.in_masks[r]
    return m


def zero_key(execution: SyncExecution, p: int, span: int) -> tuple:
    """Everything ``p`` can ever learn, over ``span`` rounds.

    With ``span >= max prefix + lcm of loop lengths`` over a set of executions,
    two of them have ``d_p = 0`` iff their keys are equal.
    """
    pat = execution.pattern
    K = causal_cone(pat, p, span)
    n = pat.n
    inputs = tuple((q, execution.inputs[q]) for q in range(n) if K[0] >> q & 1)
    rounds = []
    for s in range(1, span + 1):
        g = pat.at(s)
        rounds.append(tuple((q, g.in_masks[q]) for q in range(n) if K[s] >> q & 1))
    return (inputs, tuple(rounds))


def certified_zero(a: SyncExecution, b: SyncExecution, p: int) -> bool:
    span = max(len(a.pattern.prefix), len(b.pattern.prefix)) + lcm(len(a.pattern.loop), len(b.pattern.loop))
    return zero_key(a, p, span) == zero_key(b, p, span)


# ---------------------------------------------------------------------------
# distances


def _check_pair(a, b) -> None:
    if a.n != b.n:
        raise ValueError(f"executions disagree on n: {a.n} vs {b.n}")


def view_distance(a, b, p: int, horizon: int | None = None) -> DistanceValue:
    """``d_p(a, b)``."""
    _check_pair(a, b)
    h = default_horizon(a, b) if horizon is None else horizon
    t = divergence_round(a, b, p, h)
    if t is not None:
        return DistanceValue.dyadic(t)
    if isinstance(a, SyncExecution) and isinstance(b, SyncExecution):
        if certified_zero(a, b, p):
            return DistanceValue.zero()
    elif a == b:
        return DistanceValue.zero()
    return DistanceValue.upper(h + 1)


def _obedient(execution) -> frozenset[int]:
    if isinstance(execution, AsyncExecution):
        return execution.schedule.obedient()
    return frozenset(range(execution.n))


def d_uniform(a, b, horizon: int | None = None) -> DistanceValue:
    """Minimum of ``d_p`` over all processes."""
    _check_pair(a, b)
    return min_distance(view_distance(a, b, p, horizon) for p in range(a.n))


def d_nonuniform(a, b, horizon: int | None = None) -> DistanceValue:
    """Minimum of ``d_p`` over processes obedient in both runs (``1`` if there are none)."""
    _check_pair(a, b)
    common = sorted(_obedient(a) & _obedient(b))
    if not common:
        return DistanceValue.dyadic(0)
    return min_distance(view_distance(a, b, p, horizon) for p in common)


Metric = Callable[..., DistanceValue]


def metric(selector: str) -> Metric:
    """``"p:<id>"``, ``"uniform"`` or ``"nonuniform"``."""
    if selector == "uniform":
        return d_uniform
    if selector == "nonuniform":
        return d_nonuniform
    if selector.startswith("p:"):
        try:
            p = int(selector[2:])
        except ValueError:
            raise ValueError(f"bad metric selector {selector!r}") from None
        return lambda a, b, horizon=None: view_distance(a, b, p, horizon)
    raise ValueError(f"bad metric selector {selector!r}")


def _as_metric(m) -> Metric:
    return metric(m) if isinstance(m, str) else m


def diameter(family: Sequence, metric_sel="nonuniform", horizon: int | None = None) -> DistanceValue:
    """Supremum of pairwise distances over a finite family."""
    d = _as_metric(metric_sel)
    return max_distance(d(a, b, horizon) for i, a in enumerate(family) for b in family[i + 1 :])


def distance_matrix(family: Sequence, metric_sel="nonuniform", horizon: int | None = None) -> list[list[DistanceValue]]:
    d = _as_metric(metric_sel)
    n = len(family)
    out = [[DistanceValue.zero()] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            out[i][j] = out[j][i] = d(family[i], family[j], horizon)
        out[i][i] = d(family[i], family[i], horizon)
    return out


def matrix_csv(ids: Sequence[str], matrix: Sequence[Sequence[DistanceValue]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *ids])
    for i, row in zip(ids, matrix):
        w.writerow([i, *(str(d) for d in row)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sequences and limits


@dataclass(frozen=True)
class SequenceFamily:
    """Indexed sequence ``i -> member`` (``i = 1..i_max``) with a declared limit."""

    generator: Callable[[int], object]
    limit: object
    i_max: int
    name: str = "seq"

    def members(self) -> list:
        return [self.generator(i) for i in range(1, self.i_max + 1)]


@dataclass(frozen=True)
class LimitVerdict:
    passed: bool
    exponents: tuple[int | None, ...]  # None = exact zero
    offending: int | None = None
    reason: str = ""


def verify_limit(seq: SequenceFamily, metric_sel="nonuniform", horizon: int | None = None) -> LimitVerdict:
    """Check ``d(seq(i), limit) <= 2^-f(i)`` with ``f`` non-decreasing and gaining
    at least one per index overall (``f(i_max) >= f(1) + i_max - 1``)."""
    if seq.i_max < 3:
        raise ValueError("need at least three sequence members")
    d = _as_metric(metric_sel)
    exps: list[int | None] = []
    for i in range(1, seq.i_max + 1):
        v = d(seq.generator(i), seq.limit, horizon)
        exps.append(None if v.is_zero else v.exponent)
    inf = float("inf")
    f = [inf if e is None else e for e in exps]
    for i in range(1, len(f)):
        if f[i] < f[i - 1]:
            return LimitVerdict(False, tuple(exps), i + 1, "distance bound got worse")
    if f[-1] < f[0] + seq.i_max - 1:
        return LimitVerdict(False, tuple(exps), seq.i_max, "distance does not shrink fast enough")
    return LimitVerdict(True, tuple(exps))


@dataclass(frozen=True)
class FairnessVerdict:
    kind: str  # "fair" | "unfair" | "none"
    limits: tuple = ()

    def __str__(self) -> str:
        return self.kind


def _same_execution(a, b) -> bool:
    if isinstance(a, SyncExecution) and isinstance(b, SyncExecution):
        return a.canonical_key() == b.canonical_key()
    return a == b


def detect_fair_unfair(
    seq_a: SequenceFamily,
    label_a: int,
    seq_b: SequenceFamily,
    label_b: int,
    metric_sel="nonuniform",
    horizon: int | None = None,
) -> FairnessVerdict:
    """Classify two convergent sequences from different decision sets by their limits."""
    if label_a == label_b:
        raise ValueError("the two sequences must carry different labels")
    for s in (seq_a, seq_b):
        lv = verify_limit(s, metric_sel, horizon)
        if not lv.passed:
            raise ValueError(f"sequence {s.name} does not converge: {lv.reason} at index {lv.offending}")
    la, lb = seq_a.limit, seq_b.limit
    if _same_execution(la, lb):
        return FairnessVerdict("fair", (la,))
    if _as_metric(metric_sel)(la, lb, horizon).is_zero:
        return FairnessVerdict("unfair", (la, lb))
    return FairnessVerdict("none", (la, lb))


# ---------------------------------------------------------------------------
# prefix order


def prefix_order_ll(k: int) -> list[tuple[CommGraph, ...]]:
    """All ``3^k`` LL prefixes in reflected order: neighbours differ in one graph
    and are indistinguishable to one process after ``k`` rounds."""
    if not 0 <= k <= 12:
        raise ValueError("prefix length must be in 0..12")
    order: list[tuple[CommGraph, ...]] = [()]
    for _ in range(k):
        order = _extend(order)
    return order


def _extend(sub: list[tuple[CommGraph, ...]]) -> list[tuple[CommGraph, ...]]:
    out = []
    for g, block in ((RIGHT, sub), (BOTH, sub[::-1]), (LEFT, sub)):
        out.extend((g,) + w for w in block)
    return out


def indistinguishable_to(a: SyncExecution, b: SyncExecution, t: int) -> frozenset[int]:
    """Processes with equal views at ``C^t`` in both runs."""
    da, _ = _rows(a, t)
    db, _ = _rows(b, t)
    return frozenset(p for p in range(a.n) if da[t][p] == db[t][p])


def _prefix_execution(word: tuple[CommGraph, ...], inputs) -> SyncExecution:
    # the loop is irrelevant for views up to round k
    return SyncExecution(LassoPattern(word, (BOTH,)), tuple(inputs))


@dataclass(frozen=True)
class CycleEntry:
    prefix: tuple[CommGraph, ...]
    inputs: tuple[int, int]
    link: int | None  # process that cannot tell this entry from the next


def prefix_cycle_ll(k: int) -> list[CycleEntry]:
    """The four input assignments' prefix orders glued into one cycle of ``4 * 3^k`` entries.

    Each entry records a process with the same view at ``C^k`` in it and the
    next entry (the last entry links back to the first).
    """
    order = prefix_order_ll(k)
    chain = []
    for inputs, forward in (((0, 0), True), ((1, 0), False), ((1, 1), True), ((0, 1), False)):
        chain.extend((w, inputs) for w in (order if forward else order[::-1]))
    out = []
    for i, (w, inputs) in enumerate(chain):
        nw, ninp = chain[(i + 1) % len(chain)]
        same = indistinguishable_to(_prefix_execution(w, inputs), _prefix_execution(nw, ninp), k)
        out.append(CycleEntry(w, inputs, min(same) if same else None))
    return out


def word_literal(word: Sequence[CommGraph]) -> str:
    return "".join(g.symbol for g in word)


def ll_prefix_words(k: int) -> list[str]:
    return [word_literal(w) for w in prefix_order_ll(k)]

