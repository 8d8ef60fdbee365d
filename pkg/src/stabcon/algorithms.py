"""Decision functions over local views.

Every algorithm maps a :class:`~stabcon.views.KnowledgeState` (plus the value
order) to an output value and reads nothing else.  The built-in ones also carry
a batched kernel used for exhaustive sweeps; tests check the two paths agree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .model import BINARY, LassoPattern, ValueSet
from .views import KnowledgeState

Decision = Callable[[KnowledgeState, ValueSet], int]

SYNC_DOMAIN = frozenset({"LL", "DLL", "BDLL", "one-message", "sync"})


class UnknownAlgorithm(ValueError):
    pass


@dataclass(frozen=True)
class CutoffFunction:
    """Cut-off ``theta``: round ``t`` only trusts messages sent after round ``theta(t)``."""

    name: str
    fn: Callable[[int], int] = field(compare=False)

    def __call__(self, t: int) -> int:
        return int(self.fn(t))

    def table(self, horizon: int) -> np.ndarray:
        out = np.zeros(horizon + 1, dtype=np.int64)
        for t in range(1, horizon + 1):
            out[t] = self(t)
        return out

    def validate(self, bound: int = 10_000, margin: int = 8) -> None:
        """Check ``0 <= theta(t) < t``, both ``theta`` and ``t - theta`` non-decreasing,
        and both beyond ``margin`` at ``t = bound`` (finite stand-in for divergence)."""
        prev_th, prev_gap = 0, 1
        for t in _sample_rounds(bound):
            th = self(t)
            if not 0 <= th < t:
                raise ValueError(f"cut-off {self.name}: theta({t}) = {th} outside [0, {t})")
            if th < prev_th or t - th < prev_gap:
                raise ValueError(f"cut-off {self.name} is not monotone at t={t}")
            prev_th, prev_gap = th, t - th
        if prev_th <= margin or prev_gap <= margin:
            raise ValueError(f"cut-off {self.name} does not grow without bound")


def _sample_rounds(bound: int) -> list[int]:
    ts = set(range(1, min(bound, 2048) + 1))
    t = 2048
    while t < bound:
        ts.add(t)
        t = int(t * 1.5)
    ts.add(bound)
    return sorted(ts)


HALF = CutoffFunction("half", lambda t: t // 2)
SQRT = CutoffFunction("sqrt", lambda t: math.isqrt(t) if t > 1 else 0)
CUTOFFS = {"half": HALF, "sqrt": SQRT}


@dataclass(frozen=True)
class AlgorithmSpec:
    """A named decision function.

    ``domain`` lists the models the algorithm is meant for; drivers that need a
    particular model (the DLL attack needs LL-suffix patterns) check it.
    ``batch`` optionally evaluates the same decisions for a whole batch of
    unrolled patterns at once.
    """

    id: str
    decide: Decision = field(compare=False)
    domain: frozenset[str] = SYNC_DOMAIN
    params: tuple[tuple[str, str], ...] = ()
    batch: Callable | None = field(default=None, compare=False)

    def __call__(self, view: KnowledgeState, values: ValueSet = BINARY) -> int:
        return self.decide(view, values)


# ---------------------------------------------------------------------------
# MinMax


def _min_known(view: KnowledgeState, values: ValueSet) -> int:
    return values.min(v for _, v in view.known)


def minmax_decide(view: KnowledgeState, values: ValueSet = BINARY) -> int:
    """Largest, over the views merged in the last step, of the smallest input each has heard of."""
    if view.round == 0:
        return view.input
    return values.max(_min_known(c, values) for c in view.received)


def safe_minmax_decide(view: KnowledgeState, theta: CutoffFunction = HALF, values: ValueSet = BINARY) -> int:
    """MinMax restricted to recent information.

    The processes whose round-``theta(t)`` view is nested in ``view`` are exactly
    those heard of through messages sent after round ``theta(t)``; each contributes
    the smallest input it had heard of at the cut-off.
    """
    t = view.round
    if t == 0:
        return view.input
    memo = view.memo()
    key = ("safe-minmax", theta.name, values)
    if key not in memo:
        cone = view.views_at(theta(t))
        memo[key] = values.max(_min_known(c, values) for c in cone)
    return memo[key]


# ---------------------------------------------------------------------------
# asynchronous min-flooding


def min_flood_step(current: int, received: Iterable[int], values: ValueSet = BINARY) -> int:
    return values.min([current, *received])


def min_flood_decide(view: KnowledgeState, values: ValueSet = BINARY) -> int:
    """Output after the last step: own previous output lowered by every received output."""
    memo = view.memo()
    key = ("min-flood", values)
    if key in memo:
        return memo[key]
    # iterative over the own-view chain to keep recursion shallow
    chain = []
    v = view
    while key not in v.memo() and v.received:
        chain.append(v)
        v = _own_previous(v)
    out = v.memo().get(key, v.input)
    v.memo()[key] = out
    for v in reversed(chain):
        foreign = [min_flood_decide(c, values) for c in v.received if c.owner != v.owner]
        out = min_flood_step(out, foreign, values)
        v.memo()[key] = out
    return out


def _own_previous(view: KnowledgeState) -> KnowledgeState:
    for c in view.received:
        if c.owner == view.owner:
            return c
    raise ValueError("view does not contain its owner's previous view")


# ---------------------------------------------------------------------------
# one-message keeper


def one_message_keeper_decide(view: KnowledgeState, values: ValueSet = BINARY) -> int:
    """Own input until the first foreign view arrives; from then on the sender's output at send time."""
    return _keeper(view, values)[0]


def _keeper(view: KnowledgeState, values: ValueSet) -> tuple[int, bool]:
    memo = view.memo()
    key = ("keeper", values)
    if key in memo:
        return memo[key]
    chain = []
    v = view
    while key not in v.memo() and v.received:
        chain.append(v)
        v = _own_previous(v)
    state = v.memo().get(key, (v.input, False))
    v.memo()[key] = state
    for v in reversed(chain):
        if not state[1]:
            foreign = [c for c in v.received if c.owner != v.owner]
            if foreign:
                state = (_keeper(foreign[0], values)[0], True)
        v.memo()[key] = state
    return state


# ---------------------------------------------------------------------------
# registry


def _batch_minmax(adj, ranks, backend=None):
    return kernels.minmax(adj, ranks, backend=backend)


def _batch_keeper(adj, ranks, backend=None):
    return kernels.keeper(adj, ranks, backend=backend)


def _safe_batch(theta: CutoffFunction):
    def run(adj, ranks, backend=None):
        return kernels.safe_minmax(adj, ranks, theta.table(adj.shape[1] - 1), backend=backend)

    return run


MINMAX = AlgorithmSpec("minmax", minmax_decide, batch=_batch_minmax)
ONE_MESSAGE_KEEPER = AlgorithmSpec(
    "one-message-keeper", one_message_keeper_decide, domain=frozenset({"one-message"}), batch=_batch_keeper
)
MIN_FLOOD = AlgorithmSpec("min-flood", min_flood_decide, domain=frozenset({"async", "sync"}))


def safe_minmax(theta: CutoffFunction = HALF) -> AlgorithmSpec:
    theta.validate()
    return AlgorithmSpec(
        f"safe-minmax(theta={theta.name})",
        lambda view, values=BINARY: safe_minmax_decide(view, theta, values),
        params=(("theta", theta.name),),
        batch=_safe_batch(theta),
    )


def constant(value: int) -> AlgorithmSpec:
    """Always outputs ``value``; violates validity, useful as a negative control."""
    return AlgorithmSpec(
        f"constant(v={value})",
        lambda view, values=BINARY: value,
        domain=SYNC_DOMAIN | {"async"},
        params=(("v", str(value)),),
    )


def from_callback(name: str, decide: Decision, domain: Iterable[str] = SYNC_DOMAIN) -> AlgorithmSpec:
    """Wrap a user decision function ``decide(view, values)``."""
    return AlgorithmSpec(name, decide, domain=frozenset(domain))


_ID = re.compile(r"^(?P<name>[a-z0-9-]+)(?:\((?P<args>[^)]*)\))?$")


def get_algorithm(spec: str) -> AlgorithmSpec:
    """Resolve a CLI algorithm id such as ``"safe-minmax(theta=half)"``."""
    m = _ID.match(spec.strip())
    if not m:
        raise UnknownAlgorithm(f"malformed algorithm id {spec!r}")
    name = m["name"]
    args = {}
    if m["args"]:
        for part in m["args"].split(","):
            k, _, v = part.partition("=")
            args[k.strip()] = v.strip()
    if name == "minmax" and not args:
        return MINMAX
    if name == "one-message-keeper" and not args:
        return ONE_MESSAGE_KEEPER
    if name == "min-flood" and not args:
        return MIN_FLOOD
    if name == "safe-minmax" and set(args) <= {"theta"}:
        key = args.get("theta", "half")
        if key not in CUTOFFS:
            raise UnknownAlgorithm(f"unknown cut-off {key!r}; choose from {sorted(CUTOFFS)}")
        return safe_minmax(CUTOFFS[key])
    if name == "constant" and set(args) == {"v"}:
        return constant(int(args["v"]))
    raise UnknownAlgorithm(f"unknown algorithm {spec!r}")


ALGORITHM_IDS = ("minmax", "safe-minmax(theta=half)", "min-flood", "one-message-keeper")


# ---------------------------------------------------------------------------
# batched evaluation


def batch_outputs(
    algorithm: AlgorithmSpec,
    patterns: Sequence[LassoPattern],
    inputs: Sequence[Sequence[int]],
    horizon: int,
    values: ValueSet = BINARY,
    backend: str | None = None,
) -> np.ndarray:
    """Outputs ``out[b, t, p]`` for ``t = 0..horizon`` of every (pattern, inputs) pair."""
    if algorithm.batch is None:
        raise ValueError(f"{algorithm.id} has no batched kernel")
    if len(patterns) != len(inputs):
        raise ValueError("one input assignment per pattern")
    if not patterns:
        return np.zeros((0, horizon + 1, 0), dtype=np.int64)
    adj = np.stack([p.unroll(horizon) for p in patterns])
    ranks = np.array([[values.rank(v) for v in inp] for inp in inputs], dtype=np.int64)
    out = algorithm.batch(adj, ranks, backend=backend)
    lut = np.array(values.values, dtype=np.int64)
    return lut[out]
