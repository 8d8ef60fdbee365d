"""Processes, communication graphs and eventually periodic communication patterns.

Process ids are the integers ``0..n-1``.  For the two-process models the left
process ``l`` is ``0`` and the right process ``r`` is ``1``; a graph written
``->`` delivers the left process' message to the right one.

Rounds are 1-indexed: round ``t`` turns configuration ``C^{t-1}`` into ``C^t``
using graph ``G^t``.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

L, R = 0, 1


class PatternSyntaxError(ValueError):
    """A pattern literal could not be parsed."""


@dataclass(frozen=True)
class ValueSet:
    """Finite, totally ordered set of input values (order = tuple position)."""

    values: tuple[int, ...] = (0, 1)

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("value set must be non-empty")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"duplicate values in {self.values}")

    @cached_property
    def _rank(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.values)}

    def rank(self, v: int) -> int:
        try:
            return self._rank[v]
        except KeyError:
            raise ValueError(f"{v!r} is not in value set {self.values}") from None

    def __contains__(self, v: object) -> bool:
        return v in self._rank

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[int]:
        return iter(self.values)

    def min(self, vs: Iterable[int]) -> int:
        return min(vs, key=self.rank)

    def max(self, vs: Iterable[int]) -> int:
        return max(vs, key=self.rank)


BINARY = ValueSet((0, 1))


@dataclass(frozen=True)
class CommGraph:
    """Directed communication graph on ``n`` processes; every self-loop present.

    ``edges`` holds ``(sender, receiver)`` pairs.
    """

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one process")
        for a, b in self.edges:
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge {(a, b)} outside 0..{self.n - 1}")
        missing = [p for p in range(self.n) if (p, p) not in self.edges]
        if missing:
            raise ValueError(f"self-loops missing for processes {missing}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> CommGraph:
        """Build a graph, adding all self-loops."""
        es = {(int(a), int(b)) for a, b in edges}
        es.update((p, p) for p in range(n))
        return cls(n, frozenset(es))

    @classmethod
    def empty(cls, n: int) -> CommGraph:
        return cls.from_edges(n, ())

    @classmethod
    def complete(cls, n: int) -> CommGraph:
        return cls.from_edges(n, itertools.product(range(n), repeat=2))

    @cached_property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        """``in_neighbors[p]``: sorted senders heard by ``p`` (``p`` included)."""
        ins: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            ins[b].append(a)
        return tuple(tuple(sorted(x)) for x in ins)

    @cached_property
    def out_masks(self) -> tuple[int, ...]:
        outs = [0] * self.n
        for a, b in self.edges:
            outs[a] |= 1 << b
        return tuple(outs)

    @cached_property
    def in_masks(self) -> tuple[int, ...]:
        ins = [0] * self.n
        for a, b in self.edges:
            ins[b] |= 1 << a
        return tuple(ins)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        for a, b in self.edges:
            m[a, b] = True
        return m

    @property
    def symbol(self) -> str:
        """Literal character for two-process graphs."""
        if self.n != 2:
            raise ValueError("symbols exist only for n=2")
        return _SYMBOL_OF[self]

    def __repr__(self) -> str:
        if self.n == 2:
            return f"CommGraph({self.symbol!r})"
        es = sorted(e for e in self.edges if e[0] != e[1])
        return f"CommGraph(n={self.n}, {es})"


RIGHT = CommGraph.from_edges(2, [(L, R)])  # l -> r
LEFT = CommGraph.from_edges(2, [(R, L)])  # l <- r
BOTH = CommGraph.from_edges(2, [(L, R), (R, L)])  # l <-> r
SILENT = CommGraph.empty(2)  # no message

GRAPH_OF: dict[str, CommGraph] = {">": RIGHT, "<": LEFT, "=": BOTH, "-": SILENT}
_SYMBOL_OF = {g: s for s, g in GRAPH_OF.items()}
LL_ALPHABET = (RIGHT, BOTH, LEFT)


@dataclass(frozen=True)
class LassoPattern:
    """Communication pattern ``prefix . loop^omega``."""

    prefix: tuple[CommGraph, ...]
    loop: tuple[CommGraph, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "loop", tuple(self.loop))
        if not self.loop:
            raise ValueError("loop must contain at least one graph")
        ns = {g.n for g in self.prefix + self.loop}
        if len(ns) != 1:
            raise ValueError(f"graphs disagree on process count: {sorted(ns)}")

    @property
    def n(self) -> int:
        return self.loop[0].n

    def at(self, t: int) -> CommGraph:
        if t < 1:
            raise ValueError(f"rounds start at 1, got {t}")
        k = len(self.prefix)
        if t <= k:
            return self.prefix[t - 1]
        return self.loop[(t - 1 - k) % len(self.loop)]

    def unroll(self, horizon: int) -> np.ndarray:
        """Boolean array ``a[t, q, p]`` (``q`` sends to ``p`` in round ``t``); row 0 unused."""
        a = np.zeros((horizon + 1, self.n, self.n), dtype=bool)
        mats = {g: g.matrix() for g in set(self.prefix + self.loop)}
        for t in range(1, horizon + 1):
            a[t] = mats[self.at(t)]
        return a

    def canonical(self) -> LassoPattern:
        """Shortest representation of the same infinite graph sequence."""
        loop = _primitive_root(self.loop)
        prefix = list(self.prefix)
        while prefix and prefix[-1] == loop[-1]:
            prefix.pop()
            loop = (loop[-1],) + loop[:-1]
        return LassoPattern(tuple(prefix), loop)

    def same_sequence(self, other: LassoPattern) -> bool:
        return self.canonical() == other.canonical()

    @property
    def literal(self) -> str:
        """``prefix:loop`` literal (two-process patterns only)."""
        return "".join(g.symbol for g in self.prefix) + ":" + "".join(g.symbol for g in self.loop)

    def __repr__(self) -> str:
        if self.n == 2:
            return f"LassoPattern({self.literal!r})"
        return f"LassoPattern(n={self.n}, prefix={len(self.prefix)}, loop={len(self.loop)})"


def _primitive_root(seq: tuple[CommGraph, ...]) -> tuple[CommGraph, ...]:
    m = len(seq)
    for d in range(1, m + 1):
        if m % d == 0 and seq == seq[:d] * (m // d):
            return seq[:d]
    return seq


def pattern_at(pattern: LassoPattern, round: int) -> CommGraph:
    return pattern.at(round)


def parse_pattern(text: str) -> LassoPattern:
    """Parse a two-process literal such as ``"<--:>"`` (prefix ``<--``, loop ``>``).

    A literal without ``:`` is read as a pure loop.
    """
    text = text.strip()
    if text.startswith("{"):
        return _parse_json_pattern(text)
    if text.count(":") > 1:
        raise PatternSyntaxError(f"more than one ':' in {text!r}")
    pre, _, loop = text.rpartition(":")
    try:
        prefix = tuple(GRAPH_OF[c] for c in pre)
        lp = tuple(GRAPH_OF[c] for c in loop)
    except KeyError as exc:
        raise PatternSyntaxError(f"unknown graph symbol {exc.args[0]!r} in {text!r}") from None
    if not lp:
        raise PatternSyntaxError(f"empty loop in {text!r}")
    return LassoPattern(prefix, lp)


def _parse_json_pattern(text: str) -> LassoPattern:
    import json

    try:
        doc = json.loads(text)
        n = int(doc["n"])
        prefix = tuple(CommGraph.from_edges(n, map(tuple, g)) for g in doc.get("prefix", []))
        loop = tuple(CommGraph.from_edges(n, map(tuple, g)) for g in doc["loop"])
        return LassoPattern(prefix, loop)
    except (ValueError, KeyError, TypeError) as exc:
        raise PatternSyntaxError(f"bad JSON pattern: {exc}") from None


def pattern_document(pattern: LassoPattern) -> str | dict:
    """Serializable form: the literal for n=2, an edge-list dict otherwise."""
    if pattern.n == 2:
        return pattern.literal

    def edges(g: CommGraph) -> list[list[int]]:
        return [list(e) for e in sorted(g.edges) if e[0] != e[1]]

    return {
        "n": pattern.n,
        "prefix": [edges(g) for g in pattern.prefix],
        "loop": [edges(g) for g in pattern.loop],
    }


def pattern_from_document(doc: str | dict) -> LassoPattern:
    if isinstance(doc, str):
        return parse_pattern(doc)
    import json

    return _parse_json_pattern(json.dumps(doc))


# ---------------------------------------------------------------------------
# reachability


def _reach_forward(pattern: LassoPattern, start_round: int, p: int) -> int:
    """Processes reached from ``p`` using graphs ``G^start, G^{start+1}, ...``."""
    reached = 1 << p
    t = start_round
    stall = 0
    period = len(pattern.loop)
    while stall < period or t <= len(pattern.prefix):
        g = pattern.at(t)
        new = reached
        for q in range(pattern.n):
            if reached >> q & 1:
                new |= g.out_masks[q]
        stall = stall + 1 if new == reached and t > len(pattern.prefix) else 0
        reached = new
        t += 1
    return reached


def kernel(pattern: LassoPattern) -> frozenset[int]:
    """Processes that reach every process from every start round.

    Reachability from a start round only shrinks as the start moves later
    (self-loops), so it suffices to test every loop phase; each test runs
    until a full loop period passes without growth.
    """
    n = pattern.n
    full = (1 << n) - 1
    base = len(pattern.prefix) + 1
    out = []
    for p in range(n):
        if all(_reach_forward(pattern, base + ph, p) == full for ph in range(len(pattern.loop))):
            out.append(p)
    return frozenset(out)


def eventual_heard_of(pattern: LassoPattern) -> tuple[int, ...]:
    """Bitmasks ``HO_p(gamma)``: everything ``p`` ever hears of, transitively."""
    n = pattern.n
    ho = [1 << p for p in range(n)]
    t = 1
    stall = 0
    period = len(pattern.loop)
    while stall < period or t <= len(pattern.prefix):
        g = pattern.at(t)
        new = [0] * n
        for p in range(n):
            m = 0
            for q in g.in_neighbors[p]:
                m |= ho[q]
            new[p] = m
        stall = stall + 1 if new == ho and t > len(pattern.prefix) else 0
        ho = new
        t += 1
    return tuple(ho)


def pattern_broadcasters(pattern: LassoPattern) -> frozenset[int]:
    """``bc``: processes eventually heard of by every (fault-free) process."""
    m = (1 << pattern.n) - 1
    for h in eventual_heard_of(pattern):
        m &= h
    return frozenset(p for p in range(pattern.n) if m >> p & 1)


def heard_of_settle_round(pattern: LassoPattern) -> int:
    """Round after which no heard-of set of the pattern grows any more."""
    return len(pattern.prefix) + (pattern.n - 1) * len(pattern.loop) * pattern.n


# ---------------------------------------------------------------------------
# executions


@dataclass(frozen=True)
class SyncExecution:
    """Lock-step synchronous fault-free execution: pattern plus input assignment."""

    pattern: LassoPattern
    inputs: tuple[int, ...]
    values: ValueSet = BINARY

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))
        check_inputs(self.inputs, self.values, self.pattern.n)

    @property
    def n(self) -> int:
        return self.pattern.n

    def canonical_key(self) -> tuple:
        return ("sync", self.pattern.canonical(), self.inputs, self.values)

    def __repr__(self) -> str:
        return f"SyncExecution({self.pattern!r}, {self.inputs})"


def check_inputs(inputs: Sequence[int], values: ValueSet, n: int) -> None:
    if len(inputs) != n:
        raise ValueError(f"need {n} inputs, got {len(inputs)}")
    bad = [v for v in inputs if v not in values]
    if bad:
        raise ValueError(f"inputs {bad} not in value set {values.values}")


def is_valent(inputs: Sequence[int]) -> bool:
    return len(set(inputs)) == 1


def remap_inputs(execution, new_inputs: Sequence[int]):
    """Same communication (pattern or schedule), new input assignment."""
    check_inputs(tuple(new_inputs), execution.values, execution.n)
    return dataclasses.replace(execution, inputs=tuple(int(v) for v in new_inputs))


# ---------------------------------------------------------------------------
# pattern factories


def one_message(i: int, graph: CommGraph = RIGHT) -> LassoPattern:
    """``{-}^i g {-}^omega``: ``alpha_i`` for ``g = ->`` and ``beta_i`` for ``g = <-``."""
    return LassoPattern((SILENT,) * i + (graph,), (SILENT,))


def alpha(i: int) -> LassoPattern:
    return one_message(i, RIGHT)


def beta(i: int) -> LassoPattern:
    return one_message(i, LEFT)


def eta() -> LassoPattern:
    return LassoPattern((), (SILENT,))


def dll_truncated(sigma: Sequence[CommGraph], m: int, tail: CommGraph) -> LassoPattern:
    """``sigma {-}^m tail^omega`` (the parametrized executions of the DLL argument)."""
    return LassoPattern(tuple(sigma) + (SILENT,) * m, (tail,))


def diamond_ll(silence: int, prefix: Sequence[CommGraph], loop: Sequence[CommGraph]) -> LassoPattern:
    """Eventually-LL pattern: ``{-}^silence`` followed by an LL lasso."""
    _require_ll(tuple(prefix) + tuple(loop))
    return LassoPattern((SILENT,) * silence + tuple(prefix), tuple(loop))


def _require_ll(graphs: tuple[CommGraph, ...]) -> None:
    if any(g not in LL_ALPHABET for g in graphs):
        raise ValueError("lossy-link patterns use only ->, <->, <-")


def ll_words(k: int) -> Iterator[tuple[CommGraph, ...]]:
    return itertools.product(LL_ALPHABET, repeat=k)


def ll_patterns(max_prefix: int, max_loop: int) -> Iterator[LassoPattern]:
    """All LL lassos with ``|prefix| <= max_prefix`` and ``1 <= |loop| <= max_loop``."""
    for a in range(max_prefix + 1):
        for pre in ll_words(a):
            for b in range(1, max_loop + 1):
                for lp in ll_words(b):
                    yield LassoPattern(pre, lp)


def bdll_loops(max_silence: int, max_len: int) -> Iterator[LassoPattern]:
    """Pure-loop BDLL patterns: LL graphs with at most ``max_silence`` consecutive
    silent rounds (counted cyclically) and at least one LL graph per loop."""
    alphabet = LL_ALPHABET + (SILENT,)
    for length in range(1, max_len + 1):
        for word in itertools.product(alphabet, repeat=length):
            if all(g == SILENT for g in word):
                continue
            if _max_cyclic_run(word, SILENT) <= max_silence:
                yield LassoPattern((), word)


def _max_cyclic_run(word: tuple[CommGraph, ...], g: CommGraph) -> int:
    doubled = word + word
    best = run = 0
    for x in doubled:
        run = run + 1 if x == g else 0
        best = max(best, run)
    return min(best, len(word))


def cliques(n: int, blocks: Sequence[Sequence[int]]) -> CommGraph:
    """Disjoint complete subgraphs on the given blocks."""
    es = [(a, b) for blk in blocks for a in blk for b in blk]
    return CommGraph.from_edges(n, es)


def two_cliques(n: int = 4) -> LassoPattern:
    half = n // 2
    return LassoPattern((), (cliques(n, [range(half), range(half, n)]),))


def passive_start(pattern: LassoPattern, p: int, until: int) -> LassoPattern:
    """Cut every edge touching ``p`` in rounds ``1..until`` (``p`` passive till then)."""
    graphs = [pattern.at(t) for t in range(1, until + 1)]
    cut = tuple(
        CommGraph.from_edges(g.n, [(a, b) for a, b in g.edges if p not in (a, b)]) for g in graphs
    )
    tail_start = until + 1
    k = len(pattern.prefix)
    if tail_start <= k:
        rest = pattern.prefix[tail_start - 1 :]
        return LassoPattern(cut + rest, pattern.loop)
    shift = (tail_start - 1 - k) % len(pattern.loop)
    return LassoPattern(cut, pattern.loop[shift:] + pattern.loop[:shift])


def lcm(*xs: int) -> int:
    out = 1
    for x in xs:
        out = out * x // math.gcd(out, x)
    return out
