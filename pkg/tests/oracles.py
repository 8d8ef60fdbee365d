"""Independent reference implementations used as test oracles.

Nothing here imports the view, kernel or topology code: graphs are unrolled
into plain Python sets and views into nested tuples.
"""

from __future__ import annotations

import itertools
from functools import lru_cache


def in_sets(pattern, horizon):
    """``ins[t][p]``: set of senders to ``p`` in round ``t`` (``t >= 1``)."""
    n = pattern.n
    ins = [None]
    for t in range(1, horizon + 1):
        g = pattern.at(t)
        ins.append([frozenset(q for q in range(n) if (q, p) in g.edges) for p in range(n)])
    return ins


def ho_sets(pattern, horizon):
    n = pattern.n
    ins = in_sets(pattern, horizon)
    ho = [[frozenset([p]) for p in range(n)]]
    for t in range(1, horizon + 1):
        ho.append([frozenset().union(*(ho[t - 1][q] for q in ins[t][p])) for p in range(n)])
    return ho


def minmax_outputs(pattern, inputs, horizon):
    """Step-by-step MinMax: max over senders of the min input each had heard of."""
    n = pattern.n
    ins = in_sets(pattern, horizon)
    ho = ho_sets(pattern, horizon)
    out = [tuple(inputs)]
    for t in range(1, horizon + 1):
        out.append(tuple(max(min(inputs[s] for s in ho[t - 1][q]) for q in ins[t][p]) for p in range(n)))
    return out


def eventual_broadcasters(pattern):
    horizon = len(pattern.prefix) + 4 * pattern.n * pattern.n * len(pattern.loop)
    last = ho_sets(pattern, horizon)[-1]
    return frozenset.intersection(*last)


def brute_kernel(pattern):
    """Forward reachability over ``|prefix| + 4 n |loop|`` unrolled rounds from
    every start round up to one loop period past the prefix."""
    n, k, L = pattern.n, len(pattern.prefix), len(pattern.loop)
    span = 4 * n * L
    out_sets = {}
    for t in range(1, 2 * k + 2 * L + span + 1):
        g = pattern.at(t)
        out_sets[t] = [{b for a2, b in g.edges if a2 == a} | {a} for a in range(n)]
    out = set()
    for p in range(n):
        ok = True
        for start in range(1, k + L + 1):
            reach = {p}
            for t in range(start, start + span + k):
                reach = set().union(*(out_sets[t][a] for a in reach))
            if len(reach) < n:
                ok = False
                break
        if ok:
            out.add(p)
    return frozenset(out)


def view_eq_distance(a, b, p, rounds=64):
    """First configuration at which ``p``'s views differ, by direct recursion (``None`` if none)."""
    ia, ib = in_sets(a.pattern, rounds), in_sets(b.pattern, rounds)

    @lru_cache(maxsize=None)
    def eq(q, s):
        if s == 0:
            return a.inputs[q] == b.inputs[q]
        if ia[s][q] != ib[s][q]:
            return False
        return all(eq(r, s - 1) for r in ia[s][q])

    for t in range(rounds + 1):
        if not eq(p, t):
            return t
    return None


class ViewInterner:
    """Views as nested tuples, interned to small integers."""

    def __init__(self):
        self.table = {}

    def ids(self, pattern, inputs, rounds):
        n = pattern.n
        ins = in_sets(pattern, rounds)
        cur = [self._id((q, inputs[q])) for q in range(n)]
        rows = [tuple(cur)]
        for t in range(1, rounds + 1):
            cur = [self._id((q, tuple(sorted(cur[r] for r in ins[t][q])))) for q in range(n)]
            rows.append(tuple(cur))
        return rows

    def _id(self, key):
        return self.table.setdefault(key, len(self.table))


def all_two_process_lassos(max_prefix, max_loop, alphabet):
    for a in range(max_prefix + 1):
        for pre in itertools.product(alphabet, repeat=a):
            for b in range(1, max_loop + 1):
                for lp in itertools.product(alphabet, repeat=b):
                    yield pre, lp


def async_heard_of(schedule):
    """Final heard-of sets and alive flags from replaying the event list with plain sets."""
    n = schedule.n
    ho = [{p} for p in range(n)]
    steps = [0] * n
    sent = {}
    inbox = [set() for _ in range(n)]
    alive = [True] * n
    for ev in schedule.events:
        if ev[0] == "step":
            p = ev[1]
            ho[p] |= inbox[p]
            inbox[p] = set()
            steps[p] += 1
            sent[(p, steps[p])] = frozenset(ho[p])
        elif ev[0] == "deliver":
            _, q, k, p = ev
            inbox[p] |= sent[(q, k)]
        else:
            alive[ev[1]] = False
    return [frozenset(h) for h in ho], alive
