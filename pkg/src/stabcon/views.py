"""Hash-consed full-information views.

A view is the owner's id, its local clock, its input and the tuple of views it
merged in its latest step (its own previous view included).  The digest is a
content hash of that structure, so two views are equal exactly when their
digests are; the intern table makes equal views the same object.
"""

from __future__ import annotations

import hashlib
import weakref
from typing import Iterator

_table: weakref.WeakValueDictionary[bytes, KnowledgeState] = weakref.WeakValueDictionary()


class KnowledgeState:
    """One process' local view at one point of an execution (immutable)."""

    __slots__ = ("owner", "round", "input", "received", "digest", "ho", "known", "_memo", "__weakref__")

    owner: int
    round: int
    input: int
    received: tuple[KnowledgeState, ...]
    digest: bytes
    ho: int
    known: tuple[tuple[int, int], ...]

    def __new__(cls, owner: int, round: int, input: int, received: tuple[KnowledgeState, ...] = ()):
        received = tuple(sorted(received, key=_order_key))
        h = hashlib.blake2b(digest_size=16)
        h.update(b"%d|%d|%d" % (owner, round, input))
        for child in received:
            h.update(child.digest)
        digest = h.digest()
        hit = _table.get(digest)
        if hit is not None:
            return hit
        self = object.__new__(cls)
        ho = 1 << owner
        known = {owner: input}
        for child in received:
            ho |= child.ho
            known.update(child.known)
        put = object.__setattr__
        put(self, "owner", owner)
        put(self, "round", round)
        put(self, "input", input)
        put(self, "received", received)
        put(self, "digest", digest)
        put(self, "ho", ho)
        put(self, "known", tuple(sorted(known.items())))
        put(self, "_memo", None)
        _table[digest] = self
        return self

    def __setattr__(self, name, value):
        raise AttributeError("KnowledgeState is immutable")

    def __reduce__(self):
        return (KnowledgeState, (self.owner, self.round, self.input, self.received))

    @property
    def hexdigest(self) -> str:
        return self.digest.hex()

    def heard_of(self) -> frozenset[int]:
        return frozenset(q for q, _ in self.known)

    def senders(self) -> tuple[int, ...]:
        """Owners of the views merged in the latest step."""
        return tuple(c.owner for c in self.received)

    def views_at(self, round: int) -> list[KnowledgeState]:
        """Distinct nested views with local clock ``round`` (the view's causal cone at that time)."""
        if round > self.round:
            return []
        if round == self.round:
            return [self]
        seen: dict[bytes, KnowledgeState] = {}
        hits: dict[bytes, KnowledgeState] = {}
        stack = [self]
        while stack:
            v = stack.pop()
            for c in v.received:
                if c.digest in seen:
                    continue
                seen[c.digest] = c
                if c.round == round:
                    hits[c.digest] = c
                elif c.round > round:
                    stack.append(c)
        return sorted(hits.values(), key=_order_key)

    def walk(self) -> Iterator[KnowledgeState]:
        """Every distinct nested view, each once."""
        seen = {self.digest}
        stack = [self]
        while stack:
            v = stack.pop()
            yield v
            for c in v.received:
                if c.digest not in seen:
                    seen.add(c.digest)
                    stack.append(c)

    def memo(self) -> dict:
        """Per-view cache for derived values (e.g. a decision already computed)."""
        if self._memo is None:
            object.__setattr__(self, "_memo", {})
        return self._memo

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KnowledgeState) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)

    def __repr__(self) -> str:
        return f"KnowledgeState(p={self.owner}, t={self.round}, {self.digest.hex()[:8]})"


def _order_key(v: KnowledgeState) -> tuple:
    return (v.owner, v.round, v.digest)


def initial_view(owner: int, input: int) -> KnowledgeState:
    return KnowledgeState(owner, 0, input, ())


def interned_count() -> int:
    return len(_table)
