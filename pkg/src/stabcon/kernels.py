"""Batched heard-of and decision kernels for the built-in algorithms.

All kernels take a batch of unrolled patterns ``adj[b, t, q, p]`` (``q`` sends to
``p`` in round ``t``; row ``t = 0`` unused) and input ranks ``ranks[b, p]``
(position of each input in the value order) and return arrays indexed
``[b, t, p]`` for ``t = 0..T``.

Two implementations exist: explicit loops compiled with numba, and a numpy
path vectorized over the batch.  ``STABCON_NUMBA=0`` (or numba being absent)
selects numpy; ``backend=`` overrides per call.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_BIG = np.int64(1 << 40)


def default_backend() -> str:
    if numba is None or os.environ.get("STABCON_NUMBA", "1").strip().lower() in ("0", "false", "no", "off"):
        return "numpy"
    return "numba"


def _jit(fn):
    if numba is None:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# loop bodies (compiled by numba)


def _ho_loops(adj):
    B, T1, n, _ = adj.shape
    ho = np.zeros((B, T1, n), dtype=np.int64)
    for b in range(B):
        for p in range(n):
            ho[b, 0, p] = np.int64(1) << p
        for t in range(1, T1):
            for p in range(n):
                m = np.int64(0)
                for q in range(n):
                    if adj[b, t, q, p]:
                        m |= ho[b, t - 1, q]
                ho[b, t, p] = m
    return ho


def _min_rank_loops(ho, ranks):
    B, T1, n = ho.shape
    out = np.empty((B, T1, n), dtype=np.int64)
    for b in range(B):
        for t in range(T1):
            for q in range(n):
                best = np.int64(1) << 40
                m = ho[b, t, q]
                for s in range(n):
                    if (m >> s) & 1 and ranks[b, s] < best:
                        best = ranks[b, s]
                out[b, t, q] = best
    return out


def _minmax_loops(adj, ranks):
    B, T1, n, _ = adj.shape
    ho = _ho_nb(adj)
    mins = _min_rank_nb(ho, ranks)
    out = np.empty((B, T1, n), dtype=np.int64)
    for b in range(B):
        for p in range(n):
            out[b, 0, p] = ranks[b, p]
        for t in range(1, T1):
            for p in range(n):
                best = np.int64(-1)
                for q in range(n):
                    if adj[b, t, q, p] and mins[b, t - 1, q] > best:
                        best = mins[b, t - 1, q]
                out[b, t, p] = best
    return out


def _safe_minmax_loops(adj, ranks, theta):
    B, T1, n, _ = adj.shape
    ho = _ho_nb(adj)
    mins = _min_rank_nb(ho, ranks)
    out = np.empty((B, T1, n), dtype=np.int64)
    src = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    for b in range(B):
        for p in range(n):
            out[b, 0, p] = ranks[b, p]
        for t in range(1, T1):
            th = theta[t]
            # src[p]: processes q whose (q, th) reaches (p, s)
            for p in range(n):
                src[p] = np.int64(1) << p
            for s in range(th + 1, t + 1):
                for p in range(n):
                    m = np.int64(0)
                    for q in range(n):
                        if adj[b, s, q, p]:
                            m |= src[q]
                    nxt[p] = m
                for p in range(n):
                    src[p] = nxt[p]
            for p in range(n):
                best = np.int64(-1)
                for q in range(n):
                    if (src[p] >> q) & 1 and mins[b, th, q] > best:
                        best = mins[b, th, q]
                out[b, t, p] = best
    return out


def _keeper_loops(adj, ranks):
    B, T1, n, _ = adj.shape
    out = np.empty((B, T1, n), dtype=np.int64)
    fixed = np.zeros(n, dtype=np.bool_)
    for b in range(B):
        for p in range(n):
            out[b, 0, p] = ranks[b, p]
            fixed[p] = False
        for t in range(1, T1):
            for p in range(n):
                val = out[b, t - 1, p]
                if not fixed[p]:
                    for q in range(n):
                        if q != p and adj[b, t, q, p]:
                            val = out[b, t - 1, q]
                            fixed[p] = True
                            break
                out[b, t, p] = val
    return out


_ho_nb = _jit(_ho_loops)
_min_rank_nb = _jit(_min_rank_loops)
_minmax_nb = _jit(_minmax_loops)
_safe_minmax_nb = _jit(_safe_minmax_loops)
_keeper_nb = _jit(_keeper_loops)


# ---------------------------------------------------------------------------
# numpy path (vectorized over the batch axis)


def _ho_np(adj):
    B, T1, n, _ = adj.shape
    ho = np.zeros((B, T1, n), dtype=np.int64)
    ho[:, 0, :] = np.int64(1) << np.arange(n, dtype=np.int64)
    for t in range(1, T1):
        ho[:, t, :] = np.bitwise_or.reduce(np.where(adj[:, t], ho[:, t - 1, :, None], 0), axis=1)
    return ho


def _bits(masks, n):
    return ((masks[..., None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def _min_rank_np(ho, ranks):
    n = ho.shape[-1]
    bits = _bits(ho, n)  # [B, T, q, s]
    return np.where(bits, ranks[:, None, None, :], _BIG).min(axis=-1)


def _minmax_np(adj, ranks):
    mins = _min_rank_np(_ho_np(adj), ranks)
    out = np.empty(mins.shape, dtype=np.int64)
    out[:, 0, :] = ranks
    out[:, 1:, :] = np.where(adj[:, 1:], mins[:, :-1, :, None], -1).max(axis=2)
    return out


def _safe_minmax_np(adj, ranks, theta):
    B, T1, n, _ = adj.shape
    mins = _min_rank_np(_ho_np(adj), ranks)
    out = np.empty((B, T1, n), dtype=np.int64)
    out[:, 0, :] = ranks
    unit = np.broadcast_to(np.int64(1) << np.arange(n, dtype=np.int64), (B, n))
    for t in range(1, T1):
        th = int(theta[t])
        src = unit.copy()
        for s in range(th + 1, t + 1):
            src = np.bitwise_or.reduce(np.where(adj[:, s], src[:, :, None], 0), axis=1)
        out[:, t, :] = np.where(_bits(src, n), mins[:, th, None, :], -1).max(axis=-1)
    return out


def _keeper_np(adj, ranks):
    B, T1, n, _ = adj.shape
    out = np.empty((B, T1, n), dtype=np.int64)
    out[:, 0, :] = ranks
    fixed = np.zeros((B, n), dtype=bool)
    foreign = adj & ~np.eye(n, dtype=bool)
    for t in range(1, T1):
        got = foreign[:, t]  # [B, q, p]
        has = got.any(axis=1)
        first_q = got.argmax(axis=1)  # lowest sender
        take = has & ~fixed
        prev = out[:, t - 1, :]
        received = np.take_along_axis(prev, first_q, axis=1)
        out[:, t, :] = np.where(take, received, prev)
        fixed |= take
    return out


# ---------------------------------------------------------------------------
# dispatch


def _pick(backend: str | None):
    backend = backend or default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    return backend


def _check(adj: np.ndarray, ranks: np.ndarray | None = None) -> None:
    if adj.ndim != 4 or adj.shape[2] != adj.shape[3]:
        raise ValueError(f"adjacency must have shape (B, T+1, n, n), got {adj.shape}")
    if adj.shape[2] > 62:
        raise ValueError("bitmask kernels support at most 62 processes")
    if ranks is not None and ranks.shape != (adj.shape[0], adj.shape[2]):
        raise ValueError(f"ranks shape {ranks.shape} does not match adjacency {adj.shape}")


def heard_of_masks(adj: np.ndarray, backend: str | None = None) -> np.ndarray:
    """``ho[b, t, p]``: bitmask of the processes ``p`` has heard of by ``C^t``."""
    _check(adj)
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    return _ho_nb(adj) if _pick(backend) == "numba" else _ho_np(adj)


def minmax(adj: np.ndarray, ranks: np.ndarray, backend: str | None = None) -> np.ndarray:
    _check(adj, ranks)
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    ranks = np.ascontiguousarray(ranks, dtype=np.int64)
    return _minmax_nb(adj, ranks) if _pick(backend) == "numba" else _minmax_np(adj, ranks)


def safe_minmax(adj: np.ndarray, ranks: np.ndarray, theta: np.ndarray, backend: str | None = None) -> np.ndarray:
    """``theta[t]`` is the cut-off round used at round ``t`` (``0 <= theta[t] < t``)."""
    _check(adj, ranks)
    theta = np.ascontiguousarray(theta, dtype=np.int64)
    if theta.shape[0] < adj.shape[1]:
        raise ValueError("theta table shorter than the horizon")
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    ranks = np.ascontiguousarray(ranks, dtype=np.int64)
    if _pick(backend) == "numba":
        return _safe_minmax_nb(adj, ranks, theta)
    return _safe_minmax_np(adj, ranks, theta)


def keeper(adj: np.ndarray, ranks: np.ndarray, backend: str | None = None) -> np.ndarray:
    _check(adj, ranks)
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    ranks = np.ascontiguousarray(ranks, dtype=np.int64)
    return _keeper_nb(adj, ranks) if _pick(backend) == "numba" else _keeper_np(adj, ranks)
