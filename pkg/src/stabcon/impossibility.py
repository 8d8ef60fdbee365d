"""Impossibility drivers: the conflicting-prefix attack on lossy links with
finitely many silent rounds, and disagreement under an empty kernel.

The attack walks the LL prefix order for a prefix ``sigma`` at which the
decision flips: ``sigma ->^w`` decides 0 while ``sigma <-^w`` decides 1.  Then
``lambda(m) = sigma -^m ->^w`` and ``rho(m) = sigma -^m <-^w`` look the same to
both processes through round ``k + m``, and for ``m`` large enough the left
process already holds 0 while the right one still holds 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algorithms import AlgorithmSpec, batch_outputs, get_algorithm
from .model import (
    LEFT,
    RIGHT,
    SILENT,
    CommGraph,
    LassoPattern,
    is_valent,
    kernel,
    parse_pattern,
    pattern_document,
)
from .simulator import (
    Verdict,
    broadcasters,
    broadcasters_certified,
    run_sync,
    stabilization_verdict,
    verdict_from_outputs,
)
from .topology import prefix_order_ll, word_literal

ATTACK_INPUTS = (0, 1)


class DomainMismatch(ValueError):
    """The algorithm is not meant for the patterns the driver generates."""


class AttackError(RuntimeError):
    """The search found no witness; ``report`` says why."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


def _require_dll(algorithm: AlgorithmSpec) -> None:
    if "DLL" not in algorithm.domain:
        raise DomainMismatch(
            f"{algorithm.id} is defined for {sorted(algorithm.domain)}; "
            "the attack runs it on lossy-link patterns with silent rounds"
        )


def _attack_horizon(prefix_len: int) -> int:
    # two certification periods past a doubled prefix (n = 2, loop length 1)
    return 2 * prefix_len + 16


def _simulate(
    algorithm: AlgorithmSpec, patterns: Sequence[LassoPattern], horizon: int, inputs=ATTACK_INPUTS
) -> np.ndarray:
    """Outputs ``[b, t, p]``, batched when the algorithm has a kernel."""
    if algorithm.batch is not None:
        return batch_outputs(algorithm, patterns, [inputs] * len(patterns), horizon)
    return np.array([run_sync(p, inputs, algorithm, horizon).outputs for p in patterns], dtype=np.int64)


def _verdict(outputs: np.ndarray, pattern: LassoPattern) -> Verdict:
    h = outputs.shape[0] - 1
    L = len(pattern.loop)
    cert = h >= len(pattern.prefix) + 8 * L and bool((outputs[-L:] == outputs[-2 * L : -L]).all())
    return verdict_from_outputs(outputs, range(pattern.n), cert)


# ---------------------------------------------------------------------------
# flip prefix


@dataclass(frozen=True)
class FlipPrefix:
    sigma: tuple[CommGraph, ...]
    committed: tuple[CommGraph, ...]
    lam: Verdict
    rho: Verdict

    @property
    def literal(self) -> str:
        return word_literal(self.sigma)


def find_flip_prefix(
    algorithm: AlgorithmSpec,
    k: int,
    inputs: tuple[int, int] = ATTACK_INPUTS,
    committed: Sequence[CommGraph] = (),
) -> FlipPrefix:
    """First ``sigma`` in the prefix order with ``committed sigma ->^w`` certified to
    decide 0 and ``committed sigma <-^w`` certified to decide 1."""
    if not 1 <= k <= 8:
        raise ValueError("k must be in 1..8")
    committed = tuple(committed)
    order = prefix_order_ll(k)
    lams = [LassoPattern(committed + s, (RIGHT,)) for s in order]
    rhos = [LassoPattern(committed + s, (LEFT,)) for s in order]
    H = _attack_horizon(len(committed) + k)
    out = _simulate(algorithm, lams + rhos, H, inputs)
    lv = [_verdict(out[i], lams[i]) for i in range(len(order))]
    rv = [_verdict(out[len(order) + i], rhos[i]) for i in range(len(order))]
    for i, s in enumerate(order):
        a, b = lv[i], rv[i]
        if a.certified and b.certified and a.stabilized and b.stabilized and a.value == 0 and b.value == 1:
            return FlipPrefix(s, committed, a, b)
    report = {
        "algorithm": algorithm.id,
        "k": k,
        "committed": word_literal(committed),
        "first": {"lambda": str(lv[0]), "rho": str(rv[0]), "certified": lv[0].certified and rv[0].certified},
        "last": {"lambda": str(lv[-1]), "rho": str(rv[-1]), "certified": lv[-1].certified and rv[-1].certified},
    }
    uncert = [word_literal(s) for i, s in enumerate(order) if not (lv[i].certified and rv[i].certified)]
    if uncert:
        reason = f"{len(uncert)} border runs did not certify within {H} rounds"
    elif not (rv[-1].stabilized and rv[-1].value == 1):
        reason = f"validity violated: {word_literal(order[-1])}<-^w does not decide 1"
    elif not (lv[0].stabilized and lv[0].value == 0):
        reason = f"validity violated: {word_literal(order[0])}->^w does not decide 0"
    else:
        reason = "no flip from 0 to 1 along the prefix order"
    report["reason"] = reason
    raise AttackError(f"no flip prefix of length {k}: {reason}", report)


# ---------------------------------------------------------------------------
# conflict witness


def lambda_pattern(prefix: Sequence[CommGraph], m: int) -> LassoPattern:
    return LassoPattern(tuple(prefix) + (SILENT,) * m, (RIGHT,))


def rho_pattern(prefix: Sequence[CommGraph], m: int) -> LassoPattern:
    return LassoPattern(tuple(prefix) + (SILENT,) * m, (LEFT,))


@dataclass(frozen=True)
class ConflictWitness:
    algorithm: str
    k: int
    sigma: str
    m: int
    inputs: tuple[int, int]
    conflict: tuple[int, int]
    horizon: int
    lam_outputs: tuple[tuple[int, ...], ...] = field(repr=False)
    rho_outputs: tuple[tuple[int, ...], ...] = field(repr=False)
    lam_digests: tuple[tuple[str, ...], ...] = field(repr=False)
    rho_digests: tuple[tuple[str, ...], ...] = field(repr=False)

    @property
    def attack_round(self) -> int:
        return self.k + self.m

    def document(self) -> dict:
        pre = parse_pattern(self.sigma + ":>").prefix
        return {
            "kind": "conflict-witness",
            "algorithm": self.algorithm,
            "k": self.k,
            "sigma": self.sigma,
            "m": self.m,
            "inputs": list(self.inputs),
            "conflict": list(self.conflict),
            "horizon": self.horizon,
            "lambda": {
                "pattern": pattern_document(lambda_pattern(pre, self.m)),
                "outputs": [list(r) for r in self.lam_outputs],
                "digests": [list(r) for r in self.lam_digests],
            },
            "rho": {
                "pattern": pattern_document(rho_pattern(pre, self.m)),
                "outputs": [list(r) for r in self.rho_outputs],
                "digests": [list(r) for r in self.rho_digests],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2)


def _conflict_at(lo: np.ndarray, ro: np.ndarray, t: int) -> bool:
    return bool(lo[t, 0] == 0 and lo[t, 1] == 1 and ro[t, 0] == 0 and ro[t, 1] == 1)


def conflict_interval(lo, ro, t: int) -> tuple[int, int] | None:
    """Maximal run of rounds around ``t`` where both runs have ``O_l = 0`` and ``O_r = 1``."""
    lo, ro = np.asarray(lo), np.asarray(ro)
    if not _conflict_at(lo, ro, t):
        return None
    a = t
    while a > 0 and _conflict_at(lo, ro, a - 1):
        a -= 1
    b = t
    while b + 1 < min(len(lo), len(ro)) and _conflict_at(lo, ro, b + 1):
        b += 1
    return a, b


def dll_attack(
    algorithm: AlgorithmSpec,
    k: int,
    m_max: int,
    inputs: tuple[int, int] = ATTACK_INPUTS,
    committed: Sequence[CommGraph] = (),
) -> ConflictWitness:
    """Smallest ``m <= m_max`` for which both runs conflict at round ``k + m``."""
    _require_dll(algorithm)
    flip = find_flip_prefix(algorithm, k, inputs, committed)
    pre = tuple(committed) + flip.sigma
    base = len(pre)
    H = _attack_horizon(base + m_max)
    lams = [lambda_pattern(pre, m) for m in range(m_max + 1)]
    rhos = [rho_pattern(pre, m) for m in range(m_max + 1)]
    out = _simulate(algorithm, lams + rhos, H, inputs)
    for m in range(m_max + 1):
        lo, ro = out[m], out[m_max + 1 + m]
        if _conflict_at(lo, ro, base + m):
            return _witness(algorithm, k, word_literal(pre), m, inputs, len(committed))
    lv, rv = _verdict(out[m_max], lams[m_max]), _verdict(out[2 * m_max + 1], rhos[m_max])
    raise AttackError(
        f"no conflict for m <= {m_max}",
        {
            "sigma": word_literal(pre),
            "k_l": lv.round,
            "k_r": rv.round,
            "hint": "raise m_max beyond max(k_l, k_r) - k",
        },
    )


def _witness(algorithm: AlgorithmSpec, k: int, sigma: str, m: int, inputs, offset: int = 0) -> ConflictWitness:
    pre = parse_pattern(sigma + ":>").prefix
    H = _attack_horizon(len(pre) + m)
    lt = run_sync(lambda_pattern(pre, m), inputs, algorithm, H)
    rt = run_sync(rho_pattern(pre, m), inputs, algorithm, H)
    lo, ro = np.array(lt.outputs), np.array(rt.outputs)
    iv = conflict_interval(lo, ro, len(pre) + m)
    if iv is None:
        raise AttackError("view-level replay disagrees with the batched search")
    return ConflictWitness(
        algorithm=algorithm.id,
        k=len(pre),
        sigma=sigma,
        m=m,
        inputs=tuple(inputs),
        conflict=iv,
        horizon=H,
        lam_outputs=lt.outputs,
        rho_outputs=rt.outputs,
        lam_digests=lt.digests,
        rho_digests=rt.digests,
    )


@dataclass(frozen=True)
class WitnessCheck:
    passed: bool
    failure: str | None = None

    def __bool__(self) -> bool:
        return self.passed


def verify_witness(doc: dict | str) -> WitnessCheck:
    """Re-check a witness document: embedded indistinguishability, replay, conflict interval."""
    try:
        if isinstance(doc, str):
            doc = json.loads(doc)
        alg = get_algorithm(doc["algorithm"])
        k, m, sigma = int(doc["k"]), int(doc["m"]), str(doc["sigma"])
        inputs = tuple(int(v) for v in doc["inputs"])
        a, b = (int(x) for x in doc["conflict"])
        H = int(doc["horizon"])
        lam_d, rho_d = doc["lambda"]["digests"], doc["rho"]["digests"]
        lam_o, rho_o = doc["lambda"]["outputs"], doc["rho"]["outputs"]
        pre = parse_pattern(sigma + ":>").prefix
    except (KeyError, TypeError, ValueError) as e:
        return WitnessCheck(False, f"malformed witness: {e}")
    if len(pre) != k:
        return WitnessCheck(False, f"sigma has length {len(pre)}, not k={k}")
    t = k + m
    if not (len(lam_d) == len(rho_d) == H + 1 and H >= t):
        return WitnessCheck(False, "trace lengths do not match the horizon")
    for s in range(t + 1):
        if lam_d[s] != rho_d[s]:
            return WitnessCheck(False, f"views differ at round {s} <= k+m={t}")
    lt = run_sync(lambda_pattern(pre, m), inputs, alg, H)
    rt = run_sync(rho_pattern(pre, m), inputs, alg, H)
    if [list(r) for r in lt.digests] != lam_d or [list(r) for r in rt.digests] != rho_d:
        return WitnessCheck(False, "replayed view digests differ from the recorded ones")
    if [list(r) for r in lt.outputs] != lam_o or [list(r) for r in rt.outputs] != rho_o:
        return WitnessCheck(False, "replayed outputs differ from the recorded ones")
    iv = conflict_interval(np.array(lt.outputs), np.array(rt.outputs), t)
    if iv is None:
        return WitnessCheck(False, f"no conflict at round k+m={t}")
    if iv != (a, b):
        return WitnessCheck(False, f"conflict interval is {list(iv)}, witness claims {[a, b]}")
    return WitnessCheck(True)


# ---------------------------------------------------------------------------
# chained non-stabilization


@dataclass(frozen=True)
class Stage:
    k: int
    sigma: str
    m: int
    conflict_round: int


@dataclass(frozen=True)
class NonStabilizationRun:
    pattern: LassoPattern
    stages: tuple[Stage, ...]
    outputs: tuple[tuple[int, ...], ...] = field(repr=False)
    flips: tuple[int, ...]

    @property
    def max_flips(self) -> int:
        return max(self.flips)

    @property
    def flipping_process(self) -> int:
        return int(np.argmax(self.flips))

    def document(self) -> dict:
        return {
            "kind": "nonstabilization-run",
            "pattern": pattern_document(self.pattern),
            "stages": [s.__dict__ for s in self.stages],
            "flips": list(self.flips),
            "outputs": [list(r) for r in self.outputs],
        }


class ChainError(AttackError):
    def __init__(self, stage: int, cause: AttackError):
        super().__init__(f"stage {stage}: {cause}", {"stage": stage, **cause.report})
        self.stage = stage


def count_flips(outputs) -> tuple[int, ...]:
    o = np.asarray(outputs)
    return tuple(int(x) for x in (o[1:] != o[:-1]).sum(axis=0))


def nonstabilization_run(
    algorithm: AlgorithmSpec,
    k_schedule: Sequence[int],
    m_max: int,
    flips_required: int = 0,
    inputs: tuple[int, int] = ATTACK_INPUTS,
) -> NonStabilizationRun:
    """Chain conflicting prefixes: each stage searches a flip prefix continuing the
    history committed so far and commits ``sigma -^m``; the run ends in ``<-^w``."""
    _require_dll(algorithm)
    committed: tuple[CommGraph, ...] = ()
    stages = []
    for i, k in enumerate(k_schedule):
        try:
            w = dll_attack(algorithm, k, m_max, inputs, committed)
        except AttackError as e:
            raise ChainError(i, e) from None
        pre = parse_pattern(w.sigma + ":>").prefix
        stages.append(Stage(k, word_literal(pre[len(committed) :]), w.m, w.attack_round))
        committed = pre + (SILENT,) * w.m
    pattern = LassoPattern(committed, (LEFT,))
    H = _attack_horizon(len(committed))
    outs = run_sync(pattern, inputs, algorithm, H).outputs
    flips = count_flips(outs)
    if max(flips) < flips_required:
        raise AttackError(f"only {max(flips)} output changes, {flips_required} required", {"flips": list(flips)})
    return NonStabilizationRun(pattern, tuple(stages), outs, flips)


# ---------------------------------------------------------------------------
# empty kernel


@dataclass(frozen=True)
class EmptyKernelReport:
    pattern: LassoPattern
    inputs: tuple[int, ...]
    horizon: int
    broadcasters: frozenset[int]
    broadcasters_certified: bool
    disagreement_rounds: tuple[int, ...]
    persistent_from: int | None
    verdict: Verdict
    note: str = ""

    @property
    def persistent(self) -> bool:
        return self.persistent_from is not None

    def document(self) -> dict:
        return {
            "kind": "empty-kernel-report",
            "pattern": pattern_document(self.pattern),
            "inputs": list(self.inputs),
            "horizon": self.horizon,
            "broadcasters": sorted(self.broadcasters),
            "broadcasters_certified": self.broadcasters_certified,
            "disagreement_rounds": len(self.disagreement_rounds),
            "persistent_from": self.persistent_from,
            "verdict": str(self.verdict),
            "note": self.note,
        }


def empty_kernel_demo(
    algorithm: AlgorithmSpec, pattern: LassoPattern, inputs: Sequence[int], horizon: int = 64
) -> EmptyKernelReport:
    """Run a pattern whose kernel is empty and record the disagreement it forces."""
    if kernel(pattern):
        raise ValueError(f"kernel of {pattern!r} is {sorted(kernel(pattern))}, not empty")
    tr = run_sync(pattern, tuple(inputs), algorithm, horizon)
    o = np.array(tr.outputs)
    split = (o != o[:, :1]).any(axis=1)
    rounds = tuple(int(t) for t in np.nonzero(split)[0])
    persistent = None
    if split[-1]:
        t = len(split) - 1
        while t > 0 and split[t - 1]:
            t -= 1
        persistent = t
    note = "no witness for valent inputs" if is_valent(inputs) else ""
    return EmptyKernelReport(
        pattern,
        tuple(inputs),
        horizon,
        broadcasters(tr),
        broadcasters_certified(tr),
        rounds,
        persistent,
        stabilization_verdict(tr),
        note,
    )

