"""Partition search: steepest-descent local search, seeded restarts and
exhaustive enumeration.

Determinism contract: a restart's outcome is a pure function of (seed,
restart index) and the problem, so results never depend on how restarts
are spread over worker processes.  Local search scans candidates in a
fixed order (levels, then unit index, then target cluster; all single
moves before all exchanges) and the first of equally best candidates
wins, so a start partition always descends to the same optimum.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import blocks
from .blocks import (
    CriterionBreakdown,
    EquivalenceSpec,
    WeightVector,
    compute_weights,
    scale_weight,
    total_criterion,
)
from .engine import CriterionEngine
from .errors import CapacityError, SpecError, ValidationError
from .network import MultilevelNetwork, Relation
from .partition import MultiPartition

_NEIGHBORHOODS = ("moves", "exchanges", "both")


@dataclass(frozen=True)
class SearchConfig:
    """Search knobs; everything that affects the result lives here."""

    restarts: int = 100
    seed: int = 0
    max_iterations: int | None = None
    neighborhood: str = "both"
    acceptance: str = "steepest"

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValidationError("restarts must be at least 1")
        if self.neighborhood not in _NEIGHBORHOODS:
            raise ValidationError(f"neighborhood must be one of {_NEIGHBORHOODS}")
        if self.acceptance != "steepest":
            raise ValidationError("only steepest-descent acceptance is implemented")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValidationError("max_iterations must be non-negative")


@dataclass(frozen=True)
class StepRecord:
    """One accepted descent step, for logging and verification."""

    index: int
    level: int
    kind: str
    detail: tuple[int, int]
    predicted_delta: float
    total_before: float
    total_after: float
    labels_after: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class SearchResult:
    best_partition: MultiPartition
    best_breakdown: CriterionBreakdown
    per_restart: tuple[tuple[float, int], ...]
    restarts_at_optimum: int


def _improvement_tolerance(total: float) -> float:
    return 1e-12 * max(1.0, abs(total))


def _descend(
    engine: CriterionEngine,
    config: SearchConfig,
    trace: list[StepRecord] | None = None,
) -> int:
    """Steepest descent on the engine's partition; returns accepted steps."""
    n_levels = len(engine.labels)
    use_moves = config.neighborhood in ("moves", "both")
    use_exchanges = config.neighborhood in ("exchanges", "both")
    iterations = 0
    while config.max_iterations is None or iterations < config.max_iterations:
        best_delta = math.inf
        best = None  # (level, kind, payload)
        if use_moves:
            for level in range(n_levels):
                if engine.cluster_counts[level] < 2:
                    continue
                deltas = engine.eval_moves(level)
                flat = int(np.argmin(deltas))
                val = deltas.flat[flat]
                if math.isfinite(val) and val < best_delta:
                    unit, target = divmod(flat, deltas.shape[1])
                    best_delta = float(val)
                    best = (level, "move", (int(unit), int(target)))
        if use_exchanges:
            for level in range(n_levels):
                us, vs = engine.exchange_pairs(level)
                if us.shape[0] == 0:
                    continue
                deltas = engine.eval_exchanges(level, us, vs)
                p = int(np.argmin(deltas))
                val = deltas[p]
                if math.isfinite(val) and val < best_delta:
                    best_delta = float(val)
                    best = (level, "exchange", (int(us[p]), int(vs[p])))
        total_before = engine.total
        if best is None or best_delta >= -_improvement_tolerance(total_before):
            break
        level, kind, payload = best
        if kind == "move":
            unit, target = payload
            old = int(engine.labels[level][unit])
            engine.apply_move(level, unit, target)
            if engine.total >= total_before:  # numerically hollow improvement
                engine.apply_move(level, unit, old)
                break
        else:
            u, v = payload
            engine.apply_exchange(level, u, v)
            if engine.total >= total_before:
                engine.apply_exchange(level, u, v)
                break
        iterations += 1
        if trace is not None:
            trace.append(
                StepRecord(
                    index=iterations,
                    level=level,
                    kind=kind,
                    detail=payload,
                    predicted_delta=best_delta,
                    total_before=total_before,
                    total_after=engine.total,
                    labels_after=tuple(
                        tuple(int(x) for x in lab) for lab in engine.labels
                    ),
                )
            )
    return iterations


def local_search(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    start: MultiPartition,
    config: SearchConfig | None = None,
    trace: list[StepRecord] | None = None,
) -> tuple[MultiPartition, CriterionBreakdown]:
    """Steepest descent from one start partition.

    Every accepted step strictly decreases the criterion; a step may move
    one unit to another cluster of its level (never emptying a cluster) or
    swap two units of one level.  Stops when no candidate improves.  The
    returned breakdown is recomputed on the reference path, so it is the
    number a fresh :func:`total_criterion` call would report.
    """
    cfg = config or SearchConfig()
    blocks._check_feasible(network, start)
    engine = CriterionEngine(network, equivalences, weights, start)
    _descend(engine, cfg, trace)
    partition = engine.partition()
    return partition, total_criterion(network, equivalences, weights, partition)


def refine(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    partition: MultiPartition,
    config: SearchConfig | None = None,
    trace: list[StepRecord] | None = None,
) -> tuple[MultiPartition, CriterionBreakdown]:
    """Continue descending from an existing solution, e.g. after reweighting."""
    return local_search(network, equivalences, weights, partition, config, trace)


# -- seeded restarts ------------------------------------------------------------


def _check_cluster_counts(
    network: MultilevelNetwork, cluster_counts: Sequence[int]
) -> tuple[int, ...]:
    counts = tuple(int(m) for m in cluster_counts)
    if len(counts) != len(network.levels):
        raise ValidationError(
            f"{len(counts)} cluster counts for {len(network.levels)} levels"
        )
    for m, lv in zip(counts, network.levels):
        if m < 1:
            raise ValidationError(f"level {lv.name!r}: cluster count must be >= 1")
        if m > lv.n_units:
            raise ValidationError(
                f"level {lv.name!r}: {m} non-empty clusters cannot be placed "
                f"on {lv.n_units} units"
            )
    return counts


def _check_models(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    counts: tuple[int, ...],
) -> None:
    if len(equivalences.models) != len(network.relations):
        raise SpecError(
            f"{len(equivalences.models)} models for {len(network.relations)} relations"
        )
    if len(weights) != len(network.relations):
        raise SpecError(
            f"{len(weights)} weights for {len(network.relations)} relations"
        )
    for rel, model in zip(network.relations, equivalences.models):
        want = (counts[rel.from_level], counts[rel.to_level])
        if (model.m_rows, model.m_cols) != want:
            raise SpecError(
                f"relation {rel.name!r}: model grid {model.m_rows}x{model.m_cols} "
                f"does not fit cluster counts {want[0]}x{want[1]}"
            )


def _random_feasible_start(
    rng: np.random.Generator,
    level_sizes: Sequence[int],
    counts: Sequence[int],
) -> MultiPartition:
    """Uniform labels per unit; the whole draw is repeated until no cluster
    on any level comes out empty."""
    while True:
        labels = [
            rng.integers(0, m, size=n).astype(np.int64)
            for n, m in zip(level_sizes, counts)
        ]
        if all(
            np.bincount(lab, minlength=m).min() > 0
            for lab, m in zip(labels, counts)
        ):
            return MultiPartition(labels=tuple(labels), cluster_counts=tuple(counts))


def _single_restart(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    counts: tuple[int, ...],
    config: SearchConfig,
    r: int,
) -> tuple[int, float, int, tuple[tuple[int, ...], ...]]:
    rng = np.random.default_rng((config.seed, r))
    start = _random_feasible_start(rng, network.level_sizes, counts)
    engine = CriterionEngine(network, equivalences, weights, start)
    iterations = _descend(engine, config)
    partition = engine.partition()
    ref_total = total_criterion(network, equivalences, weights, partition).total
    return r, ref_total, iterations, partition.as_tuple()


_WORKER_ARGS: dict = {}


def _worker_init(payload) -> None:
    _WORKER_ARGS["payload"] = payload


def _worker_run(r: int):
    network, equivalences, weights, counts, config = _WORKER_ARGS["payload"]
    return _single_restart(network, equivalences, weights, counts, config, r)


def restart_search(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    cluster_counts: Sequence[int],
    config: SearchConfig | None = None,
    threads: int = 1,
) -> SearchResult:
    """Local search from ``config.restarts`` seeded random starts.

    Restart r (numbered 1..restarts) draws its start from an independent
    stream keyed by (seed, r), so the result is identical however many
    worker processes share the work.  Ties between restarts go to the
    lowest restart index.
    """
    cfg = config or SearchConfig()
    counts = _check_cluster_counts(network, cluster_counts)
    _check_models(network, equivalences, weights, counts)
    indices = range(1, cfg.restarts + 1)
    if threads <= 1:
        outcomes = [
            _single_restart(network, equivalences, weights, counts, cfg, r)
            for r in indices
        ]
    else:
        payload = (network, equivalences, weights, counts, cfg)
        chunk = max(1, cfg.restarts // (threads * 4))
        with ProcessPoolExecutor(
            max_workers=threads, initializer=_worker_init, initargs=(payload,)
        ) as pool:
            outcomes = list(pool.map(_worker_run, indices, chunksize=chunk))
    outcomes.sort(key=lambda o: o[0])
    best_r, best_total, _, best_labels = min(
        outcomes, key=lambda o: (o[1], o[0])
    )
    best_partition = MultiPartition(
        labels=tuple(np.array(lab, dtype=np.int64) for lab in best_labels),
        cluster_counts=counts,
    )
    best_breakdown = total_criterion(network, equivalences, weights, best_partition)
    per_restart = tuple((o[1], o[2]) for o in outcomes)
    at_optimum = sum(1 for o in outcomes if o[1] == best_total)
    return SearchResult(
        best_partition=best_partition,
        best_breakdown=best_breakdown,
        per_restart=per_restart,
        restarts_at_optimum=at_optimum,
    )


# -- exhaustive enumeration -------------------------------------------------------


def stirling_partition_count(n: int, m: int) -> int:
    """Number of partitions of n units into exactly m non-empty clusters."""
    if m < 1 or m > n:
        return 0
    row = [0] * (m + 1)
    row[0] = 1
    for i in range(1, n + 1):
        new = [0] * (m + 1)
        for j in range(1, min(i, m) + 1):
            new[j] = j * row[j] + row[j - 1]
        row = new
    return row[m]


def partitions_into_clusters(n: int, m: int) -> np.ndarray:
    """All canonical label arrays of n units into exactly m clusters.

    Canonical means clusters are numbered by first appearance, so cluster
    indices are ordered by their smallest member.  Rows come out in
    lexicographic order; the row count is the Stirling partition number.
    """
    if m < 1 or m > n:
        raise ValidationError(f"cannot cut {n} units into exactly {m} clusters")
    count = stirling_partition_count(n, m)
    out = np.empty((count, n), dtype=np.int64)
    a = np.zeros(n, dtype=np.int64)
    row = 0

    def rec(i: int, used: int) -> None:
        nonlocal row
        if i == n:
            if used == m:
                out[row] = a
                row += 1
            return
        if used + (n - i) < m:
            return
        top = min(used + 1, m)
        for c in range(top):
            a[i] = c
            rec(i + 1, used + (1 if c == used else 0))

    rec(0, 0)
    return out


def _one_hot(labels: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros(labels.shape + (m,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def _table_one_mode(
    rel: Relation, grids, labmat: np.ndarray, m: int
) -> np.ndarray:
    """Raw criterion of a one-mode relation for every candidate partition."""
    v = rel.values
    vsq = v * v
    skip_diag = not rel.diagonal_defined
    p_total, n = labmat.shape
    out = np.empty(p_total, dtype=np.float64)
    chunk = max(1, 2_000_000 // max(1, n * m))
    idx = np.arange(m)
    for lo in range(0, p_total, chunk):
        hi = min(lo + chunk, p_total)
        oh = _one_hot(labmat[lo:hi], m)
        sizes = oh.sum(axis=1)
        s1 = np.einsum("pui,uv,pvj->pij", oh, v, oh, optimize=True)
        s2 = np.einsum("pui,uv,pvj->pij", oh, vsq, oh, optimize=True)
        cnt = sizes[:, :, None] * sizes[:, None, :]
        if skip_diag:
            dv = np.ascontiguousarray(np.diagonal(v))
            dsq = dv * dv
            d1 = np.einsum("pui,u->pi", oh, dv)
            d2 = np.einsum("pui,u->pi", oh, dsq)
            s1[:, idx, idx] -= d1
            s2[:, idx, idx] -= d2
            cnt[:, idx, idx] -= sizes
        bval = blocks.fit_table(cnt, s1, s2, grids)
        out[lo:hi] = bval.sum(axis=(1, 2))
    return out


def _table_two_mode(
    rel: Relation,
    grids,
    lab_a: np.ndarray,
    m_a: int,
    lab_b: np.ndarray,
    m_b: int,
) -> np.ndarray:
    """Raw criterion of a two-mode relation over all partition pairs."""
    v = rel.values
    vsq = v * v
    p_a, _ = lab_a.shape
    p_b, _ = lab_b.shape
    oh_b = _one_hot(lab_b, m_b)
    sizes_b = oh_b.sum(axis=1)
    out = np.empty((p_a, p_b), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, p_b * m_a * m_b))
    for lo in range(0, p_a, chunk):
        hi = min(lo + chunk, p_a)
        oh_a = _one_hot(lab_a[lo:hi], m_a)
        sizes_a = oh_a.sum(axis=1)
        x1 = np.einsum("pui,uv->piv", oh_a, v, optimize=True)
        x2 = np.einsum("pui,uv->piv", oh_a, vsq, optimize=True)
        s1 = np.einsum("piv,qvj->pqij", x1, oh_b, optimize=True)
        s2 = np.einsum("piv,qvj->pqij", x2, oh_b, optimize=True)
        cnt = sizes_a[:, None, :, None] * sizes_b[None, :, None, :]
        bval = blocks.fit_table(cnt, s1, s2, grids)
        out[lo:hi] = bval.sum(axis=(2, 3))
    return out


def exhaustive_search(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    cluster_counts: Sequence[int],
    cap: int = 10_000_000,
) -> tuple[MultiPartition, CriterionBreakdown, int]:
    """Global optimum by enumerating every feasible multi-partition.

    Enumerates canonical partitions level by level and scores the full
    cross product; refuses (CapacityError) when that product exceeds
    ``cap``.  Ties are broken by enumeration order.  Returns the optimal
    partition, its breakdown and the number of multi-partitions scored.
    """
    counts = _check_cluster_counts(network, cluster_counts)
    _check_models(network, equivalences, weights, counts)
    per_level = [
        stirling_partition_count(lv.n_units, m)
        for lv, m in zip(network.levels, counts)
    ]
    n_enumerated = math.prod(per_level)
    if n_enumerated > cap:
        raise CapacityError(
            f"enumeration would score {n_enumerated} multi-partitions, "
            f"over the cap of {cap}"
        )
    labmats = [
        partitions_into_clusters(lv.n_units, m)
        for lv, m in zip(network.levels, counts)
    ]
    n_levels = len(network.levels)
    total = np.zeros(tuple(per_level), dtype=np.float64)
    for rel, model in zip(network.relations, equivalences.models):
        w = weights[rel.id]
        grids = blocks.compile_grids(model)
        if rel.one_mode:
            a = rel.from_level
            raw = _table_one_mode(rel, grids, labmats[a], counts[a])
            shape = [1] * n_levels
            shape[a] = per_level[a]
            total += w * raw.reshape(shape)
        else:
            a, b = rel.from_level, rel.to_level
            raw = _table_two_mode(
                rel, grids, labmats[a], counts[a], labmats[b], counts[b]
            )
            if a > b:
                raw = raw.T
                a, b = b, a
            shape = [1] * n_levels
            shape[a] = per_level[a]
            shape[b] = per_level[b]
            total += w * raw.reshape(shape)
    flat_best = int(np.argmin(total))
    best_idx = np.unravel_index(flat_best, total.shape)
    partition = MultiPartition(
        labels=tuple(labmats[l][best_idx[l]] for l in range(n_levels)),
        cluster_counts=counts,
    )
    breakdown = total_criterion(network, equivalences, weights, partition)
    return partition, breakdown, n_enumerated


__all__ = [
    "SearchConfig",
    "SearchResult",
    "StepRecord",
    "local_search",
    "refine",
    "restart_search",
    "exhaustive_search",
    "stirling_partition_count",
    "partitions_into_clusters",
    "compute_weights",
    "scale_weight",
]
