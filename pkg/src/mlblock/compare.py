"""Comparing partitions, relations and fitted images.

Partition agreement (Rand, adjusted Rand) is computed in exact integer
arithmetic with a single float division at the end, so equal inputs give
bit-equal outputs on every platform.  Relation overlap statistics work on
tie supports over the cells both relations define.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .blocks import (
    NULL,
    BlockType,
    PrespecifiedModel,
    complete,
    fit_blocks_from_labels,
    uniform_prespec,
)
from .errors import DegenerateError, ValidationError
from .network import MultilevelNetwork, Relation
from .partition import MultiPartition


def _contingency(p, q) -> tuple[int, int, int, int]:
    """(pairs together in both, together in p, together in q, all pairs)."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.ndim != 1 or p.shape != q.shape:
        raise ValidationError("partitions must label the same units")
    n = p.size
    if n < 2:
        raise ValidationError("need at least two units to compare partitions")
    _, pi = np.unique(p, return_inverse=True)
    _, qi = np.unique(q, return_inverse=True)
    table = np.zeros((pi.max() + 1, qi.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, qi), 1)
    a = sum(math.comb(int(c), 2) for c in table.ravel())
    sp = sum(math.comb(int(c), 2) for c in table.sum(axis=1))
    sq = sum(math.comb(int(c), 2) for c in table.sum(axis=0))
    return a, sp, sq, math.comb(n, 2)


def rand_index(p: Sequence[int], q: Sequence[int]) -> float:
    """Share of unit pairs on which the two partitions agree."""
    a, sp, sq, total = _contingency(p, q)
    return (total + 2 * a - sp - sq) / total


def adjusted_rand(p: Sequence[int], q: Sequence[int]) -> float:
    """Rand index corrected for chance agreement.

    1 for identical partitions, about 0 for independent ones, negative for
    systematic disagreement.  When both partitions are trivial (all one
    cluster, or all singletons) the correction is undefined; identical
    trivial partitions score 1, anything else raises DegenerateError.
    """
    a, sp, sq, total = _contingency(p, q)
    num = 2 * (a * total - sp * sq)
    den = total * (sp + sq) - 2 * sp * sq
    if den == 0:
        if sp == sq and a == sp:
            return 1.0
        raise DegenerateError(
            "adjusted Rand is undefined: both partitions are trivial and differ"
        )
    return num / den


# -- relation-level overlap ---------------------------------------------------


def _common_defined_mask(a: Relation, b: Relation) -> np.ndarray:
    if a.shape != b.shape:
        raise ValidationError(
            f"relations {a.name!r} and {b.name!r} have different shapes"
        )
    mask = np.ones(a.shape, dtype=bool)
    for rel in (a, b):
        if rel.one_mode and not rel.diagonal_defined:
            np.fill_diagonal(mask, False)
    return mask


def tie_overlap(a: Relation, b: Relation) -> float | None:
    """Share of a's ties that are also ties in b (over cells both define).

    None when a has no ties.
    """
    mask = _common_defined_mask(a, b)
    sa = (a.values != 0.0) & mask
    ties_a = int(sa.sum())
    if ties_a == 0:
        return None
    both = int((sa & (b.values != 0.0)).sum())
    return both / ties_a


def cramers_v(a: Relation, b: Relation) -> float | None:
    """Association between two tie supports on the same cells.

    Computed from the 2x2 tie/no-tie contingency table over the cells both
    relations define.  None when any marginal is empty (one support is
    constant), where the statistic is undefined.
    """
    mask = _common_defined_mask(a, b)
    sa = (a.values != 0.0)[mask]
    sb = (b.values != 0.0)[mask]
    n11 = int(np.sum(sa & sb))
    n10 = int(np.sum(sa & ~sb))
    n01 = int(np.sum(~sa & sb))
    n00 = int(np.sum(~sa & ~sb))
    r1, r0 = n11 + n10, n01 + n00
    c1, c0 = n11 + n01, n10 + n00
    if 0 in (r1, r0, c1, c0):
        return None
    return abs(n11 * n00 - n10 * n01) / math.sqrt(r1 * r0 * c1 * c0)


# -- fitted images -------------------------------------------------------------


@dataclass(frozen=True)
class ImageMatrix:
    """Block-level view of one relation under a partition.

    ``means[i, j]`` is the mean over the block's defined cells (its tie
    density for binary data); NaN for a block with no defined cells.
    ``counts`` holds the defined-cell counts, summing to the relation's
    defined cells overall.  When a model was supplied, the fitted types and
    their inconsistencies ride along.
    """

    relation_id: int
    relation_name: str
    means: np.ndarray
    counts: np.ndarray
    fitted_types: tuple[tuple[BlockType, ...], ...] | None = None
    fitted_values: np.ndarray | None = None


def _coerce_labels(
    network: MultilevelNetwork,
    relation: Relation,
    partition,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Row/column labels for one relation from whatever the caller has."""
    if isinstance(partition, MultiPartition):
        if partition.n_levels != len(network.levels):
            raise ValidationError(
                "partition level count does not match the network"
            )
        row = partition.labels[relation.from_level]
        col = partition.labels[relation.to_level]
        m_r = partition.cluster_counts[relation.from_level]
        m_c = partition.cluster_counts[relation.to_level]
    elif isinstance(partition, tuple) and len(partition) == 2:
        row = np.asarray(partition[0], dtype=np.int64)
        col = np.asarray(partition[1], dtype=np.int64)
        m_r = int(row.max()) + 1
        m_c = int(col.max()) + 1
        if relation.one_mode:
            m_r = m_c = max(m_r, m_c)
    else:
        arr = np.asarray(partition, dtype=np.int64)
        if not relation.one_mode:
            raise ValidationError(
                f"relation {relation.name!r} is two-mode; pass (row_labels, col_labels)"
            )
        row = col = arr
        m_r = m_c = int(arr.max()) + 1
    n_r, n_c = relation.shape
    if row.shape != (n_r,) or col.shape != (n_c,):
        raise ValidationError(
            f"labels do not match relation {relation.name!r} of shape {relation.shape}"
        )
    if row.min() < 0 or col.min() < 0:
        raise ValidationError("cluster labels must be non-negative")
    return row, col, m_r, m_c


def image_matrix(
    network: MultilevelNetwork,
    relation: int | str,
    partition,
    model: PrespecifiedModel | None = None,
) -> ImageMatrix:
    """Block means and sizes of one relation under a partition."""
    rel = network.relations[network.relation_id(relation)]
    row, col, m_r, m_c = _coerce_labels(network, rel, partition)
    if model is not None and (model.m_rows, model.m_cols) != (m_r, m_c):
        m_r, m_c = model.m_rows, model.m_cols
        if int(row.max()) >= m_r or int(col.max()) >= m_c:
            raise ValidationError("labels exceed the model grid")
    drop_diag = rel.one_mode and not rel.diagonal_defined
    means = np.full((m_r, m_c), np.nan, dtype=np.float64)
    counts = np.zeros((m_r, m_c), dtype=np.int64)
    v = rel.values
    row_members = [np.flatnonzero(row == i) for i in range(m_r)]
    col_members = [np.flatnonzero(col == j) for j in range(m_c)]
    for i in range(m_r):
        for j in range(m_c):
            cells = v[np.ix_(row_members[i], col_members[j])]
            if drop_diag:
                keep = row_members[i][:, None] != col_members[j][None, :]
                flat = cells[keep]
            else:
                flat = cells.ravel()
            counts[i, j] = flat.size
            if flat.size:
                means[i, j] = float(np.sum(flat)) / flat.size
    fitted_types = None
    fitted_values = None
    if model is not None:
        _, fitted_values, fitted_types = fit_blocks_from_labels(
            rel, row, col, m_r, m_c, model
        )
    means.setflags(write=False)
    counts.setflags(write=False)
    return ImageMatrix(
        relation_id=rel.id,  # type: ignore[arg-type]
        relation_name=rel.name,
        means=means,
        counts=counts,
        fitted_types=fitted_types,
        fitted_values=fitted_values,
    )


def forced_fit(
    network: MultilevelNetwork,
    relation: int | str,
    forced,
    model: PrespecifiedModel,
) -> tuple[float, ImageMatrix]:
    """Criterion of a relation under an externally imposed partition.

    The partition is not searched, just evaluated; clusters the forced
    partition leaves empty cost nothing.  Returns the raw criterion and
    the fitted image.
    """
    rel = network.relations[network.relation_id(relation)]
    row, col, _, _ = _coerce_labels(network, rel, forced)
    m_r, m_c = model.m_rows, model.m_cols
    if int(row.max()) >= m_r or int(col.max()) >= m_c:
        raise ValidationError(
            f"forced labels exceed the {m_r}x{m_c} model grid"
        )
    raw, _, _ = fit_blocks_from_labels(rel, row, col, m_r, m_c, model)
    image = image_matrix(network, rel.id, (row, col), model)  # type: ignore[arg-type]
    return raw, image


def max_error(
    network: MultilevelNetwork,
    relation: int | str,
    allowed: Sequence[BlockType] | None = None,
) -> float:
    """Worst-case inconsistency: the whole relation as a single block.

    ``allowed`` is the family of block types the single block may take;
    by default null or an unconstrained complete block, i.e. the cheaper
    of "no ties" and "one homogeneous block".
    """
    rel = network.relations[network.relation_id(relation)]
    family = tuple(allowed) if allowed is not None else (NULL, complete(0.0))
    rows = np.zeros(rel.shape[0], dtype=np.int64)
    cols = np.zeros(rel.shape[1], dtype=np.int64)
    raw, _, _ = fit_blocks_from_labels(
        rel, rows, cols, 1, 1, uniform_prespec(1, 1, family)
    )
    return raw
