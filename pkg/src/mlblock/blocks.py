"""Block types, pre-specified blockmodels and the clustering criterion.

The criterion is a weighted sum over relations; a relation's raw criterion
is the sum over blocks of the best allowed block inconsistency.  Summation
order is fixed everywhere: cells in row-major order inside a block, blocks
in row-major order inside a relation, relations in id order.  Keeping one
code path for these sums is what makes the reported numbers reproducible
bit for bit.

Block inconsistencies (sum-of-squares family):

* ``null``: sum of squared values; every tie is noise.
* ``complete``: squared deviations from the block center, where the center
  is the block mean floored at the pre-specified value ``m_pre`` (or pinned
  to exactly ``m_pre`` when the pin variant is requested).
* ``do_not_care``: always zero.

An empty block costs zero under every type.  On one-mode relations whose
diagonal is undefined, diagonal cells simply do not exist for any of this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateWeightError,
    FeasibilityError,
    SpecError,
    ValidationError,
)
from .network import MultilevelNetwork, Relation, density
from .partition import MultiPartition, is_feasible

_KINDS = ("null", "complete", "do_not_care")
_RANK = {"do_not_care": 0, "null": 1, "complete": 2}


@dataclass(frozen=True)
class BlockType:
    """One allowed block type; ``m_pre`` and ``pin`` only matter for complete."""

    kind: str
    m_pre: float = 0.0
    pin: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown block type {self.kind!r}")
        if not math.isfinite(self.m_pre):
            raise ValidationError("m_pre must be finite")
        if self.kind != "complete" and (self.m_pre != 0.0 or self.pin):
            raise ValidationError(f"{self.kind} blocks take no parameters")


NULL = BlockType("null")
DNC = BlockType("do_not_care")


def complete(m_pre: float = 0.0, pin: bool = False) -> BlockType:
    return BlockType("complete", m_pre=float(m_pre), pin=bool(pin))


def block_type_to_json(t: BlockType) -> list:
    if t.kind == "null":
        return ["null"]
    if t.kind == "do_not_care":
        return ["dnc"]
    out: list = ["complete", t.m_pre]
    if t.pin:
        out.append("pin")
    return out


def block_type_from_json(spec) -> BlockType:
    if isinstance(spec, str):
        spec = [spec]
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ValidationError(f"bad block type spec: {spec!r}")
    kind = spec[0]
    if kind == "null":
        return NULL
    if kind in ("dnc", "do_not_care"):
        return DNC
    if kind == "complete":
        m_pre = float(spec[1]) if len(spec) > 1 else 0.0
        pin = len(spec) > 2 and spec[2] == "pin"
        return complete(m_pre, pin)
    raise ValidationError(f"unknown block type {kind!r}")


# -- single-block inconsistencies ------------------------------------------


def block_inconsistency(values: Sequence[float] | np.ndarray, block_type: BlockType) -> float:
    """Inconsistency of one block's cell values under one block type.

    This is the reference computation every other evaluation path in the
    package must agree with.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0.0
    if block_type.kind == "do_not_care":
        return 0.0
    if block_type.kind == "null":
        return float(np.sum(arr * arr))
    center = block_type.m_pre if block_type.pin else max(
        float(np.sum(arr)) / arr.size, block_type.m_pre
    )
    dev = arr - center
    return float(np.sum(dev * dev))


def block_fit(
    values: Sequence[float] | np.ndarray, allowed: Iterable[BlockType]
) -> tuple[BlockType, float]:
    """Best allowed type for a block and its inconsistency.

    Ties go to do_not_care before null before complete; among complete
    variants, to the smaller ``m_pre`` (floor before pin).
    """
    candidates = list(dict.fromkeys(allowed))
    if not candidates:
        raise ValidationError("a block needs at least one allowed type")
    candidates.sort(key=lambda t: (_RANK[t.kind], t.m_pre, t.pin))
    best_type = candidates[0]
    best_val = block_inconsistency(values, best_type)
    for t in candidates[1:]:
        v = block_inconsistency(values, t)
        if v < best_val:
            best_type, best_val = t, v
    return best_type, best_val


# -- pre-specified models ----------------------------------------------------


@dataclass(frozen=True)
class PrespecifiedModel:
    """Grid of allowed block-type sets, one cell per (row cluster, column cluster)."""

    grid: tuple[tuple[tuple[BlockType, ...], ...], ...]

    def __post_init__(self) -> None:
        rows = []
        for r, row in enumerate(self.grid):
            cells = []
            for c, cell in enumerate(row):
                if isinstance(cell, BlockType):
                    cell = (cell,)
                cell = tuple(dict.fromkeys(cell))
                if not cell:
                    raise ValidationError(f"model cell ({r}, {c}) allows no block types")
                for t in cell:
                    if not isinstance(t, BlockType):
                        raise ValidationError(f"model cell ({r}, {c}) holds a non block type")
                cells.append(cell)
            rows.append(tuple(cells))
        if not rows:
            raise ValidationError("a model needs at least one row of cells")
        width = len(rows[0])
        if width == 0 or any(len(r) != width for r in rows):
            raise ValidationError("model grid must be rectangular and non-empty")
        object.__setattr__(self, "grid", tuple(rows))

    @property
    def m_rows(self) -> int:
        return len(self.grid)

    @property
    def m_cols(self) -> int:
        return len(self.grid[0])

    def all_types(self) -> tuple[BlockType, ...]:
        seen: dict[BlockType, None] = {}
        for row in self.grid:
            for cell in row:
                for t in cell:
                    seen.setdefault(t, None)
        return tuple(seen)


def cohesive_prespec(m: int, m_pre: float = 0.0, pin: bool = False) -> PrespecifiedModel:
    """Diagonal complete blocks, off-diagonal null: cohesive groups on one level."""
    if m < 1:
        raise ValidationError("cluster count must be at least 1")
    diag = complete(m_pre, pin)
    grid = tuple(
        tuple((diag,) if i == j else (NULL,) for j in range(m)) for i in range(m)
    )
    return PrespecifiedModel(grid=grid)


def one_to_one_prespec(m: int, m_pre: float = 0.0, pin: bool = False) -> PrespecifiedModel:
    """Square two-mode model pairing row cluster i with column cluster i.

    Diagonal cells must be complete, everything else null, so every row
    cluster ties to exactly one column cluster and vice versa.  Only usable
    when both levels are cut into the same number of clusters.
    """
    return cohesive_prespec(m, m_pre, pin)


def uniform_prespec(m_rows: int, m_cols: int, allowed: Iterable[BlockType]) -> PrespecifiedModel:
    """Every cell allows the same set of types (a free image search)."""
    if m_rows < 1 or m_cols < 1:
        raise ValidationError("cluster counts must be at least 1")
    cell = tuple(dict.fromkeys(allowed))
    if not cell:
        raise ValidationError("need at least one allowed block type")
    grid = tuple(tuple(cell for _ in range(m_cols)) for _ in range(m_rows))
    return PrespecifiedModel(grid=grid)


def collapse_to_single_block(model: PrespecifiedModel) -> PrespecifiedModel:
    """1x1 model allowing every type that appears anywhere in the grid.

    This is the worst-case view of a model: the whole relation as one
    block, fitted by whichever of the model's types suits it best.
    """
    return PrespecifiedModel(grid=((model.all_types(),),))


def model_to_json(model: PrespecifiedModel) -> list:
    out = []
    for row in model.grid:
        cells = []
        for cell in row:
            if len(cell) == 1:
                cells.append(block_type_to_json(cell[0]))
            else:
                cells.append([block_type_to_json(t) for t in cell])
        out.append(cells)
    return out


def model_from_json(grid_spec) -> PrespecifiedModel:
    if not isinstance(grid_spec, (list, tuple)):
        raise ValidationError("model grid must be a list of rows")
    rows = []
    for row in grid_spec:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append((block_type_from_json(cell),))
            elif isinstance(cell, (list, tuple)) and cell and isinstance(cell[0], str):
                cells.append((block_type_from_json(cell),))
            else:
                cells.append(tuple(block_type_from_json(t) for t in cell))
        rows.append(tuple(cells))
    return PrespecifiedModel(grid=tuple(rows))


def twice_density(relation: Relation, round_up_2dp: bool = False) -> float:
    """The usual pre-specified center: twice the relation's density.

    With ``round_up_2dp`` the value is rounded up to two decimals, the
    convention used when quoting centers in reports.
    """
    v = 2.0 * density(relation)
    if round_up_2dp:
        v = math.ceil(v * 100.0 - 1e-9) / 100.0
    return v


# -- weights ---------------------------------------------------------------


@dataclass(frozen=True)
class WeightVector:
    """One non-negative weight per relation, in relation id order."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        for v in vals:
            if not math.isfinite(v) or v < 0.0:
                raise ValidationError("weights must be finite and non-negative")
        if not vals:
            raise ValidationError("a weight vector needs at least one entry")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]


def equal_weights(n_relations: int) -> WeightVector:
    return WeightVector(values=(1.0,) * n_relations)


# -- the criterion -----------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceSpec:
    """One pre-specified model per relation, in relation id order."""

    models: tuple[PrespecifiedModel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise ValidationError("an equivalence spec needs at least one model")
        for m in self.models:
            if not isinstance(m, PrespecifiedModel):
                raise ValidationError("equivalence spec entries must be models")


@dataclass(frozen=True)
class RelationTerm:
    """One relation's share of a criterion breakdown."""

    relation_id: int
    relation_name: str
    raw: float
    weight: float
    weighted: float
    block_values: np.ndarray
    block_types: tuple[tuple[BlockType, ...], ...]


@dataclass(frozen=True)
class CriterionBreakdown:
    """Total criterion plus its per-relation and per-block decomposition.

    ``total`` is always the left-to-right sum of the weighted terms; there
    is no second way it gets computed.
    """

    total: float
    per_relation: tuple[RelationTerm, ...]


def _relation_label_arrays(
    network: MultilevelNetwork, relation: Relation, partition: MultiPartition
) -> tuple[np.ndarray, np.ndarray, int, int]:
    if partition.n_levels != len(network.levels):
        raise ValidationError(
            f"partition has {partition.n_levels} levels, network has {len(network.levels)}"
        )
    row = partition.labels[relation.from_level]
    col = partition.labels[relation.to_level]
    m_r = partition.cluster_counts[relation.from_level]
    m_c = partition.cluster_counts[relation.to_level]
    return row, col, m_r, m_c


def fit_blocks_from_labels(
    relation: Relation,
    row_labels: np.ndarray,
    col_labels: np.ndarray,
    m_rows: int,
    m_cols: int,
    model: PrespecifiedModel,
) -> tuple[float, np.ndarray, tuple[tuple[BlockType, ...], ...]]:
    """Fit every block of one relation; the reference criterion path.

    Returns (raw criterion, block inconsistencies, fitted types).  Label
    arrays may leave clusters empty; empty blocks cost zero.
    """
    if (model.m_rows, model.m_cols) != (m_rows, m_cols):
        raise SpecError(
            f"relation {relation.name!r}: model grid is "
            f"{model.m_rows}x{model.m_cols}, partition wants {m_rows}x{m_cols}"
        )
    v = relation.values
    if row_labels.shape != (v.shape[0],) or col_labels.shape != (v.shape[1],):
        raise ValidationError(
            f"relation {relation.name!r}: label arrays do not match the matrix shape"
        )
    drop_diag = relation.one_mode and not relation.diagonal_defined
    row_members = [np.flatnonzero(row_labels == i) for i in range(m_rows)]
    col_members = [np.flatnonzero(col_labels == j) for j in range(m_cols)]

    values_grid = np.zeros((m_rows, m_cols), dtype=np.float64)
    types_grid: list[tuple[BlockType, ...]] = []
    raw = 0.0
    for i in range(m_rows):
        row_types: list[BlockType] = []
        for j in range(m_cols):
            cells = v[np.ix_(row_members[i], col_members[j])]
            if drop_diag:
                keep = row_members[i][:, None] != col_members[j][None, :]
                flat = cells[keep]
            else:
                flat = cells.ravel()
            t, val = block_fit(flat, model.grid[i][j])
            values_grid[i, j] = val
            row_types.append(t)
            raw += val
        types_grid.append(tuple(row_types))
    values_grid.setflags(write=False)
    return raw, values_grid, tuple(types_grid)


def relation_criterion(
    network: MultilevelNetwork,
    relation: int | str,
    partition: MultiPartition,
    model: PrespecifiedModel,
) -> tuple[float, np.ndarray, tuple[tuple[BlockType, ...], ...]]:
    """Raw criterion of one relation under a partition and model."""
    rel = network.relations[network.relation_id(relation)]
    row, col, m_r, m_c = _relation_label_arrays(network, rel, partition)
    return fit_blocks_from_labels(rel, row, col, m_r, m_c, model)


def _check_feasible(network: MultilevelNetwork, partition: MultiPartition) -> None:
    if partition.n_levels != len(network.levels):
        raise FeasibilityError(
            f"partition has {partition.n_levels} levels, network has {len(network.levels)}"
        )
    for l, lv in enumerate(network.levels):
        if partition.labels[l].shape != (lv.n_units,):
            raise FeasibilityError(
                f"level {lv.name!r}: {partition.labels[l].shape[0]} labels for "
                f"{lv.n_units} units"
            )
        sizes = partition.cluster_sizes(l)
        empty = np.flatnonzero(sizes == 0)
        if empty.size:
            raise FeasibilityError(
                f"level {lv.name!r}: cluster {int(empty[0]) + 1} of "
                f"{partition.cluster_counts[l]} is empty"
            )


def total_criterion(
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    weights: WeightVector,
    partition: MultiPartition,
) -> CriterionBreakdown:
    """Weighted criterion over all relations, with its full decomposition."""
    if len(equivalences.models) != len(network.relations):
        raise SpecError(
            f"{len(equivalences.models)} models for {len(network.relations)} relations"
        )
    if len(weights) != len(network.relations):
        raise SpecError(
            f"{len(weights)} weights for {len(network.relations)} relations"
        )
    _check_feasible(network, partition)
    terms = []
    total = 0.0
    for rel, model in zip(network.relations, equivalences.models):
        row, col, m_r, m_c = _relation_label_arrays(network, rel, partition)
        raw, grid_vals, grid_types = fit_blocks_from_labels(rel, row, col, m_r, m_c, model)
        w = weights[rel.id]
        weighted = w * raw
        total += weighted
        terms.append(
            RelationTerm(
                relation_id=rel.id,  # type: ignore[arg-type]
                relation_name=rel.name,
                raw=raw,
                weight=w,
                weighted=weighted,
                block_values=grid_vals,
                block_types=grid_types,
            )
        )
    return CriterionBreakdown(total=total, per_relation=tuple(terms))


# -- vectorized block fitting over batches of stats --------------------------


@dataclass(frozen=True)
class CompiledGrids:
    """Array form of a model grid, for batched and compiled evaluation."""

    allow_null: np.ndarray   # (m_r, m_c) bool
    allow_dnc: np.ndarray    # (m_r, m_c) bool
    comp_m_pre: np.ndarray   # (K, m_r, m_c) float, NaN where absent
    comp_pin: np.ndarray     # (K, m_r, m_c) bool


def compile_grids(model: PrespecifiedModel) -> CompiledGrids:
    m_r, m_c = model.m_rows, model.m_cols
    allow_null = np.zeros((m_r, m_c), dtype=bool)
    allow_dnc = np.zeros((m_r, m_c), dtype=bool)
    k_max = 0
    for row in model.grid:
        for cell in row:
            k_max = max(k_max, sum(1 for t in cell if t.kind == "complete"))
    comp_m_pre = np.full((k_max, m_r, m_c), np.nan, dtype=np.float64)
    comp_pin = np.zeros((k_max, m_r, m_c), dtype=bool)
    for i, row in enumerate(model.grid):
        for j, cell in enumerate(row):
            k = 0
            for t in cell:
                if t.kind == "null":
                    allow_null[i, j] = True
                elif t.kind == "do_not_care":
                    allow_dnc[i, j] = True
                else:
                    comp_m_pre[k, i, j] = t.m_pre
                    comp_pin[k, i, j] = t.pin
                    k += 1
    return CompiledGrids(allow_null, allow_dnc, comp_m_pre, comp_pin)


def fit_table(
    cnt: np.ndarray, s1: np.ndarray, s2: np.ndarray, grids: CompiledGrids
) -> np.ndarray:
    """Best inconsistency per block from (count, sum, sum of squares) stats.

    Inputs broadcast over any leading batch axes; the trailing two axes are
    the model grid.  Matches :func:`block_inconsistency` up to float
    round-off (the stats form of the complete deviation is used here).
    """
    cnt = np.asarray(cnt, dtype=np.float64)
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    shape = np.broadcast_shapes(
        cnt.shape, s1.shape, s2.shape, grids.allow_null.shape
    )
    out = np.full(shape, np.inf, dtype=np.float64)
    if grids.allow_dnc.any():
        out = np.where(grids.allow_dnc, 0.0, out)
    if grids.allow_null.any():
        out = np.minimum(out, np.where(grids.allow_null, s2, np.inf))
    safe_n = np.where(cnt > 0, cnt, 1.0)
    mean = s1 / safe_n
    for k in range(grids.comp_m_pre.shape[0]):
        mp = grids.comp_m_pre[k]
        pin = grids.comp_pin[k]
        have = ~np.isnan(mp)
        center = np.where(pin, mp, np.maximum(mean, np.where(have, mp, -np.inf)))
        val = s2 - 2.0 * center * s1 + cnt * center * center
        val = np.maximum(val, 0.0)
        out = np.minimum(out, np.where(have, val, np.inf))
    return np.where(cnt <= 0, 0.0, out)


# -- derived quantities -------------------------------------------------------


def one_cluster_criterion(
    network: MultilevelNetwork, relation: int | str, model: PrespecifiedModel
) -> float:
    """Relation criterion with everything in one cluster per level.

    The model is collapsed to its single-block form first, so the value is
    the relation's worst-case inconsistency under its own model family.
    """
    rel = network.relations[network.relation_id(relation)]
    rows = np.zeros(rel.shape[0], dtype=np.int64)
    cols = np.zeros(rel.shape[1], dtype=np.int64)
    raw, _, _ = fit_blocks_from_labels(
        rel, rows, cols, 1, 1, collapse_to_single_block(model)
    )
    return raw


def compute_weights(
    network: MultilevelNetwork, equivalences: EquivalenceSpec
) -> WeightVector:
    """Weights that equalize the relations' worst-case inconsistencies.

    Each relation k gets weight P_1 / P_k, where P_k is its one-cluster
    criterion under its own (collapsed) model.  The first relation's
    weight is exactly 1, and w_k * P_k is the same for every k.
    """
    if len(equivalences.models) != len(network.relations):
        raise SpecError(
            f"{len(equivalences.models)} models for {len(network.relations)} relations"
        )
    if not network.relations:
        raise SpecError("cannot derive weights for a network without relations")
    errors = []
    for rel, model in zip(network.relations, equivalences.models):
        p = one_cluster_criterion(network, rel.id, model)  # type: ignore[arg-type]
        if p <= 0.0:
            raise DegenerateWeightError(
                f"relation {rel.name!r}: one-cluster inconsistency is zero, "
                "its weight is undefined"
            )
        errors.append(p)
    first = errors[0]
    return WeightVector(values=tuple(first / p for p in errors))


def scale_weight(
    weights: WeightVector, relation: int, factor: float
) -> WeightVector:
    """Return a copy of the weights with one relation's weight scaled."""
    if not (0 <= relation < len(weights)):
        raise ValidationError(f"no relation with id {relation}")
    if not math.isfinite(factor) or factor < 0.0:
        raise ValidationError("scale factor must be finite and non-negative")
    vals = list(weights.values)
    vals[relation] = vals[relation] * factor
    return WeightVector(values=tuple(vals))


__all__ = [
    "BlockType",
    "NULL",
    "DNC",
    "complete",
    "block_type_to_json",
    "block_type_from_json",
    "block_inconsistency",
    "block_fit",
    "PrespecifiedModel",
    "cohesive_prespec",
    "one_to_one_prespec",
    "uniform_prespec",
    "collapse_to_single_block",
    "model_to_json",
    "model_from_json",
    "twice_density",
    "WeightVector",
    "equal_weights",
    "EquivalenceSpec",
    "RelationTerm",
    "CriterionBreakdown",
    "relation_criterion",
    "fit_blocks_from_labels",
    "total_criterion",
    "CompiledGrids",
    "compile_grids",
    "fit_table",
    "one_cluster_criterion",
    "compute_weights",
    "scale_weight",
    "is_feasible",
    "MultiPartition",
]
