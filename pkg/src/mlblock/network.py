"""Multilevel network data model and file formats.

A network is a fixed set of levels (disjoint unit sets) plus dense
relations.  A relation is one-mode when both of its levels coincide and
two-mode otherwise.  Regions of the network that carry no relation are
simply absent; nothing in this module invents zero matrices for them.

Matrices are stored as read-only float64 arrays.  On one-mode relations the
``diagonal_defined`` flag states whether self-ties are meaningful; when it
is false the diagonal is excluded from densities, summaries and every block
criterion downstream.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .partition import MultiPartition


@dataclass(frozen=True)
class Level:
    """One level of the network: an ordered set of named units."""

    name: str
    unit_names: tuple[str, ...]
    id: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "unit_names", tuple(str(u) for u in self.unit_names))
        if not self.name:
            raise ValidationError("level name must be non-empty")
        if len(self.unit_names) == 0:
            raise ValidationError(f"level {self.name!r} has no units")
        if len(set(self.unit_names)) != len(self.unit_names):
            raise ValidationError(f"level {self.name!r} has duplicate unit names")

    @property
    def n_units(self) -> int:
        return len(self.unit_names)


@dataclass(frozen=True)
class Relation:
    """A dense relation between two levels (possibly the same one).

    Parameters
    ----------
    name : str
        Unique relation name.
    from_level, to_level : int or str
        Level ids (or names, resolved by :func:`build_network`): rows of
        ``values`` index units of ``from_level``, columns units of
        ``to_level``.
    values : array_like
        Dense (n_from, n_to) matrix of tie values.
    diagonal_defined : bool
        Whether self-ties of a one-mode relation are meaningful.  Must be
        left false for two-mode relations.
    """

    name: str
    from_level: int | str
    to_level: int | str
    values: np.ndarray
    diagonal_defined: bool = False
    id: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("relation name must be non-empty")
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValidationError(f"relation {self.name!r}: values must be a 2-d matrix")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"relation {self.name!r}: values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def one_mode(self) -> bool:
        return self.from_level == self.to_level

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class MultilevelNetwork:
    """Levels plus relations, with all ids normalized to positions."""

    levels: tuple[Level, ...]
    relations: tuple[Relation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "relations", tuple(self.relations))
        if not self.levels:
            raise ValidationError("a network needs at least one level")
        names = [lv.name for lv in self.levels]
        if len(set(names)) != len(names):
            raise ValidationError("level names must be unique")
        seen_units: dict[str, str] = {}
        for lv in self.levels:
            for unit in lv.unit_names:
                if unit in seen_units:
                    raise ValidationError(
                        f"unit name {unit!r} appears in levels "
                        f"{seen_units[unit]!r} and {lv.name!r}"
                    )
                seen_units[unit] = lv.name
        for pos, lv in enumerate(self.levels):
            if lv.id != pos:
                raise ValidationError(
                    f"level {lv.name!r} has id {lv.id}, expected position {pos}; "
                    "use build_network() to normalize ids"
                )
        rel_names = [r.name for r in self.relations]
        if len(set(rel_names)) != len(rel_names):
            raise ValidationError("relation names must be unique")
        for pos, rel in enumerate(self.relations):
            if rel.id != pos:
                raise ValidationError(
                    f"relation {rel.name!r} has id {rel.id}, expected position {pos}; "
                    "use build_network() to normalize ids"
                )
            if not isinstance(rel.from_level, int) or not isinstance(rel.to_level, int):
                raise ValidationError(
                    f"relation {rel.name!r}: levels must be resolved to ids"
                )
            if not (0 <= rel.from_level < len(self.levels)):
                raise ValidationError(f"relation {rel.name!r}: unknown from_level")
            if not (0 <= rel.to_level < len(self.levels)):
                raise ValidationError(f"relation {rel.name!r}: unknown to_level")
            want = (self.levels[rel.from_level].n_units, self.levels[rel.to_level].n_units)
            if rel.shape != want:
                raise ValidationError(
                    f"relation {rel.name!r}: matrix shape {rel.shape} does not match "
                    f"level sizes {want}"
                )
            if rel.diagonal_defined and not rel.one_mode:
                raise ValidationError(
                    f"relation {rel.name!r}: diagonal_defined is only meaningful "
                    "on one-mode relations"
                )

    # -- lookups ---------------------------------------------------------

    def level_id(self, key: int | str) -> int:
        if isinstance(key, int):
            if not (0 <= key < len(self.levels)):
                raise ValidationError(f"no level with id {key}")
            return key
        for lv in self.levels:
            if lv.name == key:
                return lv.id  # type: ignore[return-value]
        raise ValidationError(f"no level named {key!r}")

    def relation_id(self, key: int | str) -> int:
        if isinstance(key, int):
            if not (0 <= key < len(self.relations)):
                raise ValidationError(f"no relation with id {key}")
            return key
        for rel in self.relations:
            if rel.name == key:
                return rel.id  # type: ignore[return-value]
        raise ValidationError(f"no relation named {key!r}")

    def relations_touching(self, level: int | str) -> tuple[Relation, ...]:
        lid = self.level_id(level)
        return tuple(
            r for r in self.relations if r.from_level == lid or r.to_level == lid
        )

    @property
    def level_sizes(self) -> tuple[int, ...]:
        return tuple(lv.n_units for lv in self.levels)


def build_network(
    levels: Sequence[Level],
    relations: Sequence[Relation] = (),
) -> MultilevelNetwork:
    """Assemble a validated network, resolving level names and assigning ids."""
    norm_levels = tuple(replace(lv, id=pos) for pos, lv in enumerate(levels))
    by_name = {lv.name: lv.id for lv in norm_levels}

    def resolve(key: int | str, rel_name: str) -> int:
        if isinstance(key, int):
            if not (0 <= key < len(norm_levels)):
                raise ValidationError(f"relation {rel_name!r}: unknown level id {key}")
            return key
        if key not in by_name:
            raise ValidationError(f"relation {rel_name!r}: unknown level {key!r}")
        return by_name[key]  # type: ignore[return-value]

    norm_rels = tuple(
        replace(
            rel,
            id=pos,
            from_level=resolve(rel.from_level, rel.name),
            to_level=resolve(rel.to_level, rel.name),
        )
        for pos, rel in enumerate(relations)
    )
    return MultilevelNetwork(levels=norm_levels, relations=norm_rels)


# -- descriptive statistics ----------------------------------------------


def defined_cell_count(relation: Relation) -> int:
    """Number of cells that carry meaning (diagonal excluded when undefined)."""
    n_r, n_c = relation.shape
    if relation.one_mode and not relation.diagonal_defined:
        return n_r * n_c - n_r
    return n_r * n_c


def tie_count(relation: Relation) -> int:
    """Number of non-zero defined cells."""
    v = relation.values
    nz = int(np.count_nonzero(v))
    if relation.one_mode and not relation.diagonal_defined:
        nz -= int(np.count_nonzero(np.diagonal(v)))
    return nz


def density(relation: Relation) -> float:
    """Share of defined cells that are non-zero."""
    defined = defined_cell_count(relation)
    if defined == 0:
        raise ValidationError(
            f"relation {relation.name!r} has no defined cells; density is undefined"
        )
    return tie_count(relation) / defined


def reciprocity(relation: Relation) -> float | None:
    """Share of defined ties (i, j) whose mirror (j, i) is also a tie.

    Two-mode relations and relations without ties have no reciprocity;
    returns None for those.
    """
    if not relation.one_mode:
        return None
    v = relation.values
    present = v != 0.0
    if not relation.diagonal_defined:
        present = present.copy()
        np.fill_diagonal(present, False)
    ties = int(present.sum())
    if ties == 0:
        return None
    mutual = int((present & present.T).sum())
    return mutual / ties


def network_summary(network: MultilevelNetwork) -> list[dict]:
    """Per-relation descriptive statistics.

    For each relation: size, tie count, density, average in-degree (tie
    count over destination units) and, on one-mode relations, reciprocity.
    Relabeling units or clusters does not change any of these numbers.
    """
    out = []
    for rel in network.relations:
        n_r, n_c = rel.shape
        ties = tie_count(rel)
        out.append(
            {
                "relation": rel.name,
                "from": network.levels[rel.from_level].name,
                "to": network.levels[rel.to_level].name,
                "n_rows": n_r,
                "n_cols": n_c,
                "one_mode": rel.one_mode,
                "defined_cells": defined_cell_count(rel),
                "tie_count": ties,
                "density": density(rel),
                "avg_in_degree": ties / n_c,
                "reciprocity": reciprocity(rel),
            }
        )
    return out


# -- synthetic fixtures ----------------------------------------------------


def generate_planted(
    seed: int,
    level_sizes: Sequence[int],
    cluster_counts: Sequence[int],
    within_density: float,
    between_density: float,
    membership_alignment: str = "aligned",
) -> tuple[MultilevelNetwork, MultiPartition]:
    """Random network with a planted cluster structure on every level.

    Each level gets a binary one-mode relation whose within-cluster cells
    are ties with probability ``within_density`` and whose between-cluster
    cells are ties with probability ``between_density``.  Consecutive
    levels are joined by a binary membership relation assigning every
    lower unit to exactly one upper unit; with ``aligned`` membership a
    lower unit in planted cluster c picks its upper unit inside upper
    cluster ``c mod m_upper``, with ``random`` it picks uniformly.

    Returns the network together with the planted partition.  The draw is
    a pure function of the arguments: one generator, fixed draw order.
    """
    if len(level_sizes) != len(cluster_counts):
        raise ValidationError("level_sizes and cluster_counts must have equal length")
    if len(level_sizes) == 0:
        raise ValidationError("need at least one level")
    for n, m in zip(level_sizes, cluster_counts):
        if m < 1 or m > n:
            raise ValidationError(f"cluster count {m} invalid for level of size {n}")
    for p in (within_density, between_density):
        if not (0.0 <= p <= 1.0):
            raise ValidationError("densities must lie in [0, 1]")
    if membership_alignment not in ("aligned", "random"):
        raise ValidationError("membership_alignment must be 'aligned' or 'random'")

    rng = np.random.default_rng(seed)
    labels = [
        (np.arange(n, dtype=np.int64) * m) // n
        for n, m in zip(level_sizes, cluster_counts)
    ]

    levels = [
        Level(name=f"level{l}", unit_names=tuple(f"u{l}_{i}" for i in range(n)))
        for l, n in enumerate(level_sizes)
    ]
    relations: list[Relation] = []
    for l, n in enumerate(level_sizes):
        same = labels[l][:, None] == labels[l][None, :]
        prob = np.where(same, within_density, between_density)
        mat = (rng.random((n, n)) < prob).astype(np.float64)
        np.fill_diagonal(mat, 0.0)
        relations.append(
            Relation(name=f"within{l}", from_level=l, to_level=l, values=mat)
        )
    for l in range(len(level_sizes) - 1):
        n_low, n_up = level_sizes[l], level_sizes[l + 1]
        m_up = cluster_counts[l + 1]
        mat = np.zeros((n_low, n_up), dtype=np.float64)
        for u in range(n_low):
            if membership_alignment == "aligned":
                target = int(labels[l][u]) % m_up
                members = np.flatnonzero(labels[l + 1] == target)
                choice = members[int(rng.integers(len(members)))]
            else:
                choice = int(rng.integers(n_up))
            mat[u, choice] = 1.0
        relations.append(
            Relation(name=f"member{l}{l + 1}", from_level=l, to_level=l + 1, values=mat)
        )

    network = build_network(levels, relations)
    partition = MultiPartition(
        labels=tuple(labels), cluster_counts=tuple(int(m) for m in cluster_counts)
    )
    return network, partition


# -- file formats ----------------------------------------------------------


def _delimiter_for(path: Path) -> str:
    return "\t" if path.suffix.lower() == ".tsv" else ","


def _format_value(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_matrix(
    path: str | Path,
    values: np.ndarray,
    row_names: Sequence[str],
    col_names: Sequence[str],
) -> None:
    """Write a labeled matrix as CSV (or TSV, by extension)."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(row_names), len(col_names)):
        raise ValidationError("matrix shape does not match the supplied names")
    delim = _delimiter_for(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim)
        writer.writerow([""] + list(col_names))
        for name, row in zip(row_names, values):
            writer.writerow([name] + [_format_value(v) for v in row])


def read_matrix(path: str | Path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a labeled matrix written by :func:`write_matrix`.

    Returns (values, row_names, col_names).
    """
    path = Path(path)
    delim = _delimiter_for(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delim) if r]
    if not rows:
        raise ValidationError(f"{path}: empty matrix file")
    col_names = [c.strip() for c in rows[0][1:]]
    row_names: list[str] = []
    data: list[list[float]] = []
    for r in rows[1:]:
        if len(r) != len(col_names) + 1:
            raise ValidationError(
                f"{path}: row {r[0]!r} has {len(r) - 1} cells, expected {len(col_names)}"
            )
        row_names.append(r[0].strip())
        try:
            data.append([float(x) for x in r[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric cell in row {r[0]!r}") from exc
    return np.array(data, dtype=np.float64), row_names, col_names


def load_network(spec_path: str | Path) -> MultilevelNetwork:
    """Load a network from a JSON description plus matrix files.

    The JSON file lists levels (inline ``units`` or a ``units_file`` with
    one name per line) and relations pointing at matrix files.  Matrix row
    and column names must cover the level's units exactly; rows and
    columns are re-ordered by name, so file order does not matter.
    """
    spec_path = Path(spec_path)
    try:
        raw = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{spec_path}: invalid JSON ({exc})") from exc
    base = spec_path.parent
    if not isinstance(raw, dict) or "levels" not in raw:
        raise ValidationError(f"{spec_path}: expected an object with 'levels'")

    levels = []
    for entry in raw["levels"]:
        name = entry.get("name")
        if not name:
            raise ValidationError(f"{spec_path}: level without a name")
        if "units" in entry:
            units = [str(u) for u in entry["units"]]
        elif "units_file" in entry:
            units = [
                line.strip()
                for line in (base / entry["units_file"]).read_text().splitlines()
                if line.strip()
            ]
        else:
            raise ValidationError(f"{spec_path}: level {name!r} needs units or units_file")
        levels.append(Level(name=name, unit_names=tuple(units)))
    by_name = {lv.name: lv for lv in levels}

    relations = []
    for entry in raw.get("relations", []):
        name = entry.get("name")
        if not name:
            raise ValidationError(f"{spec_path}: relation without a name")
        for key in ("from", "to", "matrix"):
            if key not in entry:
                raise ValidationError(f"{spec_path}: relation {name!r} missing {key!r}")
        if entry["from"] not in by_name or entry["to"] not in by_name:
            raise ValidationError(f"{spec_path}: relation {name!r} names unknown levels")
        values, row_names, col_names = read_matrix(base / entry["matrix"])
        values = _reindex(
            values, row_names, col_names,
            by_name[entry["from"]].unit_names, by_name[entry["to"]].unit_names,
            where=f"{spec_path}: relation {name!r}",
        )
        relations.append(
            Relation(
                name=name,
                from_level=entry["from"],
                to_level=entry["to"],
                values=values,
                diagonal_defined=bool(entry.get("diagonal_defined", False)),
            )
        )
    return build_network(levels, relations)


def _reindex(
    values: np.ndarray,
    row_names: Sequence[str],
    col_names: Sequence[str],
    want_rows: Sequence[str],
    want_cols: Sequence[str],
    where: str,
) -> np.ndarray:
    for have, want, axis in ((row_names, want_rows, "row"), (col_names, want_cols, "column")):
        missing = set(want) - set(have)
        extra = set(have) - set(want)
        if missing or extra:
            raise ValidationError(
                f"{where}: {axis} names do not match the level "
                f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
            )
    rpos = {n: i for i, n in enumerate(row_names)}
    cpos = {n: i for i, n in enumerate(col_names)}
    ridx = [rpos[n] for n in want_rows]
    cidx = [cpos[n] for n in want_cols]
    return values[np.ix_(ridx, cidx)]


def _safe_filename(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def write_network(network: MultilevelNetwork, out_dir: str | Path, name: str = "network") -> Path:
    """Write a network as a JSON description plus one CSV per relation.

    Returns the path of the JSON file; :func:`load_network` round-trips it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc: dict = {"levels": [], "relations": []}
    for lv in network.levels:
        doc["levels"].append({"name": lv.name, "units": list(lv.unit_names)})
    for rel in network.relations:
        fname = f"{_safe_filename(rel.name)}.csv"
        write_matrix(
            out_dir / fname,
            rel.values,
            network.levels[rel.from_level].unit_names,
            network.levels[rel.to_level].unit_names,
        )
        doc["relations"].append(
            {
                "name": rel.name,
                "from": network.levels[rel.from_level].name,
                "to": network.levels[rel.to_level].name,
                "matrix": fname,
                "diagonal_defined": rel.diagonal_defined,
            }
        )
    spec_path = out_dir / f"{name}.json"
    spec_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return spec_path
