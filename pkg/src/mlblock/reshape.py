"""Carrying relations and partitions across levels.

The downward reshape turns ties among upper-level units into indirect ties
among the lower-level units that belong to them: lower units i and j are
indirectly tied whenever some upper unit of i ties (or is identical, when
co-membership counts) to some upper unit of j.  Partitions travel the same
road: a lower unit inherits the class of the upper units it belongs to.
Only the downward direction exists here; there is no aggregation upward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MembershipError, SpecError, TieError, ValidationError
from .network import Level, MultilevelNetwork, Relation, build_network


@dataclass(frozen=True)
class ReshapeOptions:
    """Knobs of the downward reshape.

    ``include_comembership`` also ties lower units that share an upper
    unit (the upper matrix gets an identity added before multiplying).
    ``zero_diagonal`` clears self-ties of the result.  ``binarize`` turns
    the summed tie counts into 0/1 at ``threshold``.
    """

    include_comembership: bool = False
    zero_diagonal: bool = True
    binarize: bool = False
    threshold: float = 1.0

    def __post_init__(self) -> None:
        if self.binarize and not self.threshold > 0.0:
            raise ValidationError("binarize threshold must be positive")


def _as_membership(two_mode: Relation, upper: Relation) -> None:
    if two_mode.one_mode:
        raise SpecError(f"relation {two_mode.name!r} is one-mode, not a membership")
    if not upper.one_mode:
        raise SpecError(f"relation {upper.name!r} must be one-mode")
    if two_mode.to_level != upper.from_level:
        raise SpecError(
            f"membership {two_mode.name!r} does not land on the level of {upper.name!r}"
        )


def reshape_down(
    two_mode: Relation,
    upper: Relation,
    options: ReshapeOptions | None = None,
) -> Relation:
    """Project an upper-level relation onto the lower level.

    ``two_mode`` must map lower units (rows) to upper units (columns).
    The resulting cell (i, j) counts the membership-weighted upper ties
    connecting i's upper units to j's upper units.
    """
    opts = options or ReshapeOptions()
    _as_membership(two_mode, upper)
    m = two_mode.values
    u = np.array(upper.values, dtype=np.float64, copy=True)
    if opts.include_comembership:
        u = u + np.eye(u.shape[0])
    out = m @ u @ m.T
    if opts.zero_diagonal:
        np.fill_diagonal(out, 0.0)
    if opts.binarize:
        out = (out >= opts.threshold).astype(np.float64)
    return Relation(
        name=f"{upper.name}_down",
        from_level=two_mode.from_level,
        to_level=two_mode.from_level,
        values=out,
        diagonal_defined=not opts.zero_diagonal,
    )


def expand_partition(
    upper_labels: Sequence[int] | np.ndarray,
    two_mode: Relation,
    tie_rule: str = "majority",
    unit_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Inherit upper-level classes downward through a membership relation.

    A lower unit with exactly one membership copies that upper unit's
    class.  Units belonging to several upper units are resolved by
    ``tie_rule``:

    * ``majority``: most frequent class, ties going to the lowest index;
    * ``error_on_tie``: like majority but a tied vote raises TieError;
    * ``new_class_per_combination``: every distinct multiset of upper
      classes gets a fresh class, numbered after the existing ones in
      order of first appearance.
    """
    if two_mode.one_mode:
        raise SpecError(f"relation {two_mode.name!r} is one-mode, not a membership")
    if tie_rule not in ("majority", "error_on_tie", "new_class_per_combination"):
        raise ValidationError(f"unknown tie rule {tie_rule!r}")
    labels = np.asarray(upper_labels, dtype=np.int64)
    n_low, n_up = two_mode.shape
    if labels.shape != (n_up,):
        raise ValidationError(
            f"expected {n_up} upper labels, got {labels.shape}"
        )
    if labels.size and labels.min() < 0:
        raise ValidationError("class labels must be non-negative")

    def name_of(u: int) -> str:
        return unit_names[u] if unit_names is not None else f"unit {u}"

    next_fresh = int(labels.max()) + 1 if labels.size else 0
    fresh: dict[tuple[int, ...], int] = {}
    out = np.empty(n_low, dtype=np.int64)
    for u in range(n_low):
        members = np.flatnonzero(two_mode.values[u] != 0.0)
        if members.size == 0:
            raise MembershipError(
                f"{name_of(u)} has no membership tie; its class cannot be inherited"
            )
        classes = labels[members]
        if members.size == 1:
            out[u] = classes[0]
            continue
        if tie_rule == "new_class_per_combination":
            key = tuple(sorted(int(c) for c in classes))
            if key not in fresh:
                fresh[key] = next_fresh
                next_fresh += 1
            out[u] = fresh[key]
            continue
        counts = np.bincount(classes)
        top = counts.max()
        winners = np.flatnonzero(counts == top)
        if tie_rule == "error_on_tie" and winners.size > 1:
            raise TieError(
                f"{name_of(u)} belongs to classes {sorted(int(w) for w in winners)} "
                "in equal measure"
            )
        out[u] = winners[0]
    return out


_AGGREGATES = ("max", "min", "average", "sum")


def _find_parts(
    network: MultilevelNetwork, main_level: int | str
) -> tuple[Relation, np.ndarray, Relation]:
    """Locate the main one-mode relation, an oriented membership matrix and
    the other level's one-mode relation."""
    main = network.level_id(main_level)
    original = next(
        (r for r in network.relations if r.from_level == main and r.to_level == main),
        None,
    )
    if original is None:
        raise SpecError(
            f"no one-mode relation on level {network.levels[main].name!r}"
        )
    two_mode = next(
        (
            r
            for r in network.relations
            if not r.one_mode and main in (r.from_level, r.to_level)
        ),
        None,
    )
    if two_mode is None:
        raise SpecError(
            f"no two-mode relation touches level {network.levels[main].name!r}"
        )
    other = two_mode.to_level if two_mode.from_level == main else two_mode.from_level
    membership = (
        two_mode.values if two_mode.from_level == main else two_mode.values.T
    )
    upper = next(
        (r for r in network.relations if r.from_level == other and r.to_level == other),
        None,
    )
    if upper is None:
        raise SpecError(
            f"no one-mode relation on level {network.levels[other].name!r}"
        )
    return original, membership, upper


def _is_binary(arr: np.ndarray) -> bool:
    return bool(np.all((arr == 0.0) | (arr == 1.0)))


def _builder_reshaped(
    network: MultilevelNetwork,
    main_level: int | str,
    options: ReshapeOptions | None,
) -> tuple[Relation, Relation]:
    original, membership, upper = _find_parts(network, main_level)
    if options is None:
        options = ReshapeOptions(
            include_comembership=True,
            binarize=_is_binary(membership) and _is_binary(upper.values),
            threshold=1.0,
        )
    main = network.level_id(main_level)
    oriented = Relation(
        name="membership",
        from_level=main,
        to_level=upper.from_level,
        values=membership,
    )
    return original, reshape_down(oriented, upper, options)


def build_extended(
    network: MultilevelNetwork,
    main_level: int | str,
    aggregate: str = "max",
    options: ReshapeOptions | None = None,
) -> MultilevelNetwork:
    """Fold the other level into one extended relation on the main level.

    The main level's own relation and the downward reshape of the other
    level's relation are combined cell-wise by ``aggregate`` (max, min,
    average or sum).  With no options given, co-membership ties count and
    binary inputs yield a binary reshape.  Returns a one-level network with
    a single relation named ``extended``.
    """
    if aggregate not in _AGGREGATES:
        raise ValidationError(f"aggregate must be one of {_AGGREGATES}")
    original, reshaped = _builder_reshaped(network, main_level, options)
    a, b = original.values, reshaped.values
    if aggregate == "max":
        vals = np.maximum(a, b)
    elif aggregate == "min":
        vals = np.minimum(a, b)
    elif aggregate == "average":
        vals = (a + b) / 2.0
    else:
        vals = a + b
    main = network.levels[network.level_id(main_level)]
    level = Level(name=main.name, unit_names=main.unit_names)
    rel = Relation(
        name="extended",
        from_level=main.name,
        to_level=main.name,
        values=vals,
        diagonal_defined=original.diagonal_defined and reshaped.diagonal_defined,
    )
    return build_network([level], [rel])


def build_multirelational(
    network: MultilevelNetwork,
    main_level: int | str,
    options: ReshapeOptions | None = None,
) -> MultilevelNetwork:
    """Keep the main relation and the downward reshape side by side.

    Returns a one-level network with two relations: ``original`` (the main
    level's own ties) and ``institutional`` (ties inherited from the other
    level), ready for a jointly weighted analysis.
    """
    original, reshaped = _builder_reshaped(network, main_level, options)
    main = network.levels[network.level_id(main_level)]
    level = Level(name=main.name, unit_names=main.unit_names)
    rels = [
        Relation(
            name="original",
            from_level=main.name,
            to_level=main.name,
            values=original.values,
            diagonal_defined=original.diagonal_defined,
        ),
        Relation(
            name="institutional",
            from_level=main.name,
            to_level=main.name,
            values=reshaped.values,
            diagonal_defined=reshaped.diagonal_defined,
        ),
    ]
    return build_network([level], rels)
