"""Partitions of multilevel networks.

Clusters never mix units from different levels; a multi-partition is
therefore one label array per level.  Labels are 0-based in code; file
formats and result documents use 1-based cluster numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .network import MultilevelNetwork


@dataclass(frozen=True)
class MultiPartition:
    """Per-level cluster labels.

    ``labels[l][u]`` is the cluster of unit u on level l, in
    ``range(cluster_counts[l])``.  Construction checks shapes and ranges
    only; an empty cluster is representable (and reported infeasible by
    :func:`is_feasible`) so that search code can detect it rather than
    crash while probing candidates.
    """

    labels: tuple[np.ndarray, ...]
    cluster_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.cluster_counts):
            raise ValidationError("labels and cluster_counts must align per level")
        if len(self.labels) == 0:
            raise ValidationError("a partition needs at least one level")
        frozen = []
        for l, (lab, m) in enumerate(zip(self.labels, self.cluster_counts)):
            arr = np.array(lab, dtype=np.int64, copy=True)
            if arr.ndim != 1 or arr.size == 0:
                raise ValidationError(f"level {l}: labels must be a non-empty 1-d array")
            if int(m) < 1:
                raise ValidationError(f"level {l}: cluster count must be at least 1")
            if arr.min() < 0 or arr.max() >= int(m):
                raise ValidationError(
                    f"level {l}: labels must lie in [0, {int(m) - 1}]"
                )
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "labels", tuple(frozen))
        object.__setattr__(self, "cluster_counts", tuple(int(m) for m in self.cluster_counts))

    @property
    def n_levels(self) -> int:
        return len(self.labels)

    def cluster_sizes(self, level: int) -> np.ndarray:
        return np.bincount(self.labels[level], minlength=self.cluster_counts[level])

    def has_empty_cluster(self) -> bool:
        return any(
            (self.cluster_sizes(l) == 0).any() for l in range(self.n_levels)
        )

    def as_tuple(self) -> tuple[tuple[int, ...], ...]:
        """Hashable form, handy for set membership in tests."""
        return tuple(tuple(int(x) for x in lab) for lab in self.labels)

    def relabel_canonical(self) -> "MultiPartition":
        """Renumber clusters on each level by order of first appearance."""
        new_labels = []
        for lab, m in zip(self.labels, self.cluster_counts):
            mapping = {}
            out = np.empty_like(lab)
            for i, c in enumerate(lab):
                c = int(c)
                if c not in mapping:
                    mapping[c] = len(mapping)
                out[i] = mapping[c]
            new_labels.append(out)
        return MultiPartition(labels=tuple(new_labels), cluster_counts=self.cluster_counts)


def partition_from_labels(labels: Sequence[Sequence[int]]) -> MultiPartition:
    """Build a partition taking each level's cluster count from its labels."""
    arrs = [np.asarray(lab, dtype=np.int64) for lab in labels]
    counts = [int(a.max()) + 1 if a.size else 0 for a in arrs]
    return MultiPartition(labels=tuple(arrs), cluster_counts=tuple(counts))


def is_feasible(partition: MultiPartition, network: "MultilevelNetwork") -> bool:
    """Whether the partition lies in the feasible set for this network.

    Feasible means: one label array per network level, every unit
    assigned, labels within each level's cluster count, and no empty
    cluster.  Clusters crossing levels are unrepresentable by
    construction, so they never reach this check.
    """
    if partition.n_levels != len(network.levels):
        return False
    for l, lv in enumerate(network.levels):
        if partition.labels[l].shape != (lv.n_units,):
            return False
        if (partition.cluster_sizes(l) == 0).any():
            return False
    return True
