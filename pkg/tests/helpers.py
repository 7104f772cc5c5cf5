"""Shared construction shortcuts for the test suite."""

from __future__ import annotations

import numpy as np

import mlblock as mb


def one_mode_network(values, diagonal_defined: bool = False) -> mb.MultilevelNetwork:
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    level = mb.Level(name="a", unit_names=tuple(f"u{i}" for i in range(n)))
    rel = mb.Relation(
        name="r",
        from_level="a",
        to_level="a",
        values=values,
        diagonal_defined=diagonal_defined,
    )
    return mb.build_network([level], [rel])


def ties_matrix(n: int, ties, value: float = 1.0) -> np.ndarray:
    """Binary matrix from 1-based (i, j) tie pairs."""
    out = np.zeros((n, n), dtype=np.float64)
    for i, j in ties:
        out[i - 1, j - 1] = value
    return out


def two_level_network(lower, upper, membership) -> mb.MultilevelNetwork:
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    membership = np.asarray(membership, dtype=np.float64)
    n, h = membership.shape
    levels = [
        mb.Level(name="low", unit_names=tuple(f"l{i}" for i in range(n))),
        mb.Level(name="high", unit_names=tuple(f"h{i}" for i in range(h))),
    ]
    rels = [
        mb.Relation(name="low_net", from_level="low", to_level="low", values=lower),
        mb.Relation(name="high_net", from_level="high", to_level="high", values=upper),
        mb.Relation(name="member", from_level="low", to_level="high", values=membership),
    ]
    return mb.build_network(levels, rels)


def free_models(network: mb.MultilevelNetwork, counts, extra=()) -> mb.EquivalenceSpec:
    """null-or-complete model grid for every relation at the given counts."""
    family = [mb.NULL, mb.complete(0.0), *extra]
    models = []
    for rel in network.relations:
        models.append(
            mb.uniform_prespec(counts[rel.from_level], counts[rel.to_level], family)
        )
    return mb.EquivalenceSpec(models=tuple(models))


def random_partition(rng, level_sizes, counts) -> mb.MultiPartition:
    while True:
        labels = [
            rng.integers(0, m, size=n).astype(np.int64)
            for n, m in zip(level_sizes, counts)
        ]
        if all(
            np.bincount(lab, minlength=m).min() > 0
            for lab, m in zip(labels, counts)
        ):
            return mb.MultiPartition(labels=tuple(labels), cluster_counts=tuple(counts))


def four_node_example() -> tuple[mb.MultilevelNetwork, mb.MultiPartition]:
    """Binary 4-node network with two cohesive pairs and one stray tie."""
    net = one_mode_network(
        ties_matrix(4, [(1, 2), (2, 1), (3, 4), (4, 3), (1, 3)])
    )
    part = mb.MultiPartition(
        labels=(np.array([0, 0, 1, 1], dtype=np.int64),), cluster_counts=(2,)
    )
    return net, part
