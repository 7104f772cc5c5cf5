from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import mlblock as mb
from mlblock import blocks
from helpers import four_node_example, one_mode_network, ties_matrix

finite_values = st.lists(
    st.floats(min_value=-5, max_value=5, allow_nan=False, width=32),
    min_size=1,
    max_size=12,
)


class TestBlockInconsistency:
    def test_zeros_null(self):
        assert mb.block_inconsistency([0, 0, 0], mb.NULL) == 0.0

    def test_constant_block_at_floored_center(self):
        assert mb.block_inconsistency([1, 1, 1, 1], mb.complete(0.12)) == 0.0

    def test_mean_center(self):
        assert mb.block_inconsistency([0, 0, 1, 1], mb.complete(0.0)) == pytest.approx(1.0)

    def test_floor_binds_on_sparse_block(self):
        got = mb.block_inconsistency([0, 0, 1, 1], mb.complete(0.8))
        assert got == pytest.approx(2 * 0.64 + 2 * 0.04)

    def test_do_not_care_always_zero(self):
        assert mb.block_inconsistency([3.0, -2.0, 9.9], mb.DNC) == 0.0

    def test_empty_block_scores_zero_for_every_type(self):
        for t in (mb.NULL, mb.DNC, mb.complete(0.5)):
            assert mb.block_inconsistency([], t) == 0.0

    def test_pinned_center_ignores_the_mean(self):
        # floor semantics let a dense block use its own mean; the pin holds
        assert mb.block_inconsistency([1, 1, 1, 1], mb.complete(0.8)) == 0.0
        got = mb.block_inconsistency([1, 1, 1, 1], mb.complete(0.8, pin=True))
        assert got == pytest.approx(4 * 0.04)

    @given(finite_values, st.floats(min_value=0, max_value=2, allow_nan=False))
    def test_never_negative(self, values, m_pre):
        assert mb.block_inconsistency(values, mb.NULL) >= 0.0
        assert mb.block_inconsistency(values, mb.complete(m_pre)) >= 0.0

    @given(finite_values)
    def test_constrained_complete_reduces_to_unconstrained(self, values):
        mean = float(np.mean(values))
        unconstrained = float(np.sum((np.asarray(values) - mean) ** 2))
        for m_pre in (0.0, mean / 2, mean):
            if m_pre < 0:
                continue
            got = mb.block_inconsistency(values, mb.complete(m_pre))
            if m_pre <= mean:
                assert got == pytest.approx(unconstrained, abs=1e-12)

    @given(
        st.lists(st.floats(min_value=0, max_value=3, allow_nan=False), min_size=1, max_size=10),
        st.floats(min_value=0.1, max_value=4, allow_nan=False),
        st.floats(min_value=0, max_value=1, allow_nan=False),
    )
    def test_scale_law(self, values, s, m_pre):
        base_null = mb.block_inconsistency(values, mb.NULL)
        base_comp = mb.block_inconsistency(values, mb.complete(m_pre))
        scaled = [v * s for v in values]
        got_null = mb.block_inconsistency(scaled, mb.NULL)
        got_comp = mb.block_inconsistency(scaled, mb.complete(m_pre * s))
        assert got_null == pytest.approx(s * s * base_null, rel=1e-12, abs=1e-12)
        assert got_comp == pytest.approx(s * s * base_comp, rel=1e-12, abs=1e-12)


class TestBlockFit:
    def test_zeros_prefer_null(self):
        t, v = mb.block_fit([0, 0, 0, 0], [mb.NULL, mb.complete(0.5)])
        assert t.kind == "null" and v == 0.0

    def test_ones_prefer_complete(self):
        t, v = mb.block_fit([1, 1, 1, 1], [mb.NULL, mb.complete(0.5)])
        assert t.kind == "complete" and v == 0.0

    def test_half_ones(self):
        t, v = mb.block_fit([0, 1, 0, 1], [mb.NULL, mb.complete(0.0)])
        assert t.kind == "complete"
        assert v == pytest.approx(1.0)

    def test_tie_break_prefers_do_not_care_then_null(self):
        t, _ = mb.block_fit([0, 0], [mb.NULL, mb.DNC])
        assert t.kind == "do_not_care"
        t, _ = mb.block_fit([], [mb.complete(0.0), mb.NULL])
        assert t.kind == "null"

    @given(finite_values)
    def test_adding_do_not_care_never_hurts(self, values):
        _, base = mb.block_fit(values, [mb.NULL, mb.complete(0.0)])
        _, with_dnc = mb.block_fit(values, [mb.NULL, mb.complete(0.0), mb.DNC])
        assert with_dnc <= base
        assert with_dnc == 0.0


class TestModels:
    def test_cohesive_grid(self):
        model = mb.cohesive_prespec(3, 0.08)
        assert model.m_rows == model.m_cols == 3
        for i in range(3):
            for j in range(3):
                (t,) = model.grid[i][j]
                if i == j:
                    assert t.kind == "complete" and t.m_pre == 0.08
                else:
                    assert t.kind == "null"

    def test_cohesive_single_cell(self):
        model = mb.cohesive_prespec(1, 0.3)
        assert model.grid == ((
            (mb.complete(0.3),),
        ),)

    def test_one_to_one_shape(self):
        model = mb.one_to_one_prespec(2)
        (d,) = model.grid[0][0]
        (o,) = model.grid[0][1]
        assert d.kind == "complete" and o.kind == "null"

    def test_json_roundtrip(self):
        model = mb.PrespecifiedModel(
            grid=(
                ((mb.NULL, mb.complete(0.12)), (mb.DNC,)),
                ((mb.complete(0.5, pin=True),), (mb.NULL,)),
            )
        )
        back = mb.model_from_json(mb.model_to_json(model))
        assert back == model

    def test_collapse_unions_all_cells(self):
        model = mb.cohesive_prespec(2, 0.25)
        collapsed = mb.collapse_to_single_block(model)
        assert collapsed.m_rows == collapsed.m_cols == 1
        kinds = {t.kind for t in collapsed.grid[0][0]}
        assert kinds == {"null", "complete"}

    def test_twice_density(self):
        net = one_mode_network(ties_matrix(3, [(1, 2), (2, 1), (1, 3)]))
        assert mb.twice_density(net.relations[0]) == pytest.approx(1.0)
        vals = np.zeros((5, 5))
        vals[0, 1] = 1.0
        net2 = one_mode_network(vals)  # density 1/20 -> 0.1 exactly
        assert mb.twice_density(net2.relations[0]) == pytest.approx(0.1)
        vals3 = np.zeros((4, 4))
        vals3[0, 1] = 1.0  # density 1/12, doubled = 1/6 = 0.1666...
        net3 = one_mode_network(vals3)
        assert mb.twice_density(net3.relations[0], round_up_2dp=True) == pytest.approx(0.17)


class TestRelationCriterion:
    def test_four_node_cohesive_example(self):
        net, part = four_node_example()
        raw, values, types = mb.relation_criterion(net, 0, part, mb.cohesive_prespec(2, 0.0))
        assert raw == pytest.approx(1.0)
        assert values.shape == (2, 2)
        assert types[0][0].kind == "complete" and types[0][1].kind == "null"

    def test_one_cluster_collapse(self):
        net, _ = four_node_example()
        part = mb.MultiPartition(
            labels=(np.zeros(4, dtype=np.int64),), cluster_counts=(1,)
        )
        model = mb.PrespecifiedModel(grid=(((mb.complete(0.0),),),))
        raw, _, _ = mb.relation_criterion(net, 0, part, model)
        vals = net.relations[0].values
        cells = vals[~np.eye(4, dtype=bool)]
        assert raw == pytest.approx(mb.block_inconsistency(cells, mb.complete(0.0)))

    def test_all_do_not_care_is_zero(self):
        net, part = four_node_example()
        model = mb.uniform_prespec(2, 2, [mb.DNC])
        raw, _, _ = mb.relation_criterion(net, 0, part, model)
        assert raw == 0.0

    def test_model_dimension_mismatch(self):
        net, part = four_node_example()
        with pytest.raises(mb.SpecError):
            mb.relation_criterion(net, 0, part, mb.cohesive_prespec(3, 0.0))


class TestTotalCriterion:
    def _two_relation_net(self):
        levels = [mb.Level(name="a", unit_names=("u0", "u1", "u2", "u3"))]
        vals1 = ties_matrix(4, [(1, 2), (2, 1), (3, 4), (4, 3), (1, 3)])
        # two ties landing in the null off-diagonal blocks of [0,0,1,1]
        vals2 = ties_matrix(4, [(1, 3), (2, 4)])
        rels = [
            mb.Relation(name="r1", from_level="a", to_level="a", values=vals1),
            mb.Relation(name="r2", from_level="a", to_level="a", values=vals2),
        ]
        return mb.build_network(levels, rels)

    def test_single_relation_weight_one(self):
        net, part = four_node_example()
        eq = mb.EquivalenceSpec(models=(mb.cohesive_prespec(2, 0.0),))
        bd = mb.total_criterion(net, eq, mb.WeightVector(values=(1.0,)), part)
        raw, _, _ = mb.relation_criterion(net, 0, part, eq.models[0])
        assert bd.total == raw

    def test_weighted_sum(self):
        net = self._two_relation_net()
        part = mb.MultiPartition(
            labels=(np.array([0, 0, 1, 1], dtype=np.int64),), cluster_counts=(2,)
        )
        model = mb.cohesive_prespec(2, 0.0)
        eq = mb.EquivalenceSpec(models=(model, model))
        bd = mb.total_criterion(net, eq, mb.WeightVector(values=(1.0, 0.5)), part)
        assert bd.per_relation[0].raw == pytest.approx(1.0)
        assert bd.per_relation[1].raw == pytest.approx(2.0)
        assert bd.total == pytest.approx(2.0)

    def test_zero_weight_relation_changes_nothing(self):
        net = self._two_relation_net()
        part = mb.MultiPartition(
            labels=(np.array([0, 0, 1, 1], dtype=np.int64),), cluster_counts=(2,)
        )
        model = mb.cohesive_prespec(2, 0.0)
        eq = mb.EquivalenceSpec(models=(model, model))
        with_zero = mb.total_criterion(net, eq, mb.WeightVector(values=(1.0, 0.0)), part)
        assert with_zero.total == pytest.approx(1.0)

    def test_total_is_exact_left_fold(self):
        net = self._two_relation_net()
        part = mb.MultiPartition(
            labels=(np.array([0, 1, 0, 1], dtype=np.int64),), cluster_counts=(2,)
        )
        model = mb.uniform_prespec(2, 2, [mb.NULL, mb.complete(0.3)])
        eq = mb.EquivalenceSpec(models=(model, model))
        w = (0.7, 1.3)
        bd = mb.total_criterion(net, eq, mb.WeightVector(values=w), part)
        acc = 0.0
        for term in bd.per_relation:
            assert term.weighted == term.weight * term.raw
            acc = acc + term.weighted
        assert bd.total == acc

    def test_infeasible_partition_rejected(self):
        net, _ = four_node_example()
        part = mb.MultiPartition(
            labels=(np.zeros(4, dtype=np.int64),), cluster_counts=(2,)
        )
        eq = mb.EquivalenceSpec(models=(mb.cohesive_prespec(2, 0.0),))
        with pytest.raises(mb.FeasibilityError):
            mb.total_criterion(net, eq, mb.WeightVector(values=(1.0,)), part)

    def test_cluster_relabeling_invariance(self):
        net, part = four_node_example()
        eq = mb.EquivalenceSpec(models=(mb.cohesive_prespec(2, 0.0),))
        w = mb.WeightVector(values=(1.0,))
        base = mb.total_criterion(net, eq, w, part).total
        swapped = mb.MultiPartition(
            labels=(1 - part.labels[0],), cluster_counts=(2,)
        )
        # cohesive grids are symmetric under relabeling
        assert mb.total_criterion(net, eq, w, swapped).total == base


class TestPartitions:
    def test_single_cluster_per_level_feasible(self):
        net, _ = four_node_example()
        part = mb.MultiPartition(
            labels=(np.zeros(4, dtype=np.int64),), cluster_counts=(1,)
        )
        assert mb.is_feasible(part, net)

    def test_empty_declared_cluster_not_feasible(self):
        net, _ = four_node_example()
        part = mb.MultiPartition(
            labels=(np.zeros(4, dtype=np.int64),), cluster_counts=(2,)
        )
        assert not mb.is_feasible(part, net)

    def test_out_of_range_labels_rejected(self):
        with pytest.raises(mb.ValidationError):
            mb.MultiPartition(
                labels=(np.array([0, 2], dtype=np.int64),), cluster_counts=(2,)
            )


class TestWeights:
    def test_weight_vector_validation(self):
        with pytest.raises(mb.ValidationError):
            mb.WeightVector(values=(-1.0, 2.0))
        with pytest.raises(mb.ValidationError):
            mb.WeightVector(values=(float("nan"),))
        with pytest.raises(mb.ValidationError):
            mb.WeightVector(values=())

    def _net_with_one_cluster_errors_10_and_4(self):
        # ones counts chosen so the single-block errors are exactly 10 and 4:
        # q ones among c=20 cells, null block scores q when q <= c*p*(1-p) side
        levels = [mb.Level(name="a", unit_names=tuple(f"u{i}" for i in range(5)))]
        v1 = np.zeros((5, 5))
        v1.flat[[1, 2, 3, 5, 7, 9, 10, 13, 15, 19]] = 1.0  # 10 ties
        np.fill_diagonal(v1, 0.0)
        v2 = np.zeros((5, 5))
        v2.flat[[1, 2, 3, 5]] = 1.0  # 4 ties
        np.fill_diagonal(v2, 0.0)
        rels = [
            mb.Relation(name="r1", from_level="a", to_level="a", values=v1),
            mb.Relation(name="r2", from_level="a", to_level="a", values=v2),
        ]
        return mb.build_network(levels, rels)

    def test_ratio_example(self):
        net = self._net_with_one_cluster_errors_10_and_4()
        eq = mb.EquivalenceSpec(
            models=(
                mb.uniform_prespec(1, 1, [mb.NULL]),
                mb.uniform_prespec(1, 1, [mb.NULL]),
            )
        )
        p1 = mb.one_cluster_criterion(net, 0, eq.models[0])
        p2 = mb.one_cluster_criterion(net, 1, eq.models[1])
        assert (p1, p2) == (10.0, 4.0)
        w = mb.compute_weights(net, eq)
        assert w.values == (1.0, 2.5)

    def test_identical_relations_get_equal_weights(self):
        net, _ = four_node_example()
        vals = net.relations[0].values
        levels = [mb.Level(name="a", unit_names=tuple(f"u{i}" for i in range(4)))]
        rels = [
            mb.Relation(name="r1", from_level="a", to_level="a", values=vals),
            mb.Relation(name="r2", from_level="a", to_level="a", values=vals),
        ]
        net2 = mb.build_network(levels, rels)
        model = mb.cohesive_prespec(2, 0.0)
        w = mb.compute_weights(net2, mb.EquivalenceSpec(models=(model, model)))
        assert w.values == (1.0, 1.0)

    def test_single_relation_weight_is_one(self):
        net, _ = four_node_example()
        w = mb.compute_weights(
            net, mb.EquivalenceSpec(models=(mb.cohesive_prespec(2, 0.0),))
        )
        assert w.values == (1.0,)

    def test_zero_one_cluster_error_degenerate(self):
        net = one_mode_network(np.zeros((3, 3)))
        eq = mb.EquivalenceSpec(models=(mb.uniform_prespec(1, 1, [mb.NULL]),))
        with pytest.raises(mb.DegenerateWeightError):
            mb.compute_weights(net, eq)

    def test_scale_weight(self):
        w = mb.WeightVector(values=(1.0, 2.346, 5.478))
        doubled = mb.scale_weight(w, 2, 2.0)
        assert doubled.values == (1.0, 2.346, 10.956)
        assert mb.scale_weight(w, 1, 1.0).values == w.values
        back = mb.scale_weight(mb.scale_weight(w, 0, 0.5), 0, 2.0)
        assert back.values == w.values


class TestFitTable:
    @given(
        st.lists(
            st.tuples(
                st.integers(min_value=0, max_value=9),
                st.floats(min_value=0, max_value=8, allow_nan=False),
            ),
            min_size=1,
            max_size=6,
        )
    )
    def test_matches_block_fit_on_random_stats(self, specs):
        # random blocks of n cells with a given sum spread evenly
        rng = np.random.default_rng(0)
        family = [mb.NULL, mb.complete(0.0), mb.complete(0.4), mb.DNC]
        model = mb.uniform_prespec(1, 1, family)
        grids = blocks.compile_grids(model)
        for n, total in specs:
            if n == 0:
                values = np.zeros(0)
            else:
                values = rng.random(n)
                values = values * (total / values.sum()) if values.sum() else values
            cnt = np.array([[float(values.shape[0])]])
            s1 = np.array([[float(values.sum())]])
            s2 = np.array([[float((values**2).sum())]])
            table = blocks.fit_table(cnt, s1, s2, grids)
            _, want = mb.block_fit(values, family)
            assert table[0, 0] == pytest.approx(want, rel=1e-12, abs=1e-9)
