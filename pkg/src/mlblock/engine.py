"""Incremental criterion evaluation for neighborhood search.

Evaluating a candidate move by rebuilding the whole criterion is
quadratic in network size; the search only needs the difference, and a
move of one unit between clusters touches just two block rows and two
block columns.  This module keeps per-block (count, sum, sum of squares)
statistics and scores every candidate move or exchange of a level with
compiled loops over those strips.

Deltas are evaluated from the current statistics without copying state;
applying a step rebuilds the touched relations' statistics from scratch,
which keeps float drift from accumulating across a descent.  The slow
reference path in :mod:`mlblock.blocks` stays the arbiter: totals here
must agree with it to tight relative error, which the tests check.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .blocks import EquivalenceSpec, WeightVector, compile_grids
from .errors import SpecError, ValidationError
from .network import MultilevelNetwork
from .partition import MultiPartition


@njit(cache=True, inline="always")
def _fit_one(n, t1, t2, i, j, gnull, gdnc, gmp, gpin):
    """Best allowed inconsistency of one block from its running stats."""
    if n <= 0.0:
        return 0.0
    best = np.inf
    if gdnc[i, j]:
        best = 0.0
    if gnull[i, j] and t2 < best:
        best = t2
    for k in range(gmp.shape[0]):
        mp = gmp[k, i, j]
        if np.isnan(mp):
            continue
        if gpin[k, i, j]:
            c = mp
        else:
            c = t1 / n
            if mp > c:
                c = mp
        v = t2 - 2.0 * c * t1 + n * c * c
        if v < 0.0:
            v = 0.0
        if v < best:
            best = v
    return best


@njit(cache=True)
def _stats_from_scratch(V, VSQ, row_labels, col_labels, m_r, m_c, skip_diag):
    cnt = np.zeros((m_r, m_c))
    s1 = np.zeros((m_r, m_c))
    s2 = np.zeros((m_r, m_c))
    n_r, n_c = V.shape
    for i in range(n_r):
        ci = row_labels[i]
        for j in range(n_c):
            if skip_diag and i == j:
                continue
            cj = col_labels[j]
            cnt[ci, cj] += 1.0
            s1[ci, cj] += V[i, j]
            s2[ci, cj] += VSQ[i, j]
    return cnt, s1, s2


@njit(cache=True)
def _fit_grid(cnt, s1, s2, gnull, gdnc, gmp, gpin):
    m_r, m_c = cnt.shape
    bval = np.empty((m_r, m_c))
    raw = 0.0
    for i in range(m_r):
        for j in range(m_c):
            v = _fit_one(cnt[i, j], s1[i, j], s2[i, j], i, j, gnull, gdnc, gmp, gpin)
            bval[i, j] = v
            raw += v
    return bval, raw


@njit(cache=True)
def _eval_moves(
    V, VSQ, row_labels, col_labels, is_rows, is_cols, diag_defined,
    cnt, s1, s2, bval, gnull, gdnc, gmp, gpin, unit_labels, w, out,
):
    """Add w * (criterion delta) of every single move on one level to out.

    ``out[u, t]`` accumulates the delta of moving unit u to cluster t.
    Entries with t equal to u's current cluster are left untouched.
    """
    n_r, n_c = V.shape
    m_r, m_c = cnt.shape
    one_mode = is_rows and is_cols
    n_units = unit_labels.shape[0]
    m_l = m_r if is_rows else m_c
    ru_c = np.zeros(m_c)
    ru_1 = np.zeros(m_c)
    ru_2 = np.zeros(m_c)
    cu_c = np.zeros(m_r)
    cu_1 = np.zeros(m_r)
    cu_2 = np.zeros(m_r)
    for u in range(n_units):
        c1 = unit_labels[u]
        if is_rows:
            for j in range(m_c):
                ru_c[j] = 0.0
                ru_1[j] = 0.0
                ru_2[j] = 0.0
            for j in range(n_c):
                if one_mode and j == u:
                    continue
                jj = col_labels[j]
                ru_c[jj] += 1.0
                ru_1[jj] += V[u, j]
                ru_2[jj] += VSQ[u, j]
        if is_cols:
            for i in range(m_r):
                cu_c[i] = 0.0
                cu_1[i] = 0.0
                cu_2[i] = 0.0
            for i in range(n_r):
                if one_mode and i == u:
                    continue
                ii = row_labels[i]
                cu_c[ii] += 1.0
                cu_1[ii] += V[i, u]
                cu_2[ii] += VSQ[i, u]
        d_c = 0.0
        d_1 = 0.0
        d_2 = 0.0
        if one_mode and diag_defined:
            d_c = 1.0
            d_1 = V[u, u]
            d_2 = VSQ[u, u]
        for t in range(m_l):
            if t == c1:
                continue
            delta = 0.0
            if is_rows:
                # block rows c1 (loses u's row) and t (gains it)
                for which in range(2):
                    i2 = c1 if which == 0 else t
                    sign = -1.0 if which == 0 else 1.0
                    for j in range(m_c):
                        nc = cnt[i2, j] + sign * ru_c[j]
                        n1 = s1[i2, j] + sign * ru_1[j]
                        n2 = s2[i2, j] + sign * ru_2[j]
                        if one_mode:
                            # u's column moves too: columns c1 and t shift
                            if j == c1:
                                nc -= cu_c[i2]
                                n1 -= cu_1[i2]
                                n2 -= cu_2[i2]
                            elif j == t:
                                nc += cu_c[i2]
                                n1 += cu_1[i2]
                                n2 += cu_2[i2]
                            if diag_defined:
                                if i2 == c1 and j == c1:
                                    nc -= d_c
                                    n1 -= d_1
                                    n2 -= d_2
                                elif i2 == t and j == t:
                                    nc += d_c
                                    n1 += d_1
                                    n2 += d_2
                        delta += _fit_one(nc, n1, n2, i2, j, gnull, gdnc, gmp, gpin)
                        delta -= bval[i2, j]
            if is_cols:
                # block columns c1 and t; skip rows already counted above
                for which in range(2):
                    j2 = c1 if which == 0 else t
                    sign = -1.0 if which == 0 else 1.0
                    for i in range(m_r):
                        if one_mode and (i == c1 or i == t):
                            continue
                        nc = cnt[i, j2] + sign * cu_c[i]
                        n1 = s1[i, j2] + sign * cu_1[i]
                        n2 = s2[i, j2] + sign * cu_2[i]
                        delta += _fit_one(nc, n1, n2, i, j2, gnull, gdnc, gmp, gpin)
                        delta -= bval[i, j2]
            out[u, t] += w * delta


@njit(cache=True)
def _eval_exchanges(
    V, VSQ, row_labels, col_labels, is_rows, is_cols, diag_defined,
    cnt, s1, s2, bval, gnull, gdnc, gmp, gpin, us, vs, unit_labels, w, out,
):
    """Add w * (criterion delta) of swapping units us[p] and vs[p] to out[p].

    Block cell counts survive a swap, so only sums and square sums shift.
    """
    n_r, n_c = V.shape
    m_r, m_c = cnt.shape
    one_mode = is_rows and is_cols
    tr_1 = np.zeros(m_c)
    tr_2 = np.zeros(m_c)
    tc_1 = np.zeros(m_r)
    tc_2 = np.zeros(m_r)
    for p in range(us.shape[0]):
        u = us[p]
        v = vs[p]
        c1 = unit_labels[u]
        c2 = unit_labels[v]
        if is_rows:
            for j in range(m_c):
                tr_1[j] = 0.0
                tr_2[j] = 0.0
            for j in range(n_c):
                if one_mode and (j == u or j == v):
                    continue
                jj = col_labels[j]
                tr_1[jj] += V[u, j] - V[v, j]
                tr_2[jj] += VSQ[u, j] - VSQ[v, j]
        if is_cols:
            for i in range(m_r):
                tc_1[i] = 0.0
                tc_2[i] = 0.0
            for i in range(n_r):
                if one_mode and (i == u or i == v):
                    continue
                ii = row_labels[i]
                tc_1[ii] += V[i, u] - V[i, v]
                tc_2[ii] += VSQ[i, u] - VSQ[i, v]
        x12_1 = 0.0
        x12_2 = 0.0
        x21_1 = 0.0
        x21_2 = 0.0
        x11_1 = 0.0
        x11_2 = 0.0
        x22_1 = 0.0
        x22_2 = 0.0
        if one_mode:
            # the four cells among u and v change blocks as a unit
            x12_1 = V[v, u] - V[u, v]
            x12_2 = VSQ[v, u] - VSQ[u, v]
            x21_1 = V[u, v] - V[v, u]
            x21_2 = VSQ[u, v] - VSQ[v, u]
            if diag_defined:
                x11_1 = V[v, v] - V[u, u]
                x11_2 = VSQ[v, v] - VSQ[u, u]
                x22_1 = V[u, u] - V[v, v]
                x22_2 = VSQ[u, u] - VSQ[v, v]
        delta = 0.0
        if is_rows:
            for which in range(2):
                i2 = c1 if which == 0 else c2
                sign = -1.0 if which == 0 else 1.0
                for j in range(m_c):
                    n1 = s1[i2, j] + sign * tr_1[j]
                    n2 = s2[i2, j] + sign * tr_2[j]
                    if one_mode:
                        if j == c1:
                            n1 -= tc_1[i2]
                            n2 -= tc_2[i2]
                        elif j == c2:
                            n1 += tc_1[i2]
                            n2 += tc_2[i2]
                        if i2 == c1 and j == c2:
                            n1 += x12_1
                            n2 += x12_2
                        elif i2 == c2 and j == c1:
                            n1 += x21_1
                            n2 += x21_2
                        elif i2 == c1 and j == c1:
                            n1 += x11_1
                            n2 += x11_2
                        elif i2 == c2 and j == c2:
                            n1 += x22_1
                            n2 += x22_2
                    delta += _fit_one(cnt[i2, j], n1, n2, i2, j, gnull, gdnc, gmp, gpin)
                    delta -= bval[i2, j]
        if is_cols:
            for which in range(2):
                j2 = c1 if which == 0 else c2
                sign = -1.0 if which == 0 else 1.0
                for i in range(m_r):
                    if one_mode and (i == c1 or i == c2):
                        continue
                    n1 = s1[i, j2] + sign * tc_1[i]
                    n2 = s2[i, j2] + sign * tc_2[i]
                    delta += _fit_one(cnt[i, j2], n1, n2, i, j2, gnull, gdnc, gmp, gpin)
                    delta -= bval[i, j2]
        out[p] += w * delta


class _RelationState:
    __slots__ = (
        "relation_id", "V", "VSQ", "from_level", "to_level", "one_mode",
        "diag_defined", "skip_diag", "gnull", "gdnc", "gmp", "gpin",
        "cnt", "s1", "s2", "bval", "raw", "m_r", "m_c",
    )


class CriterionEngine:
    """Mutable search state: a partition plus per-block statistics.

    The engine owns a writable copy of the labels.  ``eval_moves`` and
    ``eval_exchanges`` score whole candidate batches without touching
    state; ``apply_move`` / ``apply_exchange`` commit one step.
    """

    def __init__(
        self,
        network: MultilevelNetwork,
        equivalences: EquivalenceSpec,
        weights: WeightVector,
        partition: MultiPartition,
    ) -> None:
        if len(equivalences.models) != len(network.relations):
            raise SpecError(
                f"{len(equivalences.models)} models for "
                f"{len(network.relations)} relations"
            )
        if len(weights) != len(network.relations):
            raise SpecError(
                f"{len(weights)} weights for {len(network.relations)} relations"
            )
        if partition.n_levels != len(network.levels):
            raise ValidationError("partition level count does not match the network")
        self.network = network
        self.equivalences = equivalences
        self.weights = weights
        self.cluster_counts = tuple(partition.cluster_counts)
        self.labels = [np.array(lab, dtype=np.int64) for lab in partition.labels]
        for l, lv in enumerate(network.levels):
            if self.labels[l].shape != (lv.n_units,):
                raise ValidationError(
                    f"level {lv.name!r}: label count does not match unit count"
                )
        self.states: list[_RelationState] = []
        for rel, model in zip(network.relations, equivalences.models):
            m_r = self.cluster_counts[rel.from_level]
            m_c = self.cluster_counts[rel.to_level]
            if (model.m_rows, model.m_cols) != (m_r, m_c):
                raise SpecError(
                    f"relation {rel.name!r}: model grid {model.m_rows}x{model.m_cols} "
                    f"does not fit cluster counts {m_r}x{m_c}"
                )
            grids = compile_grids(model)
            st = _RelationState()
            st.relation_id = rel.id
            st.V = np.ascontiguousarray(rel.values, dtype=np.float64)
            st.VSQ = st.V * st.V
            st.from_level = rel.from_level
            st.to_level = rel.to_level
            st.one_mode = rel.one_mode
            st.diag_defined = rel.diagonal_defined
            st.skip_diag = rel.one_mode and not rel.diagonal_defined
            st.gnull = np.ascontiguousarray(grids.allow_null)
            st.gdnc = np.ascontiguousarray(grids.allow_dnc)
            st.gmp = np.ascontiguousarray(grids.comp_m_pre)
            st.gpin = np.ascontiguousarray(grids.comp_pin)
            st.m_r = m_r
            st.m_c = m_c
            self.states.append(st)
        self._rebuild_all()

    # -- state maintenance -------------------------------------------------

    def _rebuild_relation(self, st: _RelationState) -> None:
        st.cnt, st.s1, st.s2 = _stats_from_scratch(
            st.V, st.VSQ,
            self.labels[st.from_level], self.labels[st.to_level],
            st.m_r, st.m_c, st.skip_diag,
        )
        st.bval, st.raw = _fit_grid(
            st.cnt, st.s1, st.s2, st.gnull, st.gdnc, st.gmp, st.gpin
        )

    def _rebuild_all(self) -> None:
        for st in self.states:
            self._rebuild_relation(st)

    @property
    def total(self) -> float:
        tot = 0.0
        for st in self.states:
            tot += self.weights[st.relation_id] * st.raw
        return tot

    def partition(self) -> MultiPartition:
        return MultiPartition(
            labels=tuple(np.array(lab) for lab in self.labels),
            cluster_counts=self.cluster_counts,
        )

    def cluster_sizes(self, level: int) -> np.ndarray:
        return np.bincount(self.labels[level], minlength=self.cluster_counts[level])

    # -- candidate scoring ---------------------------------------------------

    def eval_moves(self, level: int) -> np.ndarray:
        """Criterion deltas of all single moves on one level.

        Returns an (n_units, n_clusters) array; staying put and moves that
        would empty a cluster are +inf.
        """
        lab = self.labels[level]
        n_l = lab.shape[0]
        m_l = self.cluster_counts[level]
        out = np.zeros((n_l, m_l), dtype=np.float64)
        for st in self.states:
            is_rows = st.from_level == level
            is_cols = st.to_level == level
            if not (is_rows or is_cols):
                continue
            w = self.weights[st.relation_id]
            if w == 0.0:
                continue
            _eval_moves(
                st.V, st.VSQ,
                self.labels[st.from_level], self.labels[st.to_level],
                is_rows, is_cols, st.diag_defined,
                st.cnt, st.s1, st.s2, st.bval,
                st.gnull, st.gdnc, st.gmp, st.gpin,
                lab, w, out,
            )
        sizes = self.cluster_sizes(level)
        out[np.arange(n_l), lab] = np.inf
        out[sizes[lab] == 1, :] = np.inf
        return out

    def exchange_pairs(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """All unit pairs (u < v) of a level sitting in different clusters."""
        lab = self.labels[level]
        us, vs = np.triu_indices(lab.shape[0], k=1)
        keep = lab[us] != lab[vs]
        return us[keep].astype(np.int64), vs[keep].astype(np.int64)

    def eval_exchanges(self, level: int, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Criterion deltas of swapping the given unit pairs on one level."""
        out = np.zeros(us.shape[0], dtype=np.float64)
        if us.shape[0] == 0:
            return out
        lab = self.labels[level]
        for st in self.states:
            is_rows = st.from_level == level
            is_cols = st.to_level == level
            if not (is_rows or is_cols):
                continue
            w = self.weights[st.relation_id]
            if w == 0.0:
                continue
            _eval_exchanges(
                st.V, st.VSQ,
                self.labels[st.from_level], self.labels[st.to_level],
                is_rows, is_cols, st.diag_defined,
                st.cnt, st.s1, st.s2, st.bval,
                st.gnull, st.gdnc, st.gmp, st.gpin,
                us, vs, lab, w, out,
            )
        return out

    # -- committing steps ------------------------------------------------------

    def _touching(self, level: int) -> list[_RelationState]:
        return [
            st for st in self.states
            if st.from_level == level or st.to_level == level
        ]

    def apply_move(self, level: int, unit: int, target: int) -> None:
        self.labels[level][unit] = target
        for st in self._touching(level):
            self._rebuild_relation(st)

    def apply_exchange(self, level: int, u: int, v: int) -> None:
        lab = self.labels[level]
        lab[u], lab[v] = lab[v], lab[u]
        for st in self._touching(level):
            self._rebuild_relation(st)

    def set_labels(self, level: int, labels: np.ndarray) -> None:
        arr = np.asarray(labels, dtype=np.int64)
        if arr.shape != self.labels[level].shape:
            raise ValidationError("label array has the wrong length")
        self.labels[level][:] = arr
        for st in self._touching(level):
            self._rebuild_relation(st)


def warm_up() -> None:
    """Compile the kernels on a toy problem (first call in a process)."""
    from .blocks import NULL, EquivalenceSpec, WeightVector, complete, uniform_prespec
    from .network import Level, Relation, build_network
    from .partition import MultiPartition

    net = build_network(
        [Level(name="a", unit_names=("x", "y", "z"))],
        [Relation(name="r", from_level=0, to_level=0,
                  values=np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]))],
    )
    eq = EquivalenceSpec(models=(uniform_prespec(2, 2, (NULL, complete(0.5))),))
    w = WeightVector(values=(1.0,))
    part = MultiPartition(labels=(np.array([0, 0, 1]),), cluster_counts=(2,))
    eng = CriterionEngine(net, eq, w, part)
    eng.eval_moves(0)
    us, vs = eng.exchange_pairs(0)
    eng.eval_exchanges(0, us, vs)
    eng.apply_move(0, 0, 1)
