"""MIQP 定式化のテスト"""

import numpy as np
import pytest

from infopath.estimator import restricted_optimal_g, total_weighted_error
from infopath.exceptions import BrokenPathError, InfeasibleInstanceError, SubtourPresentError
from infopath.formulation import (
    CutPool,
    LinearConstraint,
    big_m_bound,
    build_ipp,
    build_model,
    build_sparse_ss,
    extract_path,
    selected_subset,
)
from infopath.models import PredictionSet, SparseSsInstance


def _path_assignment(model, sequence):
    g = model.instance.graph
    z = np.zeros(model.n_binaries)
    for u, v in zip(sequence[:-1], sequence[1:]):
        z[g.arc_index[(u, v)]] = 1.0
    return z


class TestLinearConstraint:
    """線形制約"""

    def test_activity_and_satisfaction(self):
        """左辺の値と充足判定"""
        c = LinearConstraint({0: 2.0, 2: 1.0}, "<=", 2.5)
        z = np.array([1.0, 1.0, 0.0])
        assert c.activity(z) == 2.0
        assert c.is_satisfied(z)
        assert not c.is_satisfied(np.array([1.0, 0.0, 1.0]))

    def test_equality(self):
        """等式制約"""
        c = LinearConstraint({0: 1.0, 1: 1.0}, "==", 1.0)
        assert c.is_satisfied(np.array([0.0, 1.0]))
        assert not c.is_satisfied(np.array([1.0, 1.0]))

    def test_activity_range(self):
        """[lo, hi] での範囲（負係数を含む）"""
        c = LinearConstraint({0: 1.0, 1: -1.0}, "==", 0.0)
        assert c.activity_range(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == (-1.0, 1.0)
        assert c.activity_range(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == (1.0, 1.0)


class TestCutPool:
    """遅延制約プール"""

    def test_dedup_by_vertex_set(self):
        """同じ頂点集合の制約は1度だけ"""
        pool = CutPool()
        cut = LinearConstraint({0: 1.0, 1: 1.0}, "<=", 1.0)
        assert pool.add(frozenset({3, 4}), cut)
        assert not pool.add(frozenset({4, 3}), cut)
        assert len(pool) == 1
        assert frozenset({3, 4}) in pool
        assert pool.snapshot() == (cut,)


class TestBigM:
    """係数の big-M"""

    def test_coincident_point(self, se_field):
        """予測点と観測点が一致 → ‖b‖₂/σ² = 4.0"""
        omega = PredictionSet(points=[(0.0, 0.0)], weights=[1.0])
        assert big_m_bound(se_field, [(0.0, 0.0)], omega) == pytest.approx(4.0)

    def test_floor(self, se_field):
        """b ≈ 0 なら下限 1.0"""
        omega = PredictionSet(points=[(100.0, 100.0)], weights=[1.0])
        assert big_m_bound(se_field, [(0.0, 0.0), (1.0, 0.0)], omega) == 1.0

    def test_bounds_every_restricted_optimum(self, sparse_ss_factory):
        """すべての制限最適解で ‖α‖∞ ≤ M"""
        inst = sparse_ss_factory(5, 2, n_predictions=3, seed=4)
        model = build_sparse_ss(inst)
        for mask in range(1, 2 ** 5):
            support = [i for i in range(5) if mask >> i & 1]
            for q in model.forms:
                alpha, _ = restricted_optimal_g(q, support)
                assert np.max(np.abs(alpha)) <= model.big_m + 1e-12


class TestBuildSparseSs:
    """Sparse-SS の MIQP"""

    def test_counts(self, se_field):
        """M=3、N=2 → バイナリ 3、連続 6、基数制約 1、結合 6"""
        inst = SparseSsInstance(
            field=se_field,
            observations=[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            predictions=PredictionSet(points=[(0.5, 0.5), (1.0, 1.0)], weights=[1.0, 0.5]),
            k=2,
        )
        model = build_sparse_ss(inst)
        assert model.n_binaries == 3
        assert model.n_continuous == 6
        assert len(model.linear_constraints) == 1
        assert model.linear_constraints[0].relation == "=="
        assert model.linear_constraints[0].rhs == 2.0
        assert len(model.indicator_links) == 6

    def test_zero_weight_blocks_dropped(self, se_field):
        """重み 0 の予測点はブロックにならない"""
        inst = SparseSsInstance(
            field=se_field,
            observations=[(0.0, 0.0), (1.0, 0.0)],
            predictions=PredictionSet(points=[(0.5, 0.5), (1.0, 1.0)], weights=[0.0, 2.0]),
            k=1,
        )
        model = build_sparse_ss(inst)
        assert model.n_blocks == 1
        assert model.weights.tolist() == [2.0]

    def test_k_equals_m_fixes_all(self, sparse_ss_factory):
        """k=M なら全バイナリが 1 に固定、目的値は f(Θ)"""
        inst = sparse_ss_factory(4, 4)
        model = build_sparse_ss(inst)
        assert model.root_fixings == {0: 1, 1: 1, 2: 1, 3: 1}
        value, _ = model.evaluate(np.ones(4))
        assert value == pytest.approx(total_weighted_error(inst.field, inst.predictions, inst.observation_coords))

    def test_evaluate_matches_total_error(self, sparse_ss_factory):
        """evaluate は選んだ点の f(S)"""
        inst = sparse_ss_factory(5, 2, seed=2)
        model = build_sparse_ss(inst)
        z = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
        value, alphas = model.evaluate(z)
        assert selected_subset(model, z) == [1, 3]
        expected = total_weighted_error(inst.field, inst.predictions, inst.observation_coords[[1, 3]])
        assert value == pytest.approx(expected, rel=1e-10)
        assert np.all(alphas[:, [0, 2, 4]] == 0.0)

    def test_top_k_rounding(self, sparse_ss_factory):
        """丸めは上位 k 個（同値は小さいインデックス）"""
        model = build_sparse_ss(sparse_ss_factory(5, 2))
        z = model.rounding_heuristic(np.array([0.3, 0.6, 0.6, 0.1, 0.4]))
        assert z.tolist() == [0.0, 1.0, 1.0, 0.0, 0.0]
        assert model.is_feasible(z)


class TestBuildIpp:
    """IPP の MIQP"""

    def test_structure(self, ipp_factory):
        """弧ごとのバイナリと予算・端点・流量制約"""
        inst = ipp_factory(3, 6.0)
        model = build_ipp(inst)
        assert model.n_binaries == len(inst.graph.arcs)
        names = {c.name for c in model.linear_constraints}
        assert {"budget", "start", "end"} <= names
        assert "flow:4" in names and "degree:4" in names
        assert "flow:0" not in names and "flow:8" not in names
        assert model.cut_generator is not None

    def test_presolve_fixings(self, ipp_factory):
        """s への弧・t からの弧・予算外の弧は 0 に固定"""
        inst = ipp_factory(3, 4.0)
        model = build_ipp(inst)
        g = inst.graph
        for i in g.in_arcs[g.start] + g.out_arcs[g.end]:
            assert model.root_fixings[i] == 0
        # B=4 ではどの弧も測地線上にしか使えない: 右か下へ進む弧だけが残る
        free = [g.arcs[i] for i in range(len(g.arcs)) if i not in model.root_fixings]
        for a in free:
            assert a.head - a.tail in (1, 3)

    def test_infeasible_budget(self, ipp_factory):
        """B < 最短距離なら構築時にエラー"""
        with pytest.raises(InfeasibleInstanceError):
            build_model(ipp_factory(2, 1.5))

    def test_initial_candidate_is_shortest_path(self, ipp_factory):
        """最初の初期候補は最短 s-t 経路、残りも実行可能"""
        inst = ipp_factory(3, 6.0)
        model = build_ipp(inst)
        seed_path = model.initial_candidates[0]
        assert sum(inst.graph.arcs[i].cost for i in np.flatnonzero(seed_path)) == 4.0
        for candidate in model.initial_candidates:
            assert model.is_feasible(candidate)
            assert model.cut_generator(candidate) == []

    def test_greedy_walk_respects_budget(self, ipp_factory):
        """貪欲な丸めは予算内の実行可能な経路を返す"""
        inst = ipp_factory(3, 6.0)
        model = build_ipp(inst)
        z = model.rounding_heuristic(np.full(model.n_binaries, 0.5))
        assert z is not None
        assert model.is_feasible(z)
        assert model.cut_generator(z) == []

    def test_subtour_cut(self, ipp_factory):
        """経路 + 3頂点以上の閉路 → |S|−1 の制約、その候補で違反"""
        inst = ipp_factory(3, 12.0)
        model = build_ipp(inst)
        z = _path_assignment(model, [0, 3, 6, 7, 8])
        z += _path_assignment(model, [1, 2, 5, 4, 1])
        cuts = model.cut_generator(z)
        assert len(cuts) == 1
        key, cut = cuts[0]
        assert key == frozenset({1, 2, 4, 5})
        assert cut.rhs == 3.0
        assert cut.activity(z) - cut.rhs >= 1.0


class TestExtractPath:
    """経路の取り出し"""

    def test_single_arc(self, se_field):
        """s→t だけ選ばれていれば ⟨s,t⟩"""
        from infopath.models import Arc, IppInstance, ObservationGraph
        inst = IppInstance(
            field=se_field,
            graph=ObservationGraph(vertices=[(0.0, 0.0), (1.0, 0.0)],
                                   arcs=[Arc(tail=0, head=1, cost=1.0), Arc(tail=1, head=0, cost=1.0)],
                                   start=0, end=1),
            predictions=PredictionSet(points=[(0.5, 0.0)], weights=[1.0]),
            budget=1.0,
        )
        model = build_ipp(inst)
        sol = extract_path(model, np.array([1.0, 0.0]))
        assert sol.vertex_sequence == [0, 1]
        assert sol.length == 1.0

    def test_order_independent(self, ipp_factory):
        """弧の格納順に関係なく順序どおりの頂点列"""
        inst = ipp_factory(3, 8.0, seed=3)
        model = build_ipp(inst)
        seq = [0, 1, 4, 3, 6, 7, 8]
        sol = extract_path(model, _path_assignment(model, seq))
        assert sol.vertex_sequence == seq
        assert sol.arcs == list(zip(seq[:-1], seq[1:]))
        assert sol.length == 6.0
        value, _ = model.evaluate(_path_assignment(model, seq))
        assert sol.objective == pytest.approx(value, abs=1e-7)

    def test_subtour_present(self, ipp_factory):
        """閉路が残っていればエラー"""
        model = build_ipp(ipp_factory(3, 12.0))
        z = _path_assignment(model, [0, 3, 6, 7, 8]) + _path_assignment(model, [1, 2, 5, 4, 1])
        with pytest.raises(SubtourPresentError):
            extract_path(model, z)

    def test_broken_path(self, ipp_factory):
        """t に着く前に途切れるとエラー"""
        model = build_ipp(ipp_factory(3, 12.0))
        with pytest.raises(BrokenPathError):
            extract_path(model, _path_assignment(model, [0, 1, 2]))
