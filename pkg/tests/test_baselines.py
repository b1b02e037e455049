"""比較手法とオラクルのテスト"""

import math

import pytest

from infopath.baselines import (
    bnb_paths,
    brute_force_ipp,
    brute_force_ss,
    enumerate_paths,
    greedy_ss,
)
from infopath.estimator import total_weighted_error
from infopath.exceptions import EnumerationCapExceeded, InfeasibleInstanceError
from infopath.graphs import shortest_path_length


class TestEnumeratePaths:
    """予算内の単純経路の列挙"""

    def test_two_by_two(self, ipp_factory):
        """2×2 格子、B=2 → 2本"""
        paths = list(enumerate_paths(ipp_factory(2, 2.0)))
        assert sorted(seq for seq, _ in paths) == [[0, 1, 3], [0, 2, 3]]
        assert all(length == 2.0 for _, length in paths)

    def test_geodesics_only(self, ipp_factory):
        """B = 最短距離 → 測地線のみ（3×3 では 6 本）"""
        inst = ipp_factory(3, 4.0)
        paths = list(enumerate_paths(inst))
        assert len(paths) == math.comb(4, 2)
        assert all(length == shortest_path_length(inst.graph) for _, length in paths)

    def test_all_within_budget_and_simple(self, ipp_factory):
        """列挙される経路はすべて単純で予算内"""
        inst = ipp_factory(3, 7.0)
        for seq, length in enumerate_paths(inst):
            assert len(set(seq)) == len(seq)
            assert length <= 7.0
            assert seq[0] == 0 and seq[-1] == 8

    def test_cap(self, ipp_factory):
        """上限を超えたら EnumerationCapExceeded"""
        with pytest.raises(EnumerationCapExceeded):
            list(enumerate_paths(ipp_factory(3, 8.0), cap=10))


class TestBruteForceIpp:
    """経路の総当たりオラクル"""

    def test_is_minimum(self, ipp_factory):
        """オラクル値 ≤ 全列挙経路の値"""
        inst = ipp_factory(3, 6.0, seed=2)
        best = brute_force_ipp(inst)
        for seq, _ in enumerate_paths(inst):
            value = total_weighted_error(inst.field, inst.predictions, inst.graph.coords[seq])
            assert best.objective <= value + 1e-12

    def test_infeasible_budget(self, ipp_factory):
        """B < 最短距離ならエラー"""
        with pytest.raises(InfeasibleInstanceError):
            brute_force_ipp(ipp_factory(3, 3.0))

    def test_tie_prefers_shorter(self, ipp_factory):
        """同値なら短い経路（B が十分なら f(Θ) を達成する最短の経路）"""
        inst = ipp_factory(3, 10.0, seed=1)
        best = brute_force_ipp(inst)
        assert best.length == 8.0
        assert len(best.vertex_sequence) == 9


class TestBnbPaths:
    """経路空間の分枝限定法"""

    def test_matches_oracle(self, ipp_factory):
        """3×3、B=6 → オラクルと一致"""
        inst = ipp_factory(3, 6.0, seed=0)
        result = bnb_paths(inst, time_limit=60)
        assert result.status == "optimal"
        assert result.objective == pytest.approx(brute_force_ipp(inst).objective, rel=1e-9)
        assert result.nodes >= 1

    def test_geodesic_budget(self, ipp_factory):
        """B = 最短距離 → 最良の測地線"""
        inst = ipp_factory(3, 4.0, seed=4)
        best = min(total_weighted_error(inst.field, inst.predictions, inst.graph.coords[seq])
                   for seq, _ in enumerate_paths(inst))
        assert bnb_paths(inst).objective == pytest.approx(best, rel=1e-12)

    def test_root_bound(self, ipp_factory):
        """根の下界 = 予算内で到達可能な全頂点の誤差 ≤ 最適値"""
        inst = ipp_factory(3, 6.0, seed=5)
        result = bnb_paths(inst)
        root_bound = result.trace.bound_values()[0]
        assert root_bound == pytest.approx(
            total_weighted_error(inst.field, inst.predictions, inst.graph.coords))
        assert root_bound <= result.objective + 1e-12

    def test_incumbents_decrease(self, ipp_factory):
        """暫定値の列は減少"""
        values = bnb_paths(ipp_factory(3, 7.0, seed=3)).trace.incumbent_values()
        assert values
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_timeout(self, ipp_factory):
        """制限時間 0 ならノードを処理せず時間切れ"""
        result = bnb_paths(ipp_factory(3, 6.0), time_limit=0.0)
        assert result.status == "timeout-no-incumbent"
        assert result.solution is None
        assert result.objective is None


class TestSubsetMethods:
    """部分集合選択のオラクルと貪欲法"""

    def test_k_equals_m(self, sparse_ss_factory):
        """k=M → Θ そのもの"""
        inst = sparse_ss_factory(4, 4)
        sol = brute_force_ss(inst)
        assert sol.indices == [0, 1, 2, 3]

    def test_k_one_direct_scan(self, sparse_ss_factory):
        """k=1 → 1点ずつ評価した最小"""
        inst = sparse_ss_factory(6, 1, seed=3)
        values = [total_weighted_error(inst.field, inst.predictions, inst.observation_coords[[i]])
                  for i in range(6)]
        sol = brute_force_ss(inst)
        assert sol.indices == [values.index(min(values))]
        assert sol.objective == pytest.approx(min(values))

    def test_greedy_k_one_is_exact(self, sparse_ss_factory):
        """k=1 の貪欲法は厳密解と一致"""
        inst = sparse_ss_factory(6, 1, seed=3)
        assert greedy_ss(inst).indices == brute_force_ss(inst).indices

    @pytest.mark.parametrize("seed", range(5))
    def test_greedy_not_better_than_oracle(self, sparse_ss_factory, seed):
        """貪欲法の値 ≥ オラクル値"""
        inst = sparse_ss_factory(6, 3, seed=seed)
        greedy = greedy_ss(inst)
        assert len(greedy.indices) == 3
        assert greedy.objective >= brute_force_ss(inst).objective - 1e-12

    def test_greedy_frozen_separable(self, separable_ss):
        """無相関な6点・k=3 → {1, 3, 5}、値 0.6 + 2.1/11"""
        greedy = greedy_ss(separable_ss)
        assert greedy.indices == [1, 3, 5]
        assert greedy.objective == pytest.approx(0.6 + 2.1 / 11, abs=1e-12)
        oracle = brute_force_ss(separable_ss)
        assert oracle.indices == [1, 3, 5]
        assert oracle.objective == pytest.approx(greedy.objective, abs=1e-12)

    def test_greedy_value_matches_indices(self, sparse_ss_factory):
        """同じ入力なら同じ結果で、値は選んだ点の f(S)"""
        inst = sparse_ss_factory(6, 3, seed=0)
        first, second = greedy_ss(inst), greedy_ss(inst)
        assert first == second
        expected = total_weighted_error(inst.field, inst.predictions, inst.observation_coords[first.indices])
        assert first.objective == pytest.approx(expected, abs=1e-12)

    def test_cap(self, sparse_ss_factory):
        """C(M,k) > cap ならエラー"""
        with pytest.raises(EnumerationCapExceeded):
            brute_force_ss(sparse_ss_factory(8, 4), cap=10)
