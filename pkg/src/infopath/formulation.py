"""
MIQP 定式化

問題インスタンスを、係数 α（連続）と選択変数 z（バイナリ）からなる
混合整数二次計画に変換する。

- build_sparse_ss: z_i ∈ {0,1} で観測点を k 個選ぶ
- build_ipp: 弧ごとの z_ij で s-t 経路を表す（部分巡回路除去制約は遅延生成）

目的関数は Σ_i w_i g_{x_i}(α_i)。頂点 v の係数 [α_i]_v は頂点の
訪問指示子（結合する z の和）が 0 のとき 0 に固定される。緩和では
−M·Σz ≤ [α_i]_v ≤ M·Σz の big-M 不等式で表す。
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .config import BIG_M_FLOOR, INTEGRALITY_TOL
from .estimator import QuadraticForm, quadratic_forms, restricted_optimal_all, total_weighted_error
from .exceptions import BrokenPathError, SubtourPresentError
from .graphs import check_budget, find_subtours, path_length, shortest_distances, to_networkx
from .heuristics import PathMoves, SetValue, subset_swap_search
from .models import IppInstance, PathSolution, Point, PredictionSet, RandomFieldModel, SparseSsInstance
from .randfield import kernel_matrix
from .utils.structured_logger import SLog, LogCategory, LogEvent


@dataclass(frozen=True)
class LinearConstraint:
    """Σ coefficients[b]·z_b (relation) rhs

    Attributes:
        coefficients: バイナリ変数インデックス → 係数
        relation: "<=" または "=="
        rhs: 右辺
        name: ログ・デバッグ用の名前
    """
    coefficients: Dict[int, float]
    relation: Literal["<=", "=="]
    rhs: float
    name: str = ""

    def activity(self, z: np.ndarray) -> float:
        return float(sum(c * z[b] for b, c in self.coefficients.items()))

    def is_satisfied(self, z: np.ndarray, tol: float = INTEGRALITY_TOL) -> bool:
        act = self.activity(z)
        if self.relation == "==":
            return abs(act - self.rhs) <= tol
        return act <= self.rhs + tol

    def activity_range(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[float, float]:
        """z ∈ [lo, hi] での左辺の取りうる範囲"""
        low = high = 0.0
        for b, c in self.coefficients.items():
            if c >= 0:
                low += c * lo[b]
                high += c * hi[b]
            else:
                low += c * hi[b]
                high += c * lo[b]
        return low, high


@dataclass(frozen=True)
class IndicatorLink:
    """binaries の和が 0 なら連続変数 continuous（= block·M + vertex）も 0"""
    binaries: Tuple[int, ...]
    block: int
    vertex: int
    continuous: int


class CutPool:
    """遅延制約のプール（追記のみ、頂点集合で重複排除）

    ソルバーのワーカーから並行に追加されうるのでロックで保護する。
    snapshot() は追加済みの制約の一貫した接頭辞を返す。
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._cuts: List[LinearConstraint] = []
        self._keys: set = set()

    def add(self, key: frozenset, cut: LinearConstraint) -> bool:
        """未登録なら追加して True、登録済みなら False"""
        with self._lock:
            if key in self._keys:
                return False
            self._keys.add(key)
            self._cuts.append(cut)
            return True

    def snapshot(self) -> Tuple[LinearConstraint, ...]:
        with self._lock:
            return tuple(self._cuts)

    def __contains__(self, key: frozenset) -> bool:
        with self._lock:
            return key in self._keys

    def __len__(self) -> int:
        with self._lock:
            return len(self._cuts)


CutGenerator = Callable[[np.ndarray], List[Tuple[frozenset, LinearConstraint]]]
RoundingHeuristic = Callable[[np.ndarray, Optional[np.ndarray]], Optional[np.ndarray]]
LocalSearch = Callable[[np.ndarray], Optional[np.ndarray]]


@dataclass
class MiqpModel:
    """組み立て済みの MIQP

    変数は α（ブロック j = 0..len(forms)−1、各 M 次元）と z（n_binaries 個）。
    重み 0 の予測点は目的に寄与しないのでブロックから除いてある。

    Attributes:
        kind: "sparse-ss" または "ipp"
        forms: 各ブロックの二次形式 g_{x_j}（Q = C_Θ を共有）
        weights: 各ブロックの重み（正）
        n_binaries: バイナリ変数の数
        vertex_indicators: 頂点 v の訪問指示子を構成するバイナリ変数のリスト
        linear_constraints: z に関する線形制約
        big_m: 係数の絶対値の上界
        root_fixings: 前処理で確定したバイナリ変数
        cut_generator: 整数解から違反する部分巡回路除去制約を作るコールバック
        rounding_heuristic: 緩和解 (z, α) から実行可能な整数解を作るコールバック
        local_search: 整数解を改善するコールバック（改善できなければ None）
        canonicalize: 目的値を変えずに整数解を代表元に置き換えるコールバック
        tie_key: 目的値が同値の整数解どうしの優先順（小さい方を採る）
        initial_candidates: 探索前に評価する整数解
        instance: 元のインスタンス
    """
    kind: Literal["sparse-ss", "ipp"]
    forms: List[QuadraticForm]
    weights: np.ndarray
    n_binaries: int
    vertex_indicators: List[List[int]]
    linear_constraints: List[LinearConstraint]
    big_m: float
    instance: Union[SparseSsInstance, IppInstance]
    root_fixings: Dict[int, int] = field(default_factory=dict)
    cut_generator: Optional[CutGenerator] = None
    rounding_heuristic: Optional[RoundingHeuristic] = None
    local_search: Optional[LocalSearch] = None
    canonicalize: Optional[Callable[[np.ndarray], np.ndarray]] = None
    tie_key: Optional[Callable[[np.ndarray], Tuple]] = None
    initial_candidates: List[np.ndarray] = field(default_factory=list)
    cut_pool: CutPool = field(default_factory=CutPool)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_indicators)

    @property
    def n_blocks(self) -> int:
        return len(self.forms)

    @property
    def n_continuous(self) -> int:
        return self.n_blocks * self.n_vertices

    @property
    def prior_total(self) -> float:
        """Σ w φ(x,x)（観測なしの誤差。任意の実行可能解の目的値の上界）"""
        return float(sum(w * f.constant for w, f in zip(self.weights, self.forms)))

    @property
    def indicator_links(self) -> List[IndicatorLink]:
        M = self.n_vertices
        return [
            IndicatorLink(tuple(self.vertex_indicators[v]), j, v, j * M + v)
            for j in range(self.n_blocks)
            for v in range(M)
        ]

    def vertex_activity(self, z: np.ndarray) -> np.ndarray:
        return np.array([sum(z[b] for b in ind) for ind in self.vertex_indicators], dtype=float)

    def support(self, z: np.ndarray) -> List[int]:
        """訪問（観測）される頂点"""
        return [v for v, a in enumerate(self.vertex_activity(z)) if a >= 0.5]

    def evaluate(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        """整数解 z での厳密な目的値と最適 α（各ブロックを台上で再最適化）"""
        alphas, values = restricted_optimal_all(self.forms, self.support(z))
        return float(np.dot(self.weights, values)), alphas

    def all_constraints(self) -> List[LinearConstraint]:
        return list(self.linear_constraints) + list(self.cut_pool.snapshot())

    def is_feasible(self, z: np.ndarray, tol: float = INTEGRALITY_TOL) -> bool:
        return all(c.is_satisfied(z, tol) for c in self.all_constraints())


def big_m_bound(field_model: RandomFieldModel, observations: Sequence[Point] | np.ndarray,
                predictions: PredictionSet) -> float:
    """係数の big-M 上界 max_i ‖b_{x_i,Θ}‖₂ / σ²

    任意の部分集合 S で λ_min(C_S) ≥ σ² なので、制限最適解
    α = C_S^{-1} b_S は ‖α‖∞ ≤ ‖b_S‖₂ / σ² を満たす。
    """
    B = kernel_matrix(field_model.kernel, predictions.coords, observations)
    bound = float(np.max(np.linalg.norm(B, axis=1))) / field_model.noise_variance
    return max(bound, BIG_M_FLOOR)


def _positive_blocks(forms: List[QuadraticForm], weights: np.ndarray) -> Tuple[List[QuadraticForm], np.ndarray]:
    keep = [i for i, w in enumerate(weights) if w > 0]
    return [forms[i] for i in keep], np.asarray(weights, dtype=float)[keep]


def _top_k_rounding(k: int) -> RoundingHeuristic:
    def round_top_k(z_relaxed: np.ndarray, alphas: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
        # 安定ソートなので同値はインデックスの小さい方が先
        order = np.argsort(-np.asarray(z_relaxed, dtype=float), kind="stable")
        candidate = np.zeros(len(z_relaxed))
        candidate[order[:k]] = 1.0
        return candidate
    return round_top_k


def _subset_key(z: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(np.asarray(z) > 0.5))


def build_sparse_ss(inst: SparseSsInstance) -> MiqpModel:
    """Sparse-SS の MIQP

    z_1..z_M、Σ z_i = k、各ブロックの [α_j]_i を z_i に結合。遅延制約なし。
    """
    M = len(inst.observations)
    forms, weights = _positive_blocks(
        quadratic_forms(inst.field, inst.observation_coords, inst.predictions),
        inst.predictions.weight_array,
    )
    cardinality = LinearConstraint({i: 1.0 for i in range(M)}, "==", float(inst.k), name="cardinality")
    root_fixings = {i: 1 for i in range(M)} if inst.k == M else {}
    model = MiqpModel(
        kind="sparse-ss",
        forms=forms,
        weights=weights,
        n_binaries=M,
        vertex_indicators=[[i] for i in range(M)],
        linear_constraints=[cardinality],
        big_m=big_m_bound(inst.field, inst.observation_coords, inst.predictions),
        instance=inst,
        root_fixings=root_fixings,
        rounding_heuristic=_top_k_rounding(inst.k),
        local_search=subset_swap_search(SetValue(forms, weights), M),
        tie_key=_subset_key,
    )
    SLog.info(LogCategory.MODEL, LogEvent.COMPLETE,
              {"kind": "sparse-ss", "binaries": M, "continuous": model.n_continuous,
               "k": inst.k, "big_m": model.big_m},
              f"Sparse-SS モデル構築: M={M}, k={inst.k}")
    return model


def _selected_arcs(inst: IppInstance, z: np.ndarray) -> List[Tuple[int, int]]:
    arcs = inst.graph.arcs
    return [(arcs[i].tail, arcs[i].head) for i in range(len(arcs)) if z[i] > 0.5]


def _subtour_cut_generator(inst: IppInstance) -> CutGenerator:
    g = inst.graph

    def generate(z: np.ndarray) -> List[Tuple[frozenset, LinearConstraint]]:
        cuts = []
        for cycle in find_subtours(g, _selected_arcs(inst, z)):
            inside = {i: 1.0 for i, a in enumerate(g.arcs) if a.tail in cycle and a.head in cycle}
            name = "sec:" + ",".join(str(v) for v in sorted(cycle))
            cuts.append((cycle, LinearConstraint(inside, "<=", float(len(cycle) - 1), name=name)))
        return cuts
    return generate


def build_ipp(inst: IppInstance) -> MiqpModel:
    """IPP の MIQP

    弧ごとに z_ij。予算 Σ d_ij z_ij ≤ B、s の出次数 1、t の入次数 1、
    内部頂点の流量保存（次数 ≤ 1）。頂点 v の訪問指示子は出弧の和
    （t のみ入弧の和）で、s と t は常に 1 になる。部分巡回路除去制約は
    cut_generator として遅延生成する。

    前処理として s への弧、t からの弧、および最短の s-t 経路に組み込んでも
    予算を超える弧を 0 に固定する。

    Raises:
        InfeasibleInstanceError: B が最短 s-t 距離未満
    """
    check_budget(inst)
    g = inst.graph
    s, t = g.start, g.end
    n_arcs = len(g.arcs)

    constraints: List[LinearConstraint] = [
        LinearConstraint({i: a.cost for i, a in enumerate(g.arcs)}, "<=", inst.budget, name="budget"),
        LinearConstraint({i: 1.0 for i in g.out_arcs[s]}, "==", 1.0, name="start"),
        LinearConstraint({i: 1.0 for i in g.in_arcs[t]}, "==", 1.0, name="end"),
    ]
    for v in range(g.n_vertices):
        if v in (s, t):
            continue
        flow: Dict[int, float] = {i: 1.0 for i in g.in_arcs[v]}
        for i in g.out_arcs[v]:
            flow[i] = flow.get(i, 0.0) - 1.0
        if flow:
            constraints.append(LinearConstraint(flow, "==", 0.0, name=f"flow:{v}"))
        if g.out_arcs[v]:
            constraints.append(LinearConstraint({i: 1.0 for i in g.out_arcs[v]}, "<=", 1.0, name=f"degree:{v}"))

    dist_from_s, dist_to_t = shortest_distances(g)
    root_fixings: Dict[int, int] = {}
    for i, a in enumerate(g.arcs):
        if a.head == s or a.tail == t:
            root_fixings[i] = 0
        elif dist_from_s[a.tail] + a.cost + dist_to_t[a.head] > inst.budget + 1e-9:
            root_fixings[i] = 0

    indicators = [list(g.out_arcs[v]) for v in range(g.n_vertices)]
    indicators[t] = list(g.in_arcs[t])

    forms, weights = _positive_blocks(
        quadratic_forms(inst.field, g.coords, inst.predictions),
        inst.predictions.weight_array,
    )

    moves = PathMoves(inst, SetValue(forms, weights), dist_to_t)
    # 最短経路と、事前の共分散だけで歩いた経路から探索を始める
    initial = [moves.assignment(nx.shortest_path(to_networkx(g), s, t, weight="weight"))]
    prior_walk = moves.walk(np.zeros(n_arcs))
    if prior_walk is not None and not np.array_equal(prior_walk, initial[0]):
        initial.append(prior_walk)

    model = MiqpModel(
        kind="ipp",
        forms=forms,
        weights=weights,
        n_binaries=n_arcs,
        vertex_indicators=indicators,
        linear_constraints=constraints,
        big_m=big_m_bound(inst.field, g.coords, inst.predictions),
        instance=inst,
        root_fixings=root_fixings,
        cut_generator=_subtour_cut_generator(inst),
        rounding_heuristic=moves.walk,
        local_search=moves.improve,
        canonicalize=moves.canonicalize,
        tie_key=moves.tie_key,
        initial_candidates=initial,
    )
    SLog.info(LogCategory.MODEL, LogEvent.COMPLETE,
              {"kind": "ipp", "binaries": n_arcs, "continuous": model.n_continuous,
               "constraints": len(constraints), "presolve_fixed": len(root_fixings),
               "budget": inst.budget, "big_m": model.big_m},
              f"IPP モデル構築: 弧 {n_arcs} 本（前処理で {len(root_fixings)} 本固定）")
    return model


def build_model(inst: Union[SparseSsInstance, IppInstance]) -> MiqpModel:
    if isinstance(inst, IppInstance):
        return build_ipp(inst)
    return build_sparse_ss(inst)


def extract_path(model: MiqpModel, assignment: np.ndarray) -> PathSolution:
    """z_ij = 1 の弧を s から t までたどって経路を復元

    目的値は訪問頂点に対する total_weighted_error で独立に計算し直す。

    Raises:
        SubtourPresentError: 経路に含まれない選択弧がある（閉路が残っている）
        BrokenPathError: t に着く前に弧が途切れる、または頂点を再訪する
    """
    inst = model.instance
    if not isinstance(inst, IppInstance):
        raise BrokenPathError("extract_path needs an IPP model")
    g = inst.graph
    selected = _selected_arcs(inst, np.asarray(assignment))
    successor: Dict[int, int] = {}
    for u, v in selected:
        if u in successor:
            raise BrokenPathError(f"vertex {u} has more than one selected out-arc")
        successor[u] = v

    sequence = [g.start]
    seen = {g.start}
    while sequence[-1] != g.end:
        nxt = successor.get(sequence[-1])
        if nxt is None:
            raise BrokenPathError(f"path breaks at vertex {sequence[-1]} before reaching {g.end}")
        if nxt in seen:
            raise BrokenPathError(f"path revisits vertex {nxt}")
        sequence.append(nxt)
        seen.add(nxt)

    if len(sequence) - 1 != len(selected):
        raise SubtourPresentError(
            f"{len(selected) - len(sequence) + 1} selected arcs lie off the s-t path"
        )
    objective = total_weighted_error(inst.field, inst.predictions, g.coords[sequence])
    return PathSolution(
        vertex_sequence=sequence,
        arcs=list(zip(sequence[:-1], sequence[1:])),
        length=path_length(g, sequence),
        objective=objective,
    )


def selected_subset(model: MiqpModel, assignment: np.ndarray) -> List[int]:
    """Sparse-SS の解から選ばれた観測点インデックスを返す"""
    return model.support(np.asarray(assignment))
