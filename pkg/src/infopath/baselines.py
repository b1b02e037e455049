"""
比較手法と厳密解オラクル

- bnb_paths: 経路空間の分枝限定法（到達可能集合による単調下界）
- brute_force_ipp: 予算内の単純 s-t 経路をすべて列挙
- brute_force_ss: k 点部分集合をすべて列挙
- greedy_ss: 1 点ずつ誤差が最小になる点を追加する貪欲法
"""

import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .config import (
    BRUTE_FORCE_PATH_CAP,
    BRUTE_FORCE_SUBSET_CAP,
    DEFAULT_TIME_LIMIT,
    TIE_TOL,
    STATUS_OPTIMAL,
    STATUS_TIMEOUT_FEASIBLE,
    STATUS_TIMEOUT_NO_INCUMBENT,
)
from .estimator import total_weighted_error
from .exceptions import EnumerationCapExceeded
from .graphs import check_budget, distances_from, path_length, shortest_distances, to_networkx
from .models import IppInstance, PathSolution, SparseSsInstance, SubsetSolution
from .progress import SolveTrace
from .utils.structured_logger import SLog, LogCategory, LogEvent



@dataclass
class BnbPathNode:
    """部分経路ノード

    Attributes:
        path: s からの頂点列（単純）
        spent: 使った予算
        bound: 完成経路の目的値の下界
    """
    path: List[int]
    spent: float
    bound: float


@dataclass
class BaselineResult:
    """比較手法の結果（ソルバーと同じ形式のイベント列つき）"""
    solution: Optional[PathSolution]
    status: str
    nodes: int
    elapsed: float
    trace: SolveTrace = field(default_factory=SolveTrace)

    @property
    def objective(self) -> Optional[float]:
        return self.solution.objective if self.solution else None


def _objective(inst: IppInstance, vertices) -> float:
    return total_weighted_error(inst.field, inst.predictions, inst.graph.coords[sorted(vertices)])


def _reachable_bound(inst: IppInstance, G, path: List[int], spent: float,
                     dist_to_t: np.ndarray) -> float:
    """経路上の頂点 ∪ 残り予算で寄り道して t に行ける頂点、に対する誤差"""
    remaining = inst.budget - spent
    head = path[-1]
    dist_head = distances_from(G, head, inst.graph.n_vertices, cutoff=remaining, excluded=path[:-1])
    reach = np.flatnonzero(dist_head + dist_to_t <= remaining + 1e-9)
    return _objective(inst, set(path) | set(int(v) for v in reach))


def bnb_paths(inst: IppInstance, time_limit: float = DEFAULT_TIME_LIMIT) -> BaselineResult:
    """経路空間の深さ優先分枝限定法

    f は集合について単調非増加なので、到達可能集合 R 上の誤差 f(R) は
    その部分経路のすべての完成経路の目的値以下になる。bound ≥ 暫定値で枝刈り。
    子は bound の昇順にたどる。
    """
    check_budget(inst)
    g = inst.graph
    G = to_networkx(g)
    _, dist_to_t = shortest_distances(g)
    trace = SolveTrace()
    start = time.perf_counter()
    deadline = start + time_limit
    SLog.info(LogCategory.BASELINE, LogEvent.START,
              {"method": "bnb", "vertices": g.n_vertices, "budget": inst.budget},
              "経路空間 BnB を開始")

    best: Optional[Tuple[float, float, List[int]]] = None
    nodes = 0
    timed_out = False

    root = BnbPathNode([g.start], 0.0, _reachable_bound(inst, G, [g.start], 0.0, dist_to_t))
    trace.record(0.0, "bound", bound=root.bound)
    stack = [root]
    while stack:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        node = stack.pop()
        nodes += 1
        if best is not None and node.bound >= best[0]:
            continue
        trace.record(time.perf_counter() - start, "node", id=nodes, depth=len(node.path) - 1, bound=node.bound)

        head = node.path[-1]
        if head == g.end:
            value = _objective(inst, node.path)
            if best is None or value < best[0] - TIE_TOL:
                best = (value, node.spent, list(node.path))
                trace.record(time.perf_counter() - start, "incumbent", objective=value)
            continue

        children: List[BnbPathNode] = []
        visited = set(node.path)
        for a in g.out_arcs[head]:
            arc = g.arcs[a]
            v = arc.head
            if v in visited:
                continue
            spent = node.spent + arc.cost
            if spent + dist_to_t[v] > inst.budget + 1e-9:
                continue
            path = node.path + [v]
            children.append(BnbPathNode(path, spent, _reachable_bound(inst, G, path, spent, dist_to_t)))
        children.sort(key=lambda c: (c.bound, c.path[-1]))
        stack.extend(reversed(children))

    elapsed = time.perf_counter() - start
    solution = None
    if best is not None:
        value, _, seq = best
        solution = PathSolution(vertex_sequence=seq, arcs=list(zip(seq[:-1], seq[1:])),
                                length=path_length(g, seq), objective=value)
    if not timed_out:
        status = STATUS_OPTIMAL
    else:
        status = STATUS_TIMEOUT_FEASIBLE if solution else STATUS_TIMEOUT_NO_INCUMBENT
    SLog.info(LogCategory.BASELINE, LogEvent.COMPLETE if status == STATUS_OPTIMAL else LogEvent.TIMEOUT,
              {"method": "bnb", "status": status, "nodes": nodes, "elapsed": elapsed,
               "objective": solution.objective if solution else None},
              f"経路空間 BnB 終了: {status}（ノード {nodes}）")
    return BaselineResult(solution=solution, status=status, nodes=nodes, elapsed=elapsed, trace=trace)


def enumerate_paths(inst: IppInstance, cap: int = BRUTE_FORCE_PATH_CAP) -> Iterator[Tuple[List[int], float]]:
    """長さ B 以下の単純 s-t 経路を (頂点列, 長さ) で列挙

    Raises:
        EnumerationCapExceeded: 展開した部分経路が cap を超えた
    """
    g = inst.graph
    _, dist_to_t = shortest_distances(g)
    expanded = 0
    stack: List[Tuple[List[int], float]] = [([g.start], 0.0)]
    while stack:
        path, spent = stack.pop()
        expanded += 1
        if expanded > cap:
            raise EnumerationCapExceeded(f"path enumeration exceeded cap {cap}")
        head = path[-1]
        if head == g.end:
            yield path, spent
            continue
        for a in reversed(g.out_arcs[head]):
            arc = g.arcs[a]
            if arc.head in path:
                continue
            total = spent + arc.cost
            if total + dist_to_t[arc.head] <= inst.budget + 1e-9:
                stack.append((path + [arc.head], total))


def brute_force_ipp(inst: IppInstance, cap: int = BRUTE_FORCE_PATH_CAP) -> PathSolution:
    """全列挙による IPP の厳密解（同値は短い経路、次に辞書順で小さい頂点列）"""
    check_budget(inst)
    best: Optional[Tuple[float, float, List[int]]] = None
    count = 0
    for seq, length in enumerate_paths(inst, cap):
        count += 1
        value = _objective(inst, seq)
        if best is None or value < best[0] - TIE_TOL:
            best = (value, length, seq)
        elif abs(value - best[0]) <= TIE_TOL and (length, seq) < (best[1], best[2]):
            best = (value, length, seq)
    SLog.debug(LogCategory.BASELINE, LogEvent.COMPLETE, {"method": "oracle", "paths": count})
    value, _, seq = best
    return PathSolution(vertex_sequence=seq, arcs=list(zip(seq[:-1], seq[1:])),
                        length=path_length(inst.graph, seq), objective=value)


def brute_force_ss(inst: SparseSsInstance, cap: int = BRUTE_FORCE_SUBSET_CAP) -> SubsetSolution:
    """全 k 点部分集合から最小誤差のものを選ぶ（同値は辞書順で最初）

    Raises:
        EnumerationCapExceeded: C(M, k) > cap
    """
    M = len(inst.observations)
    n_subsets = math.comb(M, inst.k)
    if n_subsets > cap:
        raise EnumerationCapExceeded(f"C({M},{inst.k})={n_subsets} exceeds cap {cap}")
    coords = inst.observation_coords
    best: Optional[Tuple[float, Tuple[int, ...]]] = None
    for subset in combinations(range(M), inst.k):
        value = total_weighted_error(inst.field, inst.predictions, coords[list(subset)])
        if best is None or value < best[0] - TIE_TOL:
            best = (value, subset)
    return SubsetSolution(indices=list(best[1]), objective=best[0])


def greedy_ss(inst: SparseSsInstance) -> SubsetSolution:
    """k 回、誤差を最も下げる点を追加（同値は最小インデックス）"""
    coords = inst.observation_coords
    chosen: List[int] = []
    value = math.inf
    for _ in range(inst.k):
        best_v, best_value = None, math.inf
        for v in range(len(inst.observations)):
            if v in chosen:
                continue
            trial = total_weighted_error(inst.field, inst.predictions, coords[chosen + [v]])
            if trial < best_value - TIE_TOL:
                best_v, best_value = v, trial
        chosen.append(best_v)
        value = best_value
    return SubsetSolution(indices=sorted(chosen), objective=value)
