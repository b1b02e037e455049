"""
観測グラフの構築と経路計算

- grid_graph: 一辺 n の格子グラフ（4近傍、双方向弧）
- prm_graph: 確率的ロードマップ（k 近傍接続、シード固定で再現可能）
- path_length / shortest_distances: 経路長と最短距離表
- find_subtours: 弧選択を s-t 経路と部分巡回路に分解（遅延 SEC 用）
"""

from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .config import GRID_EDGE_LENGTH, PRM_BOUNDS, PRM_CONNECTION_FACTOR, PRM_MAX_RETRIES, PRM_VERTICES
from .exceptions import (
    DegreeInfeasibleError,
    GraphConstructionError,
    InfeasibleInstanceError,
    InvalidInstanceError,
)
from .models import Arc, IppInstance, ObservationGraph
from .utils.structured_logger import SLog, LogCategory, LogEvent


def grid_graph(n: int, edge_length: float = GRID_EDGE_LENGTH) -> ObservationGraph:
    """n × n 格子グラフ

    頂点 r*n + c は座標 (c, r)·edge_length。始点は (0,0)、終点は対角の (n−1, n−1)。
    """
    if n < 2:
        raise InvalidInstanceError(f"grid_graph needs n >= 2 (got {n})")
    if not edge_length > 0:
        raise InvalidInstanceError(f"edge_length must be positive (got {edge_length})")
    vertices = [(c * edge_length, r * edge_length) for r in range(n) for c in range(n)]
    arcs: List[Arc] = []
    for r in range(n):
        for c in range(n):
            v = r * n + c
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < n and 0 <= cc < n:
                    arcs.append(Arc(tail=v, head=rr * n + cc, cost=edge_length))
    return ObservationGraph(vertices=vertices, arcs=arcs, start=0, end=n * n - 1)


def hamiltonian_path_length(n: int, edge_length: float = GRID_EDGE_LENGTH) -> float:
    """対角コーナー間の最長単純経路長

    n が奇数なら全頂点を通るハミルトン路（n²−1 本）。偶数では両コーナーが
    市松模様で同色なので1頂点を残す n²−2 本が最大。
    """
    edges = n * n - 1 if n % 2 == 1 else n * n - 2
    return edges * edge_length


def _prm_candidate(bounds: Sequence[Tuple[float, float]], n_vertices: int,
                   connection_factor: int, seed: int) -> ObservationGraph:
    rng = np.random.Generator(np.random.PCG64(seed))
    low = np.array([b[0] for b in bounds], dtype=float)
    high = np.array([b[1] for b in bounds], dtype=float)
    points = rng.uniform(low, high, size=(n_vertices, len(bounds)))

    tree = cKDTree(points)
    k = min(connection_factor + 1, n_vertices)
    _, neighbors = tree.query(points, k=k)
    neighbors = np.asarray(neighbors).reshape(n_vertices, k)

    # どちらか一方が k 近傍に選べば双方向に接続する
    pairs: Set[Tuple[int, int]] = set()
    for i in range(n_vertices):
        for j in neighbors[i]:
            j = int(j)
            if j != i:
                pairs.add((min(i, j), max(i, j)))

    arcs: List[Arc] = []
    for i, j in sorted(pairs):
        cost = float(np.linalg.norm(points[i] - points[j]))
        arcs.append(Arc(tail=i, head=j, cost=cost))
        arcs.append(Arc(tail=j, head=i, cost=cost))

    dist = cdist(points, points)
    s, t = np.unravel_index(int(np.argmax(dist)), dist.shape)
    s, t = int(min(s, t)), int(max(s, t))
    return ObservationGraph(vertices=[tuple(map(float, p)) for p in points],
                            arcs=arcs, start=s, end=t)


def prm_graph(bounds: Sequence[Tuple[float, float]] = PRM_BOUNDS, n_vertices: int = PRM_VERTICES,
              connection_factor: int = PRM_CONNECTION_FACTOR, seed: int = 0) -> ObservationGraph:
    """確率的ロードマップ

    bounds 内に一様サンプルした n_vertices 点を、それぞれの connection_factor
    近傍と双方向に接続する（コスト = ユークリッド距離）。s, t は互いに最も
    遠い2点。s-t が非連結ならシードを1つ進めて再生成する。

    Raises:
        GraphConstructionError: PRM_MAX_RETRIES 回試しても連結にならない
    """
    if n_vertices < 2:
        raise InvalidInstanceError(f"prm_graph needs at least 2 vertices (got {n_vertices})")
    if connection_factor < 1:
        raise InvalidInstanceError(f"connection_factor must be >= 1 (got {connection_factor})")
    for attempt in range(PRM_MAX_RETRIES):
        g = _prm_candidate(bounds, n_vertices, connection_factor, seed + attempt)
        if nx.has_path(to_networkx(g), g.start, g.end):
            if attempt:
                SLog.info(LogCategory.INSTANCE, LogEvent.UPDATE,
                          {"seed": seed, "used_seed": seed + attempt},
                          f"PRM 再生成: シード {seed + attempt} で連結")
            return g
    raise GraphConstructionError(
        f"PRM with seed {seed}: start and end disconnected after {PRM_MAX_RETRIES} attempts"
    )


def to_networkx(g: ObservationGraph) -> nx.DiGraph:
    """networkx の有向グラフに変換（weight = 弧コスト）"""
    G = nx.DiGraph()
    G.add_nodes_from(range(g.n_vertices))
    G.add_weighted_edges_from((a.tail, a.head, a.cost) for a in g.arcs)
    return G


def _distance_array(n: int, lengths: Dict[int, float]) -> np.ndarray:
    out = np.full(n, np.inf)
    for v, d in lengths.items():
        out[v] = d
    return out


def shortest_distances(g: ObservationGraph) -> Tuple[np.ndarray, np.ndarray]:
    """s からの最短距離と t への最短距離（到達不能は inf）"""
    G = to_networkx(g)
    from_s = nx.single_source_dijkstra_path_length(G, g.start)
    to_t = nx.single_source_dijkstra_path_length(G.reverse(copy=False), g.end)
    return _distance_array(g.n_vertices, from_s), _distance_array(g.n_vertices, to_t)


def distances_from(G: nx.DiGraph, source: int, n: int, cutoff: Optional[float] = None,
                   excluded: Iterable[int] = ()) -> np.ndarray:
    """excluded の頂点を通らない source からの最短距離"""
    excluded = set(excluded) - {source}
    view = nx.restricted_view(G, excluded, []) if excluded else G
    lengths = nx.single_source_dijkstra_path_length(view, source, cutoff=cutoff)
    return _distance_array(n, lengths)


def shortest_path_length(g: ObservationGraph) -> float:
    return float(shortest_distances(g)[0][g.end])


def check_budget(inst: IppInstance) -> float:
    """予算が最短 s-t 距離以上であることを確認し、最短距離を返す

    Raises:
        InfeasibleInstanceError: B < 最短距離（または s-t 非連結）
    """
    shortest = shortest_path_length(inst.graph)
    if not np.isfinite(shortest):
        raise InfeasibleInstanceError("infeasible budget: end vertex unreachable from start")
    if inst.budget < shortest - 1e-9:
        raise InfeasibleInstanceError(
            f"infeasible budget: B={inst.budget} < shortest s-t distance {shortest}"
        )
    return shortest


def path_length(g: ObservationGraph, vertex_sequence: Sequence[int]) -> float:
    """頂点列に沿った弧コストの総和

    Raises:
        InvalidInstanceError: 頂点が2つ未満、または弧が存在しない
    """
    if len(vertex_sequence) < 2:
        raise InvalidInstanceError("a path needs at least two vertices (start != end)")
    total = 0.0
    for u, v in zip(vertex_sequence[:-1], vertex_sequence[1:]):
        idx = g.arc_index.get((int(u), int(v)))
        if idx is None:
            raise InvalidInstanceError(f"missing arc ({u}, {v})")
        total += g.arcs[idx].cost
    return total


def find_subtours(g: ObservationGraph, arc_selection: Iterable[Tuple[int, int]]) -> List[frozenset]:
    """弧選択を s-t 経路成分と有向閉路に分解し、閉路の頂点集合を返す

    前提: 選択は整数の次数制約を満たす（s: 出次数1・入次数0、t: 入次数1・出次数0、
    その他: 入次数 = 出次数 ≤ 1）。

    Raises:
        DegreeInfeasibleError: 次数制約を満たさない選択
    """
    selection = [(int(i), int(j)) for i, j in arc_selection]
    out_deg: Dict[int, int] = {}
    in_deg: Dict[int, int] = {}
    for i, j in selection:
        out_deg[i] = out_deg.get(i, 0) + 1
        in_deg[j] = in_deg.get(j, 0) + 1

    s, t = g.start, g.end
    if out_deg.get(s, 0) != 1 or in_deg.get(s, 0) != 0:
        raise DegreeInfeasibleError(f"start vertex {s} must have out-degree 1 and in-degree 0")
    if in_deg.get(t, 0) != 1 or out_deg.get(t, 0) != 0:
        raise DegreeInfeasibleError(f"end vertex {t} must have in-degree 1 and out-degree 0")
    for v in set(out_deg) | set(in_deg):
        if v in (s, t):
            continue
        if out_deg.get(v, 0) != in_deg.get(v, 0) or out_deg.get(v, 0) > 1:
            raise DegreeInfeasibleError(f"vertex {v} violates in = out <= 1")

    G = nx.DiGraph()
    G.add_edges_from(selection)
    cycles = [frozenset(c) for c in nx.weakly_connected_components(G) if s not in c]
    return sorted(cycles, key=min)
