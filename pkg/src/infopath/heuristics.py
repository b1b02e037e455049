"""
主問題側のヒューリスティック

分枝限定法の暫定解を早く良くするための部品。どれも整数実行可能な
候補を返すだけで、下界には関与しない。

- PathMoves: IPP の経路に対する操作
    - canonicalize: 同じ頂点集合を通る経路のうち (長さ, 頂点列) 最小のものに置き換える
    - tie_key: 同値の暫定解を比べるためのキー (長さ, 頂点列)
    - walk: 緩和解（z と α）から予算内の s-t 経路を作る丸め
    - improve: 区間の付け替えによる局所探索
- subset_swap_search: Sparse-SS の 1 点交換による局所探索

目的値は訪問する頂点集合だけで決まるので、評価は頂点集合をキーにキャッシュする。
"""

import math
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .config import (
    CANONICAL_PATH_CAP,
    LOCAL_SEARCH_EXTRA_ARCS,
    LOCAL_SEARCH_MAX_EVALUATIONS,
    LOCAL_SEARCH_WINDOW,
    TIE_TOL,
)
from .estimator import QuadraticForm, restricted_optimal_all
from .graphs import path_length, to_networkx
from .models import IppInstance


LENGTH_TOL = 1e-9


class SetValue:
    """頂点集合 → 目的値（Σ_j w_j min g_j、台上で厳密に再最適化）のキャッシュ"""

    def __init__(self, forms: Sequence[QuadraticForm], weights: np.ndarray):
        self.forms = list(forms)
        self.weights = np.asarray(weights, dtype=float)
        self._cache: Dict[FrozenSet[int], float] = {}

    def __call__(self, vertices) -> float:
        key = frozenset(int(v) for v in vertices)
        value = self._cache.get(key)
        if value is None:
            _, values = restricted_optimal_all(self.forms, sorted(key))
            value = float(np.dot(self.weights, values)) if self.forms else 0.0
            self._cache[key] = value
        return value

    def __len__(self) -> int:
        return len(self._cache)


class PathMoves:
    """IPP の経路（弧の 0/1 ベクトル）に対するヒューリスティック操作

    Attributes:
        inst: IPP インスタンス
        value_of: 頂点集合の目的値
        dist_to_t: 各頂点から t への最短距離
    """

    def __init__(self, inst: IppInstance, value_of: SetValue, dist_to_t: np.ndarray):
        self.inst = inst
        self.graph = inst.graph
        self.value_of = value_of
        self.dist_to_t = dist_to_t
        g = self.graph
        self._neighbors: List[List[Tuple[int, float]]] = [
            sorted((g.arcs[a].head, g.arcs[a].cost) for a in g.out_arcs[v])
            for v in range(g.n_vertices)
        ]
        self._nx = to_networkx(g)
        self._dist = nx.floyd_warshall_numpy(self._nx, nodelist=list(range(g.n_vertices)), weight="weight")
        self._canonical: Dict[FrozenSet[int], Optional[List[int]]] = {}

    # --- 変換 ---
    def sequence(self, z: np.ndarray) -> Optional[List[int]]:
        """選択された弧を s からたどった頂点列（s-t 経路になっていなければ None）"""
        g = self.graph
        successor = {}
        for i, a in enumerate(g.arcs):
            if z[i] > 0.5:
                if a.tail in successor:
                    return None
                successor[a.tail] = a.head
        seq = [g.start]
        while seq[-1] != g.end:
            nxt = successor.get(seq[-1])
            if nxt is None or len(seq) > g.n_vertices:
                return None
            seq.append(nxt)
        if len(seq) - 1 != len(successor):
            return None
        return seq

    def assignment(self, seq: Sequence[int]) -> np.ndarray:
        z = np.zeros(len(self.graph.arcs))
        for u, v in zip(seq[:-1], seq[1:]):
            z[self.graph.arc_index[(u, v)]] = 1.0
        return z

    # --- 同値の解の整理 ---
    def tie_key(self, z: np.ndarray) -> Tuple:
        seq = self.sequence(z)
        if seq is None:
            return (math.inf, ())
        return (path_length(self.graph, seq), tuple(seq))

    def canonical_sequence(self, vertices: FrozenSet[int]) -> Optional[List[int]]:
        """頂点集合をちょうど1回ずつ通る s-t 経路のうち (長さ, 頂点列) 最小のもの

        隣接頂点を昇順にたどる深さ優先探索なので、同じ長さなら先に見つかった
        経路が辞書順で最小。展開数が CANONICAL_PATH_CAP を超えたらその時点の最良を返す。
        """
        if vertices in self._canonical:
            return self._canonical[vertices]
        g = self.graph
        s, t = g.start, g.end
        size = len(vertices)
        best: Optional[Tuple[float, Tuple[int, ...]]] = None
        stack = [(s, (s,), 0.0)]
        expansions = 0
        while stack and expansions < CANONICAL_PATH_CAP:
            v, seq, length = stack.pop()
            expansions += 1
            if v == t:
                if len(seq) == size:
                    key = (path_length(g, seq), seq)
                    if best is None or key < best:
                        best = key
                continue
            # 昇順に取り出すため逆順に積む
            for w, cost in reversed(self._neighbors[v]):
                if w not in vertices or w in seq:
                    continue
                if w == t and len(seq) + 1 != size:
                    continue
                total = length + cost
                if best is not None and total > best[0] + LENGTH_TOL:
                    continue
                stack.append((w, seq + (w,), total))
        result = list(best[1]) if best is not None else None
        self._canonical[vertices] = result
        return result

    def canonicalize(self, z: np.ndarray) -> np.ndarray:
        seq = self.sequence(z)
        if seq is None:
            return z
        canonical = self.canonical_sequence(frozenset(seq))
        if canonical is None:
            return z
        return self.assignment(canonical)

    # --- 丸め ---
    def vertex_scores(self, z: Optional[np.ndarray], alphas: Optional[np.ndarray]) -> np.ndarray:
        """頂点の有望さ: 緩和での訪問量 + 係数の重み付き絶対値（最大 1 に正規化）

        α が無いときは事前の共分散 b_{x,Θ} で代用する。
        """
        g = self.graph
        forms, weights = self.value_of.forms, self.value_of.weights
        if alphas is not None and len(alphas):
            mass = np.abs(np.asarray(alphas)).T @ weights
        elif forms:
            mass = np.abs(np.stack([f.b for f in forms])).T @ weights
        else:
            mass = np.zeros(g.n_vertices)
        top = float(np.max(mass)) if mass.size else 0.0
        scores = mass / top if top > 0 else np.zeros(g.n_vertices)
        if z is not None:
            activity = np.zeros(g.n_vertices)
            for i, a in enumerate(g.arcs):
                activity[a.tail] += z[i]
            scores = scores + activity
        return scores

    def walk(self, z: np.ndarray, alphas: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
        """緩和解に沿って s から歩く

        次の弧は z_ij + score(j) 最大のもの（予算内で t に戻れる弧だけ）。
        t へは緩和値が 0.5 以上か他に進める弧がないときだけ入る。
        行き詰まったら未訪問の頂点だけを通る最短路で t に向かう。
        """
        g, budget = self.graph, self.inst.budget
        z = np.asarray(z, dtype=float)
        scores = self.vertex_scores(z, alphas)
        current, spent = g.start, 0.0
        seq = [current]
        visited = {current}
        while current != g.end:
            best, best_value, to_end = None, -math.inf, None
            for a in g.out_arcs[current]:
                arc = g.arcs[a]
                if arc.head in visited:
                    continue
                if spent + arc.cost + self.dist_to_t[arc.head] > budget + LENGTH_TOL:
                    continue
                if arc.head == g.end:
                    to_end = a
                    if z[a] < 0.5:
                        continue
                value = z[a] + scores[arc.head]
                if value > best_value:
                    best, best_value = a, value
            if best is None:
                best = to_end
            if best is None:
                return self._finish(seq, spent, visited)
            spent += g.arcs[best].cost
            current = g.arcs[best].head
            seq.append(current)
            visited.add(current)
        return self.assignment(seq)

    def _finish(self, seq: List[int], spent: float, visited: set) -> Optional[np.ndarray]:
        g = self.graph
        allowed = [v for v in range(g.n_vertices) if v not in visited or v == seq[-1]]
        try:
            length, tail = nx.single_source_dijkstra(self._nx.subgraph(allowed), seq[-1], g.end, weight="weight")
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return None
        if spent + length > self.inst.budget + LENGTH_TOL:
            return None
        return self.assignment(seq + list(tail[1:]))

    # --- 局所探索 ---
    def _detours(self, a: int, b: int, blocked: set, max_length: float,
                 max_arcs: int) -> Iterator[Tuple[List[int], float]]:
        """blocked を通らない a → b の単純路（長さ max_length 以下、弧数 max_arcs 以下）"""
        stack = [(a, [a], 0.0)]
        while stack:
            v, seq, length = stack.pop()
            for w, cost in reversed(self._neighbors[v]):
                if w in blocked or w in seq:
                    continue
                total = length + cost
                if total + self._dist[w, b] > max_length + LENGTH_TOL:
                    continue
                if w == b:
                    yield seq + [w], total
                    continue
                if len(seq) >= max_arcs:
                    continue
                stack.append((w, seq + [w], total))

    def improve_sequence(self, seq: List[int],
                         max_evaluations: int = LOCAL_SEARCH_MAX_EVALUATIONS) -> List[int]:
        """区間 seq[i..j]（弧 LOCAL_SEARCH_WINDOW 本まで）を別の迂回路に付け替える局所探索

        迂回路は区間外の頂点を通らず、予算の余りに収まるもの。目的値が
        TIE_TOL を超えて下がる付け替えを見つけるたびに先頭からやり直す。
        """
        g, budget = self.graph, self.inst.budget
        best = list(seq)
        best_length = path_length(g, best)
        best_value = self.value_of(best)
        evaluations = 0
        improved = True
        while improved and evaluations < max_evaluations:
            improved = False
            for i in range(len(best) - 1):
                for j in range(i + 1, min(i + 1 + LOCAL_SEARCH_WINDOW, len(best))):
                    segment = path_length(g, best[i:j + 1])
                    slack = budget - best_length + segment
                    blocked = set(best[:i]) | set(best[j + 1:])
                    for detour, length in self._detours(best[i], best[j], blocked, slack,
                                                        (j - i) + LOCAL_SEARCH_EXTRA_ARCS):
                        evaluations += 1
                        candidate = best[:i] + detour + best[j + 1:]
                        value = self.value_of(candidate)
                        if value < best_value - TIE_TOL:
                            best, best_value = candidate, value
                            best_length = best_length - segment + length
                            improved = True
                            break
                        if evaluations >= max_evaluations:
                            break
                    if improved or evaluations >= max_evaluations:
                        break
                if improved or evaluations >= max_evaluations:
                    break
        return best

    def improve(self, z: np.ndarray) -> Optional[np.ndarray]:
        """局所探索で改善できたら改善後の経路、できなければ None"""
        seq = self.sequence(z)
        if seq is None:
            return None
        better = self.improve_sequence(seq)
        if self.value_of(better) < self.value_of(seq) - TIE_TOL:
            return self.assignment(better)
        return None


def subset_swap_search(value_of: SetValue, n: int):
    """Sparse-SS の 1 点交換（選択中の1点を未選択の1点と入れ替える）による局所探索

    交換はインデックス昇順に試し、最初に見つかった改善を採用して繰り返す。
    """
    def improve(z: np.ndarray) -> Optional[np.ndarray]:
        chosen = sorted(int(i) for i in np.flatnonzero(np.asarray(z) > 0.5))
        start_value = best_value = value_of(chosen)
        improved = True
        while improved:
            improved = False
            outside = [i for i in range(n) if i not in chosen]
            for pos, out in enumerate(chosen):
                for cand in outside:
                    trial = sorted(chosen[:pos] + chosen[pos + 1:] + [cand])
                    value = value_of(trial)
                    if value < best_value - TIE_TOL:
                        chosen, best_value = trial, value
                        improved = True
                        break
                if improved:
                    break
        if best_value < start_value - TIE_TOL:
            result = np.zeros(n)
            result[chosen] = 1.0
            return result
        return None
    return improve
