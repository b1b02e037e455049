"""
分枝限定法

ノードは z の固定範囲 [lo, hi]。各ノードで制約伝播 → QP 緩和（双対下界）→
丸めヒューリスティックと局所探索 → 分枝を行う。根以外のノードの緩和は親の
反復値から再開し、反復上限を node_qp_iterations に下げ、下界が枝刈りの閾値に
届いたら打ち切る。

整数解の候補はすべて on_integer_candidate を通り、部分巡回路があれば
遅延制約をプールに追加して候補を棄却、なければ台上で α を厳密に
再最適化して暫定解を更新する。

下界は「未処理ノードの bound」「bound で閉じたノードの bound」「暫定解」の
最小値で、単調非減少になるよう記録する。
"""

import heapq
import math
import time
from dataclasses import dataclass
from itertools import count
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..config import (
    GAP_EPSILON,
    TIE_TOL,
    INTEGRALITY_TOL,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_TIMEOUT_FEASIBLE,
    STATUS_TIMEOUT_NO_INCUMBENT,
)
from ..exceptions import DegreeInfeasibleError
from ..formulation import LinearConstraint, MiqpModel
from ..models import SolverConfig
from ..progress import Incumbent, SolveState
from ..utils.structured_logger import SLog, LogCategory, LogEvent
from .relaxation import FactorCache, WarmStart, qp_relax


CandidateOutcome = Literal["improved", "accepted", "cuts", "rejected"]
SCORE_FLOOR = 1e-6


@dataclass
class Node:
    """分枝限定木のノード

    Attributes:
        lo / hi: z の固定範囲（lo == hi で確定）
        bound: 親から受け継いだ下界（処理後は自身の下界）
        depth: 深さ
        id: 生成順の番号（同じ bound のときの順序）
        warm: 親の ADMM 反復値
        branched: (変数, 方向 0/1, 親での緩和値, 親の bound)
    """
    lo: np.ndarray
    hi: np.ndarray
    bound: float
    depth: int
    id: int
    warm: Optional[WarmStart] = None
    branched: Optional[Tuple[int, int, float, float]] = None

    def fixed(self) -> np.ndarray:
        return self.lo == self.hi


class PseudoCosts:
    """変数ごとの単位変化あたり下界上昇の平均（未観測は全体平均で代用）"""

    def __init__(self, n: int):
        self.count = np.zeros((2, n), dtype=int)
        self.total = np.zeros((2, n), dtype=float)

    def update(self, var: int, direction: int, bound_gain: float, frac: float) -> None:
        if frac <= INTEGRALITY_TOL or not math.isfinite(bound_gain):
            return
        self.count[direction, var] += 1
        self.total[direction, var] += max(bound_gain, 0.0) / frac

    def estimates(self) -> np.ndarray:
        est = np.ones_like(self.total)
        for d in (0, 1):
            seen = self.count[d] > 0
            if seen.any():
                est[d] = self.total[d].sum() / self.count[d].sum()
                est[d, seen] = self.total[d, seen] / self.count[d, seen]
        return est

    def scores(self, z: np.ndarray) -> np.ndarray:
        est = self.estimates()
        return np.maximum(est[0] * z, SCORE_FLOOR) * np.maximum(est[1] * (1.0 - z), SCORE_FLOOR)


def select_branching_variable(z: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                              rule: str = "most-fractional",
                              pseudo: Optional[PseudoCosts] = None,
                              rng: Optional[np.random.Generator] = None) -> Optional[int]:
    """分枝変数を選ぶ

    most-fractional は min(z, 1−z) 最大（同値は最小インデックス）。
    pseudo-cost は擬似コストの積スコア最大（同値はシード付き乱数で選ぶ）。
    未固定の分数変数がなければ None。
    """
    z = np.asarray(z, dtype=float)
    free = np.flatnonzero(lo < hi)
    if free.size == 0:
        return None
    frac = np.minimum(z[free], 1.0 - z[free])
    fractional = free[frac > INTEGRALITY_TOL]
    if fractional.size == 0:
        return None
    if rule == "pseudo-cost" and pseudo is not None:
        scores = pseudo.scores(z)[fractional]
        best = scores.max()
        ties = fractional[scores >= best * (1.0 - 1e-12)]
        if rng is not None and ties.size > 1:
            return int(rng.choice(ties))
        return int(ties[0])
    frac = np.minimum(z[fractional], 1.0 - z[fractional])
    return int(fractional[int(np.argmax(frac))])


def branch(node: Node, var: int, next_id, warm: Optional[WarmStart], z_value: float) -> Tuple[Node, Node]:
    """var を 0 / 1 に固定した2つの子ノード（0 側で全結合バイナリが 0 なら α も 0 に確定）"""
    hi0 = node.hi.copy()
    hi0[var] = 0.0
    lo1 = node.lo.copy()
    lo1[var] = 1.0
    down = Node(node.lo.copy(), hi0, node.bound, node.depth + 1, next(next_id), warm,
                (var, 0, z_value, node.bound))
    up = Node(lo1, node.hi.copy(), node.bound, node.depth + 1, next(next_id), warm,
              (var, 1, z_value, node.bound))
    return down, up


def propagate(constraints: Sequence[LinearConstraint], lo: np.ndarray, hi: np.ndarray,
              max_rounds: int = 10) -> bool:
    """活動範囲による制約伝播（lo, hi をその場で更新）。実行不能なら False"""
    for _ in range(max_rounds):
        changed = False
        for c in constraints:
            tol = 1e-9 * max(1.0, abs(c.rhs))
            low, high = c.activity_range(lo, hi)
            if low > c.rhs + tol or (c.relation == "==" and high < c.rhs - tol):
                return False
            for b, coef in c.coefficients.items():
                if lo[b] == hi[b] or coef == 0:
                    continue
                low_wo = low - min(0.0, coef)
                high_wo = high - max(0.0, coef)
                bad = []
                for val in (0.0, 1.0):
                    if low_wo + coef * val > c.rhs + tol:
                        bad.append(val)
                    elif c.relation == "==" and high_wo + coef * val < c.rhs - tol:
                        bad.append(val)
                if len(bad) == 2:
                    return False
                if bad:
                    keep = 1.0 - bad[0]
                    lo[b] = hi[b] = keep
                    low, high = c.activity_range(lo, hi)
                    changed = True
        if not changed:
            return True
    return True


class BranchAndBound:
    """MIQP 分枝限定法（単一ワーカーで決定的）"""

    def __init__(self, model: MiqpModel, cfg: SolverConfig):
        self.model = model
        self.cfg = cfg
        self.state = SolveState()
        self.pseudo = PseudoCosts(model.n_binaries)
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self._ids = count()
        self._open: List = []
        self._closed_min = math.inf
        self._seen_candidates: set = set()
        self._polished: set = set()
        self.factor_cache = FactorCache()
        self._start = 0.0
        self._deadline = math.inf

    # --- time / bookkeeping ---
    def _now(self) -> float:
        return time.perf_counter() - self._start

    def _timed_out(self) -> bool:
        return time.perf_counter() > self._deadline

    def _prune_threshold(self) -> float:
        if self.state.incumbent is None:
            cap = self.model.prior_total
            return cap + 1e-9 * max(1.0, abs(cap))
        ub = self.state.incumbent.objective
        return ub - self.cfg.gap_tolerance * max(abs(ub), GAP_EPSILON)

    def _push(self, node: Node) -> None:
        if self.cfg.node_selection == "best-bound":
            heapq.heappush(self._open, (node.bound, node.id, node))
        else:
            self._open.append((node.bound, node.id, node))

    def _pop(self) -> Node:
        if self.cfg.node_selection == "best-bound":
            return heapq.heappop(self._open)[2]
        return self._open.pop()[2]

    def _open_min(self) -> float:
        if not self._open:
            return math.inf
        if self.cfg.node_selection == "best-bound":
            return self._open[0][0]
        return min(entry[0] for entry in self._open)

    def _close(self, bound: float) -> None:
        self._closed_min = min(self._closed_min, bound)

    def _update_lower_bound(self) -> None:
        lb = min(self._open_min(), self._closed_min, self.state.upper_bound)
        if math.isfinite(lb):
            self.state.raise_lower_bound(lb, self._now())

    # --- integer candidates ---
    def on_integer_candidate(self, assignment: np.ndarray, source: str = "relaxation") -> CandidateOutcome:
        """整数解の候補を処理

        cut_generator が閉路を見つけたら遅延制約を追加して棄却（新しい制約が
        なければ単に棄却）。閉路がなければ代表元に置き換え、台上で α を
        再最適化した厳密値で暫定解を更新する。目的値の差が TIE_TOL 以内なら
        tie_key の小さい方を暫定解にする（この置き換えは trace に記録しない）。
        """
        z = np.rint(np.asarray(assignment, dtype=float))
        if self.model.cut_generator is not None:
            try:
                generated = self.model.cut_generator(z)
            except DegreeInfeasibleError:
                return "rejected"
            if generated:
                added = 0
                for key, cut in generated:
                    if self.model.cut_pool.add(key, cut):
                        added += 1
                        self.state.cuts_added += 1
                        self.state.trace.record(self._now(), "cut", vertices=sorted(key), rhs=cut.rhs)
                return "cuts" if added else "rejected"

        if self.model.canonicalize is not None:
            z = self.model.canonicalize(z)
        value, _ = self.model.evaluate(z)
        incumbent = self.state.incumbent
        if value < self.state.upper_bound - TIE_TOL:
            self._set_incumbent(z, value, source)
            self.state.trace.record(self._now(), "incumbent", objective=value, source=source)
            return "improved"
        if (incumbent is not None and self.model.tie_key is not None
                and abs(value - incumbent.objective) <= TIE_TOL
                and self.model.tie_key(z) < self.model.tie_key(np.array(incumbent.assignment, dtype=float))):
            self._set_incumbent(z, value, source)
        return "accepted"

    def _set_incumbent(self, z: np.ndarray, value: float, source: str) -> None:
        self.state.incumbent = Incumbent(
            assignment=[int(v) for v in z], objective=value,
            found_at=self._now(), source=source,
        )

    def _polish(self, z: np.ndarray) -> None:
        """局所探索で改善した解を候補として渡す（同じ出発点は1度だけ）"""
        if self.model.local_search is None or self._timed_out():
            return
        key = np.rint(z).astype(np.int8).tobytes()
        if key in self._polished:
            return
        self._polished.add(key)
        better = self.model.local_search(np.rint(z))
        if better is not None and self.model.is_feasible(better):
            self.on_integer_candidate(better, source="local-search")

    def _try_heuristic(self, z_relaxed: np.ndarray, alphas: Optional[np.ndarray] = None) -> None:
        if self.model.rounding_heuristic is None:
            return
        candidate = self.model.rounding_heuristic(z_relaxed, alphas)
        if candidate is None:
            return
        key = np.rint(candidate).astype(np.int8).tobytes()
        if key in self._seen_candidates:
            return
        self._seen_candidates.add(key)
        if self.model.is_feasible(candidate):
            if self.on_integer_candidate(candidate, source="heuristic") in ("improved", "accepted"):
                self._polish(candidate)

    # --- node processing ---
    def _process_leaf(self, node: Node) -> None:
        z = node.lo.copy()
        if not self.model.is_feasible(z):
            return
        if self.on_integer_candidate(z, source="leaf") in ("cuts", "rejected"):
            return
        self._close(self.model.evaluate(z)[0])

    def _process(self, node: Node) -> None:
        self.state.nodes_explored += 1
        constraints = self.model.all_constraints()
        lo, hi = node.lo.copy(), node.hi.copy()
        if not propagate(constraints, lo, hi):
            self.state.trace.record(self._now(), "node", id=node.id, depth=node.depth,
                                    bound=None, status="infeasible")
            return
        node.lo, node.hi = lo, hi

        if np.all(node.fixed()):
            self.state.trace.record(self._now(), "node", id=node.id, depth=node.depth,
                                    bound=node.bound, status="leaf")
            self._process_leaf(node)
            return

        iterations = self.cfg.max_qp_iterations if node.depth == 0 else self.cfg.node_qp_iterations
        relax = qp_relax(self.model, lo, hi, self.cfg, warm=node.warm,
                         deadline=self._deadline, constraints=constraints,
                         max_iterations=iterations, cutoff=self._prune_threshold(),
                         cache=self.factor_cache)
        bound = max(node.bound, relax.bound)
        self.state.trace.record(self._now(), "node", id=node.id, depth=node.depth, bound=bound,
                                status=relax.status, iterations=relax.iterations)

        if node.branched is not None:
            var, direction, z_parent, parent_bound = node.branched
            frac = z_parent if direction == 0 else 1.0 - z_parent
            self.pseudo.update(var, direction, bound - parent_bound, frac)

        node.bound = bound
        if relax.status == "time-limit":
            node.warm = relax.warm
            self._push(node)
            return
        if bound >= self._prune_threshold():
            self._close(bound)
            return

        self._try_heuristic(relax.z, relax.alphas)
        if bound >= self._prune_threshold():
            self._close(bound)
            return

        var = select_branching_variable(relax.z, lo, hi, self.cfg.branching, self.pseudo, self.rng)
        if var is None:
            candidate = np.where(node.fixed(), lo, np.rint(relax.z))
            if self.model.is_feasible(candidate):
                outcome = self.on_integer_candidate(candidate, source="relaxation")
                if outcome == "cuts":
                    node.warm = relax.warm
                    self._push(node)
                    return
                if outcome == "improved":
                    self._polish(candidate)
                if outcome != "rejected" and bound >= self._prune_threshold():
                    self._close(bound)
                    return
            var = int(np.flatnonzero(lo < hi)[0])

        down, up = branch(node, var, self._ids, relax.warm, float(relax.z[var]))
        if self.cfg.node_selection == "depth-first":
            # 後に積んだ方が先に取り出される
            first, second = (up, down) if relax.z[var] >= 0.5 else (down, up)
            self._push(second)
            self._push(first)
        else:
            preferred = (up, down) if relax.z[var] >= 0.5 else (down, up)
            for child in preferred:
                self._push(child)

    # --- main loop ---
    def solve(self) -> SolveState:
        model, cfg, state = self.model, self.cfg, self.state
        self._start = time.perf_counter()
        self._deadline = self._start + cfg.time_limit
        SLog.info(LogCategory.SOLVER, LogEvent.START,
                  {"kind": model.kind, "binaries": model.n_binaries,
                   "continuous": model.n_continuous, "config": cfg.model_dump()},
                  f"分枝限定法を開始: バイナリ {model.n_binaries}、連続 {model.n_continuous}")

        lo = np.zeros(model.n_binaries)
        hi = np.ones(model.n_binaries)
        for b, v in model.root_fixings.items():
            lo[b] = hi[b] = float(v)

        for candidate in model.initial_candidates:
            if model.is_feasible(candidate):
                self.on_integer_candidate(candidate, source="initial")
                self._polish(candidate)

        self._push(Node(lo, hi, -math.inf, 0, next(self._ids)))
        timed_out = False
        while self._open:
            if self._timed_out():
                timed_out = True
                break
            node = self._pop()
            if node.bound >= self._prune_threshold():
                self._close(node.bound)
                continue
            self._process(node)
            self._update_lower_bound()
            if state.incumbent is not None and state.gap <= cfg.gap_tolerance:
                break

        self._update_lower_bound()
        if state.incumbent is not None and (not self._open or state.gap <= cfg.gap_tolerance):
            status = STATUS_OPTIMAL
        elif not self._open and not timed_out:
            status = STATUS_INFEASIBLE
        elif state.incumbent is not None:
            status = STATUS_TIMEOUT_FEASIBLE
        else:
            status = STATUS_TIMEOUT_NO_INCUMBENT
        state.finish(status, self._now())

        event = {STATUS_OPTIMAL: LogEvent.COMPLETE, STATUS_INFEASIBLE: LogEvent.INFEASIBLE}.get(status, LogEvent.TIMEOUT)
        data = {**state.to_log_dict(),
                "factor_cache": {"hits": self.factor_cache.hits, "misses": self.factor_cache.misses}}
        SLog.log(LogCategory.SOLVER, event, data, state.get_progress_summary(), attach_to_allure=True)
        return state


def solve(model: MiqpModel, cfg: Optional[SolverConfig] = None) -> SolveState:
    """MIQP を分枝限定法で解く"""
    return BranchAndBound(model, cfg or SolverConfig()).solve()
