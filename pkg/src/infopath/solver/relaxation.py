"""
ノード緩和 QP の求解

バイナリ z を [lo, hi] に緩和した凸 QP

    min  Σ_j w_j g_j(α_j)
    s.t. z ∈ [lo, hi]
         −M·Σ_{b∈ind(v)} z_b ≤ [α_j]_v ≤ M·Σ_{b∈ind(v)} z_b   （v が 0 に確定なら [α_j]_v = 0）
         線形制約（予算・次数・基数）と遅延制約

を交互方向乗数法（OSQP 型: KKT 系を splu で一度分解し、過緩和と
適応的な ρ 更新を行う）で解く。分解は FactorCache でノード間に共有できる。

ADMM の解は近似なので、ノードの下界には乗数 y から計算する
ラグランジュ双対関数の値 d(y) を使う。d(y) は任意の y で緩和問題の
最適値以下になるので、反復が収束していなくても安全な下界になる。
同じ理由で、途中の d(y) が枝刈りの閾値を超えた時点で反復を打ち切れる。
"""

import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from ..config import QP_FACTOR_CACHE_SIZE
from ..formulation import LinearConstraint, MiqpModel
from ..models import SolverConfig


CHECK_INTERVAL = 25              # 残差チェックと ρ 更新の間隔
EQUALITY_RHO_SCALE = 1e3
RHO_MIN, RHO_MAX = 1e-6, 1e6
ADAPTIVE_RHO_TOLERANCE = 5.0
MAX_RHO_UPDATES = 20
INFEASIBILITY_TOL = 1e-5
RAY_STEPS = (1e2, 1e4, 1e6)

RelaxationStatus = Literal["solved", "max-iterations", "infeasible", "time-limit", "cutoff"]


@dataclass
class WarmStart:
    """子ノードへ引き継ぐ ADMM の反復値（制約行は前方一致で伸びる）"""
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    rho: Optional[float] = None


@dataclass
class NodeQp:
    """1 ノード分の QP データ（OSQP 形式: ½x'Px + q'x, l ≤ Ax ≤ u）"""
    P: sparse.csc_matrix
    q: np.ndarray
    A: sparse.csc_matrix
    l: np.ndarray
    u: np.ndarray
    constant: float
    n_alpha: int
    n_binaries: int
    lo: np.ndarray
    hi: np.ndarray
    free_vertices: np.ndarray
    domain_rows: np.ndarray      # 双対関数で定義域として扱う行（z の箱、α の 0 固定）

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass
class RelaxationResult:
    """緩和の結果

    Attributes:
        value: ADMM 解での目的値（近似）
        bound: 双対関数による安全な下界
        z: 緩和された z（[lo, hi] にクリップ済み）
        alphas: 係数（ブロック × 頂点）
        status: ADMM の終了状態
        iterations: 反復回数
        warm: 子ノード用の反復値
    """
    value: float
    bound: float
    z: np.ndarray
    alphas: np.ndarray
    status: RelaxationStatus
    iterations: int
    warm: WarmStart


def off_vertices(model: MiqpModel, hi: np.ndarray) -> np.ndarray:
    """結合するバイナリがすべて 0 に固定された頂点"""
    return np.array([all(hi[b] == 0 for b in ind) for ind in model.vertex_indicators], dtype=bool)


def assemble(model: MiqpModel, lo: np.ndarray, hi: np.ndarray,
             constraints: Sequence[LinearConstraint]) -> NodeQp:
    M, nb, nz = model.n_vertices, model.n_blocks, model.n_binaries
    n_alpha = nb * M
    off = off_vertices(model, hi)

    blocks = [2.0 * w * f.Q for w, f in zip(model.weights, model.forms)]
    blocks.append(sparse.csc_matrix((nz, nz)))
    P = sparse.block_diag(blocks, format="csc")
    q = np.concatenate([-w * f.linear for w, f in zip(model.weights, model.forms)] + [np.zeros(nz)])

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    l: List[float] = []
    u: List[float] = []
    domain: List[int] = []

    def add_row(entries, low, high, in_domain=False):
        r = len(l)
        for c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
        l.append(low)
        u.append(high)
        if in_domain:
            domain.append(r)

    for b in range(nz):
        add_row([(n_alpha + b, 1.0)], float(lo[b]), float(hi[b]), in_domain=True)

    big_m = model.big_m
    for j in range(nb):
        for v in range(M):
            col = j * M + v
            if off[v]:
                add_row([(col, 1.0)], 0.0, 0.0, in_domain=True)
                continue
            link = [(n_alpha + b, -big_m) for b in model.vertex_indicators[v]]
            add_row([(col, 1.0)] + link, -np.inf, 0.0)
            add_row([(col, -1.0)] + link, -np.inf, 0.0)

    for c in constraints:
        entries = [(n_alpha + b, coef) for b, coef in c.coefficients.items()]
        if c.relation == "==":
            add_row(entries, c.rhs, c.rhs)
        else:
            add_row(entries, -np.inf, c.rhs)

    A = sparse.csc_matrix((vals, (rows, cols)), shape=(len(l), n_alpha + nz))
    return NodeQp(
        P=P, q=q, A=A, l=np.array(l), u=np.array(u),
        constant=model.prior_total,
        n_alpha=n_alpha, n_binaries=nz,
        lo=np.asarray(lo, dtype=float), hi=np.asarray(hi, dtype=float),
        free_vertices=np.flatnonzero(~off),
        domain_rows=np.array(domain, dtype=int),
    )


def alpha_factor(model: MiqpModel, qp: NodeQp):
    """未確定頂点上の共分散ブロックの Cholesky 分解（ノード内で使い回す）"""
    free = qp.free_vertices
    if not (free.size and model.n_blocks):
        return None
    C = model.forms[0].Q[np.ix_(free, free)]
    return cho_factor(C, lower=True, check_finite=False)


def dual_bound(model: MiqpModel, qp: NodeQp, y: np.ndarray, factor=None) -> float:
    """ラグランジュ双対関数 d(y)

    z の箱制約と α の 0 固定は定義域に含め、残りの行に乗数 y を使う。
    無限大の側に向いた乗数成分は 0 に射影する。factor を省略すると
    alpha_factor をその場で計算する。
    """
    y = np.array(y, dtype=float)
    y[qp.domain_rows] = 0.0
    y[(y > 0) & np.isinf(qp.u)] = 0.0
    y[(y < 0) & np.isinf(qp.l)] = 0.0
    penalty = float(np.sum(np.where(y > 0, y * np.where(np.isinf(qp.u), 0.0, qp.u), 0.0))
                    + np.sum(np.where(y < 0, y * np.where(np.isinf(qp.l), 0.0, qp.l), 0.0)))

    r = qp.A.T @ y
    r_z = r[qp.n_alpha:]
    z_part = float(np.sum(np.minimum(r_z * qp.lo, r_z * qp.hi)))

    alpha_part = 0.0
    free = qp.free_vertices
    if free.size and model.n_blocks:
        M = model.n_vertices
        if factor is None:
            factor = alpha_factor(model, qp)
        V = np.stack([
            w * f.linear[free] - r[j * M + free]
            for j, (w, f) in enumerate(zip(model.weights, model.forms))
        ], axis=1)
        sol = cho_solve(factor, V, check_finite=False)
        alpha_part = -float(np.sum(np.einsum("ij,ij->j", V, sol) / (4.0 * model.weights)))

    return qp.constant + alpha_part + z_part - penalty


def _norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _rho_vector(qp: NodeQp, rho: float) -> np.ndarray:
    vec = np.full(qp.m, rho)
    vec[qp.l == qp.u] = rho * EQUALITY_RHO_SCALE
    return np.clip(vec, RHO_MIN, RHO_MAX * EQUALITY_RHO_SCALE)


def _factor(qp: NodeQp, rho_vec: np.ndarray, sigma: float):
    kkt = sparse.vstack([
        sparse.hstack([qp.P + sigma * sparse.eye(qp.n), qp.A.T]),
        sparse.hstack([qp.A, -sparse.diags(1.0 / rho_vec)]),
    ])
    return splu(kkt.tocsc())


class FactorCache:
    """KKT 行列の LU 分解の LRU キャッシュ

    KKT 行列は「0 に確定した頂点」「箱の等式行」「行数」「ρ」で決まる。
    遅延制約のプールは追記のみなので、行数が同じなら同じ制約行を持つ。
    兄弟ノードや同じ深さの多くのノードはこれらを共有する。
    """

    def __init__(self, maxsize: int = QP_FACTOR_CACHE_SIZE):
        self.maxsize = maxsize
        self.hits = 0
        self.misses = 0
        self._entries: "OrderedDict[Tuple, object]" = OrderedDict()

    @staticmethod
    def key(qp: NodeQp, rho: float) -> Tuple:
        return (qp.free_vertices.tobytes(), (qp.l == qp.u).tobytes(), qp.m, float(rho))

    def get(self, qp: NodeQp, rho: float, rho_vec: np.ndarray, sigma: float):
        k = self.key(qp, rho)
        lu = self._entries.get(k)
        if lu is not None:
            self.hits += 1
            self._entries.move_to_end(k)
            return lu
        self.misses += 1
        lu = _factor(qp, rho_vec, sigma)
        self._entries[k] = lu
        if len(self._entries) > self.maxsize:
            self._entries.popitem(last=False)
        return lu

    def __len__(self) -> int:
        return len(self._entries)



def _is_infeasibility_certificate(qp: NodeQp, dy: np.ndarray) -> bool:
    """δy が主問題の実行不能性の証拠になっているか"""
    dy = dy.copy()
    dy[(dy > 0) & np.isinf(qp.u)] = 0.0
    dy[(dy < 0) & np.isinf(qp.l)] = 0.0
    ndy = _norm(dy)
    if ndy <= 1e-12:
        return False
    if _norm(qp.A.T @ dy) > INFEASIBILITY_TOL * ndy:
        return False
    support = (np.sum(np.where(dy > 0, dy * np.where(np.isinf(qp.u), 0.0, qp.u), 0.0))
               + np.sum(np.where(dy < 0, dy * np.where(np.isinf(qp.l), 0.0, qp.l), 0.0)))
    return support < -INFEASIBILITY_TOL * ndy


def _warm_vectors(qp: NodeQp, warm: Optional[WarmStart]):
    if warm is None or warm.x.shape[0] != qp.n:
        x = np.zeros(qp.n)
        return x, np.clip(qp.A @ x, qp.l, qp.u), np.zeros(qp.m)
    x = warm.x.copy()
    k = min(warm.z.shape[0], qp.m)
    ax = qp.A @ x
    z = np.clip(ax, qp.l, qp.u)
    z[:k] = np.clip(warm.z[:k], qp.l[:k], qp.u[:k])
    y = np.zeros(qp.m)
    y[:k] = warm.y[:k]
    return x, z, y


def admm(qp: NodeQp, cfg: SolverConfig, warm: Optional[WarmStart] = None,
         deadline: Optional[float] = None, max_iterations: Optional[int] = None,
         cutoff: Optional[float] = None, bound_fn: Optional[Callable[[np.ndarray], float]] = None,
         cache: Optional[FactorCache] = None):
    """OSQP 型 ADMM

    cutoff と bound_fn を渡すと、残差チェックごとに bound_fn(y) を評価し、
    cutoff 以上になった時点で status="cutoff" で打ち切る。

    Returns:
        (x, z, y, status, iterations, 最後の δy, 最後の ρ)
    """
    sigma, alpha = cfg.admm_sigma, cfg.admm_relaxation
    rho = warm.rho if warm is not None and warm.rho is not None else cfg.admm_rho
    max_iterations = cfg.max_qp_iterations if max_iterations is None else max_iterations

    def factorize(rho_vec: np.ndarray):
        if cache is None:
            return _factor(qp, rho_vec, sigma)
        return cache.get(qp, rho, rho_vec, sigma)

    rho_vec = _rho_vector(qp, rho)
    lu = factorize(rho_vec)
    x, z, y = _warm_vectors(qp, warm)
    dy = np.zeros(qp.m)
    rho_updates = 0
    status: RelaxationStatus = "max-iterations"
    n = qp.n

    it = 0
    for it in range(1, max_iterations + 1):
        rhs = np.concatenate([sigma * x - qp.q, z - y / rho_vec])
        sol = lu.solve(rhs)
        x_tilde = sol[:n]
        z_tilde = z + (sol[n:] - y) / rho_vec

        x = alpha * x_tilde + (1.0 - alpha) * x
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
        z = np.clip(z_relaxed + y / rho_vec, qp.l, qp.u)
        y_new = y + rho_vec * (z_relaxed - z)
        dy = y_new - y
        y = y_new

        if it % CHECK_INTERVAL:
            continue

        Ax, Px, Aty = qp.A @ x, qp.P @ x, qp.A.T @ y
        r_prim = _norm(Ax - z)
        r_dual = _norm(Px + qp.q + Aty)
        scale_prim = max(_norm(Ax), _norm(z))
        scale_dual = max(_norm(Px), _norm(Aty), _norm(qp.q))
        if (r_prim <= cfg.qp_abs_tol + cfg.qp_rel_tol * scale_prim
                and r_dual <= cfg.qp_abs_tol + cfg.qp_rel_tol * scale_dual):
            status = "solved"
            break
        if _is_infeasibility_certificate(qp, dy):
            status = "infeasible"
            break
        if cutoff is not None and bound_fn is not None and bound_fn(y) >= cutoff:
            status = "cutoff"
            break
        if deadline is not None and time.perf_counter() > deadline:
            status = "time-limit"
            break

        if rho_updates < MAX_RHO_UPDATES:
            ratio = np.sqrt((r_prim / max(scale_prim, 1e-10)) / max(r_dual / max(scale_dual, 1e-10), 1e-30))
            new_rho = float(np.clip(rho * ratio, RHO_MIN, RHO_MAX))
            if new_rho > ADAPTIVE_RHO_TOLERANCE * rho or new_rho < rho / ADAPTIVE_RHO_TOLERANCE:
                rho = new_rho
                rho_vec = _rho_vector(qp, rho)
                lu = factorize(rho_vec)
                rho_updates += 1

    return x, z, y, status, it, dy, rho


def qp_relax(model: MiqpModel, lo: np.ndarray, hi: np.ndarray, cfg: SolverConfig,
             warm: Optional[WarmStart] = None, deadline: Optional[float] = None,
             constraints: Optional[Sequence[LinearConstraint]] = None,
             max_iterations: Optional[int] = None, cutoff: Optional[float] = None,
             cache: Optional[FactorCache] = None) -> RelaxationResult:
    """ノード（z の固定 [lo, hi] + 遅延制約プール）の凸 QP 緩和

    bound はこのノードの任意の完成解の目的値以下。実行不能の兆候を
    検出した場合は δy 方向に乗数を伸ばした双対値も bound に反映するので、
    実行不能ノードは bound が Σ w φ を超えて枝刈りされる。
    cutoff を渡すと、bound が cutoff に届いた時点で status="cutoff" で返る。
    """
    if constraints is None:
        constraints = model.all_constraints()
    qp = assemble(model, lo, hi, constraints)
    factor = alpha_factor(model, qp)

    def bound_fn(y: np.ndarray) -> float:
        return dual_bound(model, qp, y, factor)

    x, z, y, status, iterations, dy, rho = admm(
        qp, cfg, warm, deadline, max_iterations=max_iterations,
        cutoff=cutoff, bound_fn=bound_fn, cache=cache,
    )

    bound = bound_fn(y)
    if status == "infeasible":
        ray = dy / max(_norm(dy), 1e-300)
        for step in RAY_STEPS:
            bound = max(bound, bound_fn(y + step * ray))

    value = float(0.5 * x @ (qp.P @ x) + qp.q @ x + qp.constant)
    z_relaxed = np.clip(x[qp.n_alpha:], qp.lo, qp.hi)
    alphas = x[:qp.n_alpha].reshape(model.n_blocks, model.n_vertices).copy()
    # 訪問しない頂点の係数は厳密に 0
    off = np.ones(model.n_vertices, dtype=bool)
    off[qp.free_vertices] = False
    alphas[:, off] = 0.0
    return RelaxationResult(
        value=value,
        bound=bound,
        z=z_relaxed,
        alphas=alphas,
        status=status,
        iterations=iterations,
        warm=WarmStart(x=x, z=z, y=y, rho=rho),
    )
