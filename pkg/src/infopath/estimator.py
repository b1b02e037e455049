"""
線形最小二乗推定の誤差計算

観測集合 S から予測点 x の値を線形推定したときの平均二乗誤差

    f_x(S) = φ(x,x) − b'_{x,S} C_S^{-1} b_{x,S}

と、係数ベクトル α についての二次関数

    g_x(α) = α' C_Θ α − 2 b'_{x,Θ} α + φ(x,x)

を扱う。α の台を S に制限して g_x を最小化すると f_x(S) に一致する
（MIQP 定式化はこの恒等式の上に成り立っている）。

線形方程式はすべて Cholesky 分解で解く。λ_min(C_S) ≥ σ² なので条件数は良い。
"""

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .config import ESTIMATOR_TOL
from .exceptions import InternalSolverError
from .models import Point, PredictionSet, RandomFieldModel
from .randfield import covariance_matrix, kernel_matrix
from .utils.structured_logger import SLog, LogCategory, LogEvent


@dataclass(frozen=True)
class QuadraticForm:
    """g(α) = α' Q α − linear' α + constant

    Attributes:
        Q: C_Θ（対称正定値）
        linear: 2·b_{x,Θ}
        constant: φ(x,x)
    """
    Q: np.ndarray
    linear: np.ndarray
    constant: float

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    @property
    def b(self) -> np.ndarray:
        return 0.5 * self.linear


def _cholesky(C: np.ndarray):
    try:
        return cho_factor(C, lower=True, check_finite=False)
    except LinAlgError as e:
        raise InternalSolverError(f"Cholesky factorization failed (matrix not PD): {e}") from e


def lls_coefficients(C: np.ndarray, b: np.ndarray) -> np.ndarray:
    """最適線形推定係数 α* = C^{-1} b（α'Cα − 2b'α の一意な最小点）

    Raises:
        InternalSolverError: C が正定値でない（正しい C_S では起こらない）
    """
    C = np.asarray(C, dtype=float)
    b = np.asarray(b, dtype=float)
    if C.shape != (b.shape[0], b.shape[0]):
        raise InternalSolverError(f"lls_coefficients: shape mismatch {C.shape} vs {b.shape}")
    if b.shape[0] == 0:
        return np.zeros(0)
    return cho_solve(_cholesky(C), b, check_finite=False)


def _clamp(value: float, prior: float) -> float:
    """許容誤差を超えて [0, φ(x,x)] を外れた場合だけ丸める"""
    if -ESTIMATOR_TOL <= value <= prior + ESTIMATOR_TOL:
        return value
    SLog.warn(LogCategory.MODEL, LogEvent.UPDATE,
              {"value": value, "prior": prior},
              "推定誤差が許容範囲外のためクランプしました")
    return min(max(value, 0.0), prior)


def posterior_variances(model: RandomFieldModel, predictions: Sequence[Point] | np.ndarray,
                        measured: Sequence[Point] | np.ndarray) -> np.ndarray:
    """全予測点の f_x(S) をまとめて計算（C_S の分解は1回）"""
    X = np.asarray(predictions, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    prior = np.full(X.shape[0], model.kernel.variance)
    S = np.asarray(measured, dtype=float)
    if S.size == 0:
        return prior
    if S.ndim == 1:
        S = S.reshape(1, -1)
    factor = _cholesky(covariance_matrix(model, S))
    B = kernel_matrix(model.kernel, X, S)               # N × n
    sol = cho_solve(factor, B.T, check_finite=False)    # n × N
    values = prior - np.einsum("ij,ji->i", B, sol)
    return np.array([_clamp(v, p) for v, p in zip(values, prior)])


def mse(model: RandomFieldModel, x: Point, measured: Sequence[Point] | np.ndarray) -> float:
    """予測点 x の推定誤差 f_x(S)。S が空なら事前分散 φ(x,x)"""
    return float(posterior_variances(model, [x], measured)[0])


def total_weighted_error(model: RandomFieldModel, predictions: PredictionSet,
                         measured: Sequence[Point] | np.ndarray) -> float:
    """f(S) = Σ_i w_i f_{x_i}(S)"""
    values = posterior_variances(model, predictions.coords, measured)
    return float(np.dot(predictions.weight_array, values))


def quadratic_forms(model: RandomFieldModel, observations: Sequence[Point] | np.ndarray,
                    predictions: PredictionSet) -> List[QuadraticForm]:
    """各予測点の g_{x_i} を組み立てる（Q = C_Θ は共有）"""
    C = covariance_matrix(model, observations)
    B = kernel_matrix(model.kernel, predictions.coords, observations)
    prior = float(model.kernel.variance)
    return [QuadraticForm(Q=C, linear=2.0 * B[i], constant=prior) for i in range(B.shape[0])]


def g_eval(q: QuadraticForm, alpha: np.ndarray) -> float:
    """g(α) = α' C_Θ α − 2 b' α + φ(x,x)"""
    alpha = np.asarray(alpha, dtype=float)
    return float(alpha @ q.Q @ alpha - q.linear @ alpha + q.constant)


def _support_index(support: Iterable[int], dimension: int) -> np.ndarray:
    idx = np.array(sorted(set(int(i) for i in support)), dtype=int)
    if idx.size and (idx[0] < 0 or idx[-1] >= dimension):
        raise InternalSolverError(f"support index out of range for dimension {dimension}")
    return idx


def restricted_optimal_g(q: QuadraticForm, support: Iterable[int]) -> Tuple[np.ndarray, float]:
    """台を support に制限して g を最小化

    |support| 次の部分系だけを解く（ブロック消去と同値）。
    戻り値の値は f_x(Θ_support) に一致する。

    Returns:
        (最小点 α（台の外は 0）, 最小値)
    """
    idx = _support_index(support, q.dimension)
    alpha = np.zeros(q.dimension)
    if idx.size == 0:
        return alpha, float(q.constant)
    b = q.b[idx]
    coef = lls_coefficients(q.Q[np.ix_(idx, idx)], b)
    alpha[idx] = coef
    return alpha, float(q.constant - b @ coef)


def restricted_optimal_all(forms: Sequence[QuadraticForm], support: Iterable[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Q を共有する複数ブロックをまとめて制限最小化（分解は1回）

    Returns:
        (α 行列 N × M, 各ブロックの最小値 N)
    """
    if not forms:
        return np.zeros((0, 0)), np.zeros(0)
    M = forms[0].dimension
    idx = _support_index(support, M)
    constants = np.array([f.constant for f in forms])
    alphas = np.zeros((len(forms), M))
    if idx.size == 0:
        return alphas, constants
    Bs = np.stack([f.b[idx] for f in forms])            # N × |S|
    factor = _cholesky(forms[0].Q[np.ix_(idx, idx)])
    coef = cho_solve(factor, Bs.T, check_finite=False)  # |S| × N
    alphas[:, idx] = coef.T
    values = constants - np.einsum("ij,ji->i", Bs, coef)
    return alphas, values
