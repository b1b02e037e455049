"""
ランダム場の共分散計算

カーネル φ とノイズ分散 σ² から、推定誤差の計算に必要な共分散行列 C_S と
相互共分散ベクトル b_{x,S} を組み立てる。カーネルは等方的で、点対の
ユークリッド距離 h = ‖x − y‖₂ で評価する。
"""

from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InvalidInstanceError
from .models import Kernel, Point, RandomFieldModel


def _as_points(points: Sequence[Point] | np.ndarray) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise InvalidInstanceError(f"dimension mismatch: {a.shape[1]} != {b.shape[1]}")


def kernel_eval(kernel: Kernel, x: Point, y: Point) -> float:
    """φ(x, y) を1組の点について評価"""
    xa, ya = _as_points(x), _as_points(y)
    _check_same_dim(xa, ya)
    h = float(np.linalg.norm(xa[0] - ya[0]))
    return float(kernel.evaluate(h))


def kernel_matrix(kernel: Kernel, xs: Sequence[Point] | np.ndarray,
                  ys: Sequence[Point] | np.ndarray) -> np.ndarray:
    """φ(x_i, y_j) を並べた行列（ノイズ項なし）"""
    xa, ya = _as_points(xs), _as_points(ys)
    _check_same_dim(xa, ya)
    return kernel.evaluate(cdist(xa, ya))


def covariance_matrix(model: RandomFieldModel, points: Sequence[Point] | np.ndarray) -> np.ndarray:
    """観測の共分散行列 C_S = K_SS + σ² I

    Args:
        model: ランダム場モデル
        points: 観測点列 S（空でなく、重複なし）

    Raises:
        InvalidInstanceError: S が空、または重複点を含む
    """
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise InvalidInstanceError("covariance_matrix needs at least one point")
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise InvalidInstanceError("covariance_matrix: duplicate points")
    cov = kernel_matrix(model.kernel, pts, pts)
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += model.noise_variance
    return cov


def cross_covariance(model: RandomFieldModel, x: Point, points: Sequence[Point] | np.ndarray) -> np.ndarray:
    """b_{x,S} = [φ(x, x_1), …, φ(x, x_n)]（ノイズは過程と無相関なので含めない）"""
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise InvalidInstanceError("cross_covariance needs at least one point")
    return kernel_matrix(model.kernel, _as_points(x), pts)[0]


def correlation(kernel: Kernel, h: float | np.ndarray) -> np.ndarray:
    """正規化相関 φ(h) / φ(0)"""
    return kernel.evaluate(h) / kernel.variance


def max_correlation(kernel: Kernel, points: Sequence[Point] | np.ndarray) -> float:
    """異なる2点間の最大相関 ρ_max（インスタンスの難しさの指標）"""
    pts = _as_points(points)
    if pts.shape[0] < 2:
        return 0.0
    dist = cdist(pts, pts)
    np.fill_diagonal(dist, np.inf)
    return float(correlation(kernel, dist.min()))
