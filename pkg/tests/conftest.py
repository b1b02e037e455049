"""Shared fixtures for infopath tests.

テストカテゴリ:
- unit: 小さなインスタンスでの単体テスト（数秒以内）
- acceptance: 総当たりオラクルとの一致・性質テストのスイープ
- slow: 時間のかかるテスト（acceptance は自動的に slow も付く）

使い方:
    # 単体テストのみ実行
    uv run pytest tests/ -m unit

    # スイープを除外
    uv run pytest tests/ -m "not slow"

    # オラクル一致テストのみ
    uv run pytest tests/ -m acceptance
"""

from typing import Callable, Optional

import numpy as np
import pytest

from infopath.graphs import grid_graph
from infopath.models import (
    IppInstance,
    PredictionSet,
    RandomFieldModel,
    SparseSsInstance,
    SquaredExponentialKernel,
)
from infopath.utils.structured_logger import SLog


def pytest_collection_modifyitems(config, items):
    """Automatically mark tests based on their file location."""
    for item in items:
        # tests/test_acceptance.py → acceptance + slow マーカー
        if "test_acceptance" in item.fspath.basename:
            item.add_marker(pytest.mark.acceptance)
            item.add_marker(pytest.mark.slow)
        elif "slow" not in item.keywords:
            item.add_marker(pytest.mark.unit)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_predictions(seed: int, n: int, low, high) -> PredictionSet:
    rng = _rng(seed)
    points = rng.uniform(low, high, size=(n, len(low)))
    weights = rng.uniform(0.0, 1.0, size=n)
    return PredictionSet(points=[tuple(map(float, p)) for p in points],
                         weights=[float(w) for w in weights])


def make_ipp(n: int, budget: float, n_predictions: int = 4, seed: int = 0,
             length_scale: float = 1.0, noise_variance: float = 0.1) -> IppInstance:
    """n × n 格子上の IPP インスタンス（予測点は格子の範囲に一様）"""
    extent = float(n - 1)
    return IppInstance(
        field=RandomFieldModel(kernel=SquaredExponentialKernel(sigma0=1.0, length_scale=length_scale),
                               noise_variance=noise_variance),
        graph=grid_graph(n),
        predictions=random_predictions(seed, n_predictions, (0.0, 0.0), (extent, extent)),
        budget=budget,
    )


def make_sparse_ss(m: int, k: int, n_predictions: int = 3, seed: int = 0,
                   length_scale: float = 1.0, noise_variance: float = 0.1) -> SparseSsInstance:
    """[0, √M]² に M 個の候補点を置いた Sparse-SS インスタンス"""
    rng = _rng(seed + 1000)
    side = float(np.sqrt(m))
    observations = rng.uniform(0.0, side, size=(m, 2))
    return SparseSsInstance(
        field=RandomFieldModel(kernel=SquaredExponentialKernel(sigma0=1.0, length_scale=length_scale),
                               noise_variance=noise_variance),
        observations=[tuple(map(float, p)) for p in observations],
        predictions=random_predictions(seed, n_predictions, (0.0, 0.0), (side, side)),
        k=k,
    )


@pytest.fixture
def se_field() -> RandomFieldModel:
    """SE(σ0=1, L=1)、σ²=0.25"""
    return RandomFieldModel(kernel=SquaredExponentialKernel(sigma0=1.0, length_scale=1.0),
                            noise_variance=0.25)


@pytest.fixture
def ipp_factory() -> Callable[..., IppInstance]:
    return make_ipp


@pytest.fixture
def sparse_ss_factory() -> Callable[..., SparseSsInstance]:
    return make_sparse_ss


@pytest.fixture
def log_dir(tmp_path):
    """JSONL ログを tmp_path に出力し、テスト後に閉じる"""
    SLog.init("pytest", tmp_path)
    yield tmp_path
    SLog.close()


@pytest.fixture
def separable_ss() -> SparseSsInstance:
    """互いに十分離れた6点（間隔 10、L=1 で共分散 e^{-50}）の Sparse-SS、k=3

    予測点は観測点と同じ位置で、重みは 0.1, 0.5, 0.3, 0.9, 0.2, 0.7。
    点どうしが無相関とみなせるので f(S) = Σ_{i∉S} w_i + Σ_{i∈S} w_i·σ²/(1+σ²)
    （σ²=0.1 で 1/11）となり、最適も貪欲も重み上位3点 {1, 3, 5} を選ぶ。
    値は 0.6 + 2.1/11。
    """
    points = [(10.0 * i, 0.0) for i in range(6)]
    return SparseSsInstance(
        field=RandomFieldModel(kernel=SquaredExponentialKernel(sigma0=1.0, length_scale=1.0),
                               noise_variance=0.1),
        observations=points,
        predictions=PredictionSet(points=points, weights=[0.1, 0.5, 0.3, 0.9, 0.2, 0.7]),
        k=3,
    )
