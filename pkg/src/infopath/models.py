"""
Data models for infopath.

This module contains the pydantic models shared by every other module:
random field description, prediction set, observation graph, problem
instances, solver settings and experiment records.

Solve-progress models (SolveState, solve events) are defined in progress.py.
"""

import math
from functools import cached_property
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import (
    DEFAULT_PREDICTIONS,
    DEFAULT_RUNS,
    DEFAULT_TIME_LIMIT,
    BRUTE_FORCE_PATH_CAP,
    BRUTE_FORCE_SUBSET_CAP,
    GAP_TOLERANCE,
    PRM_CONNECTION_FACTOR,
    QP_ABS_TOL,
    QP_MAX_ITERATIONS,
    QP_NODE_ITERATIONS,
    QP_REL_TOL,
    SE_LENGTH_SCALE,
    SE_SIGMA0,
    SPHERICAL_RANGE,
    SPHERICAL_SILL,
)


Point = Tuple[float, ...]


def _check_points(points: List[Point], what: str) -> List[Point]:
    """座標が有限で次元が揃っていることを確認"""
    if not points:
        return points
    dim = len(points[0])
    if dim < 1:
        raise ValueError(f"{what}: points need at least one coordinate")
    for p in points:
        if len(p) != dim:
            raise ValueError(f"{what}: dimension mismatch ({len(p)} != {dim})")
        if not all(math.isfinite(c) for c in p):
            raise ValueError(f"{what}: non-finite coordinate in {p}")
    return points


def _check_distinct(points: List[Point], what: str) -> None:
    if len(set(points)) != len(points):
        raise ValueError(f"{what}: duplicate observation points")


# --- Random Field ---
class SquaredExponentialKernel(BaseModel):
    """Stationary squared exponential covariance phi(h) = sigma0^2 exp(-h^2 / 2L^2).

    Attributes:
        sigma0: standard deviation of the field
        length_scale: distance over which the field decorrelates
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["squared_exponential"] = "squared_exponential"
    sigma0: float = Field(default=SE_SIGMA0, gt=0, allow_inf_nan=False, description="標準偏差 σ0")
    length_scale: float = Field(default=SE_LENGTH_SCALE, gt=0, allow_inf_nan=False, description="長さスケール L")

    @property
    def variance(self) -> float:
        return self.sigma0 ** 2

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        return self.variance * np.exp(-(h ** 2) / (2.0 * self.length_scale ** 2))


class SphericalKernel(BaseModel):
    """Stationary spherical covariance with sill c and range a (compact support).

    Attributes:
        sill: variance c at zero distance
        correlation_range: distance a beyond which the covariance is zero
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["spherical"] = "spherical"
    sill: float = Field(default=SPHERICAL_SILL, gt=0, allow_inf_nan=False, description="シル c")
    correlation_range: float = Field(default=SPHERICAL_RANGE, gt=0, allow_inf_nan=False, description="レンジ a")

    @property
    def variance(self) -> float:
        return self.sill

    def evaluate(self, h: np.ndarray) -> np.ndarray:
        r = np.asarray(h, dtype=float) / self.correlation_range
        inside = self.sill * (1.0 - 1.5 * r + 0.5 * r ** 3)
        return np.where(r <= 1.0, inside, 0.0)


Kernel = Annotated[Union[SquaredExponentialKernel, SphericalKernel], Field(discriminator="kind")]


class RandomFieldModel(BaseModel):
    """Zero-mean random field given by its covariance function and noise variance.

    Attributes:
        kernel: isotropic covariance function
        noise_variance: measurement noise variance sigma^2 (> 0 keeps C_S positive definite)
    """
    model_config = ConfigDict(frozen=True)

    kernel: Kernel
    noise_variance: float = Field(gt=0, allow_inf_nan=False, description="観測ノイズ分散 σ²")


# --- Prediction Set ---
class PredictionSet(BaseModel):
    """予測点集合 Ω と重み w

    Attributes:
        points: 予測点の座標
        weights: 各予測点の重要度（非負）
    """
    model_config = ConfigDict(frozen=True)

    points: List[Point] = Field(min_length=1, description="予測点 Ω")
    weights: List[float] = Field(description="重み w（非負）")

    @field_validator("points")
    @classmethod
    def _finite_points(cls, v: List[Point]) -> List[Point]:
        return _check_points(v, "prediction set")

    @model_validator(mode="after")
    def _check_weights(self) -> "PredictionSet":
        if len(self.weights) != len(self.points):
            raise ValueError("prediction set: points and weights differ in length")
        if any((not math.isfinite(w)) or w < 0 for w in self.weights):
            raise ValueError("prediction set: weights must be finite and non-negative")
        return self

    @cached_property
    def coords(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    @cached_property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def __len__(self) -> int:
        return len(self.points)


# --- Observation Graph ---
class Arc(BaseModel):
    """有向弧 (tail → head) とそのコスト"""
    model_config = ConfigDict(frozen=True)

    tail: int = Field(ge=0)
    head: int = Field(ge=0)
    cost: float = Field(gt=0, allow_inf_nan=False)


class ObservationGraph(BaseModel):
    """Directed observation graph G=(Theta, A, d) with start and end vertices.

    Attributes:
        vertices: observation locations (index = vertex id)
        arcs: directed arcs with positive finite costs
        start: start vertex s
        end: end vertex t
    """
    model_config = ConfigDict(frozen=True)

    vertices: List[Point] = Field(min_length=2, description="観測点 Θ")
    arcs: List[Arc] = Field(description="有向弧")
    start: int = Field(ge=0, description="始点 s")
    end: int = Field(ge=0, description="終点 t")

    @field_validator("vertices")
    @classmethod
    def _finite_vertices(cls, v: List[Point]) -> List[Point]:
        _check_points(v, "observation graph")
        _check_distinct(v, "observation graph")
        return v

    @model_validator(mode="after")
    def _check_structure(self) -> "ObservationGraph":
        m = len(self.vertices)
        if self.start >= m or self.end >= m:
            raise ValueError("observation graph: endpoint index out of range")
        if self.start == self.end:
            raise ValueError("observation graph: start and end must differ")
        seen = set()
        for arc in self.arcs:
            if arc.tail >= m or arc.head >= m:
                raise ValueError(f"observation graph: arc ({arc.tail}, {arc.head}) out of range")
            if arc.tail == arc.head:
                raise ValueError(f"observation graph: self-loop at {arc.tail}")
            key = (arc.tail, arc.head)
            if key in seen:
                raise ValueError(f"observation graph: duplicate arc {key}")
            seen.add(key)
        return self

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @cached_property
    def arc_index(self) -> Dict[Tuple[int, int], int]:
        """(tail, head) → 弧インデックス"""
        return {(a.tail, a.head): i for i, a in enumerate(self.arcs)}

    @cached_property
    def out_arcs(self) -> List[List[int]]:
        table: List[List[int]] = [[] for _ in self.vertices]
        for i, a in enumerate(self.arcs):
            table[a.tail].append(i)
        return table

    @cached_property
    def in_arcs(self) -> List[List[int]]:
        table: List[List[int]] = [[] for _ in self.vertices]
        for i, a in enumerate(self.arcs):
            table[a.head].append(i)
        return table

    def cost(self, tail: int, head: int) -> float:
        return self.arcs[self.arc_index[(tail, head)]].cost


class PathSolution(BaseModel):
    """s-t 経路解

    Attributes:
        vertex_sequence: s から t までの頂点列（重複なし）
        arcs: 経路上の弧
        length: 弧コストの総和
        objective: 経路上の観測による重み付き推定誤差
    """
    vertex_sequence: List[int]
    arcs: List[Tuple[int, int]]
    length: float
    objective: float

    def to_log_dict(self) -> dict:
        """ログ出力用の辞書を返す"""
        return {
            "path": self.vertex_sequence,
            "length": self.length,
            "objective": self.objective,
        }


class SubsetSolution(BaseModel):
    """Sparse-SS の解

    Attributes:
        indices: 選んだ観測点のインデックス（昇順）
        objective: 重み付き推定誤差
    """
    indices: List[int]
    objective: float

    def to_log_dict(self) -> dict:
        return {"indices": self.indices, "objective": self.objective}


# --- Problem Instances ---
class SparseSsInstance(BaseModel):
    """Sparse-SS: choose k of the M observation points.

    Attributes:
        field: random field model
        observations: candidate observation points Theta
        predictions: prediction set Omega with weights
        k: cardinality of the measurement set
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["sparse-ss"] = "sparse-ss"
    field: RandomFieldModel
    observations: List[Point] = Field(min_length=1)
    predictions: PredictionSet
    k: int = Field(ge=1)

    @field_validator("observations")
    @classmethod
    def _distinct(cls, v: List[Point]) -> List[Point]:
        _check_points(v, "observations")
        _check_distinct(v, "observations")
        return v

    @model_validator(mode="after")
    def _check_k(self) -> "SparseSsInstance":
        if self.k > len(self.observations):
            raise ValueError(f"sparse-ss: k={self.k} exceeds M={len(self.observations)}")
        if len(self.observations[0]) != len(self.predictions.points[0]):
            raise ValueError("sparse-ss: observation and prediction dimensions differ")
        return self

    @cached_property
    def observation_coords(self) -> np.ndarray:
        return np.asarray(self.observations, dtype=float)


class IppInstance(BaseModel):
    """IPP: an s-t path of length at most B in the observation graph.

    Attributes:
        field: random field model
        graph: observation graph (vertices are the observation points)
        predictions: prediction set Omega with weights
        budget: path length budget B

    The budget against the shortest s-t distance is checked by
    graphs.check_budget, not here, so that the error type survives
    pydantic's validation wrapping.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["ipp"] = "ipp"
    field: RandomFieldModel
    graph: ObservationGraph
    predictions: PredictionSet
    budget: float = Field(gt=0, allow_inf_nan=False, description="経路長の予算 B")

    @model_validator(mode="after")
    def _check_dims(self) -> "IppInstance":
        if len(self.graph.vertices[0]) != len(self.predictions.points[0]):
            raise ValueError("ipp: observation and prediction dimensions differ")
        return self

    @property
    def observation_coords(self) -> np.ndarray:
        return self.graph.coords


Instance = Annotated[Union[SparseSsInstance, IppInstance], Field(discriminator="kind")]


# --- Solver Settings ---
class SolverConfig(BaseModel):
    """Branch-and-bound settings.

    Attributes:
        time_limit: wall-clock limit in seconds
        gap_tolerance: relative gap at which the search stops as optimal
        node_selection: best-bound or depth-first
        branching: most-fractional or pseudo-cost
        qp_abs_tol / qp_rel_tol: ADMM stopping residuals
        max_qp_iterations: ADMM iteration cap at the root
        node_qp_iterations: ADMM iteration cap below the root (warm-started from the parent)
        seed: tie-breaking seed for pseudo-cost branching
    """
    model_config = ConfigDict(frozen=True)

    time_limit: float = Field(default=DEFAULT_TIME_LIMIT, gt=0)
    gap_tolerance: float = Field(default=GAP_TOLERANCE, gt=0)
    node_selection: Literal["best-bound", "depth-first"] = "best-bound"
    branching: Literal["most-fractional", "pseudo-cost"] = "most-fractional"
    qp_abs_tol: float = Field(default=QP_ABS_TOL, gt=0)
    qp_rel_tol: float = Field(default=QP_REL_TOL, gt=0)
    max_qp_iterations: int = Field(default=QP_MAX_ITERATIONS, ge=1, description="根ノードの ADMM 反復上限")
    node_qp_iterations: int = Field(default=QP_NODE_ITERATIONS, ge=1, description="根以外のノードの ADMM 反復上限")
    admm_rho: float = Field(default=0.1, gt=0, description="ADMM ステップ幅 ρ の初期値")
    admm_sigma: float = Field(default=1e-6, gt=0, description="ADMM 正則化 σ")
    admm_relaxation: float = Field(default=1.6, gt=0, lt=2, description="過緩和係数")
    seed: int = 0


# --- Experiments ---
Scenario = Literal[
    "grid-runtime-vs-budget",
    "grid-scaling-by-correlation",
    "grid-quality-timeout",
    "prm-quality-vs-budget",
    "subset-selection",
]
Method = Literal["miqp", "bnb", "greedy", "oracle"]


class ExperimentSpec(BaseModel):
    """実験設定（スイープ × 実行回）

    Attributes:
        scenario: 実験シナリオ
        sizes: グリッド一辺 n / PRM 頂点数 M / 部分集合選択の候補数 M
        budgets: 経路長予算のスイープ（IPP シナリオ）
        cardinalities: k のスイープ（subset-selection）
        length_scales: 二乗指数カーネルの L のスイープ
        n_predictions: 予測点数 N
        runs: 各スイープ点での実行回数
        seeds: 実行ごとのシード（省略時は base_seed + run）
        methods: 実行する手法
        time_limit: 手法ごとの制限時間（秒）
    """
    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    sizes: List[int] = Field(min_length=1)
    budgets: List[float] = Field(default_factory=list)
    cardinalities: List[int] = Field(default_factory=list)
    length_scales: List[float] = Field(default_factory=lambda: [SE_LENGTH_SCALE])
    sigma0: float = Field(default=SE_SIGMA0, gt=0)
    spherical_sill: float = Field(default=SPHERICAL_SILL, gt=0)
    spherical_range: float = Field(default=SPHERICAL_RANGE, gt=0)
    noise_variance: Optional[float] = Field(default=None, gt=0, description="省略時はカーネルごとの既定値")
    n_predictions: int = Field(default=DEFAULT_PREDICTIONS, ge=1)
    weight_low: float = Field(default=0.0, ge=0)
    weight_high: float = Field(default=1.0, ge=0)
    runs: int = Field(default=DEFAULT_RUNS, ge=1)
    seeds: Optional[List[int]] = None
    base_seed: int = 0
    methods: List[Method] = Field(default_factory=lambda: ["miqp", "bnb"], min_length=1)
    time_limit: float = Field(default=DEFAULT_TIME_LIMIT, gt=0)
    prm_connection_factor: int = Field(default=PRM_CONNECTION_FACTOR, ge=1)
    oracle_path_cap: int = Field(default=BRUTE_FORCE_PATH_CAP, ge=1)
    oracle_subset_cap: int = Field(default=BRUTE_FORCE_SUBSET_CAP, ge=1)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_sweeps(self) -> "ExperimentSpec":
        if self.scenario == "subset-selection":
            if not self.cardinalities:
                raise ValueError("subset-selection needs a nonempty cardinalities sweep")
            if "bnb" in self.methods:
                raise ValueError("bnb is a path method; not available for subset-selection")
        else:
            if not self.budgets:
                raise ValueError(f"{self.scenario} needs a nonempty budgets sweep")
            if "greedy" in self.methods:
                raise ValueError("greedy is a subset-selection method")
        if not self.length_scales:
            raise ValueError("length_scales must be nonempty")
        if self.seeds is not None and len(self.seeds) != self.runs:
            raise ValueError(f"seeds has {len(self.seeds)} entries for {self.runs} runs")
        if self.weight_high < self.weight_low:
            raise ValueError("weight_high must be >= weight_low")
        return self

    def run_seeds(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + r for r in range(self.runs)]


class ResultRecord(BaseModel):
    """1 インスタンス × 1 手法の結果行

    Attributes:
        scenario: 実験シナリオ
        instance: インスタンス ID
        method: 手法名
        objective: 重み付き推定誤差（解がない場合は None）
        time_s: 壁時計時間（秒）
        status: 終了ステータス
        gap: 最適性ギャップ（miqp のみ）
        nodes: 探索ノード数
    """
    scenario: str
    instance: str
    method: Method
    objective: Optional[float] = Field(default=None, ge=0)
    time_s: float = Field(ge=0)
    status: str
    gap: Optional[float] = None
    nodes: Optional[int] = None

    @model_validator(mode="after")
    def _gap_only_for_miqp(self) -> "ResultRecord":
        if self.gap is not None and self.method != "miqp":
            raise ValueError("gap is reported for miqp records only")
        return self
