"""
インスタンスの生成と保存

実験設定のスイープ点 × 実行回ごとに、シードから再現可能にインスタンスを作る。
保存形式はスキーマバージョン付きの JSON（浮動小数点は round-trip する表現）。
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np
from pydantic import TypeAdapter, ValidationError

from ..config import (
    GRID_EDGE_LENGTH,
    INSTANCE_SCHEMA_VERSION,
    PRM_BOUNDS,
    SE_NOISE_VARIANCE,
    SPHERICAL_NOISE_VARIANCE,
)
from ..exceptions import InvalidInstanceError, SchemaVersionError
from ..graphs import check_budget, grid_graph, prm_graph
from ..models import (
    ExperimentSpec,
    Instance,
    IppInstance,
    PredictionSet,
    RandomFieldModel,
    SparseSsInstance,
    SphericalKernel,
    SquaredExponentialKernel,
)
from ..utils.structured_logger import SLog, LogCategory, LogEvent


AnyInstance = Union[SparseSsInstance, IppInstance]
_INSTANCE_ADAPTER = TypeAdapter(Instance)


@dataclass(frozen=True)
class SweepPoint:
    """スイープの1点

    Attributes:
        index: スイープ内の順番
        size: グリッド一辺 / PRM 頂点数 / 候補点数
        length_scale: 二乗指数カーネルの L（PRM では未使用）
        budget: 経路長予算（IPP）
        k: 基数（subset-selection）
    """
    index: int
    size: int
    length_scale: float
    budget: Optional[float] = None
    k: Optional[int] = None


def sweep_points(spec: ExperimentSpec) -> List[SweepPoint]:
    """スイープ点を (size, length_scale, budget/k) の辞書式順で並べる"""
    points: List[SweepPoint] = []
    is_subset = spec.scenario == "subset-selection"
    is_prm = spec.scenario == "prm-quality-vs-budget"
    scales = spec.length_scales[:1] if is_prm else spec.length_scales
    for size in spec.sizes:
        for ls in scales:
            for value in (spec.cardinalities if is_subset else spec.budgets):
                if is_subset:
                    points.append(SweepPoint(len(points), size, ls, k=int(value)))
                else:
                    points.append(SweepPoint(len(points), size, ls, budget=float(value)))
    return points


def instance_id(spec: ExperimentSpec, point: SweepPoint, run: int) -> str:
    if point.k is not None:
        return f"{spec.scenario}-n{point.size}-L{point.length_scale:g}-k{point.k}-r{run}"
    return f"{spec.scenario}-n{point.size}-L{point.length_scale:g}-B{point.budget:g}-r{run}"


def _rng(seed: int, point: SweepPoint, spec: ExperimentSpec) -> np.random.Generator:
    # 予算 / k は鍵に含めないので、同じ (size, L, run) なら予測点集合は共通
    ls_index = spec.length_scales.index(point.length_scale)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, point.size, ls_index])))


def _predictions(rng: np.random.Generator, low, high, spec: ExperimentSpec) -> PredictionSet:
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    points = rng.uniform(low, high, size=(spec.n_predictions, low.shape[0]))
    weights = rng.uniform(spec.weight_low, spec.weight_high, size=spec.n_predictions)
    return PredictionSet(points=[tuple(map(float, p)) for p in points],
                         weights=[float(w) for w in weights])


def _se_field(spec: ExperimentSpec, length_scale: float) -> RandomFieldModel:
    return RandomFieldModel(
        kernel=SquaredExponentialKernel(sigma0=spec.sigma0, length_scale=length_scale),
        noise_variance=spec.noise_variance or SE_NOISE_VARIANCE,
    )


def generate_instance(spec: ExperimentSpec, point: SweepPoint, seed: int) -> AnyInstance:
    """スイープ点と実行シードから1インスタンスを生成

    Raises:
        InfeasibleInstanceError: 予算が最短 s-t 距離未満
        InvalidInstanceError: k が候補点数を超えるなど
    """
    rng = _rng(seed, point, spec)
    try:
        if spec.scenario == "subset-selection":
            side = float(np.sqrt(point.size))
            observations = rng.uniform(0.0, side, size=(point.size, 2))
            predictions = _predictions(rng, (0.0, 0.0), (side, side), spec)
            return SparseSsInstance(
                field=_se_field(spec, point.length_scale),
                observations=[tuple(map(float, p)) for p in observations],
                predictions=predictions,
                k=point.k,
            )

        if spec.scenario == "prm-quality-vs-budget":
            graph = prm_graph(PRM_BOUNDS, point.size, spec.prm_connection_factor, seed)
            field_model = RandomFieldModel(
                kernel=SphericalKernel(sill=spec.spherical_sill, correlation_range=spec.spherical_range),
                noise_variance=spec.noise_variance or SPHERICAL_NOISE_VARIANCE,
            )
            low, high = zip(*PRM_BOUNDS)
        else:
            graph = grid_graph(point.size, GRID_EDGE_LENGTH)
            field_model = _se_field(spec, point.length_scale)
            extent = (point.size - 1) * GRID_EDGE_LENGTH
            low, high = (0.0, 0.0), (extent, extent)

        inst = IppInstance(field=field_model, graph=graph,
                           predictions=_predictions(rng, low, high, spec), budget=point.budget)
    except ValidationError as e:
        raise InvalidInstanceError(f"invalid generated instance: {e}") from e
    check_budget(inst)
    return inst


def iter_instances(spec: ExperimentSpec) -> Iterator[tuple]:
    """(instance_id, スイープ点, run, seed) をスイープ順 → 実行順で列挙"""
    seeds = spec.run_seeds()
    for point in sweep_points(spec):
        for run, seed in enumerate(seeds):
            yield instance_id(spec, point, run), point, run, seed


def serialize_instance(inst: AnyInstance, path: str | Path) -> Path:
    """インスタンスを JSON で保存（float は repr で往復時にビット一致）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": INSTANCE_SCHEMA_VERSION,
        "instance": inst.model_dump(mode="json"),
    }
    path.write_text(json.dumps(payload, indent=1, allow_nan=False), encoding="utf-8")
    SLog.debug(LogCategory.INSTANCE, LogEvent.COMPLETE, {"path": str(path), "kind": inst.kind})
    return path


def parse_instance(payload: dict) -> AnyInstance:
    """読み込んだ JSON オブジェクトを検証してインスタンスに変換

    Raises:
        SchemaVersionError: スキーマバージョン不一致
        InvalidInstanceError: 形式不正
        InfeasibleInstanceError: 予算が最短 s-t 距離未満
    """
    if not isinstance(payload, dict) or "instance" not in payload:
        raise InvalidInstanceError("malformed instance file: missing 'instance'")
    version = payload.get("schema_version")
    if version != INSTANCE_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"schema version mismatch: file has {version!r}, expected {INSTANCE_SCHEMA_VERSION}"
        )
    try:
        inst = _INSTANCE_ADAPTER.validate_python(payload["instance"])
    except ValidationError as e:
        raise InvalidInstanceError(f"malformed instance: {e}") from e
    if isinstance(inst, IppInstance):
        check_budget(inst)
    return inst


def load_instance(path: str | Path) -> AnyInstance:
    """JSON ファイルからインスタンスを読み込む"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidInstanceError(f"malformed instance file {path}: {e}") from e
    inst = parse_instance(payload)
    SLog.debug(LogCategory.INSTANCE, LogEvent.COMPLETE, {"path": str(path), "kind": inst.kind})
    return inst
