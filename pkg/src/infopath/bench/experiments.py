"""
実験の実行

スイープ点 × 実行回ごとにインスタンスを生成し、指定された手法を順に走らせて
ResultRecord を集める。1 レコードの失敗はログに残してステータス error とし、
スイープは止めない。
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from ..baselines import bnb_paths, brute_force_ipp, brute_force_ss, greedy_ss
from ..config import (
    STATUS_ERROR,
    STATUS_HEURISTIC,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
)
from ..exceptions import InfeasibleInstanceError
from ..models import ExperimentSpec, IppInstance, Method, ResultRecord, SolverConfig, SparseSsInstance
from ..solver import solve_instance
from ..utils.structured_logger import SLog, LogCategory, LogEvent
from .instances import AnyInstance, SweepPoint, generate_instance, iter_instances


def run_method(method: Method, inst: AnyInstance, scenario: str, instance: str,
               time_limit: float, seed: int = 0, oracle_path_cap: Optional[int] = None,
               oracle_subset_cap: Optional[int] = None) -> ResultRecord:
    """1 手法を1インスタンスで実行して結果行を返す（例外はそのまま送出）"""
    start = time.perf_counter()
    gap = None
    nodes = None

    if method == "miqp":
        state, solution, _ = solve_instance(inst, SolverConfig(time_limit=time_limit, seed=seed))
        objective = state.incumbent.objective if state.incumbent else None
        if isinstance(inst, IppInstance) and solution is not None:
            objective = solution.objective
        status = state.status
        gap = state.gap if math.isfinite(state.gap) else None
        nodes = state.nodes_explored
    elif method == "bnb":
        if not isinstance(inst, IppInstance):
            raise ValueError("bnb is a path method")
        result = bnb_paths(inst, time_limit)
        objective, status, nodes = result.objective, result.status, result.nodes
    elif method == "greedy":
        if not isinstance(inst, SparseSsInstance):
            raise ValueError("greedy is a subset-selection method")
        objective, status = greedy_ss(inst).objective, STATUS_HEURISTIC
    else:
        if isinstance(inst, IppInstance):
            solution = brute_force_ipp(inst, oracle_path_cap) if oracle_path_cap else brute_force_ipp(inst)
        else:
            solution = brute_force_ss(inst, oracle_subset_cap) if oracle_subset_cap else brute_force_ss(inst)
        objective, status = solution.objective, STATUS_OPTIMAL

    return ResultRecord(
        scenario=scenario, instance=instance, method=method,
        objective=objective,
        time_s=time.perf_counter() - start,
        status=status, gap=gap, nodes=nodes,
    )


def _run_task(spec: ExperimentSpec, inst_id: str, point: SweepPoint, seed: int) -> List[ResultRecord]:
    def failed(method: Method, status: str) -> ResultRecord:
        return ResultRecord(scenario=spec.scenario, instance=inst_id, method=method,
                            time_s=0.0, status=status)

    try:
        inst = generate_instance(spec, point, seed)
    except InfeasibleInstanceError as e:
        SLog.warn(LogCategory.BENCH, LogEvent.SKIP, {"instance": inst_id, "error": str(e)},
                  f"{inst_id}: 実行不能なインスタンス")
        return [failed(m, STATUS_INFEASIBLE) for m in spec.methods]
    except Exception as e:
        SLog.error(LogCategory.BENCH, LogEvent.FAIL, {"instance": inst_id, "error": str(e)},
                   f"{inst_id}: インスタンス生成に失敗")
        return [failed(m, STATUS_ERROR) for m in spec.methods]

    records = []
    for method in spec.methods:
        try:
            record = run_method(method, inst, spec.scenario, inst_id, spec.time_limit, seed,
                                spec.oracle_path_cap, spec.oracle_subset_cap)
        except Exception as e:
            SLog.error(LogCategory.BENCH, LogEvent.FAIL,
                       {"instance": inst_id, "method": method, "error": f"{type(e).__name__}: {e}"},
                       f"{inst_id} / {method}: 失敗")
            record = failed(method, STATUS_ERROR)
        SLog.info(LogCategory.BENCH, LogEvent.COMPLETE, record.model_dump(),
                  f"{inst_id} / {method}: {record.status} objective={record.objective}")
        records.append(record)
    return records


def run_experiment(spec: ExperimentSpec) -> List[ResultRecord]:
    """実験を実行して結果行を (スイープ点, 実行回, 手法) の順で返す

    workers > 1 のときはインスタンス単位でスレッドプールに投げる。完了順に
    関係なく返す順序は固定。
    """
    tasks = list(iter_instances(spec))
    SLog.info(LogCategory.BENCH, LogEvent.START,
              {"scenario": spec.scenario, "instances": len(tasks), "methods": list(spec.methods),
               "workers": spec.workers},
              f"実験開始: {spec.scenario}（インスタンス {len(tasks)}、手法 {', '.join(spec.methods)}）")

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(_run_task, spec, inst_id, point, seed)
                       for inst_id, point, _, seed in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_task(spec, inst_id, point, seed) for inst_id, point, _, seed in tasks]

    records = [r for chunk in chunks for r in chunk]
    SLog.info(LogCategory.BENCH, LogEvent.END, {"records": len(records)},
              f"実験終了: {len(records)} レコード")
    return records
