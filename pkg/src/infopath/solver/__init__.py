"""
MIQP ソルバー

- solve: 分枝限定法（ノード緩和は ADMM + 双対下界）
- qp_relax: 1 ノード分の凸 QP 緩和
- solve_instance: インスタンスから解（経路 / 部分集合）まで
"""

from typing import List, Optional, Union

from ..formulation import MiqpModel, build_model, extract_path, selected_subset
from ..models import IppInstance, PathSolution, SolverConfig, SparseSsInstance
from .branch_and_bound import BranchAndBound, Node, PseudoCosts, branch, propagate, select_branching_variable, solve
from .relaxation import FactorCache, RelaxationResult, WarmStart, qp_relax

Solution = Union[PathSolution, List[int], None]


def solve_instance(inst: Union[SparseSsInstance, IppInstance],
                   cfg: Optional[SolverConfig] = None):
    """インスタンスを MIQP に変換して解き、(SolveState, 解, モデル) を返す

    解は IPP なら PathSolution、Sparse-SS なら選んだ観測点インデックスのリスト。
    暫定解がなければ None。
    """
    model = build_model(inst)
    state = solve(model, cfg)
    solution: Solution = None
    if state.incumbent is not None:
        if isinstance(inst, IppInstance):
            solution = extract_path(model, state.incumbent.assignment)
        else:
            solution = selected_subset(model, state.incumbent.assignment)
    return state, solution, model


__all__ = [
    "BranchAndBound",
    "FactorCache",
    "MiqpModel",
    "Node",
    "PseudoCosts",
    "RelaxationResult",
    "WarmStart",
    "branch",
    "propagate",
    "qp_relax",
    "select_branching_variable",
    "solve",
    "solve_instance",
]
