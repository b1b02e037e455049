"""
infopath - ランダム場における情報収集経路計画（MIQP）

観測点の部分集合選択（Sparse-SS）と、グラフ上の予算付き s-t 経路計画（IPP）を
混合整数二次計画として定式化し、分枝限定法で大域最適に解きます。
"""

import os

# パッケージのルートディレクトリ
PACKAGE_DIR = os.path.dirname(os.path.abspath(__file__))

from .config import (
    STATUS_OPTIMAL,
    STATUS_TIMEOUT_FEASIBLE,
    STATUS_TIMEOUT_NO_INCUMBENT,
    STATUS_INFEASIBLE,
    STATUS_HEURISTIC,
    STATUS_ERROR,
)

from .models import (
    SquaredExponentialKernel,
    SphericalKernel,
    RandomFieldModel,
    PredictionSet,
    ObservationGraph,
    PathSolution,
    SubsetSolution,
    SparseSsInstance,
    IppInstance,
    SolverConfig,
    ExperimentSpec,
    ResultRecord,
)

from .progress import (
    SolveEvent,
    SolveTrace,
    SolveState,
    Incumbent,
)

from .solver import solve, solve_instance, qp_relax

__version__ = "0.1.0"

__all__ = [
    "PACKAGE_DIR",
    "STATUS_OPTIMAL",
    "STATUS_TIMEOUT_FEASIBLE",
    "STATUS_TIMEOUT_NO_INCUMBENT",
    "STATUS_INFEASIBLE",
    "STATUS_HEURISTIC",
    "STATUS_ERROR",
    "SquaredExponentialKernel",
    "SphericalKernel",
    "RandomFieldModel",
    "PredictionSet",
    "ObservationGraph",
    "PathSolution",
    "SubsetSolution",
    "SparseSsInstance",
    "IppInstance",
    "SolverConfig",
    "ExperimentSpec",
    "ResultRecord",
    "SolveEvent",
    "SolveTrace",
    "SolveState",
    "Incumbent",
    "solve",
    "solve_instance",
    "qp_relax",
    "__version__",
]
