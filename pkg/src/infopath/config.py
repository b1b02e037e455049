"""
Configuration constants for infopath.

This module contains all configuration constants including:
- numerical tolerances shared by the estimator, the MIQP builders and the solver
- kernel parameters of the two experimental fields
- desk-scale experiment defaults
- solve / result status constants
"""


# --- Numerical Tolerances ---
ESTIMATOR_TOL = 1e-9            # 推定誤差の恒等式チェック用（絶対誤差）
INTEGRALITY_TOL = 1e-6          # 整数性判定
TIE_TOL = 1e-12                 # 目的値の同値判定（絶対誤差）
QP_ABS_TOL = 1e-8               # ADMM 停止判定（絶対）
QP_REL_TOL = 1e-6               # ADMM 停止判定（相対）
QP_MAX_ITERATIONS = 4000        # 根ノード
QP_NODE_ITERATIONS = 400        # 根以外のノード（親の解から再開する）
QP_FACTOR_CACHE_SIZE = 64       # KKT 分解の保持数
GAP_TOLERANCE = 1e-6            # 相対最適性ギャップ
GAP_EPSILON = 1e-10             # gap の分母の下限
BIG_M_FLOOR = 1.0               # b=0 のときの big-M 下限


# --- Primal Heuristics ---
LOCAL_SEARCH_WINDOW = 4         # 付け替える区間の最大弧数
LOCAL_SEARCH_EXTRA_ARCS = 4     # 迂回路で増やせる弧数
LOCAL_SEARCH_MAX_EVALUATIONS = 20_000
CANONICAL_PATH_CAP = 200_000    # 同じ頂点集合の最短経路探索の展開上限


# --- Kernel Parameters ---
# グリッド実験: 二乗指数カーネル
SE_SIGMA0 = 1.0
SE_LENGTH_SCALE = 1.0
SE_NOISE_VARIANCE = 0.1

# PRM 実験: 球形カーネル（Broom's Barn のカリウム値に当てはめたもの）
SPHERICAL_SILL = 0.01519
SPHERICAL_RANGE = 439.2         # メートル
SPHERICAL_NOISE_VARIANCE = 0.002


# --- Graph Defaults ---
GRID_EDGE_LENGTH = 1.0
PRM_BOUNDS = ((0.0, 720.0), (0.0, 1240.0))
PRM_CONNECTION_FACTOR = 8
PRM_VERTICES = 30               # 手元規模（大規模実行は n_vertices=100）
PRM_MAX_RETRIES = 20


# --- Experiment Defaults ---
DEFAULT_RUNS = 5
DEFAULT_PREDICTIONS = 25
DEFAULT_TIME_LIMIT = 120.0      # 秒
BRUTE_FORCE_PATH_CAP = 2_000_000
BRUTE_FORCE_SUBSET_CAP = 1_000_000


# --- Solve Status Constants ---
STATUS_OPTIMAL = "optimal"
STATUS_TIMEOUT_FEASIBLE = "timeout-feasible"
STATUS_TIMEOUT_NO_INCUMBENT = "timeout-no-incumbent"
STATUS_INFEASIBLE = "infeasible"
STATUS_HEURISTIC = "heuristic"       # greedy など最適性の保証がない手法
STATUS_ERROR = "error"


# --- Instance Serialization ---
INSTANCE_SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"          # 17 有効桁でビット単位の往復を保証
