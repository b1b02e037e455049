"""
infopath の例外階層

入力不正（ValueError 系）と内部エラー（RuntimeError 系）を分けて定義する。
CLI はこの階層で終了コードを決める（InfeasibleInstanceError → 2, その他 → 1）。
"""


class InfopathError(Exception):
    """infopath の全例外の基底クラス"""


class InvalidInstanceError(InfopathError, ValueError):
    """入力インスタンスが不正（次元不一致、重複点、スキーマ違反など）"""


class InfeasibleInstanceError(InvalidInstanceError):
    """予算が最短 s-t 距離を下回るなど、実行可能解が存在しない"""


class SchemaVersionError(InvalidInstanceError):
    """インスタンスファイルのスキーマバージョン不一致"""


class GraphConstructionError(InfopathError):
    """PRM 生成で s-t 連結なグラフを作れなかった"""


class EnumerationCapExceeded(InfopathError):
    """総当たりオラクルが列挙上限を超えた"""


class InternalSolverError(InfopathError, RuntimeError):
    """ソルバー内部の整合性違反（正常な入力では起こらない）"""


class DegreeInfeasibleError(InternalSolverError):
    """弧選択が次数制約を満たしていない"""


class SubtourPresentError(InternalSolverError):
    """部分巡回路が残ったまま経路を取り出そうとした"""


class BrokenPathError(InternalSolverError):
    """s から t への弧の連鎖が途切れている"""
