"""
進捗管理モジュール

分枝限定法の進捗（anytime な上界・下界の推移）を追跡するモデルを提供します。
- SolveEvent: node / cut / incumbent / bound の1イベント
- SolveTrace: イベント列（機械可読なソルブログ）
- SolveState: 暫定解・大域下界・ギャップ・ステータス
"""

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from .config import (
    GAP_EPSILON,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_TIMEOUT_FEASIBLE,
    STATUS_TIMEOUT_NO_INCUMBENT,
)
from .utils.structured_logger import SLog, LogCategory


EventKind = Literal["node", "cut", "incumbent", "bound"]
SolveStatus = Literal["optimal", "timeout-feasible", "timeout-no-incumbent", "infeasible", "running"]


class SolveEvent(BaseModel):
    """ソルブログの1レコード

    Attributes:
        t: ソルブ開始からの経過秒
        event: イベント種別
        values: イベント固有の値（bound, objective, vertices など）
    """
    t: float = Field(ge=0, description="経過時間（秒）")
    event: EventKind
    values: Dict[str, Any] = Field(default_factory=dict)

    def to_log_dict(self) -> dict:
        return {"t": self.t, "event": self.event, **self.values}


class SolveTrace(BaseModel):
    """イベント列

    record() はメモリに追記すると同時に SLog.debug へ流すので、
    ログファイルを開いていれば JSONL に同じストリームが残る。
    """
    events: List[SolveEvent] = Field(default_factory=list)

    def record(self, t: float, event: EventKind, **values: Any) -> SolveEvent:
        ev = SolveEvent(t=t, event=event, values=values)
        self.events.append(ev)
        SLog.debug(LogCategory.SOLVER, event, ev.to_log_dict())
        return ev

    def of_kind(self, event: EventKind) -> List[SolveEvent]:
        return [e for e in self.events if e.event == event]

    def incumbent_values(self) -> List[float]:
        return [e.values["objective"] for e in self.of_kind("incumbent")]

    def bound_values(self) -> List[float]:
        return [e.values["bound"] for e in self.of_kind("bound")]


class Incumbent(BaseModel):
    """暫定解（常に整数実行可能で部分巡回路なし）

    Attributes:
        assignment: バイナリ変数の値（0/1）
        objective: 厳密に再計算した目的値
        found_at: 発見時刻（経過秒）
        source: 発見元（relaxation / heuristic / leaf / initial）
    """
    assignment: List[int]
    objective: float
    found_at: float = 0.0
    source: str = "relaxation"


class SolveState(BaseModel):
    """ソルブの状態と結果

    Attributes:
        incumbent: 暫定解（上界）
        global_lower_bound: 大域下界（単調非減少）
        nodes_explored: 処理したノード数
        cuts_added: 追加した遅延制約の数
        status: 終了ステータス
        elapsed: 経過秒
        trace: anytime ストリーム
    """
    incumbent: Optional[Incumbent] = None
    global_lower_bound: float = -math.inf
    nodes_explored: int = 0
    cuts_added: int = 0
    status: SolveStatus = "running"
    elapsed: float = 0.0
    trace: SolveTrace = Field(default_factory=SolveTrace)

    @property
    def upper_bound(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else math.inf

    @property
    def gap(self) -> float:
        """(ub − lb) / max(|ub|, ε)。暫定解がなければ inf"""
        if self.incumbent is None:
            return math.inf
        ub = self.incumbent.objective
        if not math.isfinite(self.global_lower_bound):
            return math.inf
        return max(0.0, (ub - self.global_lower_bound) / max(abs(ub), GAP_EPSILON))

    def raise_lower_bound(self, value: float, t: float) -> bool:
        """下界を更新（下がる方向の更新は無視）。更新したら bound イベントを記録"""
        if value > self.global_lower_bound:
            self.global_lower_bound = value
            self.trace.record(t, "bound", bound=value)
            return True
        return False

    def finish(self, status: SolveStatus, elapsed: float) -> None:
        self.status = status
        self.elapsed = elapsed

    def to_log_dict(self) -> dict:
        """ログ出力用の辞書を返す"""
        return {
            "status": self.status,
            "objective": self.incumbent.objective if self.incumbent else None,
            "lower_bound": self.global_lower_bound if math.isfinite(self.global_lower_bound) else None,
            "gap": self.gap if math.isfinite(self.gap) else None,
            "nodes": self.nodes_explored,
            "cuts": self.cuts_added,
            "elapsed": self.elapsed,
        }

    def get_progress_summary(self) -> str:
        """人間向けの進捗サマリー"""
        status_icon = {
            STATUS_OPTIMAL: "✅",
            STATUS_TIMEOUT_FEASIBLE: "⏱️",
            STATUS_TIMEOUT_NO_INCUMBENT: "⏱️",
            STATUS_INFEASIBLE: "❌",
            "running": "🔄",
        }.get(self.status, "?")
        ub = f"{self.upper_bound:.6g}" if self.incumbent else "-"
        lb = f"{self.global_lower_bound:.6g}" if math.isfinite(self.global_lower_bound) else "-"
        gap = f"{self.gap:.2e}" if math.isfinite(self.gap) else "-"
        return (f"{status_icon} {self.status}: 上界 {ub} / 下界 {lb} / gap {gap} "
                f"（ノード {self.nodes_explored}、カット {self.cuts_added}、{self.elapsed:.2f}s）")
