"""
結果の出力（CSV / JSON）
"""

import json
from pathlib import Path
from typing import List, Literal, Sequence

import pandas as pd

from ..config import FLOAT_FORMAT
from ..exceptions import InvalidInstanceError
from ..models import ResultRecord
from ..utils.structured_logger import SLog, LogCategory, LogEvent


REPORT_COLUMNS = ["scenario", "instance", "method", "objective", "time_s", "status", "gap", "nodes"]
ReportFormat = Literal["csv", "json"]


def records_frame(records: Sequence[ResultRecord]) -> pd.DataFrame:
    """結果行を列順固定の DataFrame にする（行順は入力のまま）"""
    return pd.DataFrame([r.model_dump() for r in records], columns=REPORT_COLUMNS)


def emit_report(records: Sequence[ResultRecord], path: str | Path, fmt: ReportFormat = "csv") -> Path:
    """結果を CSV または JSON に書き出す

    CSV の列は scenario,instance,method,objective,time_s,status,gap,nodes。
    浮動小数点は 17 有効桁。空の値は空欄（JSON では null）。
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        frame = records_frame(records)
        frame["nodes"] = frame["nodes"].astype("Int64")
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    elif fmt == "json":
        payload = [{c: r.model_dump()[c] for c in REPORT_COLUMNS} for r in records]
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format: {fmt}")
    SLog.info(LogCategory.REPORT, LogEvent.COMPLETE,
              {"path": str(path), "format": fmt, "records": len(records)},
              f"レポートを出力しました: {path}")
    return path


def load_records(path: str | Path) -> List[ResultRecord]:
    """JSON レポートを読み込む"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [ResultRecord.model_validate(item) for item in payload]
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise InvalidInstanceError(f"malformed results file {path}: {e}") from e
