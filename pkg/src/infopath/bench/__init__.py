"""
ベンチマーク: インスタンス生成・実験実行・結果出力・CLI
"""

from .instances import (
    SweepPoint,
    sweep_points,
    instance_id,
    generate_instance,
    iter_instances,
    serialize_instance,
    parse_instance,
    load_instance,
)
from .experiments import run_method, run_experiment
from .report import REPORT_COLUMNS, records_frame, emit_report, load_records

__all__ = [
    "SweepPoint",
    "sweep_points",
    "instance_id",
    "generate_instance",
    "iter_instances",
    "serialize_instance",
    "parse_instance",
    "load_instance",
    "run_method",
    "run_experiment",
    "REPORT_COLUMNS",
    "records_frame",
    "emit_report",
    "load_records",
]
