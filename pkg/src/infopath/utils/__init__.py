"""
Utility modules for infopath.
"""

from .structured_logger import StructuredLogger, SLog, LogCategory, LogEvent
from .log_analyzer import LogAnalyzer, LogEntry, AnalysisResult

__all__ = [
    'StructuredLogger',
    'SLog',
    'LogCategory',
    'LogEvent',
    'LogAnalyzer',
    'LogEntry',
    'AnalysisResult',
]
