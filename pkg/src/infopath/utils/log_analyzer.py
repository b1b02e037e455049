"""
infopath ソルブログ解析ツール

SLog が出力した JSONL ログファイルを解析し、以下の機能を提供します：
1. 基本統計 - ログ件数、ノード数、カット数、エラー数
2. anytime トレース - 暫定解（上界）と大域下界の推移
3. タイムライン表示 - ソルブ / ベンチのイベント一覧
4. トレースの CSV 出力

使用例:
    # コマンドラインから実行
    python -m infopath.utils.log_analyzer logs/infopath_*.jsonl

    # Pythonから使用
    from infopath.utils.log_analyzer import LogAnalyzer
    analyzer = LogAnalyzer("logs/infopath_bench_xxx.jsonl")
    analyzer.print_summary()
    analyzer.export_trace("trace.csv")
"""

import json
import argparse
from pathlib import Path
from typing import List, Dict, Any, Optional
from dataclasses import dataclass, field

import pandas as pd


@dataclass
class LogEntry:
    """ログエントリを表すデータクラス"""
    timestamp: str
    level: str
    category: str
    event: str
    message: Optional[str] = None
    data: Optional[Dict[str, Any]] = None

    @classmethod
    def from_json(cls, json_str: str) -> "LogEntry":
        """JSON文字列からLogEntryを作成"""
        obj = json.loads(json_str)
        return cls(
            timestamp=obj.get("ts", ""),
            level=obj.get("lvl", "INFO"),
            category=obj.get("cat", "UNKNOWN"),
            event=obj.get("evt", "UNKNOWN"),
            message=obj.get("msg"),
            data=obj.get("data")
        )

    @property
    def time_only(self) -> str:
        """時刻部分のみを返す (HH:MM:SS)"""
        if len(self.timestamp) >= 19:
            return self.timestamp[11:19]
        return self.timestamp


@dataclass
class AnalysisResult:
    """解析結果を格納するデータクラス"""
    log_file: Path
    total_logs: int = 0
    solves: int = 0
    nodes: int = 0
    cuts: int = 0
    errors: int = 0
    warnings: int = 0

    # anytime トレース（ソルブ開始からの経過秒, 値）
    incumbent_trace: List[tuple] = field(default_factory=list)
    bound_trace: List[tuple] = field(default_factory=list)
    final_states: List[Dict[str, Any]] = field(default_factory=list)

    error_entries: List[LogEntry] = field(default_factory=list)
    timeline: List[LogEntry] = field(default_factory=list)

    start_time: Optional[str] = None
    end_time: Optional[str] = None


class LogAnalyzer:
    """infopath ログ解析クラス"""

    def __init__(self, log_file: str | Path):
        """
        Args:
            log_file: JSONLログファイルのパス
        """
        self.log_file = Path(log_file)
        self.entries: List[LogEntry] = []
        self.result: Optional[AnalysisResult] = None

        self._load_log()
        self._analyze()

    def _load_log(self):
        """ログファイルを読み込む"""
        if not self.log_file.exists():
            raise FileNotFoundError(f"ログファイルが見つかりません: {self.log_file}")

        with open(self.log_file, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    try:
                        self.entries.append(LogEntry.from_json(line))
                    except json.JSONDecodeError as e:
                        print(f"警告: JSON解析エラー: {e}")

    def _analyze(self):
        """ログを解析"""
        r = AnalysisResult(
            log_file=self.log_file,
            total_logs=len(self.entries),
            timeline=self.entries
        )
        self.result = r

        for entry in self.entries:
            data = entry.data if isinstance(entry.data, dict) else {}
            if entry.category == "SOLVER":
                if entry.event == "START":
                    r.solves += 1
                elif entry.event == "node":
                    r.nodes += 1
                elif entry.event == "cut":
                    r.cuts += 1
                elif entry.event == "incumbent":
                    r.incumbent_trace.append((data.get("t", 0.0), data.get("objective")))
                elif entry.event == "bound":
                    r.bound_trace.append((data.get("t", 0.0), data.get("bound")))
                elif entry.event in ("COMPLETE", "TIMEOUT", "INFEASIBLE"):
                    r.final_states.append(data)

            if entry.level == "ERROR":
                r.errors += 1
                r.error_entries.append(entry)
            elif entry.level == "WARN":
                r.warnings += 1

        if self.entries:
            r.start_time = self.entries[0].timestamp
            r.end_time = self.entries[-1].timestamp

    def is_monotone(self) -> bool:
        """上界が非増加、下界が非減少か（1 ソルブ分のログを想定）"""
        ub = [v for _, v in self.result.incumbent_trace if v is not None]
        lb = [v for _, v in self.result.bound_trace if v is not None]
        return all(b <= a for a, b in zip(ub, ub[1:])) and all(b >= a for a, b in zip(lb, lb[1:]))

    def trace_frame(self) -> pd.DataFrame:
        """incumbent / bound の推移を1つの表にまとめる"""
        rows = [{"t": t, "event": "incumbent", "value": v} for t, v in self.result.incumbent_trace]
        rows += [{"t": t, "event": "bound", "value": v} for t, v in self.result.bound_trace]
        frame = pd.DataFrame(rows, columns=["t", "event", "value"])
        return frame.sort_values("t", kind="stable").reset_index(drop=True)

    def export_trace(self, output_file: Optional[str | Path] = None) -> Path:
        """トレースを CSV に出力

        Args:
            output_file: 出力ファイルパス（省略時はログファイル名_trace.csv）
        """
        if output_file is None:
            output_file = self.log_file.parent / f"{self.log_file.stem}_trace.csv"
        output_file = Path(output_file)
        self.trace_frame().to_csv(output_file, index=False)
        print(f"✅ トレースを出力しました: {output_file}")
        return output_file

    def print_summary(self):
        """サマリーをコンソールに出力"""
        r = self.result

        print("=" * 60)
        print("📊 infopath ログ解析結果")
        print("=" * 60)

        print(f"\n📁 ログファイル: {r.log_file}")

        print(f"""
📈 統計情報:
─────────────────────────────
総ログ数:        {r.total_logs:>5} 件
ソルブ回数:      {r.solves:>5} 回
探索ノード:      {r.nodes:>5} 個
追加カット:      {r.cuts:>5} 本
エラー:          {r.errors:>5} 件
警告:            {r.warnings:>5} 件
─────────────────────────────
""")

        if r.incumbent_trace:
            t, v = r.incumbent_trace[-1]
            print(f"🏁 最終暫定解: {v:.6g}（{t:.3f}s、更新 {len(r.incumbent_trace)} 回）")
        if r.bound_trace:
            t, v = r.bound_trace[-1]
            print(f"📉 最終下界:   {v:.6g}（{t:.3f}s、更新 {len(r.bound_trace)} 回）")

        for state in r.final_states:
            print(f"   status={state.get('status')} gap={state.get('gap')} nodes={state.get('nodes')}")

        if r.error_entries:
            print(f"\n❌ エラー ({len(r.error_entries)}件):")
            for e in r.error_entries:
                msg = e.message or (str(e.data) if e.data else "(メッセージなし)")
                if len(msg) > 70:
                    msg = msg[:67] + "..."
                print(f"  [{e.time_only}] {msg}")

        print("\n" + "=" * 60)


def main(argv: Optional[List[str]] = None):
    """コマンドラインエントリポイント"""
    parser = argparse.ArgumentParser(
        description="infopath ソルブログ解析ツール",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用例:
  # サマリー表示
  python -m infopath.utils.log_analyzer logs/infopath_*.jsonl

  # 上界・下界トレースを CSV に出力
  python -m infopath.utils.log_analyzer logs/infopath_*.jsonl --trace -o trace.csv
"""
    )

    parser.add_argument("log_file", help="解析するJSONLログファイル")
    parser.add_argument("--trace", "-t", action="store_true",
                        help="incumbent / bound トレースを CSV に出力")
    parser.add_argument("--output", "-o", help="出力ファイル")

    args = parser.parse_args(argv)

    try:
        analyzer = LogAnalyzer(args.log_file)
        analyzer.print_summary()
        if args.trace:
            analyzer.export_trace(args.output)

    except FileNotFoundError as e:
        print(f"❌ エラー: {e}")
        return 1
    except Exception as e:
        print(f"❌ 予期しないエラー: {e}")
        import traceback
        traceback.print_exc()
        return 1

    return 0


if __name__ == "__main__":
    exit(main())
