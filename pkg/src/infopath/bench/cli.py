"""
infopath コマンドライン

サブコマンド:
    gen     実験設定からインスタンスを生成して JSON で保存
    solve   1インスタンスを指定手法で解く
    bench   実験設定を実行して結果を CSV / JSON に出力
    report  結果 JSON を CSV / JSON に変換

終了コード: 0 成功、2 実行不能なインスタンス、1 その他のエラー

使用例:
    infopath gen --spec specs/grid.json --seed 7 --out instances/
    infopath solve instances/grid-runtime-vs-budget-n3-L1-B4-r0.json --method miqp
    infopath bench --spec specs/grid.json --seed 7 --out results.csv
    infopath report results.json --out results.csv --format csv
"""

import argparse
import json
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from ..config import DEFAULT_TIME_LIMIT
from ..exceptions import InfeasibleInstanceError, InvalidInstanceError
from ..models import ExperimentSpec, IppInstance
from ..utils.structured_logger import SLog, LogCategory, LogEvent
from .experiments import run_experiment, run_method
from .instances import generate_instance, iter_instances, load_instance, serialize_instance
from .report import emit_report, load_records


METHODS = ["miqp", "bnb", "greedy", "oracle"]


def load_spec(path: str | Path, seed: Optional[int] = None, time_limit: Optional[float] = None,
              methods: Optional[List[str]] = None) -> ExperimentSpec:
    """実験設定 JSON を読み込み、CLI フラグで上書きする"""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if seed is not None:
            data["base_seed"] = seed
            data["seeds"] = None
        if time_limit is not None:
            data["time_limit"] = time_limit
        if methods:
            data["methods"] = methods
        return ExperimentSpec.model_validate(data)
    except (json.JSONDecodeError, ValidationError) as e:
        raise InvalidInstanceError(f"invalid experiment spec {path}: {e}") from e


def _cmd_gen(args) -> int:
    spec = load_spec(args.spec, seed=args.seed)
    out = Path(args.out)
    written = 0
    for inst_id, point, _, seed in iter_instances(spec):
        try:
            inst = generate_instance(spec, point, seed)
        except InfeasibleInstanceError as e:
            print(f"⚠️ {inst_id}: {e}")
            continue
        serialize_instance(inst, out / f"{inst_id}.json")
        written += 1
    print(f"✅ {written} 個のインスタンスを {out} に保存しました")
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    record = run_method(args.method, inst, scenario="solve", instance=Path(args.instance).stem,
                        time_limit=args.time_limit, seed=args.seed or 0)
    kind = "IPP" if isinstance(inst, IppInstance) else "Sparse-SS"
    print(f"🏁 {kind} / {args.method}: status={record.status} objective={record.objective} "
          f"gap={record.gap} nodes={record.nodes} time={record.time_s:.3f}s")
    if args.out:
        emit_report([record], args.out, args.format)
    return 0


def _cmd_bench(args) -> int:
    spec = load_spec(args.spec, seed=args.seed, time_limit=args.time_limit, methods=args.method)
    records = run_experiment(spec)
    out = args.out or f"results.{args.format}"
    emit_report(records, out, args.format)
    print(f"✅ {len(records)} レコードを {out} に出力しました")
    return 0


def _cmd_report(args) -> int:
    records = load_records(args.results)
    emit_report(records, args.out, args.format)
    print(f"✅ {len(records)} レコードを {args.out} に出力しました")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infopath",
        description="ランダム場における情報収集経路計画（MIQP）",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--log-dir", help="JSONL ログの出力先（省略時はファイル出力なし）")
    parser.add_argument("--quiet", "-q", action="store_true", help="コンソール出力を抑制")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="インスタンス生成")
    gen.add_argument("--spec", required=True, help="実験設定 JSON")
    gen.add_argument("--seed", type=int, help="基準シード")
    gen.add_argument("--out", required=True, help="出力ディレクトリ")
    gen.set_defaults(func=_cmd_gen)

    solve = sub.add_parser("solve", help="1インスタンスを解く")
    solve.add_argument("instance", help="インスタンス JSON")
    solve.add_argument("--method", choices=METHODS, default="miqp")
    solve.add_argument("--time-limit", type=float, default=DEFAULT_TIME_LIMIT)
    solve.add_argument("--seed", type=int, help="ソルバーのシード")
    solve.add_argument("--out", help="結果の出力先")
    solve.add_argument("--format", choices=["csv", "json"], default="csv")
    solve.set_defaults(func=_cmd_solve)

    bench = sub.add_parser("bench", help="実験を実行")
    bench.add_argument("--spec", required=True, help="実験設定 JSON")
    bench.add_argument("--seed", type=int, help="基準シード")
    bench.add_argument("--time-limit", type=float, help="手法ごとの制限時間（秒）")
    bench.add_argument("--method", choices=METHODS, action="append", help="実行する手法（複数指定可）")
    bench.add_argument("--out", help="結果の出力先")
    bench.add_argument("--format", choices=["csv", "json"], default="csv")
    bench.set_defaults(func=_cmd_bench)

    report = sub.add_parser("report", help="結果 JSON を変換")
    report.add_argument("results", help="結果 JSON")
    report.add_argument("--out", required=True, help="出力先")
    report.add_argument("--format", choices=["csv", "json"], default="csv")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """コマンドラインエントリポイント"""
    args = build_parser().parse_args(argv)
    if args.quiet:
        SLog.set_console(False)
    if args.log_dir:
        SLog.init(args.command, Path(args.log_dir))

    try:
        return args.func(args)
    except InfeasibleInstanceError as e:
        print(f"❌ 実行不能: {e}")
        SLog.error(LogCategory.ERROR, LogEvent.INFEASIBLE, {"error": str(e)}, str(e))
        return 2
    except Exception as e:
        print(f"❌ エラー: {type(e).__name__}: {e}")
        SLog.error(LogCategory.ERROR, LogEvent.FAIL, {"error": f"{type(e).__name__}: {e}"})
        return 1
    finally:
        if args.log_dir:
            SLog.close()
        if args.quiet:
            SLog.set_console(True)


if __name__ == "__main__":
    exit(main())
