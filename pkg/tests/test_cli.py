"""infopath コマンドラインのテスト"""

import json

import pandas as pd
import pytest

from infopath.bench import load_records
from infopath.bench.cli import build_parser, load_spec, main
from infopath.exceptions import InvalidInstanceError


GRID_SPEC = {
    "scenario": "grid-runtime-vs-budget",
    "sizes": [2, 3],
    "budgets": [4.0],
    "runs": 1,
    "n_predictions": 3,
    "methods": ["bnb", "oracle"],
    "time_limit": 30,
}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(GRID_SPEC), encoding="utf-8")
    return path


class TestLoadSpec:
    """実験設定の読み込みと上書き"""

    def test_overrides(self, spec_file):
        """CLI フラグで seed・制限時間・手法を上書き"""
        spec = load_spec(spec_file, seed=7, time_limit=5.0, methods=["oracle"])
        assert spec.run_seeds() == [7]
        assert spec.time_limit == 5.0
        assert spec.methods == ["oracle"]

    def test_bad_json(self, tmp_path):
        """壊れた設定は InvalidInstanceError"""
        path = tmp_path / "bad.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(InvalidInstanceError):
            load_spec(path)

    def test_parser_requires_command(self):
        """サブコマンドは必須"""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMain:
    """main() の終了コードと出力"""

    def test_gen_writes_instances(self, spec_file, tmp_path):
        """gen がスイープ点ごとに JSON を書く"""
        out = tmp_path / "instances"
        assert main(["-q", "gen", "--spec", str(spec_file), "--seed", "3", "--out", str(out)]) == 0
        names = sorted(p.name for p in out.glob("*.json"))
        assert names == [
            "grid-runtime-vs-budget-n2-L1-B4-r0.json",
            "grid-runtime-vs-budget-n3-L1-B4-r0.json",
        ]

    def test_gen_skips_infeasible(self, tmp_path):
        """予算不足のスイープ点は書かずに続ける"""
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(dict(GRID_SPEC, budgets=[3.0])), encoding="utf-8")
        out = tmp_path / "instances"
        assert main(["-q", "gen", "--spec", str(spec), "--out", str(out)]) == 0
        assert [p.name for p in out.glob("*.json")] == ["grid-runtime-vs-budget-n2-L1-B3-r0.json"]

    def test_solve_writes_record(self, spec_file, tmp_path, capsys):
        """solve が結果を1行出力する"""
        out = tmp_path / "instances"
        main(["-q", "gen", "--spec", str(spec_file), "--out", str(out)])
        inst = out / "grid-runtime-vs-budget-n3-L1-B4-r0.json"
        result = tmp_path / "solve.csv"
        code = main(["-q", "solve", str(inst), "--method", "bnb", "--out", str(result)])
        assert code == 0
        assert "status=optimal" in capsys.readouterr().out
        frame = pd.read_csv(result)
        assert frame["instance"].tolist() == ["grid-runtime-vs-budget-n3-L1-B4-r0"]
        assert frame["scenario"].tolist() == ["solve"]

    def test_solve_infeasible_exit_2(self, tmp_path, capsys):
        """予算不足のインスタンスは終了コード 2"""
        payload = {
            "schema_version": 1,
            "instance": {
                "kind": "ipp",
                "field": {
                    "kernel": {"kind": "squared_exponential", "sigma0": 1.0, "length_scale": 1.0},
                    "noise_variance": 0.1,
                },
                "graph": {
                    "vertices": [[0, 0], [1, 0]],
                    "arcs": [{"tail": 0, "head": 1, "cost": 1.0}],
                    "start": 0,
                    "end": 1,
                },
                "predictions": {"points": [[0.5, 0.5]], "weights": [1.0]},
                "budget": 0.5,
            },
        }
        path = tmp_path / "infeasible.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        assert main(["-q", "solve", str(path)]) == 2
        assert "❌" in capsys.readouterr().out

    def test_missing_spec_exit_1(self, tmp_path):
        """存在しない設定ファイルは終了コード 1"""
        assert main(["-q", "bench", "--spec", str(tmp_path / "missing.json")]) == 1

    def test_bench_and_report(self, spec_file, tmp_path):
        """bench の JSON を report で CSV に変換"""
        results = tmp_path / "results.json"
        assert main(["-q", "bench", "--spec", str(spec_file), "--format", "json",
                     "--out", str(results)]) == 0
        records = load_records(results)
        assert [(r.method, r.status) for r in records] == [
            ("bnb", "optimal"), ("oracle", "optimal"), ("bnb", "optimal"), ("oracle", "optimal")]

        csv_path = tmp_path / "results.csv"
        assert main(["-q", "report", str(results), "--out", str(csv_path)]) == 0
        assert len(csv_path.read_text(encoding="utf-8").splitlines()) == 5

    def test_bench_method_override(self, spec_file, tmp_path):
        """--method で手法を絞る"""
        results = tmp_path / "results.json"
        main(["-q", "bench", "--spec", str(spec_file), "--method", "oracle",
              "--format", "json", "--out", str(results)])
        assert {r.method for r in load_records(results)} == {"oracle"}

    def test_log_dir_creates_jsonl(self, spec_file, tmp_path):
        """--log-dir を指定すると JSONL ログが残る"""
        logs = tmp_path / "logs"
        main(["-q", "--log-dir", str(logs), "gen", "--spec", str(spec_file),
              "--out", str(tmp_path / "instances")])
        files = list(logs.glob("infopath_gen_*.jsonl"))
        assert len(files) == 1
        events = [json.loads(line)["cat"] for line in files[0].read_text(encoding="utf-8").splitlines()]
        assert "SESSION" in events
