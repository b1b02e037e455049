"""ベンチマーク（インスタンス生成・保存・実験・レポート）のテスト"""

import json

import pandas as pd
import pytest

from infopath.baselines import greedy_ss
from infopath.bench import (
    REPORT_COLUMNS,
    emit_report,
    generate_instance,
    iter_instances,
    load_instance,
    load_records,
    parse_instance,
    run_experiment,
    run_method,
    serialize_instance,
    sweep_points,
)
from infopath.exceptions import InfeasibleInstanceError, InvalidInstanceError, SchemaVersionError
from infopath.models import ExperimentSpec, IppInstance, ResultRecord, SparseSsInstance, SubsetSolution


TWO_NODE_FILE = {
    "schema_version": 1,
    "instance": {
        "kind": "ipp",
        "field": {
            "kernel": {"kind": "squared_exponential", "sigma0": 1.0, "length_scale": 1.0},
            "noise_variance": 0.1,
        },
        "graph": {
            "vertices": [[0, 0], [1, 0]],
            "arcs": [{"tail": 0, "head": 1, "cost": 1.0}, {"tail": 1, "head": 0, "cost": 1.0}],
            "start": 0,
            "end": 1,
        },
        "predictions": {"points": [[0.5, 0.5]], "weights": [1.0]},
        "budget": 1.0,
    },
}


def _grid_spec(**updates) -> ExperimentSpec:
    data = {
        "scenario": "grid-runtime-vs-budget",
        "sizes": [2],
        "budgets": [2.0],
        "runs": 1,
        "n_predictions": 4,
        "methods": ["oracle"],
        "time_limit": 30,
    }
    data.update(updates)
    return ExperimentSpec.model_validate(data)


def _record(**updates) -> ResultRecord:
    data = {"scenario": "s", "instance": "i", "method": "miqp", "objective": 0.1234567890123456789,
            "time_s": 0.5, "status": "optimal", "gap": 0.0, "nodes": 7}
    data.update(updates)
    return ResultRecord(**data)


class TestExperimentSpec:
    """実験設定の検証"""

    def test_subset_needs_cardinalities(self):
        """subset-selection には k のスイープが必要"""
        with pytest.raises(ValueError):
            ExperimentSpec(scenario="subset-selection", sizes=[5], methods=["miqp"])

    def test_greedy_only_for_subsets(self):
        """greedy は経路シナリオでは使えない"""
        with pytest.raises(ValueError):
            _grid_spec(methods=["greedy"])

    def test_run_seeds(self):
        """シード省略時は base_seed + run"""
        assert _grid_spec(runs=3, base_seed=10).run_seeds() == [10, 11, 12]
        assert _grid_spec(runs=2, seeds=[5, 9]).run_seeds() == [5, 9]


class TestInstances:
    """インスタンス生成"""

    def test_sweep_order(self):
        """(size, L, budget) の辞書式順"""
        spec = _grid_spec(sizes=[2, 3], budgets=[4.0, 5.0], length_scales=[1.0, 0.5])
        points = sweep_points(spec)
        assert [(p.size, p.length_scale, p.budget) for p in points][:3] == [
            (2, 1.0, 4.0), (2, 1.0, 5.0), (2, 0.5, 4.0)]
        assert len(points) == 8

    def test_generate_grid_instance(self):
        """格子インスタンスの中身"""
        spec = _grid_spec(sizes=[3], budgets=[6.0])
        point = sweep_points(spec)[0]
        inst = generate_instance(spec, point, seed=0)
        assert isinstance(inst, IppInstance)
        assert inst.graph.n_vertices == 9
        assert len(inst.predictions) == 4
        assert inst.budget == 6.0
        assert all(0.0 <= w <= 1.0 for w in inst.predictions.weights)

    def test_same_seed_same_instance(self):
        """同じシードなら同じインスタンス"""
        spec = _grid_spec(sizes=[3], budgets=[6.0])
        point = sweep_points(spec)[0]
        assert generate_instance(spec, point, 3) == generate_instance(spec, point, 3)
        assert generate_instance(spec, point, 3) != generate_instance(spec, point, 4)

    def test_budget_does_not_change_predictions(self):
        """予算だけ違うスイープ点は予測点集合が同じ"""
        spec = _grid_spec(sizes=[3], budgets=[4.0, 8.0])
        a, b = (generate_instance(spec, p, 1) for p in sweep_points(spec))
        assert a.predictions == b.predictions

    def test_generate_subset_instance(self):
        """subset-selection は [0, √M]² の候補点"""
        spec = ExperimentSpec(scenario="subset-selection", sizes=[9], cardinalities=[3],
                              methods=["greedy"], runs=1)
        inst = generate_instance(spec, sweep_points(spec)[0], 0)
        assert isinstance(inst, SparseSsInstance)
        assert inst.k == 3
        assert all(0.0 <= c <= 3.0 for p in inst.observations for c in p)

    def test_generate_infeasible_budget(self):
        """B < 最短距離なら InfeasibleInstanceError"""
        spec = _grid_spec(sizes=[3], budgets=[3.0])
        with pytest.raises(InfeasibleInstanceError):
            generate_instance(spec, sweep_points(spec)[0], 0)

    def test_iter_instances_ids(self):
        """インスタンス ID はスイープ点と実行回を含む"""
        ids = [i for i, _, _, _ in iter_instances(_grid_spec(runs=2))]
        assert ids == ["grid-runtime-vs-budget-n2-L1-B2-r0", "grid-runtime-vs-budget-n2-L1-B2-r1"]


class TestSerialization:
    """インスタンスの保存と読み込み"""

    def test_round_trip(self, tmp_path):
        """保存して読み込むと等しい（浮動小数点もビット一致）"""
        spec = _grid_spec(sizes=[3], budgets=[6.0])
        inst = generate_instance(spec, sweep_points(spec)[0], 7)
        path = serialize_instance(inst, tmp_path / "inst.json")
        loaded = load_instance(path)
        assert loaded == inst
        assert loaded.predictions.weights == inst.predictions.weights

    def test_hand_written_two_node(self, tmp_path):
        """手書きの2頂点インスタンスを読める"""
        path = tmp_path / "two.json"
        path.write_text(json.dumps(TWO_NODE_FILE), encoding="utf-8")
        inst = load_instance(path)
        assert inst.graph.vertices == [(0.0, 0.0), (1.0, 0.0)]
        assert inst.graph.cost(0, 1) == 1.0
        assert (inst.graph.start, inst.graph.end) == (0, 1)

    def test_infeasible_budget_file(self):
        """B < 最短距離のファイルは infeasible budget エラー"""
        payload = json.loads(json.dumps(TWO_NODE_FILE))
        payload["instance"]["budget"] = 0.5
        with pytest.raises(InfeasibleInstanceError, match="infeasible budget"):
            parse_instance(payload)

    def test_schema_version_mismatch(self):
        """スキーマバージョン不一致"""
        payload = dict(TWO_NODE_FILE, schema_version=2)
        with pytest.raises(SchemaVersionError):
            parse_instance(payload)

    def test_malformed(self, tmp_path):
        """壊れた JSON・不正なフィールドは InvalidInstanceError"""
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(InvalidInstanceError):
            load_instance(bad)
        payload = json.loads(json.dumps(TWO_NODE_FILE))
        payload["instance"]["graph"]["arcs"][0]["cost"] = -1.0
        with pytest.raises(InvalidInstanceError):
            parse_instance(payload)


class TestReport:
    """結果の出力"""

    def test_empty_csv_is_header_only(self, tmp_path):
        """レコードなし → ヘッダのみ"""
        path = emit_report([], tmp_path / "empty.csv")
        assert path.read_text(encoding="utf-8") == ",".join(REPORT_COLUMNS) + "\n"

    def test_two_records_three_lines(self, tmp_path):
        """2レコード → 3行"""
        path = emit_report([_record(), _record(method="bnb", gap=None)], tmp_path / "r.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert lines[2].split(",")[6] == ""

    def test_csv_and_json_agree(self, tmp_path):
        """CSV と JSON の値が一致（17 有効桁）"""
        records = [_record(), _record(method="oracle", gap=None, nodes=None, objective=2.0 / 3.0)]
        csv_path = emit_report(records, tmp_path / "r.csv", "csv")
        json_path = emit_report(records, tmp_path / "r.json", "json")
        frame = pd.read_csv(csv_path, float_precision="round_trip")
        payload = json.loads(json_path.read_text(encoding="utf-8"))
        assert list(frame.columns) == REPORT_COLUMNS
        assert list(payload[0].keys()) == REPORT_COLUMNS
        assert frame["objective"].tolist() == [r["objective"] for r in payload]
        assert frame["time_s"].tolist() == [r["time_s"] for r in payload]
        assert payload[1]["nodes"] is None

    def test_load_records(self, tmp_path):
        """JSON レポートを読み戻せる"""
        records = [_record(), _record(instance="j")]
        path = emit_report(records, tmp_path / "r.json", "json")
        assert load_records(path) == records

    def test_unknown_format(self, tmp_path):
        """未知の形式はエラー"""
        with pytest.raises(ValueError):
            emit_report([], tmp_path / "r.txt", "xml")


class TestRunMethod:
    """1手法の実行"""

    def test_objective_passed_through(self, separable_ss):
        """目的値は手法が返した値そのまま"""
        record = run_method("greedy", separable_ss, "subset-selection", "separable", time_limit=10)
        assert record.objective == greedy_ss(separable_ss).objective
        assert record.status == "heuristic"

    def test_negative_objective_is_not_hidden(self, separable_ss, monkeypatch):
        """負の目的値は 0 に丸めず検証エラーになる"""
        from pydantic import ValidationError

        from infopath.bench import experiments

        monkeypatch.setattr(experiments, "greedy_ss",
                            lambda inst: SubsetSolution(indices=[1, 3, 5], objective=-1e-3))
        with pytest.raises(ValidationError):
            run_method("greedy", separable_ss, "subset-selection", "separable", time_limit=10)


class TestRunExperiment:
    """実験の実行"""

    def test_single_point_single_record(self):
        """1点・1回・oracle → 1レコード"""
        records = run_experiment(_grid_spec())
        assert len(records) == 1
        assert records[0].method == "oracle"
        assert records[0].status == "optimal"
        assert records[0].objective is not None

    def test_methods_agree_on_small_grid(self):
        """miqp・bnb・oracle が同じ目的値"""
        records = run_experiment(_grid_spec(sizes=[3], budgets=[5.0], methods=["miqp", "bnb", "oracle"]))
        assert [r.method for r in records] == ["miqp", "bnb", "oracle"]
        values = [r.objective for r in records]
        assert values[0] == pytest.approx(values[2], rel=1e-6)
        assert values[1] == pytest.approx(values[2], rel=1e-9)
        assert records[0].gap is not None and records[0].gap <= 1e-6
        assert records[1].gap is None

    def test_infeasible_point_recorded(self):
        """実行不能なスイープ点は infeasible として記録しスイープは続く"""
        records = run_experiment(_grid_spec(sizes=[3], budgets=[3.0, 4.0]))
        assert [r.status for r in records] == ["infeasible", "optimal"]
        assert records[0].objective is None

    def test_deterministic(self):
        """同じ設定とシードなら目的値の列が同じ"""
        spec = _grid_spec(sizes=[3], budgets=[6.0], runs=2, methods=["miqp", "oracle"])
        first = [r.objective for r in run_experiment(spec)]
        second = [r.objective for r in run_experiment(spec)]
        assert first == second

    def test_workers_keep_order(self):
        """並列実行でも結果の順序は固定"""
        spec = _grid_spec(sizes=[2, 3], budgets=[4.0], runs=2, methods=["bnb", "oracle"])
        serial = run_experiment(spec)
        parallel = run_experiment(spec.model_copy(update={"workers": 3}))
        assert [(r.instance, r.method) for r in serial] == [(r.instance, r.method) for r in parallel]
        assert [r.objective for r in serial] == [r.objective for r in parallel]

    def test_subset_selection_greedy_vs_oracle(self):
        """subset-selection: greedy ≥ oracle"""
        spec = ExperimentSpec(scenario="subset-selection", sizes=[6], cardinalities=[2],
                              methods=["greedy", "oracle", "miqp"], runs=1, n_predictions=3)
        greedy, oracle, miqp = run_experiment(spec)
        assert greedy.status == "heuristic"
        assert greedy.objective >= oracle.objective - 1e-12
        assert miqp.objective == pytest.approx(oracle.objective, rel=1e-6)
