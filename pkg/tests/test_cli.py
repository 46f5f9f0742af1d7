import json

import pytest
from click.testing import CliRunner

from golden_session import golden_session
from slidetrace.cli import main
from slidetrace.logs import serialize_session_log


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def session_file(tmp_path):
    path = tmp_path / "session.jsonl"
    path.write_text(serialize_session_log(golden_session()))
    return path


ENDPOINT_CFG = {
    "type": "scripted",
    "rules": [
        {"anchor": "initial impression of the overall image", "response": "<impression>ok</impression>"},
        {"anchor": "impression on this region", "response": "Atypical cells."},
        {
            "anchor": "comprehensive final pathological impression",
            "response": (
                "<final_impression>Negative nodes.</final_impression>"
                "<recommendations>None.</recommendations>"
                "<diagnostic_info>\nPT_or_LN: LN\nt_stage: 0\nlymph_node_positive: false\n"
                "positive_regions: []\nsuspicious_regions: []\n</diagnostic_info>"
            ),
        },
    ],
}


class TestSegmentCommand:
    def test_writes_actions(self, runner, session_file, tmp_path):
        out = tmp_path / "actions.json"
        result = runner.invoke(main, ["segment", "--input", str(session_file), "--output", str(out)])
        assert result.exit_code == 0, result.output
        actions = json.loads(out.read_text())
        assert len(actions) == 3
        assert {a["kind"] for a in actions} == {"stay_inspect", "pan_inspect", "peek"}

    def test_schema_error_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"session_id": "s"}\n')
        out = tmp_path / "actions.json"
        result = runner.invoke(main, ["segment", "--input", str(bad), "--output", str(out)])
        assert result.exit_code == 2

    def test_invalid_session_exits_2(self, runner, tmp_path):
        doc = (
            json.dumps(
                {
                    "session_id": "s",
                    "pathologist_id": "p",
                    "slide": {"slide_id": "x", "width_px": 100, "height_px": 100, "native_magnification": 40},
                }
            )
            + "\n"
            + json.dumps({"t_ms": 0, "center_x": 500, "center_y": 0, "magnification": 10})
        )
        bad = tmp_path / "oob.jsonl"
        bad.write_text(doc)
        result = runner.invoke(main, ["segment", "--input", str(bad), "--output", str(tmp_path / "o.json")])
        assert result.exit_code == 2

    def test_config_override(self, runner, session_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stay_dwell_s": 99.0, "pan_duration_s": 99.0, "peek_min_dwell_s": 99.0}))
        out = tmp_path / "actions.json"
        result = runner.invoke(
            main,
            ["segment", "--input", str(session_file), "--config", str(cfg), "--output", str(out)],
        )
        assert result.exit_code == 0
        assert json.loads(out.read_text()) == []


@pytest.fixture
def dataset_inputs(runner, session_file, tmp_path):
    actions_path = tmp_path / "actions.json"
    runner.invoke(main, ["segment", "--input", str(session_file), "--output", str(actions_path)])
    n = len(json.loads(actions_path.read_text()))
    rationales = {
        f"a{i}": {
            "thumbnail_impression": "Node overview.",
            "why_zoom": "Pale area near the sinus.",
            "findings": "No malignant cells seen.",
            "sentences": [],
            "tags": [["Sinus"], ["Lymphocyte"]],
        }
        for i in range(n)
    }
    decisions = {f"a{i}": {"verdict": "accepted" if i else "rejected"} for i in range(n)}
    r_path = tmp_path / "rationales.json"
    d_path = tmp_path / "decisions.json"
    r_path.write_text(json.dumps(rationales))
    d_path.write_text(json.dumps(decisions))
    return actions_path, r_path, d_path


class TestDatasetCommands:
    def test_build_and_stats(self, runner, session_file, dataset_inputs, tmp_path):
        actions_path, r_path, d_path = dataset_inputs
        out_dir = tmp_path / "dataset"
        result = runner.invoke(
            main,
            [
                "build-dataset",
                "--session", str(session_file),
                "--actions", str(actions_path),
                "--rationales", str(r_path),
                "--decisions", str(d_path),
                "--out", str(out_dir),
            ],
        )
        assert result.exit_code == 0, result.output
        conversation = json.loads((out_dir / "golden-1" / "conversation.json").read_text())
        assert conversation["turns"][0]["role"] == "system"
        rows = json.loads((out_dir / "golden-1" / "rounds.json").read_text())
        assert {row["split"] for row in rows} == {"training", "audit"}

        stats_path = tmp_path / "stats.json"
        result = runner.invoke(main, ["stats", "--dataset", str(out_dir), "--out", str(stats_path)])
        assert result.exit_code == 0, result.output
        stats = json.loads(stats_path.read_text())
        assert stats["session_count"] == 1
        assert stats["round_count"] == 2  # one of three rejected
        assert stats["rounds_per_pathologist"] == {"p1": 2}
        assert stats["sankey"]


class TestDiagnoseCommand:
    def test_scripted_case(self, runner, tmp_path):
        slide_path = tmp_path / "meta.json"
        slide_path.write_text(
            json.dumps({"slide_id": "S1", "width_px": 20000, "height_px": 10000, "native_magnification": 40})
        )
        proposals_path = tmp_path / "boxes.json"
        proposals_path.write_text(
            json.dumps([{"box": {"x": 1000, "y": 1000, "w": 900, "h": 900}, "score": 0.9}])
        )
        endpoint_path = tmp_path / "endpoint.json"
        endpoint_path.write_text(json.dumps(ENDPOINT_CFG))
        out = tmp_path / "case.json"
        result = runner.invoke(
            main,
            [
                "diagnose",
                "--slide", str(slide_path),
                "--proposals", str(proposals_path),
                "--endpoint", str(endpoint_path),
                "--order", "forward",
                "--cap", "8",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        case = json.loads(out.read_text())
        assert case["diagnostic"]["lymph_node_positive"] is False
        assert len(case["roi_analyses"]) == 1


class TestEvaluateCommand:
    def test_report(self, runner, tmp_path):
        cases = tmp_path / "cases"
        expert = tmp_path / "expert"
        cases.mkdir()
        expert.mkdir()
        boxes = [{"x": 0, "y": 0, "w": 10, "h": 10}, {"x": 50, "y": 50, "w": 10, "h": 10}]
        cases.joinpath("c1.json").write_text(json.dumps(boxes))
        expert.joinpath("c1.json").write_text(json.dumps(boxes[:1]))
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            [
                "evaluate",
                "--cases", str(cases),
                "--expert", str(expert),
                "--bootstrap", "100",
                "--seed", "1",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["cases"]["c1"]["efficiency"] == 0.5
        assert report["cases"]["c1"]["completeness"] == 1.0
        assert report["aggregate"]["efficiency"]["point"] == 0.5
