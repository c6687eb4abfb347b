"""Command line entry points and their exit codes."""

import json

import pytest

from stepqa.cli import EX_ERROR, EX_NOT_FOUND, EX_OK, EX_USAGE, main

from conftest import WORLDS

DEMO = str(WORLDS / "demo_house.json")


class TestAsk:
    def test_answered_question_exits_zero(self, capsys):
        code = main(
            ["ask", "What color is the sofa in the living room?", "--world", DEMO]
        )
        out = capsys.readouterr().out
        assert code == EX_OK
        assert "answer: blue" in out
        assert "status: answered" in out

    def test_timeline_shows_plans_and_tools(self, capsys):
        main(
            [
                "ask",
                "What is the title of the book on the coffee table in the living room?",
                "--world",
                DEMO,
            ]
        )
        out = capsys.readouterr().out
        assert "pattern: V2[living room] -> V3[coffee table] -> V4(A)[book] -> A[title]" in out
        assert "MoveTo living room" in out
        assert "[rules]" in out
        assert "answer: war and peace" in out

    def test_unanswerable_question_exits_two(self, capsys):
        code = main(["ask", "Where is the trombone?", "--world", DEMO])
        assert code == EX_NOT_FOUND
        assert "status: not_found" in capsys.readouterr().out

    def test_unparseable_question_exits_one(self, capsys):
        code = main(["ask", "Ponder the meaning of furniture.", "--world", DEMO])
        assert code == EX_ERROR

    def test_missing_world_file_exits_one(self, capsys):
        code = main(["ask", "Where is the bag?", "--world", "/nonexistent.json"])
        assert code == EX_ERROR
        assert "error:" in capsys.readouterr().err

    def test_trace_flag_writes_jsonl(self, tmp_path, capsys):
        trace = tmp_path / "trace.jsonl"
        code = main(
            ["ask", "Which room is the bed in?", "--world", DEMO, "--trace", str(trace)]
        )
        assert code == EX_OK
        lines = [json.loads(l) for l in trace.read_text().splitlines()]
        assert lines[0]["kind"] == "header"
        assert lines[-1]["status"] == "answered"

    def test_room_level_only_flag(self, capsys):
        code = main(
            [
                "ask",
                "What is the title of the book on the coffee table in the living room?",
                "--world",
                DEMO,
                "--room-level-only",
            ]
        )
        assert code == EX_NOT_FOUND


class TestValidateWorld:
    def test_truth_file_passes(self, capsys):
        code = main(["validate-world", DEMO])
        out = capsys.readouterr().out
        assert code == EX_OK
        assert "ok:" in out
        assert "4 rooms" in out

    def test_strict_prior_rejects_truth_files(self, capsys):
        code = main(["validate-world", DEMO, "--strict-prior"])
        assert code == EX_ERROR
        assert "invalid:" in capsys.readouterr().err

    def test_strict_prior_accepts_prior_files(self, tmp_path, demo_truth, capsys):
        p = tmp_path / "prior.json"
        p.write_text(json.dumps(demo_truth.prior_graph().to_prior_dict()))
        assert main(["validate-world", str(p), "--strict-prior"]) == EX_OK

    def test_broken_json_exits_one(self, tmp_path, capsys):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert main(["validate-world", str(p)]) == EX_ERROR


class TestUsageErrors:
    """Bad invocations exit through argparse with the usage code."""

    def usage_code(self, argv):
        with pytest.raises(SystemExit) as err:
            main(argv)
        return err.value.code

    def test_unknown_subcommand(self, capsys):
        assert self.usage_code(["frobnicate"]) == EX_USAGE

    def test_missing_required_flag(self, capsys):
        assert self.usage_code(["ask", "Where is the bag?"]) == EX_USAGE

    def test_no_arguments_at_all(self, capsys):
        assert self.usage_code([]) == EX_USAGE


class TestGenerateAndBench:
    def test_full_loop(self, tmp_path, capsys):
        dataset = tmp_path / "data.jsonl"
        worlds_dir = tmp_path / "worlds"
        report = tmp_path / "report.json"

        code = main(
            [
                "gen-dataset",
                "--out",
                str(dataset),
                "--worlds-dir",
                str(worlds_dir),
                "--worlds",
                "2",
                "--per-world",
                "10",
                "--seed",
                "3",
            ]
        )
        assert code == EX_OK
        assert "20 records" in capsys.readouterr().out
        assert len(list(worlds_dir.glob("*.json"))) == 2

        code = main(
            [
                "bench",
                "--dataset",
                str(dataset),
                "--worlds",
                str(worlds_dir),
                "--parallel",
                "2",
                "--max-plans",
                "96",
                "--report",
                str(report),
            ]
        )
        out = capsys.readouterr().out
        assert code == EX_OK
        assert out.startswith("overall")
        data = json.loads(report.read_text())
        assert data["overall"]["n"] == 20

    def test_bench_accepts_a_single_world_file(self, tmp_path, capsys):
        dataset = tmp_path / "data.jsonl"
        record = {
            "id": "demo_house-q000",
            "world_id": "demo_house",
            "category": "template",
            "question": "What color is the sofa in the living room?",
            "gold_answer": "blue",
            "gold_pattern": "V2[living room] -> V3(A)[sofa] -> A[color]",
            "slots": {},
        }
        dataset.write_text(json.dumps(record, sort_keys=True) + "\n")
        code = main(["bench", "--dataset", str(dataset), "--worlds", DEMO])
        out = capsys.readouterr().out
        assert code == EX_OK
        assert "score=100.0" in out
