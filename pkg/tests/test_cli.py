import json

from conftest import CORPUS, FIXTURES, FXDIV_UNKNOWN_DEP
from recipeforge.cli import main

REPO = str(FIXTURES / "repos" / "fxdiv")
SCRIPT = str(FIXTURES / "scripts" / "fxdiv_ok.yaml")
GT = str(CORPUS / "fxdiv.py")


def test_score_prints_golden_values(capsys):
    assert main(["score", GT, str(CORPUS / "fxdiv_generated.py")]) == 0
    out = capsys.readouterr().out
    assert "S_v = 1.0" in out and "S_d = 0.75" in out


def test_score_json(capsys):
    assert main(["score", GT, str(CORPUS / "fxdiv_generated.py"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["variant_score"] == 1.0 and data["dependency_score"] == 0.75


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_missing_file_is_a_task_failure(tmp_path):
    assert main(["score", str(tmp_path / "nope.py"), GT]) == 1


def test_zero_shot_run(tmp_path, capsys):
    results = tmp_path / "r.jsonl"
    code = main(["run", REPO, "--strategy", "none", "--k", "1", "--sandbox", "stub", "--script", SCRIPT,
                 "--ground-truth", GT, "--results", str(results)])
    assert code == 0
    rec = json.loads(results.read_text().splitlines()[0])
    assert len(rec["attempts"]) == 1 and rec["config"]["reference_strategy"] == "none"
    assert rec["status"] == "installed"


def test_failed_run_exits_one(tmp_path):
    script = tmp_path / "bad.yaml"
    script.write_text(json.dumps([{"match": ".*", "responses": [FXDIV_UNKNOWN_DEP]}]))
    assert main(["run", REPO, "--strategy", "none", "--k", "2", "--sandbox", "stub", "--script", str(script)]) == 1


def test_extract_ingest_retrieve(tmp_path, capsys):
    assert main(["extract", str(FIXTURES / "repos" / "cabana-pd"), "-o", str(tmp_path / "m.json")]) == 0
    meta = json.loads((tmp_path / "m.json").read_text())
    assert "googletest" in meta["dependency_hints"]
    assert main(["ingest", str(CORPUS), "-o", str(tmp_path / "kb.json")]) == 0
    capsys.readouterr()
    assert main(["retrieve", REPO, "--kb", str(tmp_path / "kb.json"), "--strategy", "similar", "--count", "2"]) == 0
    out = capsys.readouterr().out
    assert "fxdiv" not in json.loads(out)["packages"]


def test_generate_and_evaluate(tmp_path, capsys):
    assert main(["generate", REPO, "--strategy", "none", "--show-prompt"]) == 0
    assert "PACKAGE NAME: fxdiv" in capsys.readouterr().out
    out = tmp_path / "package.py"
    assert main(["generate", REPO, "--strategy", "none", "--script", SCRIPT, "-o", str(out)]) == 0
    assert "class Fxdiv(" in out.read_text()
    capsys.readouterr()
    assert main(["evaluate", str(out), "--package", "fxdiv", "--sandbox", "stub"]) == 0
    bad = tmp_path / "bad.py"
    bad.write_text(FXDIV_UNKNOWN_DEP)
    assert main(["evaluate", str(bad), "--package", "fxdiv", "--sandbox", "stub"]) == 1


def test_bench_and_report(tmp_path, capsys):
    (tmp_path / "tasks.yaml").write_text(f"tasks:\n  - package: fxdiv\n    repo: {REPO}\n    ground_truth: {GT}\n")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("sandbox:\n  kind: stub\nsession:\n  strategy: none\n  count: 0\n"
                   "bench:\n  configs:\n    - {label: zero-shot, k_max: 1}\n    - {label: repair, k_max: 3}\n")
    results = tmp_path / "r.jsonl"
    args = ["bench", "--config", str(cfg), "--tasks", str(tmp_path / "tasks.yaml"), "--results", str(results),
            "--script", SCRIPT, "--report-dir", str(tmp_path / "rep")]
    assert main(args) == 0
    assert len(results.read_text().splitlines()) == 2
    assert main(args) == 0  # resume: nothing new
    assert len(results.read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["report", str(results), "-o", str(tmp_path / "rep2")]) == 0
    assert "zero-shot" in capsys.readouterr().out
    assert (tmp_path / "rep2" / "curves.csv").exists()
