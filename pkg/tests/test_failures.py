import json
from collections import Counter
from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import LOGS
from recipeforge.failures import (FAILURE_CLASSES, NO_FAILURE, FailureClass, classify_failure, classify_text,
                                  condense_log, error_signature, load_rules)

LABELS = {k: v for k, v in json.loads((LOGS / "labels.json").read_text()).items() if not k.startswith("_")}


def test_suite_shape():
    assert len(LABELS) >= 18
    per_class = Counter(v["class"] for v in LABELS.values())
    assert set(per_class) == set(FAILURE_CLASSES)
    assert min(per_class.values()) >= 3


@pytest.mark.parametrize("name", sorted(LABELS))
def test_canned_log_classification(name):
    label = LABELS[name]
    got = classify_text((LOGS / name).read_text(), label["stage"])
    assert got.value == label["class"], got


def test_pexsi_excerpt():
    got = classify_text("==> Error: pexsi is unsatisfiable\n", "concretize")
    assert got.value == "constraint"
    assert got.line == "==> Error: pexsi is unsatisfiable"


def test_fetch_404():
    log = "==> Fetching https://example.org/foo-1.0.tar.gz\ncurl: (22) The requested URL returned error: 404\n"
    assert classify_text(log, "install").value == "web"


def test_unmatched_install_log_is_residual_compilation():
    got = classify_text("something odd happened\n", "install")
    assert (got.value, got.rule_id) == ("compilation", "residual")


def test_first_failed_stage_decides():
    stages = [SimpleNamespace(stage="load", passed=True, log_excerpt="SyntaxError: nope"),
              SimpleNamespace(stage="concretize", passed=False, log_excerpt="==> Error: x is unsatisfiable"),
              SimpleNamespace(stage="install", passed=False, log_excerpt="fatal error: foo.h: No such file")]
    assert classify_failure(stages).value == "constraint"
    assert classify_failure(stages[:1]) == NO_FAILURE


def test_rules_are_well_formed():
    rules = load_rules()
    assert len({r.id for r in rules}) == len(rules)
    assert all(r.klass in FAILURE_CLASSES for r in rules)


def test_custom_rule_file(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"rules": [{"id": "x", "class": "web", "pattern": "boom"}]}))
    assert classify_text("boom", "install", load_rules(path)).rule_id == "x"
    path.write_text(json.dumps({"rules": [{"id": "y", "class": "nonsense", "pattern": "a"}]}))
    with pytest.raises(ValueError):
        load_rules(path)


def test_signature_masks_volatile_tokens():
    a = FailureClass("web", "web-http-status", "", "curl: (22) error 404 at /tmp/abc123/foo.tar.gz", "install")
    b = FailureClass("web", "web-http-status", "", "curl: (22) error 503 at /tmp/zzz999/foo.tar.gz", "install")
    assert error_signature(a) == error_signature(b)
    assert FailureClass.from_dict(a.to_dict()) == a


def test_condense_large_log_keeps_the_final_error():
    noise = "".join(f"[{i:07d}] compiling object {i} ok\n" for i in range(30_000))
    final = "foo.cpp:12:3: error: 'bar' was not declared in this scope\n==> Error: ProcessError: make failed\n"
    raw = noise + "warning: deprecated thing\n" + noise + final
    assert len(raw) > 1_000_000
    out = condense_log(raw, 8_000)
    assert len(out) <= 8_000
    assert "error: 'bar' was not declared" in out
    assert "log condensed" in out


def test_condense_short_and_empty_logs_unchanged():
    assert condense_log("short log", 8_000) == "short log"
    assert condense_log("", 10) == ""
    with pytest.raises(ValueError):
        condense_log("x", 0)


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=3000), st.integers(1, 2000))
def test_condense_never_exceeds_budget(raw, budget):
    assert len(condense_log(raw, budget)) <= budget
