"""Failure classification and log condensation."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from ._text import truncate

FAILURE_CLASSES = ("web", "constraint", "missing_dependency", "cmake", "syntax", "compilation")

_SIGNAL_RE = re.compile(r"==> Error|\berror\b|Error:|\bfatal\b|FAILED|Traceback|Exception|CMake Error|Could NOT find",
                        re.I)
_FINAL_BLOCK_RE = re.compile(r"==> Error|Error:|error:|CMake Error|Traceback")
_VOLATILE_RE = re.compile(r"0x[0-9a-fA-F]+|\b[0-9a-f]{7,64}\b|\d+|/[^\s:'\"]+/")


class _StageLike(Protocol):
    stage: str
    passed: bool
    log_excerpt: str


@dataclass(frozen=True)
class Rule:
    id: str
    klass: str
    pattern: str
    stages: tuple[str, ...] | None = None

    @property
    def regex(self) -> re.Pattern[str]:
        return _compile(self.pattern)


@lru_cache(maxsize=512)
def _compile(pattern: str) -> re.Pattern[str]:
    return re.compile(pattern)


@dataclass(frozen=True)
class FailureClass:
    value: str  # one of FAILURE_CLASSES or "none"
    rule_id: str = ""
    pattern: str = ""
    line: str = ""
    stage: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"value": self.value, "rule_id": self.rule_id, "pattern": self.pattern,
                "line": self.line, "stage": self.stage}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> "FailureClass":
        return cls(data["value"], data.get("rule_id", ""), data.get("pattern", ""),
                   data.get("line", ""), data.get("stage", ""))


NO_FAILURE = FailureClass("none")


def load_rules(path: str | Path | None = None) -> tuple[Rule, ...]:
    """Read the ordered rule table (the shipped one when ``path`` is None)."""
    if path is None:
        text = resources.files("recipeforge").joinpath("data", "failure_rules.json").read_text()
    else:
        text = Path(path).read_text()
    return _rules_from_json(text)


@lru_cache(maxsize=8)
def _rules_from_json(text: str) -> tuple[Rule, ...]:
    data = json.loads(text)
    rules = []
    for entry in data["rules"]:
        if entry["class"] not in FAILURE_CLASSES:
            raise ValueError(f"rule {entry.get('id')}: unknown class {entry['class']!r}")
        _compile(entry["pattern"])  # fail early on bad regexes
        stages = tuple(entry["stages"]) if entry.get("stages") else None
        rules.append(Rule(entry.get("id", f"rule-{len(rules)}"), entry["class"], entry["pattern"], stages))
    return tuple(rules)


def classify_text(log: str, stage: str, rules: Sequence[Rule] | None = None) -> FailureClass:
    rules = load_rules() if rules is None else rules
    lines = log.splitlines()
    for rule in rules:
        if rule.stages is not None and stage not in rule.stages:
            continue
        rx = rule.regex
        hits = [ln for ln in lines if rx.search(ln)]
        if hits:
            return FailureClass(rule.klass, rule.id, rule.pattern, hits[-1].strip()[:500], stage)
    last = next((ln for ln in reversed(lines) if ln.strip()), "")
    return FailureClass("compilation", "residual", "", last.strip()[:500], stage)


def classify_failure(stages: Sequence[_StageLike], rules: Sequence[Rule] | None = None) -> FailureClass:
    """Classify the first failed stage; ``none`` when every stage passed.

    A failing log that matches no rule falls into the residual
    ``compilation`` class.
    """
    failed = next((s for s in stages if not s.passed), None)
    if failed is None:
        return NO_FAILURE
    return classify_text(failed.log_excerpt, failed.stage, rules)


def error_signature(failure: FailureClass) -> str:
    """Class + rule + hash of the evidence line with volatile tokens masked."""
    masked = _VOLATILE_RE.sub("#", failure.line)
    digest = hashlib.sha256(masked.encode()).hexdigest()[:12]
    return f"{failure.value}|{failure.rule_id}|{digest}"


def condense_log(raw: str, budget: int) -> str:
    """Keep the final error block plus earlier error-signal lines, within budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    if len(raw) <= budget:
        return raw
    lines = raw.splitlines()
    last = next((i for i in range(len(lines) - 1, -1, -1) if _FINAL_BLOCK_RE.search(lines[i])), None)
    if last is None:
        block_start = max(0, len(lines) - 20)
    else:
        block_start = max(0, last - 2)
    block = "\n".join(lines[block_start:])
    marker = f"[... log condensed: kept at most {budget} of {len(raw)} characters ...]"
    room = budget - len(marker) - 1
    if room <= 0:
        return truncate(block, budget, tail=True)
    if len(block) > room:
        # keep the start of the block: it holds the error line itself
        return marker + "\n" + truncate(block, room)
    earlier: list[str] = []
    seen: set[str] = set()
    used = len(block) + 1
    for line in reversed(lines[:block_start]):
        text = line.strip()
        if not text or text in seen or not _SIGNAL_RE.search(text):
            continue
        if used + len(line) + 1 > room - 5:
            break
        seen.add(text)
        earlier.append(line)
        used += len(line) + 1
    parts = [marker]
    if earlier:
        parts += list(reversed(earlier)) + ["..."]
    parts.append(block)
    out = "\n".join(parts)
    return out if len(out) <= budget else truncate(out, budget)
