"""Generation session: analyze, retrieve, generate, evaluate, repair."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import gateway
from .errors import AbortError, BudgetExceeded, GatewayError, ParseError, SandboxError
from .evaluation import EvaluationReport, Sandbox, SandboxConfig, evaluate
from .failures import FailureClass, condense_log, error_signature
from .knowledge import (DEFAULT_AFFINITY_WEIGHTS, STRATEGIES, KnowledgeStore, ReferenceBundle, none_bundle,
                        retrieve_random, retrieve_similar)
from .metrics import DEFAULT_WEIGHTS, MatchWeights, MetricReport, score_recipes
from .prompts import PromptConfig, PromptSpec, assemble_prompt, references_from_bundle
from .recipe import extract_config_keys, parse_recipe
from .repo import RepoMetadata, VersionDecl, distill, extract_metadata

log = logging.getLogger(__name__)

STATUSES = ("installed", "exhausted", "aborted")
METADATA_MODES = ("raw", "distilled")


@dataclass
class SessionConfig:
    k_max: int = 5
    reference_strategy: str = "similar"
    reference_count: int = 2
    metadata_mode: str = "raw"
    audit_feedback: bool = False
    model: gateway.ModelHandle | None = None
    rng_seed: int = 0
    label: str = ""
    distill_mode: str = "rule_based"
    reretrieve: bool = False  # fresh retrieval before every repair attempt
    oscillation_window: int = 4
    weights: MatchWeights = DEFAULT_WEIGHTS
    affinity_weights: tuple[float, float] = DEFAULT_AFFINITY_WEIGHTS
    class_inherent: tuple[str, ...] = ()
    prompt: PromptConfig = field(default_factory=PromptConfig)
    sandbox: SandboxConfig = field(default_factory=lambda: SandboxConfig(kind="stub"))
    embedder: gateway.ModelHandle | None = None
    artifact_dir: str | None = None

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.reference_strategy not in STRATEGIES:
            raise ValueError(f"unknown reference strategy {self.reference_strategy!r}")
        if self.metadata_mode not in METADATA_MODES:
            raise ValueError(f"metadata_mode must be one of {METADATA_MODES}")
        if self.reference_strategy == "none":
            self.reference_count = 0
        elif self.reference_count < 1:
            raise ValueError("reference_count must be >= 1 unless the strategy is 'none'")
        if not self.label:
            self.label = (f"{self.reference_strategy}{self.reference_count if self.reference_count else ''}"
                          f"-k{self.k_max}-{self.metadata_mode}{'-audit' if self.audit_feedback else ''}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label, "k_max": self.k_max, "reference_strategy": self.reference_strategy,
            "reference_count": self.reference_count, "metadata_mode": self.metadata_mode,
            "audit_feedback": self.audit_feedback, "rng_seed": self.rng_seed,
            "model": None if self.model is None else self.model.identity, "distill_mode": self.distill_mode,
            "reretrieve": self.reretrieve, "sandbox": self.sandbox.kind,
            "weights": [self.weights.alpha, self.weights.beta, self.weights.gamma, self.weights.lam],
            "affinity_weights": list(self.affinity_weights),
        }


@dataclass
class AttemptRecord:
    index: int
    prompt_text: str
    recipe_text: str
    report: EvaluationReport
    prompt_tokens: int = 0
    completion_tokens: int = 0
    approximate_tokens: bool = False
    duration: float = 0.0
    error_signature: str = ""
    prompt_notes: list[str] = field(default_factory=list)
    prompt: PromptSpec | None = field(default=None, repr=False)

    @property
    def failure(self) -> FailureClass:
        return self.report.failure

    @property
    def token_usage(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "prompt_text": self.prompt_text, "prompt_notes": list(self.prompt_notes),
                "recipe_text": self.recipe_text, "report": self.report.to_dict(),
                "prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens,
                "approximate_tokens": self.approximate_tokens, "duration": self.duration,
                "error_signature": self.error_signature}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttemptRecord":
        return cls(data["index"], data["prompt_text"], data["recipe_text"],
                   EvaluationReport.from_dict(data["report"]), data.get("prompt_tokens", 0),
                   data.get("completion_tokens", 0), data.get("approximate_tokens", False),
                   data.get("duration", 0.0), data.get("error_signature", ""), list(data.get("prompt_notes", ())))


@dataclass
class SessionRecord:
    package_name: str
    config: dict[str, Any]
    attempts: list[AttemptRecord] = field(default_factory=list)
    status: str = "exhausted"
    successful_attempt: int | None = None
    metrics: MetricReport | None = None
    references: dict[str, Any] = field(default_factory=dict)
    oscillation: bool = False
    abort_reason: str = ""
    started_at: str = ""
    duration: float = 0.0

    @property
    def total_tokens(self) -> int:
        return sum(a.token_usage for a in self.attempts)

    @property
    def label(self) -> str:
        return self.config.get("label", "")

    def final_recipe(self) -> str | None:
        if self.successful_attempt is not None:
            return self.attempts[self.successful_attempt - 1].recipe_text
        return self.attempts[-1].recipe_text if self.attempts else None

    def to_dict(self) -> dict[str, Any]:
        return {"package_name": self.package_name, "config": self.config, "status": self.status,
                "successful_attempt": self.successful_attempt, "total_tokens": self.total_tokens,
                "metrics": None if self.metrics is None else self.metrics.to_dict(),
                "references": self.references, "oscillation": self.oscillation,
                "abort_reason": self.abort_reason, "started_at": self.started_at, "duration": self.duration,
                "attempts": [a.to_dict() for a in self.attempts]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SessionRecord":
        metrics = data.get("metrics")
        return cls(data["package_name"], dict(data.get("config", {})),
                   [AttemptRecord.from_dict(a) for a in data.get("attempts", ())], data["status"],
                   data.get("successful_attempt"), None if metrics is None else MetricReport.from_dict(metrics),
                   dict(data.get("references", {})), data.get("oscillation", False), data.get("abort_reason", ""),
                   data.get("started_at", ""), data.get("duration", 0.0))


# --------------------------------------------------------------------------
# repair prompt


def _failure_text(failure: FailureClass) -> str:
    text = failure.value
    if failure.stage:
        text += f" (failed stage: {failure.stage})"
    if failure.line:
        text += f"\nevidence: {failure.line}"
    return text


def build_repair_prompt(prev: AttemptRecord, refs: ReferenceBundle | None, original_prompt_condensed: PromptSpec | str,
                        include_audit: bool, config: PromptConfig = PromptConfig()) -> PromptSpec:
    """Assemble the next attempt's prompt from the previous attempt.

    Sections, in order: condensed original task, previous recipe, failure
    class, condensed log, audit findings (only when ``include_audit`` and the
    report carries some), references.  Over the context budget the tree is
    dropped first, then references (last first), then the log shrinks down
    to ``config.min_log_chars``; each step leaves a marker note.
    """
    failure = prev.report.failure
    if failure.value == "none":
        raise ValueError("the previous attempt did not fail")
    failed = prev.report.failed_stage()
    raw_log = failed.log_excerpt if failed is not None else ""
    audit = None
    if include_audit and prev.report.audit is not None and prev.report.audit.findings:
        audit = [message for _, message in prev.report.audit.findings]
    if isinstance(original_prompt_condensed, str):
        original, tree_present = original_prompt_condensed, False
    else:
        original = original_prompt_condensed.render()
        tree_present = original_prompt_condensed.tree_block is not None
    spec = PromptSpec(mode="repair", original=original, previous_recipe=prev.recipe_text,
                      failure_class=_failure_text(failure), error_log=condense_log(raw_log, config.log_chars)
                      if raw_log else "", audit_findings=audit,
                      references=references_from_bundle(refs), template_dir=config.template_dir)
    limit = config.context_chars
    if len(spec.render()) <= limit:
        return spec
    notes: list[str] = []
    if tree_present:
        assert isinstance(original_prompt_condensed, PromptSpec)
        notes.append("tree omitted: context budget")
        spec = replace(spec, original=replace(original_prompt_condensed, tree_block=None).render(),
                       notes=list(notes))
    refs_left = list(spec.references)
    dropped = False
    while refs_left and len(spec.render()) > limit:
        refs_left.pop()
        dropped = True
        spec = replace(spec, references=list(refs_left))
    if dropped:
        notes.append("references omitted: context budget")
        spec = replace(spec, notes=list(notes))
    if len(spec.render()) > limit and raw_log:
        notes.append("error log shortened: context budget")
        spec = replace(spec, notes=list(notes))
        excess = len(spec.render()) - limit
        budget = max(config.min_log_chars, len(spec.error_log) - excess)
        spec = replace(spec, error_log=condense_log(raw_log, budget))
    if len(spec.render()) > limit:
        raise BudgetExceeded(f"repair prompt needs {len(spec.render())} characters, limit is {limit}")
    return spec


# --------------------------------------------------------------------------
# oscillation


def detect_oscillation(attempts: Sequence[AttemptRecord], window: int = 4) -> bool:
    """True when the last ``window`` failed attempts contain an A, B, A, B run.

    States are (failure class, error signature) pairs, so the same class
    with different evidence lines does not count as a repeat.
    """
    if len(attempts) < 2:
        raise ValueError("need at least two attempts")
    states = [(a.failure.value, a.error_signature or error_signature(a.failure))
              for a in attempts if a.failure.value != "none"][-window:]
    for i in range(len(states) - 3):
        a, b, c, d = states[i: i + 4]
        if a == c and b == d and a != b:
            return True
    return False


# --------------------------------------------------------------------------
# session


def retrieve(cfg: SessionConfig, store: KnowledgeStore | None, meta: RepoMetadata, index: Any = None,
             seed_offset: int = 0) -> ReferenceBundle:
    strategy = cfg.reference_strategy
    if strategy == "none":
        return none_bundle(store, meta)
    if store is None:
        raise ValueError(f"strategy {strategy!r} needs a knowledge base")
    if strategy == "similar":
        return retrieve_similar(store, meta, cfg.reference_count, cfg.affinity_weights)
    if strategy in ("random", "random_same_build_system"):
        return retrieve_random(store, meta, cfg.reference_count, strategy == "random_same_build_system",
                               cfg.rng_seed + seed_offset)
    from .vector_index import build_embedding_index, retrieve_by_embedding

    embedder = cfg.embedder or gateway.ModelHandle()
    if index is None:
        index = build_embedding_index(store, embedder)
    return retrieve_by_embedding(meta, index, embedder, top_k=cfg.reference_count)


def _score(ground_truth: str, generated: str, cfg: SessionConfig) -> MetricReport:
    truth = parse_recipe(ground_truth)
    try:
        gen = parse_recipe(generated)
    except ParseError:
        excluded = len(extract_config_keys(truth)) == 0
        return MetricReport(None if excluded else 0.0, 0.0, [], excluded,
                            ["generated recipe could not be parsed; scored as empty"])
    return score_recipes(truth, gen, cfg.weights, cfg.class_inherent)


def _write_artifacts(root: Path, record: SessionRecord) -> None:
    d = root / f"{record.package_name}--{record.label}"
    d.mkdir(parents=True, exist_ok=True)
    for a in record.attempts:
        (d / f"attempt-{a.index}.prompt.txt").write_text(a.prompt_text)
        (d / f"attempt-{a.index}.package.py").write_text(a.recipe_text)
        logs = "\n".join(f"## {s.stage} (exit {s.exit_code})\n{s.log_excerpt}" for s in a.report.stages)
        (d / f"attempt-{a.index}.log.txt").write_text(logs)


def run_session(repo_root: str | Path, ground_truth: str | None, cfg: SessionConfig, *,
                store: KnowledgeStore | None = None, index: Any = None, package_name: str | None = None,
                version: VersionDecl | None = None, releases: Sequence[str] | None = None,
                source_url: str | None = None, meta: RepoMetadata | None = None,
                sandbox: Sandbox | None = None) -> SessionRecord:
    """One package, up to ``cfg.k_max`` attempts.

    Infrastructure failures (model endpoint or sandbox runtime) end the
    session with status ``aborted``; the attempts made so far are kept.
    """
    if cfg.model is None:
        raise ValueError("SessionConfig.model is required")
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    if meta is None:
        meta = extract_metadata(repo_root, package_name=package_name, version=version, releases=releases,
                                source_url=source_url)
    refs = retrieve(cfg, store, meta, index)
    distilled = None
    if cfg.metadata_mode == "distilled":
        distilled = distill(meta, cfg.distill_mode, llm=cfg.model, budget=cfg.prompt.metadata_chars)
    first = assemble_prompt(meta, refs, distilled=distilled, config=cfg.prompt)
    condensed = assemble_prompt(meta, refs, condensed=True, distilled=distilled, config=cfg.prompt)

    record = SessionRecord(meta.package_name, cfg.to_dict(), references=refs.to_dict(), started_at=started)
    try:
        for index_ in range(1, cfg.k_max + 1):
            if index_ == 1:
                prompt = first
            else:
                if cfg.reretrieve:
                    refs = retrieve(cfg, store, meta, index, seed_offset=index_ - 1)
                prompt = build_repair_prompt(record.attempts[-1], refs, condensed, cfg.audit_feedback, cfg.prompt)
            a0 = time.monotonic()
            try:
                reply = gateway.complete(cfg.model, prompt)
            except GatewayError as exc:
                raise AbortError(f"model call failed on attempt {index_}: {exc}") from exc
            try:
                report = evaluate(reply.text, meta.package_name, cfg.sandbox,
                                  run_audit_on_failure=cfg.audit_feedback, instance=sandbox)
            except SandboxError as exc:
                raise AbortError(f"sandbox failed on attempt {index_}: {exc}") from exc
            sig = "" if report.failure.value == "none" else error_signature(report.failure)
            record.attempts.append(AttemptRecord(
                index_, prompt.render(), reply.text, report, reply.prompt_tokens, reply.completion_tokens,
                reply.approximate, time.monotonic() - a0, sig, list(prompt.notes), prompt))
            if report.installed:
                record.status = "installed"
                record.successful_attempt = index_
                break
        else:
            record.status = "exhausted"
    except AbortError as exc:
        log.error("%s: session aborted: %s", meta.package_name, exc)
        record.status = "aborted"
        record.abort_reason = str(exc)

    if len(record.attempts) >= 2:
        record.oscillation = detect_oscillation(record.attempts, cfg.oscillation_window)
    final = record.final_recipe()
    if ground_truth is not None and final is not None:
        record.metrics = _score(ground_truth, final, cfg)
    record.duration = time.monotonic() - t0
    if cfg.artifact_dir:
        _write_artifacts(Path(cfg.artifact_dir), record)
    return record
