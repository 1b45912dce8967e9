"""Batch runs over a task set, the results stream and report tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import random
import shutil
import tarfile
import threading
import zipfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import httpx
import yaml

from .failures import FAILURE_CLASSES
from .repair import SessionConfig, SessionRecord
from .repo import VersionDecl, load_version_sidecar

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGE_NAMES = ("load", "concretize", "install")


# --------------------------------------------------------------------------
# task sets


@dataclass(frozen=True)
class Task:
    package: str
    repo: str  # local path or archive URL
    ground_truth: str | None = None
    version_sidecar: str | None = None
    source_url: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in vars(self).items() if v is not None}

    def ground_truth_text(self) -> str | None:
        return Path(self.ground_truth).read_text() if self.ground_truth else None

    def version(self) -> VersionDecl | None:
        return load_version_sidecar(self.version_sidecar) if self.version_sidecar else None


def _is_url(text: str) -> bool:
    return text.startswith(("http://", "https://"))


@dataclass
class TaskSet:
    tasks: list[Task]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for t in self.tasks:
            if t.package in seen:
                raise ValueError(f"duplicate package name in task set: {t.package}")
            seen.add(t.package)

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def id(self) -> str:
        blob = json.dumps([t.to_dict() for t in self.tasks], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def load(cls, manifest: str | Path) -> "TaskSet":
        """YAML or JSON: ``{tasks: [{package, repo, ground_truth?, version?, source_url?}]}``.

        Relative paths resolve against the manifest's directory.
        """
        path = Path(manifest)
        data = yaml.safe_load(path.read_text()) or {}
        base = path.parent

        def local(value: str | None) -> str | None:
            if value is None or _is_url(value):
                return value
            p = Path(value)
            return str(p if p.is_absolute() else (base / p).resolve())

        tasks = []
        for entry in data.get("tasks", ()):
            tasks.append(Task(entry["package"], local(entry["repo"]), local(entry.get("ground_truth")),
                              local(entry.get("version")), entry.get("source_url")))
        return cls(tasks)

    def resolve(self, cache_dir: str | Path) -> "TaskSet":
        """Download and unpack archive sources so every task has a local directory."""
        out = []
        for t in self.tasks:
            repo = t.repo
            if _is_url(repo):
                repo = str(_fetch_archive(repo, Path(cache_dir)))
            elif not Path(repo).is_dir():
                raise FileNotFoundError(f"{t.package}: repository {repo} is not a directory")
            out.append(Task(t.package, repo, t.ground_truth, t.version_sidecar, t.source_url or
                            (t.repo if _is_url(t.repo) else None)))
        return TaskSet(out)

    def sample(self, n: int | None, seed: int) -> "TaskSet":
        if n is None or n >= len(self.tasks):
            return self
        picked = sorted(random.Random(seed).sample(range(len(self.tasks)), n))
        return TaskSet([self.tasks[i] for i in picked])


def _fetch_archive(url: str, cache: Path) -> Path:
    dest = cache / hashlib.sha256(url.encode()).hexdigest()[:16]
    if dest.is_dir():
        return _single_root(dest)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_suffix(".part")
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir()
    with httpx.Client(follow_redirects=True, timeout=300) as client:
        resp = client.get(url)
        resp.raise_for_status()
    blob = io.BytesIO(resp.content)
    if url.endswith(".zip"):
        with zipfile.ZipFile(blob) as zf:
            for name in zf.namelist():
                if Path(name).is_absolute() or ".." in Path(name).parts:
                    raise ValueError(f"unsafe path in archive: {name}")
            zf.extractall(tmp)
    else:
        with tarfile.open(fileobj=blob) as tf:
            for member in tf.getmembers():
                if Path(member.name).is_absolute() or ".." in Path(member.name).parts or member.issym() \
                        or member.islnk():
                    continue
                tf.extract(member, tmp)
    tmp.rename(dest)
    return _single_root(dest)


def _single_root(path: Path) -> Path:
    children = [p for p in path.iterdir()]
    return children[0] if len(children) == 1 and children[0].is_dir() else path


# --------------------------------------------------------------------------
# results stream


def record_key(package: str, label: str) -> str:
    return f"{package}::{label}"


def read_records(path: str | Path) -> list[dict[str, Any]]:
    """Parse the results stream, skipping a torn or corrupt line (logged)."""
    p = Path(path)
    if not p.exists():
        return []
    out = []
    for n, line in enumerate(p.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            log.warning("%s:%d: unreadable record skipped", p, n)
            continue
        if rec.get("schema_version") != SCHEMA_VERSION:
            log.warning("%s:%d: schema version %r skipped", p, n, rec.get("schema_version"))
            continue
        out.append(rec)
    return out


class ResultsWriter:
    """Single serialized sink; each record is flushed to disk before returning."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        # a crash mid-write can leave a partial last line; start on a fresh one
        if self.path.exists() and self.path.stat().st_size:
            with self.path.open("rb") as fh:
                fh.seek(-1, os.SEEK_END)
                if fh.read(1) != b"\n":
                    with self.path.open("a") as out:
                        out.write("\n")

    def write(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock, self.path.open("a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def to_stream_record(task: Task, record: SessionRecord) -> dict[str, Any]:
    data = record.to_dict()
    data.update({"schema_version": SCHEMA_VERSION, "key": record_key(task.package, record.label),
                 "task": task.to_dict()})
    return data


SessionFn = Callable[[Task, SessionConfig], SessionRecord]


def _aborted(task: Task, cfg: SessionConfig, exc: BaseException) -> SessionRecord:
    return SessionRecord(task.package, cfg.to_dict(), status="aborted", abort_reason=f"{type(exc).__name__}: {exc}")


def run_bench(task_set: TaskSet, configs: Sequence[SessionConfig], parallelism: int, results: str | Path,
              session_fn: SessionFn, *, sample: int | None = None, seed: int = 0,
              limit: int | None = None) -> "BenchReport":
    """Run every (task, config) pair not already in ``results``.

    ``sample`` draws a seeded subset of tasks (membership is logged);
    ``limit`` caps the number of new sessions in this call.  Exceptions
    from a session become ``aborted`` records, so the batch continues.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"configuration labels must be unique: {labels}")
    tasks = task_set.sample(sample, seed)
    if sample is not None:
        log.info("task sample (seed %d, n=%d): %s", seed, len(tasks), ", ".join(t.package for t in tasks.tasks))
    done = {r["key"] for r in read_records(results)}
    pending = [(t, c) for c in configs for t in tasks.tasks if record_key(t.package, c.label) not in done]
    if limit is not None:
        pending = pending[:limit]
    log.info("%d sessions to run, %d already recorded", len(pending), len(done))
    writer = ResultsWriter(results)

    def one(task: Task, cfg: SessionConfig) -> None:
        try:
            rec = session_fn(task, cfg)
        except Exception as exc:  # noqa: BLE001 - recorded, batch continues
            log.exception("%s [%s] failed", task.package, cfg.label)
            rec = _aborted(task, cfg, exc)
        writer.write(to_stream_record(task, rec))

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(one, t, c) for t, c in pending]
        for fut in as_completed(futures):
            fut.result()
    return report(read_records(results))


# --------------------------------------------------------------------------
# reports


def _mean(values: Iterable[float]) -> float | None:
    vals = list(values)
    return sum(vals) / len(vals) if vals else None


@dataclass
class ConfigRow:
    label: str
    sessions: int
    stage_fractions: dict[str, float]
    mean_variant_score: float | None
    mean_dependency_score: float | None
    mean_attempts_to_success: float | None
    mean_attempts: float
    failure_incidence: dict[str, float]
    failure_counts: dict[str, int]
    cumulative: list[float]  # fraction installed by attempt 1..K
    aborted: int = 0
    oscillating: int = 0
    mean_tokens: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return dict(vars(self))


@dataclass
class BenchReport:
    rows: list[ConfigRow]
    records: list[dict[str, Any]] = field(default_factory=list, repr=False)

    def row(self, label: str) -> ConfigRow:
        return next(r for r in self.rows if r.label == label)

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows]}


def _final_stages(rec: dict[str, Any]) -> dict[str, bool]:
    attempts = rec.get("attempts") or []
    if not attempts:
        return dict.fromkeys(STAGE_NAMES, False)
    idx = rec.get("successful_attempt") or len(attempts)
    stages = attempts[idx - 1]["report"]["stages"]
    passed = {s["stage"]: bool(s["passed"]) for s in stages}
    return {name: passed.get(name, False) for name in STAGE_NAMES}


def _row(label: str, recs: list[dict[str, Any]]) -> ConfigRow:
    n = len(recs)
    flags = [_final_stages(r) for r in recs]
    stage_fractions = {s: sum(f[s] for f in flags) / n for s in STAGE_NAMES}
    metrics = [r["metrics"] for r in recs if r.get("metrics")]
    counts = dict.fromkeys(FAILURE_CLASSES, 0)
    for r in recs:
        for a in r.get("attempts") or []:
            value = a["report"]["failure"]["value"]
            if value in counts:
                counts[value] += 1
    failures = sum(counts.values())
    incidence = {c: (counts[c] / failures if failures else 0.0) for c in FAILURE_CLASSES}
    k = max([int(r.get("config", {}).get("k_max", 1)) for r in recs] +
            [len(r.get("attempts") or []) for r in recs] + [1])
    successes = [r["successful_attempt"] for r in recs if r.get("successful_attempt")]
    cumulative = [sum(1 for s in successes if s <= a) / n for a in range(1, k + 1)]
    return ConfigRow(
        label=label, sessions=n, stage_fractions=stage_fractions,
        mean_variant_score=_mean(m["variant_score"] for m in metrics if m.get("variant_score") is not None),
        mean_dependency_score=_mean(m["dependency_score"] for m in metrics),
        mean_attempts_to_success=_mean(successes),
        mean_attempts=sum(len(r.get("attempts") or []) for r in recs) / n,
        failure_incidence=incidence, failure_counts=counts, cumulative=cumulative,
        aborted=sum(r["status"] == "aborted" for r in recs),
        oscillating=sum(bool(r.get("oscillation")) for r in recs),
        mean_tokens=sum(r.get("total_tokens", 0) for r in recs) / n,
    )


def report(records: Iterable[dict[str, Any]]) -> BenchReport:
    """Aggregate per configuration label.  A pure function of the records.

    When a key appears more than once (a resumed run that re-recorded a
    pair) the last record wins.
    """
    latest: dict[str, dict[str, Any]] = {}
    for rec in records:
        latest[rec.get("key") or record_key(rec["package_name"], rec.get("config", {}).get("label", ""))] = rec
    if not latest:
        raise ValueError("no records to report")
    by_label: dict[str, list[dict[str, Any]]] = {}
    for rec in latest.values():
        by_label.setdefault(rec.get("config", {}).get("label", ""), []).append(rec)
    rows = [_row(label, recs) for label, recs in sorted(by_label.items())]
    return BenchReport(rows, list(latest.values()))


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.3f}"


def summary_table(rep: BenchReport) -> list[list[str]]:
    head = ["config", "n", "load", "concretize", "install", "S_v", "S_d", "attempts_to_success", "mean_attempts",
            "aborted"]
    rows = [head]
    for r in rep.rows:
        rows.append([r.label, str(r.sessions)] + [_fmt(r.stage_fractions[s]) for s in STAGE_NAMES] +
                    [_fmt(r.mean_variant_score), _fmt(r.mean_dependency_score), _fmt(r.mean_attempts_to_success),
                     _fmt(r.mean_attempts), str(r.aborted)])
    return rows


def failure_table(rep: BenchReport) -> list[list[str]]:
    rows = [["config"] + list(FAILURE_CLASSES)]
    for r in rep.rows:
        rows.append([r.label] + [_fmt(r.failure_incidence[c]) for c in FAILURE_CLASSES])
    return rows


def curve_table(rep: BenchReport) -> list[list[str]]:
    rows = [["config", "attempt", "cumulative_install_fraction"]]
    for r in rep.rows:
        rows += [[r.label, str(i), f"{v:.6f}"] for i, v in enumerate(r.cumulative, 1)]
    return rows


def render_text(table: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_report(rep: BenchReport, out_dir: str | Path) -> dict[str, Path]:
    """Write CSV tables, curve data and a text summary; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"summary": summary_table(rep), "failures": failure_table(rep), "curves": curve_table(rep)}
    paths = {}
    for name, table in files.items():
        p = out / f"{name}.csv"
        with p.open("w", newline="") as fh:
            csv.writer(fh).writerows(table)
        paths[name] = p
    text = ("Stage success and similarity\n\n" + render_text(files["summary"]) +
            "\nFailure incidence (fraction of failed attempts)\n\n" + render_text(files["failures"]))
    paths["text"] = out / "report.txt"
    paths["text"].write_text(text)
    paths["json"] = out / "report.json"
    paths["json"].write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True))
    return paths
