"""Command-line entry point: ``recipeforge <subcommand> ...``.

Exit status: 0 success, 1 the task failed (recipe did not install, input
error, infrastructure failure), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import config as cfgmod
from . import gateway
from .bench import (ResultsWriter, Task, TaskSet, failure_table, read_records, render_text, report, run_bench,
                    summary_table, to_stream_record, write_report)
from .errors import RecipeForgeError
from .evaluation import audit, evaluate
from .knowledge import KnowledgeStore, ingest, load_corpus
from .metrics import score_recipes
from .prompts import assemble_prompt
from .recipe import parse_recipe
from .repair import SessionConfig, retrieve, run_session
from .repo import VersionDecl, distill, extract_metadata, load_version_sidecar

log = logging.getLogger("recipeforge")

STRATEGY_CHOICES = ("none", "similar", "random", "random_same_build_system", "embedding")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="YAML configuration file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS, help="errors only")
    return p


def _repo_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("repo", help="path to the source repository")
    p.add_argument("--package", help="package name (default: derived from the CMake project name)")
    p.add_argument("--version", dest="pkg_version", help="version string to put in the recipe")
    p.add_argument("--version-file", help="YAML/JSON sidecar with version, url and sha256")
    p.add_argument("--url", help="source archive URL")
    p.add_argument("--sha256", help="checksum of the source archive")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--script", help="scripted model: YAML list of {match, responses}")
    p.add_argument("--endpoint", help="OpenAI-compatible endpoint URL (selects the HTTP backend)")
    p.add_argument("--model-id", help="model identifier sent to the endpoint")
    p.add_argument("--api-key-env", help="environment variable holding the API key")


def _retrieval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kb", help="knowledge base JSON written by 'ingest'")
    p.add_argument("--corpus", help="recipe corpus directory (ingested on the fly)")
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, help="reference selection strategy")
    p.add_argument("--count", type=int, help="number of references")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="recipeforge", parents=[common],
                                     description="Generate, validate and repair Spack recipes for CMake projects.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("extract", parents=[common], help="repository -> metadata JSON")
    _repo_args(p)
    p.add_argument("--distill", choices=("rule_based", "llm_assisted"), help="also emit distilled metadata")
    _model_args(p)
    p.add_argument("-o", "--output", help="write JSON here instead of stdout")

    p = sub.add_parser("ingest", parents=[common], help="recipe corpus -> knowledge base")
    p.add_argument("corpus", help="directory of package.py files (or with manifest.yaml)")
    p.add_argument("-o", "--output", required=True, help="knowledge base JSON to write")

    p = sub.add_parser("retrieve", parents=[common], help="repository -> reference recipes")
    _repo_args(p)
    _retrieval_args(p)
    p.add_argument("--show-text", action="store_true", help="print the reference texts too")

    p = sub.add_parser("generate", parents=[common], help="one generation attempt, no evaluation")
    _repo_args(p)
    _retrieval_args(p)
    _model_args(p)
    p.add_argument("--metadata", choices=("raw", "distilled"), help="metadata mode")
    p.add_argument("--show-prompt", action="store_true", help="print the prompt instead of calling the model")
    p.add_argument("-o", "--output", help="write the recipe here")

    p = sub.add_parser("evaluate", parents=[common], help="recipe file -> evaluation report")
    p.add_argument("recipe", help="package.py to evaluate")
    p.add_argument("--package", required=True, help="package name")
    p.add_argument("--sandbox", choices=("container", "process", "stub"), help="sandbox kind")
    p.add_argument("--audit", choices=("on-failure", "always", "never", "only"), default="on-failure",
                   help="when to run the static audit ('only' skips the build stages)")

    p = sub.add_parser("score", parents=[common], help="ground-truth and generated recipe -> S_v, S_d")
    p.add_argument("ground_truth")
    p.add_argument("generated")
    p.add_argument("--weights", nargs=4, type=float, metavar=("ALPHA", "BETA", "GAMMA", "LAMBDA"))
    p.add_argument("--class-inherent", nargs="*", default=None, help="dependency names to ignore")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")

    p = sub.add_parser("run", parents=[common], help="full session with repair")
    _repo_args(p)
    _retrieval_args(p)
    _model_args(p)
    p.add_argument("--ground-truth", help="reference recipe for scoring")
    p.add_argument("--k", type=int, help="maximum attempts")
    p.add_argument("--metadata", choices=("raw", "distilled"))
    p.add_argument("--audit-feedback", action="store_true", default=None, help="feed audit findings to repairs")
    p.add_argument("--sandbox", choices=("container", "process", "stub"))
    p.add_argument("--artifacts", help="directory for per-attempt prompts, recipes and logs")
    p.add_argument("--results", help="append the session record to this JSONL file")

    p = sub.add_parser("bench", parents=[common], help="batch sessions over a task set")
    p.add_argument("--tasks", required=True, help="task-set manifest (YAML)")
    p.add_argument("--results", help="results stream (JSONL); completed pairs are skipped")
    p.add_argument("--parallel", type=int, help="concurrent sessions")
    p.add_argument("--sample", type=int, help="seeded random subsample size")
    p.add_argument("--limit", type=int, help="stop after this many new sessions")
    p.add_argument("--report-dir", help="write report tables here when done")
    _retrieval_args(p)
    _model_args(p)
    p.add_argument("--sandbox", choices=("container", "process", "stub"))

    p = sub.add_parser("report", parents=[common], help="results stream -> tables and curve data")
    p.add_argument("results")
    p.add_argument("-o", "--output", help="directory for CSV/text output")
    return parser


# --------------------------------------------------------------------------
# helpers


def _config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    o: dict[str, Any] = {"seed": getattr(args, "seed", None)}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    o["session.strategy"] = get("strategy")
    o["session.count"] = get("count")
    o["session.k_max"] = get("k")
    o["session.metadata_mode"] = get("metadata")
    o["session.audit_feedback"] = get("audit_feedback")
    o["sandbox.kind"] = get("sandbox")
    # paths given on the command line are relative to the working directory
    for key, name in (("knowledge_base", "kb"), ("corpus", "corpus"), ("artifacts", "artifacts")):
        if get(name):
            o[f"paths.{key}"] = str(Path(get(name)).resolve())
    if get("seed") is not None:
        o["session.seed"] = get("seed")
    if get("script"):
        o["model.kind"] = "scripted_mock"
        o["model.script_file"] = str(Path(get("script")).resolve())
    if get("endpoint"):
        o["model.kind"] = "remote_http"
        o["model.endpoint"] = get("endpoint")
    o["model.model_id"] = get("model_id")
    o["model.api_key_env"] = get("api_key_env")
    return cfgmod.apply_overrides(cfg, o)


def _version(args: argparse.Namespace) -> VersionDecl | None:
    if getattr(args, "version_file", None):
        return load_version_sidecar(args.version_file)
    if getattr(args, "pkg_version", None):
        return VersionDecl(args.pkg_version, args.url, args.sha256)
    return None


def _meta(args: argparse.Namespace):
    return extract_metadata(args.repo, package_name=args.package, version=_version(args), source_url=args.url)


def _store(cfg: dict[str, Any]) -> KnowledgeStore | None:
    kb, corpus = cfgmod.path_setting(cfg, "knowledge_base"), cfgmod.path_setting(cfg, "corpus")
    if kb:
        return KnowledgeStore.load(kb)
    if corpus:
        store, rep = ingest(load_corpus(corpus))
        for name, reason in rep.skipped:
            log.warning("corpus: skipped %s (%s)", name, reason)
        return store
    return None


def _emit(data: Any, output: str | None = None) -> None:
    text = json.dumps(data, indent=1, sort_keys=True) if not isinstance(data, str) else data
    if output:
        Path(output).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _need_model(cfg: dict[str, Any]) -> gateway.ModelHandle:
    handle = cfgmod.model_handle(cfg)
    if handle is None or (handle.kind == "scripted_mock" and not handle.script):
        raise ValueError("no model configured: pass --script FILE or --endpoint URL (or set 'model' in --config)")
    return handle


# --------------------------------------------------------------------------
# subcommands


def cmd_extract(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    meta = _meta(args)
    out = meta.to_dict()
    if args.distill:
        llm = _need_model(cfg) if args.distill == "llm_assisted" else None
        d = distill(meta, args.distill, llm=llm, budget=cfg["prompt"]["metadata_chars"])
        out["distilled"] = {"text": d.text, "token_estimate": d.token_estimate, "source": d.source}
    _emit(out, args.output)
    return 0


def cmd_ingest(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    store, rep = ingest(load_corpus(args.corpus))
    store.save(args.output)
    print(f"ingested {len(rep.ingested)} packages, skipped {len(rep.skipped)}")
    for name, reason in rep.skipped:
        print(f"  skipped {name}: {reason}")
    return 0


def cmd_retrieve(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    meta = _meta(args)
    scfg = cfgmod.session_config(cfg, model=gateway.ModelHandle())
    bundle = retrieve(scfg, _store(cfg), meta)
    out = bundle.to_dict()
    if args.show_text:
        out["texts"] = {i.package: i.texts for i in bundle.items}
    _emit(out)
    return 0


def cmd_generate(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    meta = _meta(args)
    scfg = cfgmod.session_config(cfg, model=gateway.ModelHandle())
    refs = retrieve(scfg, _store(cfg), meta)
    distilled = None
    if scfg.metadata_mode == "distilled":
        llm = _need_model(cfg) if scfg.distill_mode == "llm_assisted" else None
        distilled = distill(meta, scfg.distill_mode, llm=llm, budget=scfg.prompt.metadata_chars)
    prompt = assemble_prompt(meta, refs, distilled=distilled, config=scfg.prompt)
    if args.show_prompt:
        print(prompt.render())
        return 0
    reply = gateway.complete(_need_model(cfg), prompt)
    _emit(reply.text, args.output)
    return 0


def cmd_evaluate(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    text = Path(args.recipe).read_text()
    sandbox = cfgmod.sandbox_config(cfg)
    if args.audit == "only":
        rep = audit(text, args.package, sandbox)
        _emit(rep.to_dict())
        return 0 if rep.passed else 1
    sandbox.always_audit = args.audit == "always"
    report_ = evaluate(text, args.package, sandbox, run_audit_on_failure=args.audit != "never")
    _emit(report_.to_dict())
    return 0 if report_.installed else 1


def cmd_score(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    if args.weights:
        cfg = cfgmod.apply_overrides(cfg, dict(zip(("weights.alpha", "weights.beta", "weights.gamma",
                                                    "weights.lambda"), args.weights)))
    inherent = args.class_inherent if args.class_inherent is not None else cfg["session"]["class_inherent"]
    gt = parse_recipe(Path(args.ground_truth).read_text())
    gen = parse_recipe(Path(args.generated).read_text())
    rep = score_recipes(gt, gen, cfgmod.match_weights(cfg), inherent)
    if args.json:
        _emit(rep.to_dict())
        return 0
    print("S_v = excluded (ground truth has no configuration keys)" if rep.variant_score is None
          else f"S_v = {rep.variant_score}")
    print(f"S_d = {rep.dependency_score}")
    for d in rep.per_dependency:
        print(f"  {d.original} -> {d.best or '-'}  M = {d.score}")
    for note in rep.notes:
        print(f"  note: {note}")
    return 0


def cmd_run(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    scfg: SessionConfig = cfgmod.session_config(cfg, model=_need_model(cfg))
    gt = Path(args.ground_truth).read_text() if args.ground_truth else None
    rec = run_session(args.repo, gt, scfg, store=_store(cfg), package_name=args.package, version=_version(args),
                      source_url=args.url)
    if args.results:
        ResultsWriter(args.results).write(to_stream_record(Task(rec.package_name, str(args.repo), args.ground_truth),
                                                           rec))
    print(f"package: {rec.package_name}")
    print(f"status: {rec.status}" + (f" (attempt {rec.successful_attempt})" if rec.successful_attempt else ""))
    for a in rec.attempts:
        flags = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in a.report.stage_flags().items())
        print(f"  attempt {a.index}: {flags} failure={a.failure.value}")
    if rec.oscillation:
        print("  note: the repair loop oscillated between two error states")
    if rec.abort_reason:
        print(f"  aborted: {rec.abort_reason}")
    if rec.metrics is not None:
        sv = rec.metrics.variant_score
        print(f"S_v = {'excluded' if sv is None else sv}")
        print(f"S_d = {rec.metrics.dependency_score}")
    print(f"tokens: {rec.total_tokens}")
    final = rec.final_recipe()
    if final and rec.status == "installed":
        print("\n" + final)
    return 0 if rec.status == "installed" else 1


def cmd_bench(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    model = _need_model(cfg)
    configs = cfgmod.bench_configs(cfg, model)
    tasks = TaskSet.load(args.tasks).resolve(Path(cfgmod.path_setting(cfg, "cache")) / "sources")
    store = _store(cfg)
    results = args.results or cfgmod.path_setting(cfg, "results")
    parallel = args.parallel or int(cfg["bench"]["parallelism"])
    sample = args.sample if args.sample is not None else cfg["bench"].get("sample")

    def session(task, scfg):
        return run_session(task.repo, task.ground_truth_text(), scfg, store=store, package_name=task.package,
                           version=task.version(), source_url=task.source_url)

    rep = run_bench(tasks, configs, parallel, results, session, sample=sample, seed=int(cfg.get("seed", 0)),
                    limit=args.limit)
    print(render_text(summary_table(rep)))
    if args.report_dir:
        write_report(rep, args.report_dir)
    return 0


def cmd_report(args: argparse.Namespace, cfg: dict[str, Any]) -> int:
    records = read_records(args.results)
    if not records:
        raise ValueError(f"{args.results}: no records")
    rep = report(records)
    if args.output:
        paths = write_report(rep, args.output)
        print(paths["text"].read_text())
    else:
        print(render_text(summary_table(rep)))
        print(render_text(failure_table(rep)))
    return 0


COMMANDS = {"extract": cmd_extract, "ingest": cmd_ingest, "retrieve": cmd_retrieve, "generate": cmd_generate,
            "evaluate": cmd_evaluate, "score": cmd_score, "run": cmd_run, "bench": cmd_bench, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    verbose = getattr(args, "verbose", 0) or 0
    level = logging.ERROR if getattr(args, "quiet", False) else (
        logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (RecipeForgeError, OSError, ValueError) as exc:
        print(f"recipeforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
