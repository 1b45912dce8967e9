#!/usr/bin/env python3
"""Exercise the benchmark harness over a small ablation grid.

Each task is a corpus recipe replayed through a scripted model that makes
a seeded number of mistakes before producing a working recipe; configurations
with references get fewer mistakes.  The numbers are synthetic.  The point
is the machinery: streaming results, resume, per-configuration tables,
cumulative success curves and failure incidence.

    python scripts/ablation_grid.py --out grid-out [--sample 10] [--seed 1]
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import CORPUS, FIXTURES, FXDIV_NO_VERSIONS, FXDIV_OK, FXDIV_SYNTAX, FXDIV_UNKNOWN_DEP, scripted  # noqa: E402
from recipeforge.bench import Task, TaskSet, render_text, run_bench, summary_table, write_report  # noqa: E402
from recipeforge.evaluation import SandboxConfig  # noqa: E402
from recipeforge.knowledge import ingest, load_corpus  # noqa: E402
from recipeforge.recipe import pascal_case  # noqa: E402
from recipeforge.repair import SessionConfig, run_session  # noqa: E402

MISTAKES = [FXDIV_UNKNOWN_DEP, FXDIV_SYNTAX, FXDIV_NO_VERSIONS]
# mean number of broken replies before a working one, per configuration
DIFFICULTY = {"zero-shot": 2.0, "random1": 1.5, "similar1": 1.0, "similar2": 0.7, "similar2-audit": 0.5}


def grid() -> list[SessionConfig]:
    sandbox = SandboxConfig(kind="stub")
    return [
        SessionConfig(k_max=1, reference_strategy="none", label="zero-shot", sandbox=sandbox),
        SessionConfig(k_max=5, reference_strategy="random", reference_count=1, label="random1", sandbox=sandbox),
        SessionConfig(k_max=5, reference_strategy="similar", reference_count=1, label="similar1", sandbox=sandbox),
        SessionConfig(k_max=5, reference_strategy="similar", reference_count=2, label="similar2", sandbox=sandbox),
        SessionConfig(k_max=5, reference_strategy="similar", reference_count=2, audit_feedback=True,
                      label="similar2-audit", sandbox=sandbox),
    ]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="grid-out", help="output directory (results stream and tables)")
    ap.add_argument("--sample", type=int, help="seeded subsample of tasks")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--parallel", type=int, default=4)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store, _ = ingest(load_corpus(CORPUS))
    repo = FIXTURES / "repos" / "fxdiv"
    tasks = TaskSet([Task(p.stem.replace("_", "-"), str(repo), str(p)) for p in sorted(CORPUS.glob("*.py"))])

    def session(task: Task, cfg: SessionConfig):
        rng = random.Random(f"{args.seed}:{task.package}:{cfg.label}")
        n_bad = min(int(rng.expovariate(1 / DIFFICULTY[cfg.label])), 6)
        rename = lambda text: text.replace("class Fxdiv(", f"class {pascal_case(task.package)}(")  # noqa: E731
        replies = [rename(rng.choice(MISTAKES)) for _ in range(n_bad)] + [rename(FXDIV_OK)]
        run_cfg = SessionConfig(**{**vars(cfg), "model": scripted(*replies), "rng_seed": args.seed})
        return run_session(task.repo, task.ground_truth_text(), run_cfg, store=store, package_name=task.package)

    rep = run_bench(tasks, grid(), args.parallel, out / "results.jsonl", session, sample=args.sample, seed=args.seed)
    paths = write_report(rep, out / "report")
    print(render_text(summary_table(rep)))
    print("cumulative install fraction by attempt")
    for row in rep.rows:
        print(f"  {row.label:15s} " + " ".join(f"{x:.2f}" for x in row.cumulative))
    print(f"\ntables in {paths['text'].parent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
