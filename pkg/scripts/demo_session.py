#!/usr/bin/env python3
"""Run one generate-evaluate-repair session on the bundled FXdiv fixture.

The model is scripted: its first reply depends on a package that does not
exist, its second reply is a working recipe.  References come from the
test corpus, evaluation uses the hermetic stub sandbox, so the script runs
offline in about a second.

    python scripts/demo_session.py [--artifacts DIR] [--k 5]
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import CORPUS, FIXTURES, FXDIV_OK, FXDIV_UNKNOWN_DEP, scripted  # noqa: E402
from recipeforge.evaluation import SandboxConfig  # noqa: E402
from recipeforge.knowledge import ingest, load_corpus  # noqa: E402
from recipeforge.repair import SessionConfig, run_session  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--artifacts", help="write prompts, recipes and logs here")
    ap.add_argument("--k", type=int, default=5, help="maximum attempts")
    ap.add_argument("--audit-feedback", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    store, skipped = ingest(load_corpus(CORPUS))
    cfg = SessionConfig(k_max=args.k, reference_strategy="similar", reference_count=2,
                        model=scripted(FXDIV_UNKNOWN_DEP, FXDIV_OK), audit_feedback=args.audit_feedback,
                        sandbox=SandboxConfig(kind="stub"), artifact_dir=args.artifacts)
    rec = run_session(FIXTURES / "repos" / "fxdiv", (CORPUS / "fxdiv.py").read_text(), cfg, store=store)

    print(f"package      {rec.package_name}")
    print(f"references   {', '.join(rec.references['packages'])}")
    for a in rec.attempts:
        flags = " ".join(f"{s.stage}={'ok' if s.passed else 'FAIL'}" for s in a.report.stages)
        print(f"attempt {a.index}    {flags}  failure={a.failure.value}  tokens={a.token_usage}")
        if a.failure.line:
            print(f"             evidence: {a.failure.line}")
    print(f"status       {rec.status} (attempt {rec.successful_attempt})")
    if rec.metrics:
        print(f"S_v = {rec.metrics.variant_score}  S_d = {rec.metrics.dependency_score}")
    return 0 if rec.status == "installed" else 1


if __name__ == "__main__":
    sys.exit(main())
