"""Populate the acceptance-run cache: corpus, trainings, evaluations.

Everything lands under GRASPKIT_ACCEPTANCE_ROOT (default acceptance_runs/)
through the same cached pipeline stages the acceptance tests consult, so
running this first simply makes `pytest tests/test_acceptance.py` fast.
Stages are ordered to surface trend problems as early as possible.
"""

import os
import sys
import time
from pathlib import Path

import torch

torch.set_num_threads(1)

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from graspkit.pipeline import (  # noqa: E402
    DEFAULT_SEEDS,
    PipelineConfig,
    ensure_corpus,
    ensure_entropy_eval,
    ensure_pair_eval,
    ensure_pseudo_labels,
    ensure_student,
    ensure_teacher,
    run_tasks,
    save_config,
)

ROOT = Path(os.environ.get("GRASPKIT_ACCEPTANCE_ROOT",
                           Path(__file__).parent.parent / "acceptance_runs"))
WORKERS = int(os.environ.get("GRASPKIT_WORKERS", "2"))
CFG = PipelineConfig()
FRACTIONS = (0.05, 0.2, 1.0)
SEEDS = DEFAULT_SEEDS


def stamp(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def phase(name, tasks):
    t0 = time.time()
    stamp(f"{name}: {len(tasks)} tasks on {WORKERS} workers")
    run_tasks(tasks, WORKERS)
    stamp(f"{name} done in {time.time() - t0:.0f}s")


def main():
    save_config(CFG, ROOT)
    t0 = time.time()
    stamp("corpus (datasets + affordance)")
    ensure_corpus(CFG, ROOT)
    stamp(f"corpus done in {time.time() - t0:.0f}s")

    phase("teachers", [(ensure_teacher, CFG, ROOT, f, s) for f in FRACTIONS for s in SEEDS])

    # critical fraction first: the >=3pp mean-gap criterion lives at 0.2
    phase("students f=0.2", [(ensure_student, CFG, ROOT, 0.2, s) for s in SEEDS])
    phase("pair evals f=0.2", [(ensure_pair_eval, CFG, ROOT, 0.2, s) for s in SEEDS])

    phase("students f=1.0 (shared with angle/topn K=16, n=1)",
          [(ensure_student, CFG, ROOT, 1.0, s) for s in SEEDS])
    phase("students f=0.05", [(ensure_student, CFG, ROOT, 0.05, s) for s in SEEDS])
    phase("pair evals f=1.0 and f=0.05",
          [(ensure_pair_eval, CFG, ROOT, f, s) for f in (1.0, 0.05) for s in SEEDS])

    phase("angle-sweep students K=1 and K=64",
          [(ensure_student, CFG, ROOT, 1.0, s, k, 1) for k in (1, 64) for s in SEEDS])
    phase("top-n students n=4",
          [(ensure_student, CFG, ROOT, 1.0, s, 16, 4) for s in SEEDS])

    phase("entropy evals",
          [(ensure_entropy_eval, CFG, ROOT, f, s) for f in FRACTIONS for s in SEEDS])

    stamp(f"ALL DONE in {(time.time() - t0) / 60:.1f} min")
    (ROOT / "POPULATED").write_text(time.strftime("%F %T") + "\n")


if __name__ == "__main__":
    main()
