"""Run the scenario study for every scenario and print one error table per scenario.

    python scripts/run_simulation_tables.py --out results --reps 100 --workers 4
"""

import argparse
import sys
import time
from pathlib import Path

from fpcbag.experiment import ExperimentConfig, emit_outputs, run_experiment
from fpcbag.simulate import SCENARIOS


def table_text(table) -> str:
    rules = [r.value for r in table.rules]
    lines = ["classifier".ljust(14) + "".join(r.rjust(16) for r in rules)]
    mean, sd = table.mean(), table.sd()
    for i, kind in enumerate(table.classifiers):
        cells = "".join(f"{mean[i, j]:9.2f} ({sd[i, j]:4.1f})" for j in range(len(rules)))
        lines.append(kind.value.ljust(14) + cells)
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--scenarios", default=",".join(str(s) for s in SCENARIOS))
    ap.add_argument("--classifiers", default="lda,qda,nb,logit,rf,gbm")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--B", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    for sid in (int(s) for s in args.scenarios.split(",")):
        config = ExperimentConfig(
            scenario=sid,
            classifiers=tuple(args.classifiers.split(",")),
            repetitions=args.reps,
            B=args.B,
            seed=args.seed,
            workers=args.workers,
        )
        start = time.time()
        table = run_experiment(config)
        emit_outputs(table, Path(args.out) / f"scenario{sid}")
        print(f"\nscenario {sid}  ({table.n_reps} reps, {time.time() - start:.0f}s)")
        print(table_text(table))
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
