"""5x2 cross-validation of every learner on the bundled datasets, then
win-draw-loss of DBL^n against the others and a summary normalised by DBL^2.
"""
from __future__ import annotations

import argparse
import json
import warnings
from pathlib import Path

from dbl.datasets import available, load_bundled
from dbl.evaluation import CvPlan, cross_validate, experiment_record, normalized_summary, wdl
from dbl.training import AlgoSpec

LEARNERS = {
    "DBL2": AlgoSpec("dbl", n=2),
    "LR2": AlgoSpec("lr", n=2),
    "A2JE": AlgoSpec("anje", n=2),
    "A1DE": AlgoSpec("ande", n=2),
    "NB": AlgoSpec("nb"),
}
METRICS = ("zero_one", "rmse", "bias", "variance")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--datasets", nargs="*", default=available())
    ap.add_argument("--rounds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="wdl")
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plan = CvPlan(rounds=args.rounds, folds=2, seed=args.seed)
    table: dict[str, dict[str, dict[str, float]]] = {}
    records: dict[str, list] = {k: [] for k in LEARNERS}
    for name in args.datasets:
        raw = load_bundled(name)
        table[name] = {}
        for label, spec in LEARNERS.items():
            rec = experiment_record(name, spec, plan, cross_validate(raw, spec, plan))
            records[label].append(rec)
            table[name][label] = rec["metrics"]
        print(name, {k: round(v["zero_one"], 4) for k, v in table[name].items()}, flush=True)
    for label, recs in records.items():
        (out / f"{label}.json").write_text(json.dumps(recs, indent=1) + "\n")
    print("\nW-D-L of DBL2 against each learner (lower metric wins)")
    for other in LEARNERS:
        if other == "DBL2":
            continue
        cells = []
        for metric in METRICS:
            s = wdl({d: table[d]["DBL2"][metric] for d in table}, {d: table[d][other][metric] for d in table})
            cells.append(f"{metric} {s.wins}/{s.draws}/{s.losses} p={s.p_value:.3f}")
        print(f"  vs {other:5s}: " + "; ".join(cells))
    print("\nGeometric mean of metric / DBL2 metric")
    for label, vals in normalized_summary(table, "DBL2").items():
        print(f"  {label:5s} " + " ".join(f"{m}={vals[m]:.3f}" for m in METRICS))


if __name__ == "__main__":
    main()
