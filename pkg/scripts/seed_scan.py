"""Scan simulator seeds for linear-inversion estimates with negative eigenvalues.

Writes ``tests/fixtures/seed_scan.json``: for every seed at 30 shots per
probe, the most negative eigenvalue of the linear-inversion POVM and the
validation status of the ML (D-form) estimate on the same counts.

    python scripts/seed_scan.py [--seeds 100] [--shots 30] [-o PATH]
"""
import argparse
import json
from pathlib import Path

import povmtomo
from povmtomo.estimators import linear_inversion, ml_dform
from povmtomo.simulator import SimConfig, sample_counts

THRESHOLD = -1e-4
DEFAULT_OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "seed_scan.json"


def scan(seeds, shots):
    rows = []
    for seed in seeds:
        config = SimConfig.stern_gerlach(seed, shots)
        counts = sample_counts(config)
        lin = linear_inversion(counts, config.probe_set)
        ml = ml_dform(counts, config.probe_set)
        rows.append({
            "seed": seed,
            "linear_min_eigenvalue": lin.validation.min_eigenvalue,
            "linear_worst_outcome": lin.validation.worst_outcome,
            "ml_passed": ml.validation.passed,
            "ml_min_eigenvalue": ml.validation.min_eigenvalue,
            "ml_completeness_residual": ml.validation.completeness_residual,
            "ml_converged": ml.converged,
        })
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--shots", type=int, default=30)
    ap.add_argument("-o", "--output", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()

    rows = scan(range(args.seeds), args.shots)
    offending = [r["seed"] for r in rows if r["linear_min_eigenvalue"] <= THRESHOLD and r["ml_passed"]]
    doc = {
        "shots": args.shots,
        "threshold": THRESHOLD,
        "package_version": povmtomo.__version__,
        "offending_seeds": offending,
        "first_offending_seed": offending[0] if offending else None,
        "scan": rows,
    }
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"{len(offending)} of {len(rows)} seeds give a non-physical linear inversion; first: {doc['first_offending_seed']}")


if __name__ == "__main__":
    main()
