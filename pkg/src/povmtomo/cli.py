"""Command-line interface: ``povmtomo simulate | estimate | compare | validate``.

Exit codes
----------
0  success
1  usage error, unreadable or invalid input
2  validation failure (``validate`` failed, or ``estimate`` produced a
   non-physical POVM set, as linear inversion may)
3  iterative estimator did not converge; the result file is still written
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import sys
import warnings

import numpy as np

from . import io
from .core import log_likelihood, povm_to_real_vector, relative_frequencies, validate_povm
from .errors import NotConvergedWarning, PovmTomoError
from .estimators import METHODS, EstimatorOptions, linear_inversion
from .simulator import SimConfig, probe_states_12, sample_counts, stern_gerlach_povms, true_probabilities

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

ESTIMATE_METHODS = ("linear",) + tuple(METHODS)
DEFAULT_METHOD = "ml-dform"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for validation failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _seed(text):
    v = _nonneg_int(text)
    if v >= 2**64:
        raise argparse.ArgumentTypeError("seed must be below 2**64")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="povmtomo", description="Maximum-likelihood POVM reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a tomography experiment and write an experiment file")
    p.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")
    p.add_argument("--shots", type=_positive_int, default=30, help="measurements per probe state (default 30)")
    p.add_argument("-o", "--output", required=True, help="experiment file to write")
    p.add_argument("--povm", help="POVM or result file with the true POVM (default: Stern-Gerlach)")
    p.add_argument("--probes", help="probe or experiment file with the probe states (default: 12 spin-1 probes)")
    p.add_argument("--truth-out", help="also write the true POVM to this file")

    p = sub.add_parser("estimate", help="reconstruct the POVM from an experiment file")
    p.add_argument("input", help="experiment file")
    p.add_argument("-m", "--method", choices=ESTIMATE_METHODS, default=DEFAULT_METHOD,
                   help=f"estimator (default {DEFAULT_METHOD})")
    p.add_argument("-o", "--output", required=True, help="result file to write")
    p.add_argument("--max-iterations", type=_nonneg_int, help="iteration budget (default 10000)")
    p.add_argument("--tol", type=_positive_float, help="convergence tolerance on the per-step change")
    p.add_argument("--prob-floor", type=_positive_float, help="floor for p_lm in the f/p ratios")
    p.add_argument("--support-tol", type=_positive_float, help="relative threshold for the probe support")

    p = sub.add_parser("compare", help="compare two POVM sets (text report and CSV)")
    p.add_argument("estimated", help="result or POVM file")
    p.add_argument("reference", nargs="?", help="result or POVM file to compare against")
    p.add_argument("--reference-sg", action="store_true", help="compare against the true Stern-Gerlach POVM")
    p.add_argument("--csv", help="write the component table as CSV to this path ('-' for stdout)")

    p = sub.add_parser("validate", help="check positivity and completeness of a POVM set")
    p.add_argument("file", help="result or POVM file")
    return parser


# commands ------------------------------------------------------------------


def _probability_table(probs: np.ndarray, labels) -> str:
    k = probs.shape[0]
    width = max(len(s) for s in labels)
    head = f"{'probe':<{width}}  " + "  ".join(f"{'p' + str(l):>8}" for l in range(k))
    rows = [head]
    for m, label in enumerate(labels):
        rows.append(f"{label:<{width}}  " + "  ".join(f"{probs[l, m]:8.5f}" for l in range(k)))
    return "\n".join(rows)


def cmd_simulate(args, out) -> int:
    povm = io.read_povm(args.povm) if args.povm else stern_gerlach_povms()
    if args.probes:
        doc = io.read_json(args.probes)
        probes = io.probes_from_dict(doc)
    else:
        probes = probe_states_12()
    if povm.dim != probes.dim:
        raise UsageError(f"POVM dimension {povm.dim} does not match probe dimension {probes.dim}")
    config = SimConfig(args.seed, args.shots, probes, povm)
    counts = sample_counts(config)
    meta = {
        "seed": args.seed,
        "shots": args.shots,
        "generator": "numpy Philox, SeedSequence([seed, probe_index]), inverse-CDF categorical",
        "true_povm": "custom" if args.povm else "stern-gerlach",
        "probe_set": "custom" if args.probes else "probe_states_12",
    }
    io.write_experiment(args.output, io.ExperimentFile(probes, counts, meta))
    if args.truth_out:
        io.write_povm(args.truth_out, povm)
    print("true outcome probabilities", file=out)
    print(_probability_table(true_probabilities(config), probes.labels), file=out)
    print(f"wrote {len(probes)} probes x {povm.k} outcomes, {counts.total} counts to {args.output}", file=out)
    return EXIT_OK


def _options(args) -> EstimatorOptions:
    changes = {}
    if args.max_iterations is not None:
        changes["max_iterations"] = args.max_iterations
    if args.tol is not None:
        changes["convergence_tol"] = args.tol
    if args.prob_floor is not None:
        changes["prob_floor"] = args.prob_floor
    if args.support_tol is not None:
        changes["support_rel_tol"] = args.support_tol
    return EstimatorOptions(**changes)


def cmd_estimate(args, out) -> int:
    exp = io.read_experiment(args.input)
    opts = _options(args)
    if args.method == "linear":
        res = linear_inversion(exp.counts, exp.probes, rcond=opts.support_rel_tol)
        diag = io.result_diagnostics(res, {"rcond": opts.support_rel_tol})
        diag["final_loglik"] = io.json_safe(
            log_likelihood(res.povm, relative_frequencies(exp.counts), exp.probes)
        )
        diag["rank"] = res.rank
        diag["rank_deficient"] = res.rank_deficient
        converged = True
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConvergedWarning)
            res = METHODS[args.method](exp.counts, exp.probes, opts)
        diag = io.result_diagnostics(res, opts.as_dict())
        converged = res.converged
    io.write_result(args.output, io.ResultFile(res.povm, diag))

    rep = res.validation
    print(f"method:     {args.method}", file=out)
    if args.method != "linear":
        print(f"iterations: {res.iterations_used} ({'converged' if converged else 'NOT converged'})", file=out)
    print(f"loglik:     {diag['final_loglik']}", file=out)
    print(rep.summary(), file=out)
    print(f"wrote {args.output}", file=out)
    if not converged:
        return EXIT_NOT_CONVERGED
    if not rep.passed:
        print(f"non-physical result: outcome {rep.worst_outcome} has eigenvalue {rep.min_eigenvalue:.6e}", file=out)
        return EXIT_INVALID
    return EXIT_OK


def comparison_rows(estimated, reference):
    """``(outcome_index, component_index, estimated, reference)`` for every real-vector component."""
    rows = []
    for l, (a, b) in enumerate(zip(estimated.operators, reference.operators)):
        va, vb = povm_to_real_vector(a), povm_to_real_vector(b)
        rows.extend((l, c, float(x), float(y)) for c, (x, y) in enumerate(zip(va, vb)))
    return rows


def write_csv(rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["outcome_index", "component_index", "estimated", "reference"])
    for l, c, x, y in rows:
        w.writerow([l, c, repr(x), repr(y)])


def cmd_compare(args, out) -> int:
    if (args.reference is None) == (not args.reference_sg):
        raise UsageError("give exactly one of a reference file or --reference-sg")
    est = io.read_povm(args.estimated)
    ref = stern_gerlach_povms() if args.reference_sg else io.read_povm(args.reference)
    if (est.k, est.dim) != (ref.k, ref.dim):
        raise UsageError(f"shape mismatch: {est.k} outcomes of dim {est.dim} vs {ref.k} outcomes of dim {ref.dim}")
    dists = np.linalg.norm(est.operators - ref.operators, axis=(1, 2))
    print("Frobenius distance per outcome", file=out)
    for l, d in enumerate(dists):
        print(f"  outcome {l}: {d:.6e}", file=out)
    rows = comparison_rows(est, ref)
    print(f"{'outcome':>7} {'comp':>4} {'estimated':>13} {'reference':>13}", file=out)
    for l, c, x, y in rows:
        print(f"{l:>7} {c:>4} {x:>13.6f} {y:>13.6f}", file=out)
    if args.csv == "-":
        write_csv(rows, out)
    elif args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
    return EXIT_OK


def cmd_validate(args, out) -> int:
    rep = validate_povm(io.read_povm(args.file))
    print(rep.summary(), file=out)
    if not rep.passed:
        print(f"offending outcome {rep.worst_outcome}: min eigenvalue {rep.min_eigenvalue:.6e}", file=out)
        return EXIT_INVALID
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, PovmTomoError, ValueError, OSError) as exc:
        print(f"povmtomo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run(argv) -> tuple:
    """Run the CLI in-process, returning ``(exit_code, stdout_text)``."""
    buf = _stdio.StringIO()
    code = main(argv, buf)
    return code, buf.getvalue()
