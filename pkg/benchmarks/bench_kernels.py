"""Compare the compiled and pure-Python iteration kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends run the same fixed-budget iterations on the spin-1 fixture
(seed 7, 30 shots) and on noise-free data; the table reports the best
wall time and the largest entrywise difference between their outputs.
"""
import argparse
import time

import numpy as np

from povmtomo import kernels, matcore
from povmtomo.core import relative_frequencies
from povmtomo.simulator import SimConfig, exact_frequencies, probe_states_12, sample_counts, stern_gerlach_povms


def _inputs():
    probes = probe_states_12()
    rhos = probes.stack()
    noisy = relative_frequencies(sample_counts(SimConfig.stern_gerlach(7, 30))).freqs
    exact = exact_frequencies(stern_gerlach_povms(), probes).freqs
    init = np.repeat(np.eye(3, dtype=complex)[None] / 3, 3, axis=0)
    diags = np.stack([np.diag(r).real for r in rhos])
    return rhos, diags, {"seed7": noisy, "exact": exact}, init


def _cases(rhos, diags, f, init, n_iter):
    factors = np.stack([matcore.psd_sqrt(op) for op in init])
    r0 = np.full((3, 3), 1 / 3)
    args = (1e-12, 1e-10, n_iter, 1e-300, False)
    return {
        "fixed_point": lambda k: k.run_fixed_point(init, rhos, f, *args)[0],
        "dform": lambda k: k.run_dform(factors, rhos, f, *args)[0],
        "diagonal": lambda k: k.run_diagonal(r0, diags, f, *args)[0],
    }


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--iterations", type=int, default=2000)
    args = ap.parse_args()

    names = kernels.available()
    if "compiled" not in names:
        print("compiled backend not built; only the Python kernels are available")
    backends = {name: kernels.load(name) for name in names}
    rhos, diags, datasets, init = _inputs()
    print(f"{args.iterations} iterations, best of {args.repeat}")
    print(f"{'data':<7} {'kernel':<12} " + " ".join(f"{n:>10}" for n in backends) + f" {'speedup':>8} {'max diff':>10}")
    for dname, f in datasets.items():
        for kname, fn in _cases(rhos, diags, f, init, args.iterations).items():
            times, outs = {}, {}
            for bname, mod in backends.items():
                times[bname], outs[bname] = _best(lambda: fn(mod), args.repeat)
            cols = " ".join(f"{times[b] * 1e3:>8.1f}ms" for b in backends)
            if len(backends) == 2:
                speed = times["python"] / times["compiled"]
                diff = np.abs(outs["python"] - outs["compiled"]).max()
                print(f"{dname:<7} {kname:<12} {cols} {speed:>7.1f}x {diff:>10.2e}")
            else:
                print(f"{dname:<7} {kname:<12} {cols}")


if __name__ == "__main__":
    main()
