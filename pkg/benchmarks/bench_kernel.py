"""Compiled (MPFR) kernel against the pure-Python fallback on the example's jobs.

    python benchmarks/bench_kernel.py [--norm-bound 2000] [--digits 35] [--repeat 3]
"""

import argparse
import time

import mpmath

from atc import atrpoint, hmfexp, reduction
from atc.eigendata import extend_table, load_fixture, pseudo_eigenvalue


def run(backend, eigen, jobs, B, pb):
    t = time.perf_counter()
    total, _ = hmfexp.integrate_jobs(eigen, jobs, B, hmfexp.alpha_form(pseudo_eigenvalue(eigen)),
                                     prec=pb, backend=backend)
    return time.perf_counter() - t, total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--norm-bound", type=int, default=2000)
    ap.add_argument("--digits", type=int, default=35)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()

    inst = atrpoint.example_instance()
    pb = atrpoint.bits(a.digits)
    eigen = extend_table(load_fixture(inst.eigendata_path), a.norm_bound)
    _, bp = atrpoint.fixed_point(inst.embedding, pb)
    jobs = reduction.sum_jobs(atrpoint.verify_script(inst, bp), pb)

    backends = ["python"] + (["mpfr"] if hmfexp.BACKEND == "mpfr" else [])
    best, vals = {}, {}
    for be in backends:
        times = []
        for _ in range(a.repeat):
            dt, tot = run(be, eigen, jobs, a.norm_bound, pb)
            times.append(dt)
        best[be], vals[be] = min(times), tot.value
        print(f"{be:>7}: {best[be]:8.3f}s  ({tot.terms} terms)")
    if len(backends) == 2:
        with mpmath.workprec(pb):
            diff = abs(vals["mpfr"] - vals["python"])
        print(f"speedup {best['python'] / best['mpfr']:.1f}x, |difference| = {mpmath.nstr(diff, 3)}")


if __name__ == "__main__":
    main()
