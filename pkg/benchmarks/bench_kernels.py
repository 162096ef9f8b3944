"""Time the compiled and pure-Python kernel backends on identical inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from recordbreak import kernels


def workloads(rng):
    vals = rng.normal(size=(64, 40 * 93))
    vals[rng.random(vals.shape) < 0.02] = np.nan
    eta = rng.normal(0, 2, 200_000)
    pos = rng.random(eta.size) < 0.3
    u = rng.random(eta.size)
    coef = rng.normal(0, 0.5, (2, 8))
    lag0 = (rng.random((2000, 2)) < 0.2).astype(float)
    log_dist = np.log1p(rng.uniform(0, 200, 2000))
    v, uu = rng.normal(size=(92, 2000, 2)), rng.random((92, 2000, 2))
    n = 40
    A = rng.normal(size=(n, n))
    sweep_args = (rng.normal(size=(3, n)), A @ A.T + n * np.eye(n), np.full(3, 0.1),
                  np.abs(rng.normal(size=(6, n))), np.full((3, n), -1.0), rng.normal(size=(3, n)),
                  np.log(rng.random((3, n))), np.ones(3, dtype=np.int8))
    fields = rng.normal(size=(3, n))
    return {
        "record_marks (64 x 3720)": lambda k: k.record_marks(vals),
        "truncnorm_latent (2e5)": lambda k: k.truncnorm_latent(eta, pos, u),
        "simulate_days (92 days x 2000 cells)": lambda k: k.simulate_days(coef, lag0, log_dist, -1.5, v, uu),
        "sv_coreg_sweep (40 sites)": lambda k: k.sv_coreg_sweep(fields.copy(), *sweep_args),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled_available():
        backends["compiled"] = kernels.get_backend("compiled")
    else:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'kernel':40s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in workloads(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for b, mod in backends.items()}
        speed = f"{times['python'] / times['compiled']:8.1f}x" if "compiled" in times else ""
        print(f"{name:40s} " + " ".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
