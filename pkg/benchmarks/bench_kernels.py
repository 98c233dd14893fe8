"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--episode-T 2000]

Kernel timings call both modules directly; the episode timing runs a
subprocess per backend so ``CCCONUCB_PURE`` takes effect at import.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ccconucb import _kernels_py as py

try:
    from ccconucb import _kernels as cy
except ImportError:
    cy = None

EPISODE = """
import json, time
from ccconucb import kernels
from ccconucb.env import GenConfig, generate_instance
from ccconucb.harness import RunConfig, run_episode
inst = generate_instance(GenConfig(M={M}, d={d}, K=2), 0)
t0 = time.perf_counter()
log = run_episode(inst, "ccconucb_known", RunConfig(), {T}, 0, probes=False)
print(json.dumps({{"backend": kernels.BACKEND, "seconds": time.perf_counter() - t0, "regret": float((log.optimal - log.expected).sum())}}))
"""


def _case(d, rows, groups, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    Vinv = np.linalg.inv(A @ A.T + d * np.eye(d))
    X = rng.uniform(-1, 1, size=(rows, d))
    offsets = np.linspace(0, rows, groups + 1).astype(np.int64)
    mask = np.zeros(groups, dtype=np.uint8)
    return X, offsets, mask, rng.normal(size=d), Vinv


def _best(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number


def bench_kernels():
    rows = []
    for d, n_rows in ((5, 40), (5, 4000), (10, 20000)):
        X, off, mask, theta, Vinv = _case(d, n_rows, n_rows // 2)
        number = max(10, 200_000 // n_rows)
        for name, call in (
            ("group_lower_total", lambda m: m.group_lower_total(X, off, mask, 0.0, theta, Vinv, 2.0, 0, 1.0)),
            ("arm_bounds", lambda m: m.arm_bounds(X[:100], theta, Vinv, 2.0)),
        ):
            t_py = _best(lambda: call(py), number)
            t_cy = _best(lambda: call(cy), number) if cy else float("nan")
            rows.append((name, d, n_rows, t_py, t_cy))
    for d in (5, 10):
        x = np.random.default_rng(1).uniform(-1, 1, size=d)

        def fresh():
            return [np.eye(d) * 2, np.eye(d) / 2, np.zeros(d), np.zeros(d)]

        bp, bc = fresh(), fresh()
        t_py = _best(lambda: py.ridge_update(*bp, x, 0.1), 2000)
        t_cy = _best(lambda: cy.ridge_update(*bc, x, 0.1), 2000) if cy else float("nan")
        rows.append(("ridge_update", d, 1, t_py, t_cy))
    return rows


def bench_episode(T, M, d):
    out = {}
    for pure in ("0", "1"):
        env = dict(os.environ, CCCONUCB_PURE=pure)
        res = subprocess.run([sys.executable, "-c", EPISODE.format(T=T, M=M, d=d)], env=env,
                             capture_output=True, text=True, check=True)
        doc = json.loads(res.stdout)
        out[doc["backend"]] = doc
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episode-T", type=int, default=2000)
    ap.add_argument("--M", type=int, default=20)
    ap.add_argument("--d", type=int, default=5)
    args = ap.parse_args()

    print(f"{'kernel':<18}{'d':>3}{'rows':>7}{'numpy us':>12}{'cython us':>12}{'speedup':>9}")
    for name, d, n, t_py, t_cy in bench_kernels():
        print(f"{name:<18}{d:>3}{n:>7}{t_py * 1e6:>12.2f}{t_cy * 1e6:>12.2f}{t_py / t_cy:>8.1f}x")

    ep = bench_episode(args.episode_T, args.M, args.d)
    print(f"\nknown-mu0 episode, M={args.M} d={args.d} T={args.episode_T}, probes off")
    for backend, doc in ep.items():
        print(f"  {backend:<8}{doc['seconds']:8.2f} s   regret {doc['regret']:.6f}")
    if len(ep) == 2:
        print(f"  speedup {ep['python']['seconds'] / ep['cython']['seconds']:.1f}x")


if __name__ == "__main__":
    main()
