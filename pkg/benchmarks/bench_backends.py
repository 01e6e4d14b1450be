#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the alternating-minimization loop and the subset-pair scan in both
flavours and reports the deviation of backend-invariant outputs.  Run from
the repository root:

    python benchmarks/bench_backends.py

Set IA_RTDD_BACKEND=numpy to check what the fallback-only experience costs.
"""

import time

import numpy as np

from ia_rtdd import _kernels
from ia_rtdd.beamform import init_postcoders
from ia_rtdd.model import DofAllocation, NetworkConfig, RngStream, sample_channels

SIM = NetworkConfig(12, (8, 8, 8, 8), 18, (4, 4, 4))
SIM_DOF = DofAllocation((3, 3, 3, 3), (2, 2, 2))
ITERS = 400
REPEATS = 3


def packed_inputs():
    channels = sample_channels(SIM, RngStream(0, 0))
    k_users, l_users = SIM.num_alpha, SIM.num_beta
    g_pad = np.zeros((k_users, l_users, max(SIM.n_alpha), max(SIM.n_beta)),
                     dtype=complex)
    for k in range(k_users):
        for l in range(l_users):
            g_pad[k, l, :SIM.n_alpha[k], :SIM.n_beta[l]] = channels.g_cross[k][l]
    u0 = init_postcoders(SIM, SIM_DOF, RngStream(0, 1))
    u0_pad = np.zeros((k_users, max(SIM.n_alpha), max(SIM_DOF.d_alpha)),
                      dtype=complex)
    for k in range(k_users):
        u0_pad[k, :SIM.n_alpha[k], :SIM_DOF.d_alpha[k]] = u0[k]
    return (g_pad, np.array(SIM.n_alpha), np.array(SIM.n_beta),
            np.array(SIM_DOF.d_alpha), np.array(SIM_DOF.d_beta),
            np.full(k_users, 250.0 / 3), np.full(l_users, 500.0),
            u0_pad, ITERS, 1e-300)


def time_call(fn, *args, repeats=REPEATS):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_alignment():
    args = packed_inputs()
    rows = []
    if _kernels.USE_NUMBA:
        _kernels._alignment_loop(*args)  # trigger compilation outside timing
        t_nb, res_nb = time_call(_kernels._alignment_loop, *args)
        rows.append(("numba", t_nb, res_nb))
    t_py, res_py = time_call(_kernels._alignment_loop_py, *args)
    rows.append(("numpy", t_py, res_py))
    print(f"alignment loop ({ITERS} iterations, simulation network):")
    for name, t, _ in rows:
        print(f"  {name:>6}: {t:8.3f} s  ({t / ITERS * 1e6:7.1f} us/iteration)")
    if len(rows) == 2:
        ta, tb = rows[0][1], rows[1][1]
        print(f"  speedup: {tb / ta:.1f}x")
        trace_a, trace_b = rows[0][2][2], rows[1][2][2]
        dev = np.abs(trace_a - trace_b).max() / max(trace_a[0], 1e-300)
        print(f"  leakage-trace deviation between backends: {dev:.2e}")


def bench_subset_scan():
    rng = np.random.default_rng(1)
    n_a = rng.integers(1, 9, size=9).astype(np.int64)
    n_b = rng.integers(1, 9, size=9).astype(np.int64)
    d_a = np.array([rng.integers(0, n + 1) for n in n_a], dtype=np.int64)
    d_b = np.array([rng.integers(0, n + 1) for n in n_b], dtype=np.int64)
    print("subset scan (9 + 9 users, 262144 subset pairs):")
    if _kernels.USE_NUMBA:
        _kernels._subset_scan_loop(d_a, n_a, d_b, n_b)
        t_nb, res_nb = time_call(_kernels._subset_scan_loop, d_a, n_a, d_b, n_b,
                                 repeats=10)
        print(f"  numba loop:   {t_nb * 1e3:8.2f} ms")
    t_py, res_py = time_call(_kernels._subset_scan_vec, d_a, n_a, d_b, n_b,
                             repeats=10)
    print(f"  numpy vector: {t_py * 1e3:8.2f} ms")
    if _kernels.USE_NUMBA:
        same = tuple(int(x) for x in res_nb) == tuple(int(x) for x in res_py)
        print(f"  identical outputs: {same}")


if __name__ == "__main__":
    print(f"active backend: {_kernels.BACKEND}")
    bench_alignment()
    bench_subset_scan()
