"""Time the numba kernels against their numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--chains 50000] [--repeat 20] [--threads 0]

Both backends are imported in one process; the kernel is passed explicitly
to the stepping functions, so ``HOOKEAN_MKV_BACKEND`` does not matter here.
"""
import argparse
import time

import numpy as np

from hookean_mkv import chain_dynamics as cd
from hookean_mkv import fokker_planck as fp
from hookean_mkv._accel import set_threads
from hookean_mkv.geometry import ConvexDomain


def _time(fn, repeat: int) -> float:
    fn()                                    # warm-up (compilation, caches)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_chains(n_chains: int, repeat: int) -> list[tuple[str, float, float]]:
    rows = []
    for name, dom in [("box", ConvexDomain.box([-1.0, -1.0], [1.0, 1.0])), ("disk", ConvexDomain.disk(1.0))]:
        p = cd.ChainParams(J=2, d=2, eps=0.25)
        e = cd.init_ensemble(p, dom, n_chains, 0)
        for mode, step, kernels in [("kinetic", cd.step_kinetic, (cd._kinetic_numba, cd._kinetic_numpy)),
                                    ("overdamped", cd.step_overdamped,
                                     (cd._overdamped_numba, cd._overdamped_numpy))]:
            t = [_time(lambda k=k: step(e, p, dom, 0.002, kernel=k), repeat) for k in kernels]
            rows.append((f"{mode} step, {name}, N={n_chains}", *t))
        # kernels alone, without noise generation and array copies
        z = cd.gaussian_block(0, 0, e.stream_ids, p.n_beads, p.d, 2)
        U = np.zeros_like(e.r)
        c = cd.ou_coefficients(0.002, p.eps, p.beta)
        kp = dom.kernel_params()
        t = []
        for k in (cd._kinetic_numba, cd._kinetic_numpy):
            r, v = e.r.copy(), e.v.copy()
            t.append(_time(lambda k=k, r=r, v=v: k(r, v, U, z[0], z[1], c, 1 / p.eps, True, *kp, 8), repeat))
        rows.append((f"kinetic kernel only, {name}", *t))
    return rows


def bench_transport(repeat: int) -> list[tuple[str, float, float]]:
    g = fp.PhaseGrid(ConvexDomain.box([-1.0], [1.0]), 24, 32)
    op = fp.assemble_fp_operator(g, 0.5)
    m = np.random.default_rng(0).random(g.shape)
    t = [_time(lambda k=k: fp.transport_increment(op, m, 1e-3, kernel=k), repeat)
         for k in (fp._transport_numba, fp._transport_numpy)]
    return [(f"FP transport, grid {g.shape}", *t)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chains", type=int, default=50000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--threads", type=int, default=0)
    args = ap.parse_args()
    set_threads(args.threads)
    rows = bench_chains(args.chains, args.repeat) + bench_transport(args.repeat)
    print(f"{'kernel':42s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, tn, tp in rows:
        print(f"{name:42s} {1e3 * tn:11.2f} {1e3 * tp:11.2f} {tp / tn:9.1f}")


if __name__ == "__main__":
    main()
