"""Numba vs pure-numpy timings for the index kernels.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Kernel inputs come from the default synthetic graph, with query sizes matching
a batch of 64 events sampled through two layers of N=10 neighbours. A second
section times whole sampling plans in subprocesses with and without
CTRL_HIN_DISABLE_NUMBA, so it includes dispatch overhead.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ctrl_hin import _kernels as K
from ctrl_hin.graph import TemporalHinGraph
from ctrl_hin.synth import SynthConfig, generate

PLAN_SNIPPET = """
import time, numpy as np
from ctrl_hin.graph import TemporalHinGraph
from ctrl_hin.model import ModelConfig, build_plan
from ctrl_hin.sampler import make_rng
from ctrl_hin.synth import SynthConfig, generate
ds = generate(SynthConfig())
g = TemporalHinGraph(ds.nodes, ds.edges, ds.events)
cfg = ModelConfig(n_neighbors=10, n_layers=2)
rng = make_rng(0)
roots = rng.integers(g.num_nodes, size=512)
times = rng.integers(g.t_min, g.t_max, size=512)
build_plan(g, roots, times, cfg, rng=rng)
t0 = time.perf_counter()
for _ in range({reps}):
    build_plan(g, roots, times, cfg, rng=rng)
print((time.perf_counter() - t0) / {reps})
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not K.USING_NUMBA:
        sys.exit("numba is not available (or CTRL_HIN_DISABLE_NUMBA is set); nothing to compare")

    ds = generate(SynthConfig())
    g = TemporalHinGraph(ds.nodes, ds.edges, ds.events)
    rng = np.random.default_rng(0)
    q = 64 * 8 * 11 * 11  # roots x fan-out through two layers
    nodes = rng.integers(g.num_nodes, size=q).astype(np.int64)
    qt = rng.integers(g.t_min, g.t_max + 1, size=q).astype(np.int64)
    counts = K.np_count_before(g.indptr, g.adj_time, nodes, qt)
    u = rng.random((q, 10))
    idx = rng.integers(4000, size=q).astype(np.int64)
    src = rng.normal(size=(q, 32))

    cases = [
        ("count_before", lambda: K.np_count_before(g.indptr, g.adj_time, nodes, qt),
         lambda: K.nb_count_before(g.indptr, g.adj_time, nodes, qt)),
        ("draw_positions", lambda: K.np_draw_positions(g.indptr, nodes, counts, u),
         lambda: K.nb_draw_positions(g.indptr, nodes, counts, u)),
        ("scatter_add_rows", lambda: K.np_scatter_add_rows(np.zeros((4000, 32)), idx, src),
         lambda: K.nb_scatter_add_rows(np.zeros((4000, 32)), idx, src)),
    ]
    print(f"{q} queries, graph with {g.num_nodes} nodes / {g.num_edges} edges")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, f_np, f_nb in cases:
        f_nb()  # compile / load cache
        a, b = best(f_np, args.repeat), best(f_nb, args.repeat)
        print(f"{name:<18}{a * 1e3:>10.2f}{b * 1e3:>10.2f}{a / b:>8.1f}x")

    code = PLAN_SNIPPET.format(reps=max(args.repeat // 4, 3))
    res = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, CTRL_HIN_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        res[label] = float(out.stdout.strip())
    print(f"build_plan (512 roots, L=2, N=10): numpy {res['numpy'] * 1e3:.1f} ms, "
          f"numba {res['numba'] * 1e3:.1f} ms, {res['numpy'] / res['numba']:.1f}x")


if __name__ == "__main__":
    main()
