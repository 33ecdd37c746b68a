"""Symbolic statistics of the ten crossed variety-trial benchmarks.

For each preset, generate a data set, build W'W and compare fill under the
fill-reducing ordering with fill under the natural order.  The published
order, nnz and flop counts are printed alongside for comparison; exact
agreement is not expected because the data are re-simulated.

Natural-order analysis of P10 takes a few seconds.
"""
import sys
import time

from remlkit.bench import PRESETS, TABLE3, generate, summarize
from remlkit.mme import MixedModelEquations
from remlkit.sparse import FactorStats, symbolic_factor

names = sys.argv[1:] or [f"P{i}" for i in range(1, 11)]

print(f"{'set':>4} {'units':>6} {'order':>6} {'nnz_C':>8} {'nnz_L':>9} {'flops':>10} "
      f"{'nnzL nat':>11} {'t_amd':>6} | {'order*':>6} {'nnz_L*':>9} {'flops*':>10}")
for name in names:
    ds = generate(PRESETS[name])
    model = ds.model()
    mme = MixedModelEquations(model)
    t0 = time.perf_counter()
    amd = symbolic_factor(mme.WtW, "amd")
    t_amd = time.perf_counter() - t0
    nat = symbolic_factor(mme.WtW, "natural")
    s = FactorStats.from_counts(model.order, mme.WtW.nnz, amd.nnz_l, amd.flops)
    order, _, nnz_l, flops = TABLE3[name]
    print(f"{name:>4} {ds.units:6d} {s.order:6d} {s.nnz_c:8d} {s.nnz_l:9d} {s.flops:10.3e} "
          f"{nat.nnz_l:11d} {t_amd:6.2f} | {order:6d} {nnz_l:9d} {flops:10.3e}")

print("\nrealized level counts of the last set:", summarize(ds))
