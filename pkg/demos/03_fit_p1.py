"""AI-REML on a full P1-scale simulated trial series.

About 6600 records and six crossed variance components (year, centre,
variety and their two-way interactions).  Prints the iteration trace and the
estimates next to the values used to simulate.  The "true" column is the
generating variance; the effects actually drawn for one seed scatter around
it (for example 130 variety effects have a sample variance with relative
spread of about 12%), so the realized sample variance is printed too.
"""
import time

import numpy as np

from remlkit import reml
from remlkit.bench import PRESETS, TERMS, generate

ds = generate(PRESETS["P1"].with_seed(1))
model = ds.model()
print(f"{ds.units} records, {model.order} equations")


def show(rec):
    print(f"  iter {rec['iter']:2d}  l_R {rec['loglik']:.6f}  |S| {rec['score_norm']:.2e}"
          f"  halvings {rec['halvings']}  step {rec['step']}")


t0 = time.perf_counter()
fit = reml.fit(model, callback=show)
print(f"converged={fit.converged} in {fit.iterations} iterations, {time.perf_counter() - t0:.1f} s")

# redraw the effects from the same stream to get their realized variances
p = ds.params
rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(p.seed).spawn(3)[1]))
sizes = {"year": p.years, "centre": p.centres, "variety": p.varieties,
         "year.centre": p.years * p.centres, "year.variety": p.years * p.varieties,
         "variety.centre": p.varieties * p.centres}
drawn = {t: float((rng.standard_normal(sizes[t]) * np.sqrt(p.gamma[t])).var()) for t in TERMS}

truth = ds.theta
print(f"\n{'term':>15} {'true':>7} {'drawn':>7} {'estimate':>9} {'se':>7}")
print(f"{'sigma2':>15} {truth.sigma2:7.3f} {'':>7} {fit.theta_hat.sigma2:9.3f} {fit.se[0]:7.3f}")
for k, term in enumerate(TERMS):
    print(f"{term:>15} {truth.kappa[k]:7.3f} {drawn[term]:7.3f} {fit.theta_hat.kappa[k]:9.3f} "
          f"{fit.se[k + 1]:7.3f}")
z = np.abs(fit.theta_hat.vector() - truth.vector()) / fit.se
print("largest |estimate - true| / se:", round(float(z.max()), 2))
