"""Time decryption, encapsulation and single-granule task issuance.

Decryption with a one-use policy should not depend on how many attributes the
provider holds; encapsulation grows with the policy.  Prints the fitted
slope per sweep step as a share of the mean time, plus the operation counts
seen at each point.

    python demos/cost_shapes.py
"""

import random

from tdcss import bench

rng = random.Random(3)
fixture = bench._Fixture(rng)
for phase in ("dec", "enc", "prework_n1"):
    series = bench.run_phase(phase, range(10, 101, 30), 5, rng, fixture)
    meds = ", ".join(f"{m * 1e3:.1f}" for m in series.medians())
    print(f"{phase:<11} ms: {meds}   slope/step {series.relative_step_slope():+.1%}   "
          f"counts ok: {all(p.counts_ok for p in series.points)}")
