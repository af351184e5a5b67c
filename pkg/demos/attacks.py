"""Run each threat-model attack against a fresh world and tabulate outcomes.

    python demos/attacks.py [trials]
"""

import random
import sys

from tdcss.actors import ATTACKS, run_attack, run_initialization

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 10
world = run_initialization([f"attr{i}" for i in range(8)], {}, [], rng=random.Random(11))

print(f"{'attack':<12}{'trials':>7}{'wins':>6}  outcomes")
for kind in ATTACKS:
    rep = run_attack(world, kind, trials=trials, flood=2000)
    outcomes = ", ".join(f"{k}={v}" for k, v in sorted(rep.outcomes.items()))
    print(f"{kind:<12}{rep.trials:>7}{rep.successes:>6}  {outcomes}")
