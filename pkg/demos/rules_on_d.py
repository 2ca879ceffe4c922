"""
Comparing pivot rules on the randomized family
==============================================

Runs Bland, Dantzig, Largest-Increase and a seeded random mix on D_n from
the twin of the starting policy and tabulates the switch counts.
"""

from pivotlab.constructions import build_D, canonical_policy, twin_policy
from pivotlab.engine import PivotRule, run

rules = ["bland", "dantzig", "li", "mix:1", "mix:2"]

print("n   " + "".join(f"{r:>9s}" for r in rules))
for n in range(1, 5):
    mdp, gadgets = build_D(n)
    start = twin_policy(canonical_policy(n, 0), mdp, gadgets)
    counts = [run(mdp, start, PivotRule.parse(r), 2 ** (n + 8)).total_switches for r in rules]
    print(f"{n:<4d}" + "".join(f"{c:9d}" for c in counts))

# every rule takes the same number of steps, exponential in n
