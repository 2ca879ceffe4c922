"""
Bland's rule on the deterministic family
========================================

Builds B_n for a small n, runs policy iteration with Bland's rule from the
all-zeros canonical policy and prints every switch.  Rows where the policy
is canonical again are tagged with the counter value it encodes.
"""

from pivotlab.constructions import build_B, canonical_policy, edge_name, recognize_canonical
from pivotlab.engine import PivotRule, run

n = 3
mdp = build_B(n)
start = canonical_policy(n, 0, mdp)

trace = run(mdp, start, PivotRule("bland"), 2 ** (n + 6), namer=edge_name)

# each step carries the switched edge and its reduced cost
for k, (step, pol) in enumerate(zip(trace.steps, trace.policies()[1:]), 1):
    x = recognize_canonical(pol, n)
    tag = f"   <- canonical x={x}" if x is not None else ""
    print(f"{k:3d}  {edge_name(mdp, step.edge):12s} z={step.reduced_cost}{tag}")

print("total switches:", trace.total_switches, ">= 2^n =", 2**n)
