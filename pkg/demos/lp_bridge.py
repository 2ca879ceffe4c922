"""
Policy iteration as simplex
===========================

Builds the flux LP of B_4, converts the starting policy to a basis, and
checks that simplex with Dantzig's rule pivots on exactly the edges that
policy iteration switches.
"""

from pivotlab.constructions import build_B, canonical_policy, edge_name
from pivotlab.engine import PivotRule, run
from pivotlab.lp import LOSSY_TEXT, basis_of_policy, build_flux_lp, export_lp, simplex_run

n = 4
mdp = build_B(n)
lp = build_flux_lp(mdp, edge_name)
print(lp.n_vars, "variables,", lp.n_rows, "rows")

start = canonical_policy(n, 0, mdp)
rule = PivotRule("dantzig")
pivots = simplex_run(lp, basis_of_policy(lp, start), rule, 2**10)
switches = run(mdp, start, rule, 2**10, namer=edge_name)

print("pivots:", pivots.total_pivots, " switches:", switches.total_switches)
print("same entering sequence:", pivots.entering_names() == switches.names())
print("final objective:", pivots.final_objective)

# a readable CPLEX-style dump (decimal, so possibly lossy for larger D_n)
print(export_lp(lp, LOSSY_TEXT)[:600])
