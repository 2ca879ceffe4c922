"""Flux LP of an MDP and an exact revised simplex that mirrors policy iteration.

The LP has one variable per agent edge (sink loop excluded) and one
flow-balance row per non-sink agent vertex with unit supply::

    max  sum_e r(e) x_e
    s.t. sum_{e out of u} x_e - sum_e P(e lands at u) x_e = 1   for each row u
         x >= 0

Randomization vertices are folded into the column coefficients.  A basis
holds exactly one edge per row vertex, i.e. a policy; its primal solution
counts expected visits and its duals are the policy's values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Context, Decimal
from typing import Callable, Optional, Sequence

from .engine import BLAND, DANTZIG, PivotRule
from .mdp import (
    Mdp,
    MdpError,
    Policy,
    Rational,
    format_rational,
    make_policy,
    parse_rational,
)

EXACT_JSON = "exact_json"
LOSSY_TEXT = "lossy_text"
LOSSY_DIGITS = 40


class LpError(MdpError):
    code = "LP_ERROR"


class UnsupportedTopology(LpError):
    code = "UNSUPPORTED_TOPOLOGY"


class InfeasibleBasis(LpError):
    code = "INFEASIBLE_BASIS"


class PivotCap(LpError):
    code = "PIVOT_CAP"


class DegeneratePivot(LpError):
    code = "DEGENERATE_PIVOT"


class Unbounded(LpError):
    code = "UNBOUNDED"


@dataclass(frozen=True)
class FluxLp:
    """A maximization LP in equality form with sparse columns.

    Variables are ordered by the Bland number of their edge, so the variable
    index doubles as the Bland index.
    """

    var_names: tuple
    var_edges: tuple
    objective: tuple
    row_names: tuple
    row_vertices: tuple
    columns: tuple  # per variable: tuple of (row, coeff)
    rhs: tuple

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def var_of_edge(self, key: tuple[int, int]) -> int:
        return self._edge_index()[key]

    def _edge_index(self) -> dict:
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {k: i for i, k in enumerate(self.var_edges)}
            object.__setattr__(self, "_cache", cache)
        return cache

    def row_of_vertex(self, v: int) -> int:
        return self.row_vertices.index(v)


def build_flux_lp(mdp: Mdp, namer: Optional[Callable] = None) -> FluxLp:
    """Materialize the flux LP of ``mdp``.

    Raises:
        UnsupportedTopology: a randomization vertex feeds another one.
    """
    namer = namer or (lambda m, e: m.edge_name(e))
    rows = [v for v in mdp.agent_vertices if v != mdp.sink]
    row_of = {v: i for i, v in enumerate(rows)}
    edges = [e for e in mdp.agent_edges if e.source != mdp.sink]
    edges.sort(key=lambda e: (e.bland is None, e.bland or 0, e.key))
    columns = []
    for e in edges:
        col: dict[int, Rational] = {row_of[e.source]: Rational(1)}
        if mdp.is_agent(e.target):
            landing = [(e.target, Rational(1))]
        else:
            landing = []
            for f in mdp.out[e.target]:
                if not mdp.is_agent(f.target):
                    raise UnsupportedTopology(
                        f"{mdp.label(e.target)} feeds randomization vertex {mdp.label(f.target)}"
                    )
                landing.append((f.target, f.payload))
        for w, p in landing:
            if w == mdp.sink:
                continue
            r = row_of[w]
            col[r] = col.get(r, Rational(0)) - p
        columns.append(tuple(sorted((r, c) for r, c in col.items() if c != 0)))
    return FluxLp(
        var_names=tuple(namer(mdp, e) for e in edges),
        var_edges=tuple(e.key for e in edges),
        objective=tuple(e.payload for e in edges),
        row_names=tuple(mdp.label(v) for v in rows),
        row_vertices=tuple(rows),
        columns=tuple(columns),
        rhs=tuple(Rational(1) for _ in rows),
    )


@dataclass(frozen=True)
class Basis:
    """Basic variables; ``header[r]`` is the variable basic in row ``r`` of B^{-1}."""

    header: tuple

    @property
    def members(self) -> frozenset:
        return frozenset(self.header)


def _invert(lp: FluxLp, header: Sequence[int]) -> list[list[Rational]]:
    """Gauss-Jordan inverse of the basis matrix; raises InfeasibleBasis if singular."""
    m = lp.n_rows
    a = [[Rational(0)] * m for _ in range(m)]
    for j, var in enumerate(header):
        for r, c in lp.columns[var]:
            a[r][j] = c
    inv = [[Rational(1) if i == j else Rational(0) for j in range(m)] for i in range(m)]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            raise InfeasibleBasis("basis matrix is singular")
        a[col], a[piv] = a[piv], a[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        p = a[col][col]
        if p != 1:
            a[col] = [x / p for x in a[col]]
            inv[col] = [x / p for x in inv[col]]
        for r in range(m):
            f = a[r][col]
            if r != col and f != 0:
                ar, ac = a[r], a[col]
                ir, ic = inv[r], inv[col]
                for k in range(m):
                    if ac[k]:
                        ar[k] -= f * ac[k]
                    if ic[k]:
                        ir[k] -= f * ic[k]
    return inv


class _Tableau:
    """Revised-simplex state: basis header, explicit inverse and primal values."""

    def __init__(self, lp: FluxLp, basis: Basis):
        if len(basis.header) != lp.n_rows:
            raise InfeasibleBasis("basis size differs from the row count")
        self.lp = lp
        self.header = list(basis.header)
        self.inv = _invert(lp, self.header)
        self.x = [sum((row[k] * lp.rhs[k] for k in range(lp.n_rows) if row[k]), Rational(0))
                  for row in self.inv]
        if any(v < 0 for v in self.x):
            raise InfeasibleBasis("basic solution has a negative entry")

    def objective(self) -> Rational:
        c = self.lp.objective
        return sum((c[v] * x for v, x in zip(self.header, self.x)), Rational(0))

    def duals(self) -> list[Rational]:
        m = self.lp.n_rows
        y = [Rational(0)] * m
        for r, var in enumerate(self.header):
            cb = self.lp.objective[var]
            if cb:
                row = self.inv[r]
                for k in range(m):
                    if row[k]:
                        y[k] += cb * row[k]
        return y

    def reduced_costs(self) -> dict[int, Rational]:
        """Reduced cost of every nonbasic variable."""
        y = self.duals()
        basic = set(self.header)
        out = {}
        for j in range(self.lp.n_vars):
            if j in basic:
                continue
            out[j] = self.lp.objective[j] - sum((c * y[r] for r, c in self.lp.columns[j]), Rational(0))
        return out

    def direction(self, j: int) -> list[Rational]:
        col = self.lp.columns[j]
        return [sum((row[r] * c for r, c in col if row[r]), Rational(0)) for row in self.inv]

    def ratio_test(self, j: int) -> tuple[int, Rational, list[Rational]]:
        d = self.direction(j)
        best = None
        for r, dr in enumerate(d):
            if dr > 0:
                t = self.x[r] / dr
                key = (t, self.header[r])
                if best is None or key < best[0]:
                    best = (key, r)
        if best is None:
            raise Unbounded(f"variable {self.lp.var_names[j]} is unbounded")
        return best[1], best[0][0], d

    def pivot(self, j: int, r: int, theta: Rational, d: list[Rational]) -> int:
        leaving = self.header[r]
        m = self.lp.n_rows
        pr = d[r]
        self.inv[r] = [v / pr for v in self.inv[r]]
        for i in range(m):
            if i != r and d[i] != 0:
                f = d[i]
                ri, rr = self.inv[i], self.inv[r]
                self.inv[i] = [a - f * b if b else a for a, b in zip(ri, rr)]
                self.x[i] -= theta * f
        self.x[r] = theta
        self.header[r] = j
        return leaving


@dataclass
class Pivot:
    iteration: int
    rule: str
    entering: int
    leaving: int
    entering_name: str
    leaving_name: str
    reduced_cost: Rational
    step: Rational
    objective_after: Rational
    ties: int


@dataclass
class PivotTrace:
    pivots: list = field(default_factory=list)
    start: Optional[Basis] = None
    final: Optional[Basis] = None
    start_objective: Rational = Rational(0)
    final_objective: Rational = Rational(0)

    @property
    def total_pivots(self) -> int:
        return len(self.pivots)

    def entering_names(self) -> list[str]:
        return [p.entering_name for p in self.pivots]


def _choose(rule: str, tab: _Tableau, cands: dict[int, Rational]) -> tuple[int, int]:
    if rule == BLAND:
        return min(cands), 0
    if rule == DANTZIG:
        score = cands
    else:
        score = {}
        for j, dj in cands.items():
            _, theta, _ = tab.ratio_test(j)
            score[j] = theta * dj
    best = max(score.values())
    top = sorted(j for j, s in score.items() if s == best)
    return top[0], len(top) - 1


def simplex_run(
    lp: FluxLp,
    start: Basis,
    rule: PivotRule,
    max_pivots: int,
    observer: Optional[Callable] = None,
) -> PivotTrace:
    """Primal simplex with exact ratio tests from a feasible ``start`` basis.

    Entering variables follow ``rule`` (Bland: smallest index; Dantzig:
    largest reduced cost; Largest Increase: largest objective gain of the
    full pivot).  Ties go to the smallest index.

    Args:
        observer: called as ``observer(basis, objective, reduced_costs)`` at
            every visited basis, the final one included.

    Raises:
        DegeneratePivot: a pivot with a zero step length.
        PivotCap: ``max_pivots`` reached before optimality.
    """
    tab = _Tableau(lp, start)
    pick = rule.scheduler()
    trace = PivotTrace(start=start, start_objective=tab.objective())
    it = 0
    while True:
        rc = tab.reduced_costs()
        if observer is not None:
            observer(Basis(tuple(tab.header)), tab.objective(), rc)
        cands = {j: d for j, d in rc.items() if d > 0}
        if not cands:
            break
        if it >= max_pivots:
            raise PivotCap(f"no optimum after {max_pivots} pivots")
        which = pick(it)
        j, ties = _choose(which, tab, cands)
        r, theta, d = tab.ratio_test(j)
        if theta == 0:
            raise DegeneratePivot(f"zero-length step entering {lp.var_names[j]}")
        leaving = tab.pivot(j, r, theta, d)
        trace.pivots.append(Pivot(it, which, j, leaving, lp.var_names[j], lp.var_names[leaving],
                                  cands[j], theta, tab.objective(), ties))
        it += 1
    trace.final = Basis(tuple(tab.header))
    trace.final_objective = tab.objective()
    return trace


def basis_of_policy(lp: FluxLp, policy: Policy) -> Basis:
    """The basis whose variables are the active edges of ``policy``.

    Raises:
        InfeasibleBasis: if the basis is singular or infeasible.
    """
    header = tuple(lp.var_of_edge((u, policy[u])) for u in lp.row_vertices)
    basis = Basis(header)
    _Tableau(lp, basis)
    return basis


def policy_of_basis(lp: FluxLp, basis: Basis, mdp: Mdp) -> Policy:
    """Inverse of :func:`basis_of_policy`.

    Raises:
        InfeasibleBasis: if some row vertex does not have exactly one basic
            edge, or the basis is singular or infeasible.
    """
    chosen: dict[int, int] = {}
    for var in basis.header:
        u, w = lp.var_edges[var]
        if u in chosen:
            raise InfeasibleBasis(f"two basic edges leave {mdp.label(u)}")
        chosen[u] = w
    if set(chosen) != set(lp.row_vertices):
        raise InfeasibleBasis("basis does not pick one edge per vertex")
    _Tableau(lp, basis)
    return make_policy(mdp, {u: w for u, w in chosen.items() if mdp.switchable(u)})


def objective_at(lp: FluxLp, basis: Basis) -> Rational:
    return _Tableau(lp, basis).objective()


def reduced_costs_at(lp: FluxLp, basis: Basis) -> dict[int, Rational]:
    return _Tableau(lp, basis).reduced_costs()


# --------------------------------------------------------------------------
# export / import


def lp_to_json(lp: FluxLp) -> dict:
    rows = []
    for r, name in enumerate(lp.row_names):
        coeffs = {}
        for j, col in enumerate(lp.columns):
            for rr, c in col:
                if rr == r:
                    coeffs[lp.var_names[j]] = format_rational(c)
        rows.append({"name": name, "vertex": lp.row_vertices[r],
                     "rhs": format_rational(lp.rhs[r]), "coeffs": coeffs})
    return {
        "sense": "max",
        "vars": [{"name": nm, "obj": format_rational(c), "edge": list(e)}
                 for nm, c, e in zip(lp.var_names, lp.objective, lp.var_edges)],
        "rows": rows,
    }


def lp_from_json(data: dict) -> FluxLp:
    if data.get("sense", "max") != "max":
        raise LpError("only maximization LPs are supported")
    names = [v["name"] for v in data["vars"]]
    pos = {nm: j for j, nm in enumerate(names)}
    cols: list[list] = [[] for _ in names]
    for r, row in enumerate(data["rows"]):
        for nm, c in row["coeffs"].items():
            cols[pos[nm]].append((r, parse_rational(c)))
    return FluxLp(
        var_names=tuple(names),
        var_edges=tuple(tuple(v["edge"]) for v in data["vars"]),
        objective=tuple(parse_rational(v["obj"]) for v in data["vars"]),
        row_names=tuple(row["name"] for row in data["rows"]),
        row_vertices=tuple(row["vertex"] for row in data["rows"]),
        columns=tuple(tuple(sorted(c)) for c in cols),
        rhs=tuple(parse_rational(row["rhs"]) for row in data["rows"]),
    )


def decimal_digits(q: Rational) -> Optional[int]:
    """Digit count of the exact decimal expansion of ``q``; None if it repeats."""
    q = Rational(q)
    den = int(q.denominator)
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    k = max(twos, fives)
    scaled = abs(int(q.numerator)) * 10**k // int(q.denominator)
    return max(len(str(scaled)), k + 1)


def needs_lossy_banner(lp: FluxLp) -> bool:
    values = list(lp.objective) + list(lp.rhs) + [c for col in lp.columns for _, c in col]
    for q in values:
        digits = decimal_digits(q)
        if digits is None or digits > LOSSY_DIGITS:
            return True
    return False


_CTX = Context(prec=17)


def _dec(q: Rational) -> str:
    d = _CTX.divide(Decimal(int(q.numerator)), Decimal(int(q.denominator)))
    return format(d, "g")


def _term(c: Rational, var: str) -> str:
    sign = "-" if c < 0 else "+"
    return f"{sign} {_dec(abs(c))} {var}"


def lp_to_text(lp: FluxLp) -> str:
    """CPLEX-style LP text with decimal coefficients (objective, rows, bounds)."""
    lines = []
    if needs_lossy_banner(lp):
        lines += [
            "\\ " + "!" * 66,
            "\\ LOSSY EXPORT: coefficients below are 17-digit decimal approximations.",
            "\\ Some exact values need more than 40 decimal digits; use the exact JSON.",
            "\\ " + "!" * 66,
        ]
    else:
        lines.append("\\ decimal export; every coefficient is exact")
    short = [f"v{j + 1}" for j in range(lp.n_vars)]
    for s, nm in zip(short, lp.var_names):
        lines.append(f"\\ {s} = {nm}")
    lines.append("Maximize")
    obj = " ".join(_term(c, s) for c, s in zip(lp.objective, short) if c != 0)
    lines.append(f" obj: {obj or '0 v1'}")
    lines.append("Subject To")
    by_row: list[list] = [[] for _ in range(lp.n_rows)]
    for j, col in enumerate(lp.columns):
        for r, c in col:
            by_row[r].append((j, c))
    for r in range(lp.n_rows):
        terms = " ".join(_term(c, short[j]) for j, c in sorted(by_row[r]))
        lines.append(f" c{r + 1}: {terms} = {_dec(lp.rhs[r])}")
    lines.append("Bounds")
    lines += [f" {s} >= 0" for s in short]
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(lp: FluxLp, mode: str = EXACT_JSON) -> str:
    if mode == EXACT_JSON:
        return json.dumps(lp_to_json(lp), indent=1, sort_keys=True)
    if mode == LOSSY_TEXT:
        return lp_to_text(lp)
    raise ValueError(f"unknown export mode {mode!r}")


def import_lp(text: str) -> FluxLp:
    return lp_from_json(json.loads(text))


# --------------------------------------------------------------------------
# coupling with policy iteration


@dataclass
class Correspondence:
    pivots: int
    switches: int
    sequences_equal: bool
    reduced_costs_equal: bool
    objectives_equal: bool
    degenerate: bool
    first_mismatch: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return (self.pivots == self.switches and self.sequences_equal and self.reduced_costs_equal
                and self.objectives_equal and not self.degenerate)


def compare_runs(mdp: Mdp, initial: Policy, rule: PivotRule, max_iters: int,
                 namer: Optional[Callable] = None) -> Correspondence:
    """Run policy iteration and the simplex side by side and diff them.

    At every basis the simplex visits, the LP reduced costs are checked
    against MDP reduced costs and the objective against the value sum.
    """
    from .engine import run
    from .mdp import reduced_cost, solve_values, value_sum

    lp = build_flux_lp(mdp, namer)
    trace = run(mdp, initial, rule, max_iters, namer=namer)
    rc_ok = obj_ok = True

    def watch(basis, objective, rc):
        nonlocal rc_ok, obj_ok
        pol = policy_of_basis(lp, basis, mdp)
        vals = solve_values(mdp, pol)
        obj_ok &= objective == value_sum(mdp, vals)
        for j, d in rc.items():
            if d != reduced_cost(mdp, pol, vals, mdp.edge(*lp.var_edges[j])):
                rc_ok = False

    degenerate = False
    try:
        piv = simplex_run(lp, basis_of_policy(lp, initial), rule, max_iters, observer=watch)
    except DegeneratePivot:
        degenerate = True
        piv = PivotTrace()
    names = trace.names()
    got = piv.entering_names()
    mismatch = next(((i, a, b) for i, (a, b) in enumerate(zip(got, names)) if a != b), None)
    return Correspondence(piv.total_pivots, trace.total_switches, got == names,
                          rc_ok, obj_ok, degenerate, mismatch)

