"""Executable structural properties of B_n and D_n and of pivot runs on them.

Every check returns a :class:`PropertyResult` instead of raising, so callers
(tests, the ``verify`` subcommand, the acceptance module) decide how loud a
failure is.  All comparisons are exact.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .constructions import (
    EdgeName,
    GadgetMap,
    b_edge,
    board,
    build_B,
    build_D,
    canonical_clause_report,
    canonical_phases,
    canonical_policy,
    edge_name,
    name_from_labels,
    optimal_policy_B,
    predicted_bland_trace,
    recognize_canonical,
    skip,
    transition_switches,
    travel,
    twin_policy,
    untwin,
)
from .engine import BLAND, DANTZIG, LARGEST_INCREASE, PivotRule, Trace, run, verify_trace_against
from .mdp import (
    Mdp,
    Policy,
    Rational,
    apply_switch,
    bellman_residuals,
    improving_switches,
    is_weak_unichain,
    make_policy,
    reduced_cost,
    solve_values,
)


@dataclass
class PropertyResult:
    name: str
    n: int
    ok: bool
    checked: int = 0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name} n={self.n} checked={self.checked}{extra}"


def default_cap(n: int) -> int:
    return 2 ** (n + 6)


def _base_name(mdp: Mdp, e) -> Optional[EdgeName]:
    return name_from_labels(mdp.label(e.source), mdp.label(e.target))


# --------------------------------------------------------------------------
# canonical policies on B_n


def canonical_definition(n: int) -> PropertyResult:
    """Every π_x meets each clause of the definition and is recognized as x."""
    bad = []
    for x in range(2**n):
        pol = canonical_policy(n, x)
        report = canonical_clause_report(pol, n, x)
        failed = [k for k, v in report.items() if not v]
        if failed or recognize_canonical(pol, n) != x:
            bad.append((x, failed))
    return PropertyResult("canonical-definition", n, not bad, 2**n, f"bad {bad[:3]}" if bad else "")


def travel_not_improving(n: int) -> PropertyResult:
    mdp = build_B(n)
    bad, checked = [], 0
    for x in range(2**n):
        pol = canonical_policy(n, x, mdp)
        vals = solve_values(mdp, pol)
        for i in range(1, n + 1):
            checked += 1
            if reduced_cost(mdp, pol, vals, b_edge(mdp, n, travel(i))) > 0:
                bad.append((x, i))
    return PropertyResult("travel-not-improving", n, not bad, checked, f"bad {bad[:3]}" if bad else "")


def _apply_names(pol: Policy, n: int, names) -> Policy:
    for name in names:
        pol = apply_switch(pol, b_edge(pol.mdp, n, name))
    return pol


def phases_transition(n: int) -> PropertyResult:
    """Applying the canonical phases to π_x yields π_{x+1} for odd x."""
    mdp = build_B(n)
    bad, checked = [], 0
    for x in range(1, 2**n - 2, 2):
        checked += 1
        after = _apply_names(canonical_policy(n, x, mdp), n, canonical_phases(n, x))
        if recognize_canonical(after, n) != x + 1:
            bad.append(x)
    return PropertyResult("phases-transition", n, not bad, checked, f"bad x {bad[:5]}" if bad else "")


def even_transition(n: int) -> PropertyResult:
    mdp = build_B(n)
    bad, checked = [], 0
    for x in range(0, 2**n - 1, 2):
        checked += 1
        after = _apply_names(canonical_policy(n, x, mdp), n, transition_switches(n, x))
        if recognize_canonical(after, n) != x + 1:
            bad.append(x)
    return PropertyResult("even-transition", n, not bad, checked, f"bad x {bad[:5]}" if bad else "")


def canonical_visits(n: int, mdp: Optional[Mdp] = None) -> PropertyResult:
    """Bland from π_0 visits all 2^n canonical policies.

    ``mdp`` may be a modified copy of B_n (same labels) for negative controls.
    """
    mdp = mdp or build_B(n)
    trace = run(mdp, canonical_policy(n, 0, mdp), PivotRule(BLAND), default_cap(n), raise_on_cap=False)
    seen = {recognize_canonical(p, n) for p in trace.policies()} - {None}
    return PropertyResult("canonical-visits", n, len(seen) == 2**n, len(seen),
                          f"{len(seen)} of {2 ** n}")


def bland_sequence(n: int) -> PropertyResult:
    """Bland's switches from π_0 up to π_{2^n-1} follow the predicted list."""
    mdp = build_B(n)
    trace = run(mdp, canonical_policy(n, 0, mdp), PivotRule(BLAND), default_cap(n), namer=edge_name)
    predicted = predicted_bland_trace(n)
    diff = verify_trace_against(trace.names()[: len(predicted)], predicted)
    last = recognize_canonical(trace.policies()[len(predicted)], n)
    ok = diff.ok and last == 2**n - 1
    return PropertyResult("bland-sequence", n, ok, len(predicted), "" if ok else str(diff))


def bland_run_checks(n: int) -> list[PropertyResult]:
    """Per-step facts along Bland on B_n.

    At most one travel edge is improving; an applied skip(i) beats board(i);
    an applied enter(i) beats both skip(i) and board(i).
    """
    mdp = build_B(n)
    travel_bad, order_bad = [], []
    counts = {"steps": 0, "orders": 0}

    def watch(policy, values, candidates, chosen):
        counts["steps"] += 1
        travels = [e for e, _ in candidates if _base_name(mdp, e).kind == "travel"]
        if len(travels) > 1:
            travel_bad.append(counts["steps"])
        name = _base_name(mdp, chosen)
        if name.kind not in ("skip", "enter"):
            return
        i = name.level
        z = lambda nm: reduced_cost(mdp, policy, values, b_edge(mdp, n, nm))
        zc = z(name)
        rivals = [board(i)] if name.kind == "skip" else [skip(i), board(i)]
        counts["orders"] += 1
        if not all(zc > z(r) for r in rivals):
            order_bad.append(str(name))

    run(mdp, canonical_policy(n, 0, mdp), PivotRule(BLAND), default_cap(n), observer=watch)
    return [
        PropertyResult("single-improving-travel", n, not travel_bad, counts["steps"],
                       f"steps {travel_bad[:5]}" if travel_bad else ""),
        PropertyResult("switch-cost-ordering", n, not order_bad, counts["orders"],
                       f"bad {order_bad[:5]}" if order_bad else ""),
    ]


def run_invariants(mdp: Mdp, initial: Policy, rule: PivotRule, quarter: bool = False,
                   label: str = "") -> PropertyResult:
    """Bellman residuals, switch monotonicity and no repeated policy along a run.

    With ``quarter`` also require every value to be a multiple of 1/4.
    """
    trace = run(mdp, initial, rule, 2 ** (len(mdp) + 6))
    problems = []
    seen = set()
    prev = None
    for k, pol in enumerate(trace.policies()):
        vals = solve_values(mdp, pol)
        if any(r != 0 for r in bellman_residuals(mdp, pol, vals)):
            problems.append(f"residual@{k}")
        if quarter and any((4 * v).denominator != 1 for v in vals):
            problems.append(f"quarter@{k}")
        if pol.digest() in seen:
            problems.append(f"repeat@{k}")
        seen.add(pol.digest())
        if prev is not None:
            src = trace.steps[k - 1].edge.source
            if any(a < b for a, b in zip(vals, prev)) or not vals[src] > prev[src]:
                problems.append(f"monotone@{k}")
        prev = vals
    name = "run-invariants" + (f"[{label}]" if label else "")
    return PropertyResult(name, 0, not problems, len(seen), ", ".join(problems[:5]))


# --------------------------------------------------------------------------
# D_n


def vertex_number(v: int) -> int:
    """N_V of a base vertex; base vertices keep their B_n index in D_n."""
    return v + 1


def gadget_structure(n: int) -> PropertyResult:
    """Randomization rows sum to 1; the Bland numbers are exactly 1..k."""
    d, g = build_D(n)
    problems = []
    for v in range(len(d)):
        if not d.is_agent(v) and sum((e.payload for e in d.out[v]), Rational(0)) != 1:
            problems.append(f"row {d.label(v)}")
    numbers = sorted(e.bland for e in d.agent_edges)
    if numbers != list(range(1, len(numbers) + 1)):
        problems.append("numbering is not a permutation")
    if len(g.gadgets) != 6 * n + 1:
        problems.append("gadget count")
    return PropertyResult("gadget-structure", n, not problems, len(d), ", ".join(problems))


def random_weak_unichain(mdp: Mdp, rng: random.Random) -> Policy:
    """Uniform choice per switchable vertex, resampled until weak unichain."""
    while True:
        choice = {v: rng.choice(mdp.out[v]).target for v in mdp.agent_vertices if mdp.switchable(v)}
        pol = make_policy(mdp, choice)
        if is_weak_unichain(mdp, pol):
            return pol


def twin_values(n: int, samples: int, seed: int = 0) -> PropertyResult:
    """Values of π on B_n and of its twin on D_n agree on base vertices."""
    base = build_B(n)
    d, g = build_D(n)
    rng = random.Random(seed)
    bad = 0
    for _ in range(samples):
        pol = random_weak_unichain(base, rng)
        tw = twin_policy(pol, d, g)
        if not is_weak_unichain(d, tw):
            bad += 1
            continue
        vb, vd = solve_values(base, pol), solve_values(d, tw)
        bad += vb != vd[: len(base)]
    return PropertyResult("twin-values", n, bad == 0, samples, f"{bad} mismatches" if bad else "")


def reduced_cost_scaling(n: int, samples: int = 1000, seed: int = 0) -> PropertyResult:
    """z_{twin}(x_{v,w}, y_{v,w}) = p_v * z(v, w) for every gadget."""
    base = build_B(n)
    d, g = build_D(n)
    rng = random.Random(seed)
    bad, checked = [], 0
    for k in range(samples):
        pol = random_weak_unichain(base, rng)
        tw = twin_policy(pol, d, g)
        vb, vd = solve_values(base, pol), solve_values(d, tw)
        for (v, w), gad in g.gadgets.items():
            checked += 1
            zb = reduced_cost(base, pol, vb, base.edge(v, w))
            zd = reduced_cost(d, tw, vd, d.edge(gad.x, gad.y))
            if zd != gad.p * zb:
                bad.append((k, base.label(v), base.label(w)))
    return PropertyResult("reduced-cost-scaling", n, not bad, checked, f"bad {bad[:3]}" if bad else "")


def reorientation_triple(n: int, samples: int = 200, seed: int = 0) -> PropertyResult:
    """The three switches that reorient a gadget share one reduced cost.

    From a random twin policy, apply an improving ``(x_{v,w}, y_{v,w})``,
    then ``(v, x_{v,w})``; compare with ``(x_{v,π(v)}, v)`` afterwards.
    """
    base = build_B(n)
    d, g = build_D(n)
    rng = random.Random(seed)
    bad, done, tries = [], 0, 0
    while done < samples and tries < 50 * samples:
        tries += 1
        pol = random_weak_unichain(base, rng)
        tw = twin_policy(pol, d, g)
        vals = solve_values(d, tw)
        cands = [(e, z) for e, z in improving_switches(d, tw, vals) if g.xy_base(e)]
        if not cands:
            continue
        e1, z1 = rng.choice(cands)
        v, w = g.xy_base(e1)
        gad = g[(v, w)]
        p1 = apply_switch(tw, e1)
        e2 = d.edge(v, gad.x)
        z2 = reduced_cost(d, p1, solve_values(d, p1), e2)
        p2 = apply_switch(p1, e2)
        e3 = d.edge(g[(v, pol[v])].x, v)
        z3 = reduced_cost(d, p2, solve_values(d, p2), e3)
        done += 1
        if not z1 == z2 == z3:
            bad.append((base.label(v), base.label(w)))
    ok = not bad and done == samples
    return PropertyResult("reorientation-triple", n, ok, done, f"bad {bad[:3]}" if bad else "")


def _d_start(n: int):
    d, g = build_D(n)
    return d, g, twin_policy(canonical_policy(n, 0), d, g)


def xy_projection(trace: Trace, mdp: Mdp, gadgets: GadgetMap) -> list[str]:
    """Base-edge names of the ``(x, y)`` switches of a D_n trace, in order."""
    out = []
    for e in trace.edges():
        base = gadgets.xy_base(e)
        if base is not None:
            out.append(str(name_from_labels(mdp.label(base[0]), mdp.label(base[1]))))
    return out


@dataclass
class DRun:
    """Facts gathered along one policy-iteration run on D_n."""

    n: int
    rule: PivotRule
    trace: Trace
    bounds_bad: list
    bounds_checked: int
    cond_b_bad: list
    projection: list


def observe_d_run(n: int, rule: PivotRule, bounds: bool = True) -> DRun:
    """Run ``rule`` on D_n from twin(π_0) and check per-step conditions."""
    d, g, start = _d_start(n)
    bounds_bad, cond_b_bad = [], []
    checked = [0]
    p = {v: g.probabilities[d.label(v)] for v in range(len(d)) if d.label(v) in g.probabilities}
    top = Rational(2 ** (n + 2))

    def watch(policy, values, candidates, chosen):
        it = checked[0]
        into = [e.target for e, _ in candidates if g.owner(e) == e.target]
        if into:
            lo = min(vertex_number(v) for v in into)
            xy = g.xy_base(chosen)
            if xy is not None and vertex_number(xy[0]) > lo:
                cond_b_bad.append(it)
        if bounds:
            for e, z in candidates:
                v = g.owner(e)
                if v is None or not (p[v] / 4 <= z <= p[v] * top):
                    bounds_bad.append((it, edge_name(d, e)))
        checked[0] += 1

    trace = run(d, start, rule, default_cap(n) * 4, namer=edge_name, observer=watch)
    return DRun(n, rule, trace, bounds_bad, checked[0], cond_b_bad, xy_projection(trace, d, g))


def d_run_results(obs: DRun, with_bounds: bool) -> list[PropertyResult]:
    n, tag = obs.n, str(obs.rule)
    d, g, _ = _d_start(n)
    full = run(build_B(n), canonical_policy(n, 0), PivotRule(BLAND), default_cap(n), namer=edge_name)
    proj_ok = obs.projection == full.names()
    term = obs.trace.terminal
    base_term = untwin(term, g)
    opt = base_term is not None and base_term == optimal_policy_B(n, base_term.mdp)
    out = [
        PropertyResult(f"lower-bound[{tag}]", n, obs.trace.total_switches >= 2**n,
                       obs.trace.total_switches),
        PropertyResult(f"xy-projection[{tag}]", n, proj_ok, len(obs.projection)),
        PropertyResult(f"terminal-optimal[{tag}]", n, opt and not improving_switches(
            d, term, solve_values(d, term)), 1),
        PropertyResult(f"condition-b[{tag}]", n, not obs.cond_b_bad, obs.trace.total_switches,
                       f"steps {obs.cond_b_bad[:5]}" if obs.cond_b_bad else ""),
    ]
    if with_bounds:
        out.append(PropertyResult(f"cost-bounds[{tag}]", n, not obs.bounds_bad, obs.bounds_checked,
                                  f"bad {obs.bounds_bad[:3]}" if obs.bounds_bad else ""))
    if obs.rule.kind in (DANTZIG, LARGEST_INCREASE):
        out.append(PropertyResult(f"zero-ties[{tag}]", n, obs.trace.ties_seen == 0,
                                  obs.trace.total_switches, f"{obs.trace.ties_seen} ties"))
    return out


# --------------------------------------------------------------------------
# suite


def suite(n_max: int, samples: int = 1000, triples: int = 200,
          rules: tuple = (BLAND, DANTZIG, LARGEST_INCREASE)) -> Iterator[PropertyResult]:
    """Every property for n = 1..n_max, lazily."""
    for n in range(1, n_max + 1):
        yield canonical_definition(n)
        yield travel_not_improving(n)
        yield phases_transition(n)
        yield even_transition(n)
        yield canonical_visits(n)
        yield bland_sequence(n)
        yield from bland_run_checks(n)
        yield gadget_structure(n)
        yield reduced_cost_scaling(n, samples)
        yield reorientation_triple(n, triples)
        for r in rules:
            rule = PivotRule.parse(r)
            yield from d_run_results(observe_d_run(n, rule, bounds=rule.kind == DANTZIG),
                                     with_bounds=rule.kind == DANTZIG)


def report(results, sink: Callable[[str], None] = print) -> bool:
    ok = True
    for r in results:
        sink(r.line())
        ok &= r.ok
    return ok
