"""Acceptance criteria 1-7, each printed as a single PASS/FAIL line.

    pytest tests/test_acceptance.py -v
    python3 tests/test_acceptance.py

All checks are exact (zero tolerance).  D_n runs are computed once per
(n, rule) and shared between criteria.
"""

from __future__ import annotations

import functools
import sys
import time

import pytest

from pivotlab.constructions import (
    build_B,
    build_D,
    canonical_policy,
    edge_name,
    optimal_policy_B,
    optimal_policy_D,
    predicted_bland_trace,
    twin_policy,
)
from pivotlab.engine import PivotRule, run
from pivotlab.lp import compare_runs
from pivotlab.mdp import Rational, improving_switches, solve_values
from pivotlab.properties import (
    bland_run_checks,
    bland_sequence,
    canonical_visits,
    observe_d_run,
    reduced_cost_scaling,
    reorientation_triple,
    travel_not_improving,
)

B_RANGE = range(1, 9)
D_RANGE = range(1, 8)
LI_MAX = 7
LP_B_MAX, LP_D_MAX = 6, 4
MIX_SEEDS = (1, 2, 3, 4, 5)
BASIC = ("bland", "dantzig", "li")
D_RULES = BASIC + tuple(f"mix:{s}" for s in MIX_SEEDS)

_lines: list[str] = []


def _emit(request, number: int, ok: bool, text: str) -> None:
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {text}"
    _lines.append(line)
    capman = request.config.pluginmanager.getplugin("capturemanager") if request else None
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    else:
        print(line, flush=True)


def _d_cells():
    for n in D_RANGE:
        for rule in D_RULES:
            if rule == "li" and n > LI_MAX:
                continue
            yield n, rule


@functools.lru_cache(maxsize=None)
def d_run(n: int, rule: str):
    return observe_d_run(n, PivotRule.parse(rule), bounds=True)


@functools.lru_cache(maxsize=None)
def bland_b(n: int):
    m = build_B(n)
    return m, run(m, canonical_policy(n, 0, m), PivotRule("bland"), 2 ** (n + 6), namer=edge_name)


def test_criterion_1_canonical_trajectory(request):
    res = [canonical_visits(n) for n in B_RANGE]
    bad = [r.n for r in res if not r.ok]
    _emit(request, 1, not bad, f"Bland on B_n visits all 2^n canonical policies, n=1..8; "
                               f"visited {[r.checked for r in res]}" + (f"; failing n={bad}" if bad else ""))
    assert not bad


def test_criterion_2_sequence_oracle(request):
    res = [bland_sequence(n) for n in B_RANGE]
    bad = [r.line() for r in res if not r.ok]
    _emit(request, 2, not bad, "Bland switch sequence equals the predicted trace position-for-position, n=1..8; "
                               f"lengths {[r.checked for r in res]}" + (f"; {bad[:2]}" if bad else ""))
    assert not bad


def test_criterion_3_d_lower_bound(request):
    t0 = time.perf_counter()
    problems, cells = [], 0
    for n, rule in _d_cells():
        cells += 1
        obs = d_run(n, rule)
        full = bland_b(n)[1].names()
        pred = [str(x) for x in predicted_bland_trace(n)]
        if obs.trace.total_switches < 2**n:
            problems.append(f"{rule} n={n}: {obs.trace.total_switches} < 2^{n}")
        if obs.projection[: len(pred)] != pred or obs.projection != full:
            problems.append(f"{rule} n={n}: (x,y) projection differs")
    secs = time.perf_counter() - t0
    _emit(request, 3, not problems,
          f"{cells} D_n runs (bland/dantzig/li/5 mix seeds, n=1..7, li n<={LI_MAX}) all >= 2^n and (x,y)-"
          f"projections equal the B_n sequence; {secs:.0f}s" + (f"; {problems[:3]}" if problems else ""))
    assert not problems


def test_criterion_4_termination(request):
    problems = []
    for n in B_RANGE:
        m, tr = bland_b(n)
        vals = solve_values(m, tr.terminal)
        if tr.terminal != optimal_policy_B(n, m) or improving_switches(m, tr.terminal, vals):
            problems.append(f"B n={n} terminal")
        if vals[m.index("t")] != 2 ** (n + 1) - Rational(5, 4):
            problems.append(f"B n={n} Val(t)={vals[m.index('t')]}")
    dcache = {}
    for n, rule in _d_cells():
        if n not in dcache:
            d, g = build_D(n)
            dcache[n] = (d, optimal_policy_D(n, d, g))
        d, opt = dcache[n]
        term = d_run(n, rule).trace.terminal
        vals = solve_values(d, term)
        if term.targets != opt.targets or improving_switches(d, term, vals):
            problems.append(f"D {rule} n={n} terminal")
        if vals[d.index("t")] != 2 ** (n + 1) - Rational(5, 4):
            problems.append(f"D {rule} n={n} Val(t)")
    _emit(request, 4, not problems, "every run ends at the optimum (twin optimum on D_n) with no improving "
                                    "switch and Val(t) = 2^(n+1) - 5/4" + (f"; {problems[:3]}" if problems else ""))
    assert not problems


def test_criterion_5_property_suite(request):
    t0 = time.perf_counter()
    failures, counts = [], {}

    def note(res):
        key = res.name.split("[")[0]
        counts[key] = counts.get(key, 0) + res.checked
        if not res.ok:
            failures.append(res.line())

    for n in B_RANGE:
        note(travel_not_improving(n))
        for res in bland_run_checks(n):
            note(res)
    for n in range(1, 7):
        note(reduced_cost_scaling(n, samples=1000, seed=n))
    for n in range(1, 6):
        note(reorientation_triple(n, samples=200, seed=n))
    for n, rule in _d_cells():
        obs = d_run(n, rule)
        counts["condition-b"] = counts.get("condition-b", 0) + obs.trace.total_switches
        if obs.cond_b_bad:
            failures.append(f"condition (b) {rule} n={n} steps {obs.cond_b_bad[:3]}")
        if rule == "dantzig":
            counts["cost-bounds"] = counts.get("cost-bounds", 0) + obs.bounds_checked
            if obs.bounds_bad:
                failures.append(f"cost bounds n={n}: {obs.bounds_bad[:2]}")
    secs = time.perf_counter() - t0
    summary = ", ".join(f"{k}:{v}" for k, v in sorted(counts.items()))
    _emit(request, 5, not failures, f"property suite exact ({summary}); {secs:.0f}s"
          + (f"; {failures[:3]}" if failures else ""))
    assert not failures


def test_criterion_6_lp_correspondence(request):
    t0 = time.perf_counter()
    problems, cells = [], 0
    for rule in BASIC:
        for n in range(1, LP_B_MAX + 1):
            m = build_B(n)
            c = compare_runs(m, canonical_policy(n, 0, m), PivotRule.parse(rule), 2 ** (n + 6), namer=edge_name)
            cells += 1
            if not c.ok:
                problems.append(f"B {rule} n={n}: {c}")
        for n in range(1, LP_D_MAX + 1):
            d, g = build_D(n)
            c = compare_runs(d, twin_policy(canonical_policy(n, 0), d, g), PivotRule.parse(rule),
                             2 ** (n + 8), namer=edge_name)
            cells += 1
            if not c.ok:
                problems.append(f"D {rule} n={n}: {c}")
    secs = time.perf_counter() - t0
    _emit(request, 6, not problems, f"{cells} coupled runs: pivot counts, entering sequences, reduced costs and "
                                    f"objectives equal; no degenerate pivot; {secs:.0f}s"
          + (f"; {problems[:2]}" if problems else ""))
    assert not problems


def test_criterion_7_tie_telemetry(request):
    ties = {}
    for n, rule in _d_cells():
        if rule == "bland":
            continue
        ties[(n, rule)] = d_run(n, rule).trace.ties_seen
    bad = {k: v for k, v in ties.items() if v}
    _emit(request, 7, not bad, f"Dantzig/Largest-Increase selections on D_n had zero ties in {len(ties)} runs"
          + (f"; ties {bad}" if bad else ""))
    assert not bad


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
