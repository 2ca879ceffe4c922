from fractions import Fraction

import pytest

from pivotlab.constructions import b_edge, build_B, build_D, canonical_policy, enter, twin_policy
from pivotlab.engine import PivotRule, run
from pivotlab.properties import (
    bland_run_checks,
    bland_sequence,
    canonical_definition,
    canonical_visits,
    d_run_results,
    even_transition,
    gadget_structure,
    observe_d_run,
    phases_transition,
    reduced_cost_scaling,
    reorientation_triple,
    run_invariants,
    suite,
    travel_not_improving,
    twin_values,
)


@pytest.mark.parametrize("n", range(1, 7))
def test_canonical_family(n):
    for check in (canonical_definition, travel_not_improving, phases_transition, even_transition, canonical_visits,
                  bland_sequence, gadget_structure):
        res = check(n)
        assert res.ok, res.line()
    for res in bland_run_checks(n):
        assert res.ok, res.line()


def test_phases_vacuous_at_n1():
    res = phases_transition(1)
    assert res.ok and res.checked == 0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_scaling_and_triples_small(n):
    assert reduced_cost_scaling(n, samples=100, seed=n).ok
    assert reorientation_triple(n, samples=40, seed=n).ok
    assert twin_values(n, samples=50, seed=n).ok


@pytest.mark.parametrize("rule", ["bland", "dantzig", "li", "mix:11", "sched:li,bland,dantzig"])
def test_d_runs_small(rule):
    for n in (1, 2, 3, 4):
        for res in d_run_results(observe_d_run(n, PivotRule.parse(rule)), with_bounds=True):
            assert res.ok, res.line()


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("rule", ["bland", "dantzig", "li"])
def test_run_invariants(n, rule):
    m = build_B(n)
    assert run_invariants(m, canonical_policy(n, 0, m), PivotRule.parse(rule), quarter=True).ok
    if n <= 3:
        d, g = build_D(n)
        assert run_invariants(d, twin_policy(canonical_policy(n, 0), d, g), PivotRule.parse(rule)).ok


def test_negative_control_tampered_reward():
    m = build_B(3)
    e = b_edge(m, 3, enter(1))
    res = canonical_visits(3, m.with_payload(e.source, e.target, Fraction(-1)))
    assert not res.ok
    assert canonical_visits(3, m).ok


def test_bland_on_d_is_insensitive_to_probabilities():
    for n in (2, 3):
        base = run(build_B(n), canonical_policy(n, 0), PivotRule("bland"), 2**10).total_switches
        d, g = build_D(n, {lab: Fraction(1, 2) for lab in ("t", "a1", "b1", "d")})
        tr = run(d, twin_policy(canonical_policy(n, 0), d, g), PivotRule("bland"), 2**12)
        assert tr.total_switches >= 2**n
        assert tr.total_switches == 3 * base


def test_prepend_order_does_not_change_bland_trace():
    for n in (2, 3, 4):
        runs = []
        for key in (lambda nv, b: (nv, b), lambda nv, b: (-nv, -b)):
            d, g = build_D(n, prepend_key=key)
            runs.append([str(g.xy_base(e)) for e in run(d, twin_policy(canonical_policy(n, 0), d, g),
                                                          PivotRule("bland"), 2**12).edges()])
        assert runs[0] == runs[1]


def test_suite_lines():
    lines = [r.line() for r in suite(2, samples=10, triples=5)]
    assert lines and all(x.startswith("PASS") for x in lines)
