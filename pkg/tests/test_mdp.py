from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_values
from pivotlab.constructions import (
    b_edge,
    build_B,
    build_D,
    canonical_policy,
    edge_name,
    enter,
    leave,
    optimal_policy_B,
    optimal_policy_D,
    policy_from_names,
    recognize_canonical,
    skip,
    stay,
    travel,
    twin_policy,
)
from pivotlab.mdp import (
    AGENT,
    RANDOM,
    Edge,
    InvalidMdp,
    Mdp,
    NotAgentEdge,
    NotSwitchable,
    NotWeakUnichain,
    Vertex,
    apply_switch,
    bellman_residuals,
    dumps_mdp,
    format_rational,
    improving_switches,
    is_weak_unichain,
    loads_mdp,
    make_policy,
    parse_rational,
    reduced_cost,
    solve_values,
    value_sum,
)


def tiny(edges, kinds=None):
    """Three vertices 0, 1 and the sink 2."""
    kinds = kinds or [AGENT, AGENT, AGENT]
    verts = [Vertex(i, k, f"v{i}") for i, k in enumerate(kinds)]
    return Mdp(verts, edges + [Edge(2, 2, Fraction(0), 99)], 2)


# --- rationals -------------------------------------------------------------


@given(st.fractions())
def test_rational_text_round_trip(q):
    assert parse_rational(format_rational(q)) == q


def test_rational_format():
    assert format_rational(Fraction(3, 4)) == "3/4"
    assert format_rational(Fraction(-8, 2)) == "-4"
    assert parse_rational("-59/4") == Fraction(-59, 4)


# --- validation ------------------------------------------------------------


@pytest.mark.parametrize(
    "edges, kinds",
    [
        ([Edge(0, 1, Fraction(0), 1), Edge(0, 1, Fraction(1), 2), Edge(1, 2, Fraction(0), 3)], None),
        ([Edge(0, 1, Fraction(0), 1), Edge(1, 2, Fraction(0), 1)], None),
        ([Edge(0, 1, Fraction(0), 1)], None),
        ([Edge(0, 1, Fraction(0), 1), Edge(1, 0, Fraction(0), 2)], None),
        ([Edge(0, 1, Fraction(1, 2)), Edge(0, 2, Fraction(1, 3)), Edge(1, 2, Fraction(0), 1)],
         [RANDOM, AGENT, AGENT]),
        ([Edge(0, 1, Fraction(0)), Edge(0, 2, Fraction(1)), Edge(1, 2, Fraction(0), 1)],
         [RANDOM, AGENT, AGENT]),
    ],
    ids=["parallel", "dup-bland", "no-out-edge", "sink-unreachable", "prob-sum", "zero-prob"],
)
def test_invalid_mdps_rejected(edges, kinds):
    with pytest.raises(InvalidMdp):
        tiny(edges, kinds)


def test_sink_loop_must_be_zero():
    verts = [Vertex(0, AGENT, "u"), Vertex(1, AGENT, "s")]
    with pytest.raises(InvalidMdp):
        Mdp(verts, [Edge(0, 1, Fraction(0), 1), Edge(1, 1, Fraction(1), 2)], 1)


# --- values ----------------------------------------------------------------


def test_values_zero_at_pi0(b4):
    vals = solve_values(b4, canonical_policy(4, 0, b4))
    assert all(v == 0 for v in vals)
    assert value_sum(b4, vals) == 0


def test_optimal_value_of_t(b4):
    vals = solve_values(b4, optimal_policy_B(4, b4))
    assert vals[b4.index("t")] == Fraction(123, 4)
    assert vals[b4.index("t")] == 2**5 - Fraction(5, 4)


def test_optimal_value_sum(b4):
    vals = solve_values(b4, optimal_policy_B(4, b4))
    assert value_sum(b4, vals) == Fraction(811, 4)


def test_twin_optimal_value_of_t(d4):
    d, g = d4
    pol = optimal_policy_D(4, d, g)
    vals = solve_values(d, pol)
    assert vals[d.index("t")] == Fraction(123, 4)
    assert vals == dense_values(d, pol)


def test_twin_pi0_values(d4, twin0_d4):
    d, g = d4
    vals = solve_values(d, twin0_d4)
    assert all(vals[v] == 0 for v in range(11))
    # each z_{v,w} carries r(v,w); per level 2^i + (-2^i + 5/4) + 3/4 = 2
    assert all(vals[gad.z] == d.edge(gad.z, w).payload for (v, w), gad in g.gadgets.items())
    assert value_sum(d, vals) == 2 * 4


def test_solver_agrees_with_dense_oracle_on_gadget_cycles(d4):
    d, g = d4
    for x in (0, 5, 11, 15):
        pol = twin_policy(canonical_policy(4, x), d, g)
        assert solve_values(d, pol) == dense_values(d, pol)


def test_not_weak_unichain_refused():
    m = tiny([Edge(0, 1, Fraction(1), 1), Edge(1, 0, Fraction(1), 2), Edge(1, 2, Fraction(0), 3)])
    cyc = make_policy(m, {1: 0})
    assert not is_weak_unichain(m, cyc)
    with pytest.raises(NotWeakUnichain) as info:
        solve_values(m, cyc)
    assert info.value.code == "NOT_WEAK_UNICHAIN"


# --- reduced costs and switches ---------------------------------------------


def test_reduced_cost_enter1_at_pi0(b4):
    pol = canonical_policy(4, 0, b4)
    vals = solve_values(b4, pol)
    assert reduced_cost(b4, pol, vals, b_edge(b4, 4, enter(1))) == 2


def test_active_edges_have_zero_cost(b4):
    for x in range(16):
        pol = canonical_policy(4, x, b4)
        vals = solve_values(b4, pol)
        assert all(reduced_cost(b4, pol, vals, e) == 0 for e in pol.active_edges())


def test_gadget_reduced_cost_is_tiny_dyadic(d4, twin0_d4):
    d, g = d4
    vals = solve_values(d, twin0_d4)
    gad = g[(d.index("a1"), d.index("b1"))]
    z = reduced_cost(d, twin0_d4, vals, d.edge(gad.x, gad.y))
    assert z == Fraction(1, 2**17)
    assert z == 2 * Fraction(1, 2 ** (2 * (4 + 5)))


def test_reduced_cost_needs_agent_edge(d4, twin0_d4):
    d, g = d4
    gad = g[(d.index("t"), d.index("a1"))]
    vals = solve_values(d, twin0_d4)
    with pytest.raises(NotAgentEdge):
        reduced_cost(d, twin0_d4, vals, d.edge(gad.y, gad.z))


def test_improving_at_pi0(b4):
    pol = canonical_policy(4, 0, b4)
    got = improving_switches(b4, pol, solve_values(b4, pol))
    # stay(i) carries reward 3/4 over zero values, so it is improving too
    expected = []
    for i in range(1, 5):
        expected += [(f"enter({i})", 2**i), (f"stay({i})", Fraction(3, 4))]
    assert [(edge_name(b4, e), z) for e, z in got] == expected


def test_improving_brute_force_at_pi0(b4):
    pol = canonical_policy(4, 0, b4)
    vals = solve_values(b4, pol)
    brute = {e.key for e in b4.agent_edges if e.payload + vals[e.target] - vals[e.source] > 0}
    assert brute == {e.key for e, _ in improving_switches(b4, pol, vals)}
    assert len(b4.agent_edges) == 26


def test_no_improving_at_optimum(b4, d4):
    pol = optimal_policy_B(4, b4)
    assert improving_switches(b4, pol, solve_values(b4, pol)) == []
    d, g = d4
    tw = optimal_policy_D(4, d, g)
    assert improving_switches(d, tw, solve_values(d, tw)) == []


def test_twin_pi0_improving_only_xy(d4, twin0_d4):
    d, g = d4
    got = improving_switches(d, twin0_d4, solve_values(d, twin0_d4))
    assert got and all(g.xy_base(e) is not None for e, _ in got)


def test_apply_switch(b4):
    pi0 = canonical_policy(4, 0, b4)
    e = b_edge(b4, 4, enter(1))
    pi1 = apply_switch(pi0, e)
    assert recognize_canonical(pi1, 4) == 1
    assert apply_switch(pi1, e) == pi1
    assert [v for v in range(len(b4)) if pi0[v] != pi1[v]] == [e.source]


def test_apply_switch_single_edge_vertex(d4, twin0_d4):
    d, g = d4
    gad = g[(d.index("t"), d.index("a1"))]
    with pytest.raises(NotSwitchable):
        apply_switch(twin0_d4, d.edge(gad.z, d.index("a1")))


def test_apply_xy_switch_breaks_orientation(d4, twin0_d4):
    from pivotlab.constructions import untwin
    d, g = d4
    gad = g[(d.index("a1"), d.index("b1"))]
    after = apply_switch(twin0_d4, d.edge(gad.x, gad.y))
    assert untwin(twin0_d4, g) is not None
    assert untwin(after, g) is None


def test_weak_unichain_examples(b4, d4):
    assert is_weak_unichain(b4, canonical_policy(4, 0, b4))
    stays = policy_from_names(b4, 4, [travel(1)] + [stay(i) for i in range(1, 5)] +
                              [skip(i) for i in range(1, 5)])
    assert is_weak_unichain(b4, stays)
    d, g = d4
    for x in range(16):
        assert is_weak_unichain(d, twin_policy(canonical_policy(4, x), d, g))


def test_board_cycle_is_not_weak_unichain():
    from pivotlab.constructions import board
    m = build_B(2)
    pol = policy_from_names(m, 2, [travel(1), board(1), leave(1), skip(2), leave(2)])
    assert not is_weak_unichain(m, pol)


# --- json --------------------------------------------------------------------


@pytest.mark.parametrize("family", ["B", "D"])
def test_json_round_trip(family):
    mdp = build_B(3) if family == "B" else build_D(2)[0]
    text = dumps_mdp(mdp)
    again = loads_mdp(text)
    assert dumps_mdp(again) == text
    assert [(e.key, e.payload, e.bland) for e in again.edges] == [(e.key, e.payload, e.bland) for e in mdp.edges]


# --- random policies -----------------------------------------------------------


def random_policy(mdp, choices):
    sw = [v for v in mdp.agent_vertices if mdp.switchable(v)]
    return make_policy(mdp, {v: mdp.out[v][c % len(mdp.out[v])].target for v, c in zip(sw, choices)})


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=7, max_size=7))
def test_random_b3_policies(choices):
    m = build_B(3)
    pol = random_policy(m, choices)
    if not is_weak_unichain(m, pol):
        with pytest.raises(NotWeakUnichain):
            solve_values(m, pol)
        return
    vals = solve_values(m, pol)
    assert vals == dense_values(m, pol)
    assert all(r == 0 for r in bellman_residuals(m, pol, vals))
    assert all((4 * v).denominator == 1 for v in vals)
    for e, z in improving_switches(m, pol, vals):
        new = solve_values(m, apply_switch(pol, e))
        assert all(a >= b for a, b in zip(new, vals))
        assert new[e.source] > vals[e.source]


def test_leave_names_resolve(b4):
    assert edge_name(b4, b_edge(b4, 4, leave(4))) == "leave(4)"
