"""Shared fixtures and an independent value oracle."""

from fractions import Fraction

import pytest

from pivotlab.constructions import build_B, build_D, canonical_policy, twin_policy


def dense_values(mdp, policy):
    """Values by plain Gauss-Jordan over all vertices with ``fractions.Fraction``.

    Deliberately shares no code with the library's SCC-based solver.
    """
    n = len(mdp)
    a = [[Fraction(0)] * (n + 1) for _ in range(n)]
    for v in range(n):
        a[v][v] = Fraction(1)
        if v == mdp.sink:
            continue
        if mdp.is_agent(v):
            e = mdp.edge(v, policy[v])
            a[v][e.target] -= 1
            a[v][n] = Fraction(int(e.payload.numerator), int(e.payload.denominator))
        else:
            for e in mdp.out[v]:
                a[v][e.target] -= Fraction(int(e.payload.numerator), int(e.payload.denominator))
    for c in range(n):
        piv = next(r for r in range(c, n) if a[r][c] != 0)
        a[c], a[piv] = a[piv], a[c]
        p = a[c][c]
        a[c] = [x / p for x in a[c]]
        for r in range(n):
            if r != c and a[r][c] != 0:
                f = a[r][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return [a[v][n] for v in range(n)]


@pytest.fixture(scope="session")
def b4():
    return build_B(4)


@pytest.fixture(scope="session")
def d4():
    return build_D(4)


@pytest.fixture(scope="session")
def twin0_d4(d4):
    d, g = d4
    return twin_policy(canonical_policy(4, 0), d, g)
