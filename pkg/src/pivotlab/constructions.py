"""The lower-bound families B_n and D_n and their distinguished policies.

B_n has a transport vertex ``t``, levels ``a_i``/``b_i`` for ``i = 1..n``, a
dummy ``d`` and the sink ``s``.  Vertex indices follow the vertex numbering
``(t, a1, b1, ..., an, bn, d, s)`` so ``index == N_V - 1``.  D_n keeps those
indices and appends the gadget vertices ``x``, ``y``, ``z`` of every replaced
edge.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Optional

from .mdp import (
    AGENT,
    RANDOM,
    Edge,
    Mdp,
    Policy,
    Rational,
    Vertex,
    format_rational,
    make_policy,
)


class DomainError(ValueError):
    code = "DOMAIN"


class BadProbability(ValueError):
    code = "BAD_PROBABILITY"


# --------------------------------------------------------------------------
# bit helpers


def bit(x: int, i: int) -> int:
    """The ``i``-th bit of ``x`` (1-based)."""
    return (x >> (i - 1)) & 1


def bit_ell1(x: int) -> int:
    """Index of the least significant set bit."""
    if x <= 0:
        raise DomainError("bit_ell1 needs x >= 1")
    return (x & -x).bit_length()


def bit_m(x: int) -> int:
    """Index of the most significant set bit."""
    if x <= 0:
        raise DomainError("bit_m needs x >= 1")
    return x.bit_length()


def bit_ell0(x: int) -> int:
    """Index of the least significant unset bit."""
    if x < 0:
        raise DomainError("bit_ell0 needs x >= 0")
    return bit_ell1(x + 1)


def bit_L(i: int, x: int) -> int:
    """``max{j in [i-2] : x_j = 1 or j = 1}``."""
    if i < 3:
        raise DomainError("bit_L needs i >= 3")
    for j in range(i - 2, 0, -1):
        if bit(x, j) or j == 1:
            return j
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# names


EDGE_KINDS = ("travel", "enter", "skip", "board", "stay", "leave", "dummy-to-sink", "sink-loop")
_LEVELLED = EDGE_KINDS[:6]


@dataclass(frozen=True, order=True)
class EdgeName:
    kind: str
    level: int = 0

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind in _LEVELLED:
            return f"{self.kind}({self.level})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "EdgeName":
        m = re.fullmatch(r"([a-z]+)\((\d+)\)", text.strip())
        if m:
            return cls(m.group(1), int(m.group(2)))
        return cls(text.strip())


def travel(i):
    return EdgeName("travel", i)


def enter(i):
    return EdgeName("enter", i)


def skip(i):
    return EdgeName("skip", i)


def board(i):
    return EdgeName("board", i)


def stay(i):
    return EdgeName("stay", i)


def leave(i):
    return EdgeName("leave", i)


def a_label(i: int, n: int) -> str:
    return "s" if i == n + 1 else f"a{i}"


def b_label(i: int, n: int) -> str:
    return "d" if i == n + 1 else f"b{i}"


def base_vertex_labels(n: int) -> list[str]:
    """Labels in vertex-numbering order ``(t, a1, b1, ..., an, bn, d, s)``."""
    labels = ["t"]
    for i in range(1, n + 1):
        labels += [f"a{i}", f"b{i}"]
    return labels + ["d", "s"]


def endpoints(n: int, name: EdgeName) -> tuple[str, str]:
    """Source and target labels of a named B_n edge."""
    i, k = name.level, name.kind
    if k in _LEVELLED and not 1 <= i <= n:
        raise DomainError(f"{name} outside levels 1..{n}")
    return {
        "travel": lambda: ("t", a_label(i, n)),
        "enter": lambda: (a_label(i, n), b_label(i, n)),
        "skip": lambda: (a_label(i, n), a_label(i + 1, n)),
        "board": lambda: (a_label(i, n), "t"),
        "stay": lambda: (b_label(i, n), b_label(i + 1, n)),
        "leave": lambda: (b_label(i, n), a_label(i + 1, n)),
        "dummy-to-sink": lambda: ("d", "s"),
        "sink-loop": lambda: ("s", "s"),
    }[k]()


_LEVEL_RE = re.compile(r"([ab])(\d+)$")


def _level(label: str) -> Optional[tuple[str, int]]:
    m = _LEVEL_RE.match(label)
    return (m.group(1), int(m.group(2))) if m else None


def name_from_labels(src: str, dst: str) -> Optional[EdgeName]:
    """Recover the B_n edge name from endpoint labels, or None if not a base edge."""
    if (src, dst) == ("d", "s"):
        return EdgeName("dummy-to-sink")
    if (src, dst) == ("s", "s"):
        return EdgeName("sink-loop")
    if src == "t":
        lv = _level(dst)
        return travel(lv[1]) if lv and lv[0] == "a" else None
    ls = _level(src)
    if ls is None:
        return None
    side, i = ls
    ld = _level(dst)
    if side == "a":
        if dst == "t":
            return board(i)
        if ld == ("b", i):
            return enter(i)
        if ld == ("a", i + 1) or dst == "s":
            return skip(i)
        return None
    if ld == ("b", i + 1) or dst == "d":
        return stay(i)
    if ld == ("a", i + 1) or dst == "s":
        return leave(i)
    return None


def bland_number_B(n: int, name: EdgeName) -> int:
    """Bland number of a B_n edge."""
    i, k = name.level, name.kind
    if k == "travel":
        return i
    if k == "dummy-to-sink":
        return 6 * n + 1
    if k == "sink-loop":
        return 6 * n + 2
    offset = ("enter", "skip", "board", "stay", "leave").index(k) + 1
    return n + offset + 5 * (i - 1)


def base_edge_names(n: int) -> list[EdgeName]:
    """All B_n edge names ordered by Bland number."""
    names = [travel(i) for i in range(1, n + 1)]
    for i in range(1, n + 1):
        names += [enter(i), skip(i), board(i), stay(i), leave(i)]
    return names + [EdgeName("dummy-to-sink"), EdgeName("sink-loop")]


def base_reward(n: int, name: EdgeName) -> Rational:
    if name.kind == "enter":
        return Rational(2**name.level)
    if name.kind == "stay":
        return Rational(3, 4)
    if name.kind == "board":
        return Rational(-(2**name.level)) + Rational(5, 4)
    return Rational(0)


def edge_name(mdp: Mdp, e: Edge) -> str:
    """Human name of an edge: ``enter(3)`` on base edges, else gadget-qualified."""
    src, dst = mdp.label(e.source), mdp.label(e.target)
    name = name_from_labels(src, dst)
    return str(name) if name is not None else f"{src}->{dst}"


# --------------------------------------------------------------------------
# B_n


@lru_cache(maxsize=None)
def build_B(n: int) -> Mdp:
    """The deterministic process B_n with its Bland numbering."""
    if n < 1:
        raise DomainError("n must be >= 1")
    labels = base_vertex_labels(n)
    vertices = [Vertex(i, AGENT, lab) for i, lab in enumerate(labels)]
    idx = {lab: i for i, lab in enumerate(labels)}
    edges = []
    for name in base_edge_names(n):
        u, v = endpoints(n, name)
        edges.append(Edge(idx[u], idx[v], base_reward(n, name), bland_number_B(n, name)))
    return Mdp(vertices, edges, idx["s"])


def b_edge(mdp: Mdp, n: int, name: EdgeName) -> Edge:
    """Look up a named edge in B_n (or a structurally identical copy)."""
    u, v = endpoints(n, name)
    return mdp.edge(mdp.index(u), mdp.index(v))


def n_of(mdp: Mdp) -> int:
    """Recover n from a B_n or D_n instance."""
    return sum(1 for v in mdp.vertices if _level(v.label) and v.label.startswith("a"))


def policy_from_names(mdp: Mdp, n: int, names) -> Policy:
    choice = {}
    for name in names:
        e = b_edge(mdp, n, name)
        if e.source in choice and choice[e.source] != e.target:
            raise ValueError(f"two active edges at {mdp.label(e.source)}")
        choice[e.source] = e.target
    return make_policy(mdp, choice)


def active_names(policy: Policy) -> set[EdgeName]:
    """Names of the active edges of a B_n policy at every non-sink vertex."""
    mdp = policy.mdp
    return {
        name_from_labels(mdp.label(v), mdp.label(w))
        for v, w in enumerate(policy.targets)
        if w is not None and v != mdp.sink
    }


# --------------------------------------------------------------------------
# canonical policies


def _switchable_labels(n: int) -> list[str]:
    out = ["t"]
    for i in range(1, n + 1):
        out += [f"a{i}", f"b{i}"]
    return out


def canonical_choice(n: int, x: int) -> dict[str, EdgeName]:
    """Vertex label -> active edge name for the canonical policy of ``x``.

    Every clause of the definition is applied in turn; a vertex decided twice
    inconsistently, or left undecided, is an error.
    """
    if not 0 <= x <= 2**n - 1:
        raise DomainError(f"x={x} outside [0, 2^{n}-1]")
    chosen: dict[str, EdgeName] = {}

    def put(name: EdgeName):
        src = endpoints(n, name)[0]
        old = chosen.setdefault(src, name)
        if old != name:
            raise AssertionError(f"conflicting clauses at {src}: {old} vs {name}")

    if x == 0:
        put(travel(1))
        for i in range(1, n + 1):
            put(skip(i))
            put(leave(i))
    else:
        put(travel(bit_ell1(x)))
        m = bit_m(x)
        put(leave(m))
        for i in range(m + 1, n + 1):
            put(skip(i))
            put(leave(i))
        for i in range(1, n + 1):
            if not bit(x, i):
                continue
            put(enter(i))
            if i == 2:
                put(leave(1))
                if not bit(x, 1):
                    put(skip(1))
            if i >= 3 and bit(x, i - 1):
                put(leave(i - 1))
            if i >= 3 and not bit(x, i - 1):
                put(stay(i - 1))
                put(skip(i - 1))
                put(leave(i - 2))
                low = bit_L(i, x)
                if low < i - 2:
                    for j in range(low + 1, i - 1):
                        put(board(j))
                        put(stay(j - 1))
                if low == 1 and not bit(x, 1):
                    put(board(1))
    missing = [lab for lab in _switchable_labels(n) if lab not in chosen]
    if missing:
        raise AssertionError(f"canonical policy for x={x} leaves {missing} undecided")
    return chosen


def canonical_policy(n: int, x: int, mdp: Optional[Mdp] = None) -> Policy:
    mdp = mdp or build_B(n)
    return policy_from_names(mdp, n, canonical_choice(n, x).values())


def canonical_clause_report(policy: Policy, n: int, x: int) -> dict[str, bool]:
    """Check every clause of the canonical-policy definition against ``policy``.

    Independent of :func:`canonical_choice`: each clause reads the policy.
    """
    act = active_names(policy)
    rep: dict[str, bool] = {}
    if x == 0:
        rep["<0>"] = travel(1) in act and all(skip(i) in act and leave(i) in act for i in range(1, n + 1))
        return rep
    rep["<1>"] = travel(bit_ell1(x)) in act
    m = bit_m(x)
    rep["<2>"] = leave(m) in act and all(
        skip(i) in act and leave(i) in act for i in range(m + 1, n + 1)
    )
    ok = {k: True for k in ("a", "b", "c", "d1", "d2")}
    for i in range(1, n + 1):
        if not bit(x, i):
            continue
        ok["a"] &= enter(i) in act
        if i == 2:
            ok["b"] &= leave(1) in act and (bit(x, 1) or skip(1) in act)
        if i >= 3 and bit(x, i - 1):
            ok["c"] &= leave(i - 1) in act
        if i >= 3 and not bit(x, i - 1):
            ok["d1"] &= {stay(i - 1), skip(i - 1), leave(i - 2)} <= act
            low = bit_L(i, x)
            if low < i - 2:
                ok["d2"] &= all(
                    board(j) in act and stay(j - 1) in act for j in range(low + 1, i - 1)
                )
            if low == 1 and not bit(x, 1):
                ok["d2"] &= board(1) in act
    rep.update({f"<{k}>": v for k, v in ok.items()})
    return rep


def recognize_canonical(policy: Policy, n: int) -> Optional[int]:
    """Return ``x`` if ``policy`` is the canonical policy for ``x``, else None."""
    act = active_names(policy) - {EdgeName("dummy-to-sink")}
    x = sum(1 << (i - 1) for i in range(1, n + 1) if enter(i) in act)
    return x if set(canonical_choice(n, x).values()) == act else None


def canonical_phases(n: int, x: int) -> list[EdgeName]:
    """Switches that take the canonical policy of odd ``x`` to that of ``x + 1``."""
    if x % 2 == 0 or not 1 <= x <= 2**n - 3:
        raise DomainError(f"x={x} must be odd in [1, 2^{n}-3]")
    ell = bit_ell0(x)
    high = bit(x, ell + 1) if ell + 1 <= n else 0
    seq = []
    if high:
        seq.append(leave(ell))
    if high or ell > bit_m(x):
        seq.append(stay(ell - 1))
    seq += [enter(ell), travel(ell)]
    if ell >= 3:
        seq += [board(j) for j in range(1, ell - 1)]
    seq.append(skip(ell - 1))
    if ell >= 4:
        seq += [stay(j) for j in range(ell - 3, 0, -1)]
    if ell == 2:
        seq.append(leave(1))
    return seq


def transition_switches(n: int, x: int) -> list[EdgeName]:
    """Predicted Bland switches from the canonical policy of ``x`` to that of ``x + 1``."""
    if x == 0:
        return [enter(1)]
    if x % 2 == 0:
        return [enter(1), travel(1)]
    return canonical_phases(n, x)


def predicted_bland_trace(n: int) -> list[EdgeName]:
    """Predicted Bland switches on B_n from ``pi_0`` to ``pi_{2^n - 1}``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    seq: list[EdgeName] = []
    for x in range(2**n - 1):
        seq += transition_switches(n, x)
    return seq


def optimal_policy_B(n: int, mdp: Optional[Mdp] = None) -> Policy:
    mdp = mdp or build_B(n)
    names = [stay(n), travel(1)] + [enter(i) for i in range(1, n + 1)]
    names += [leave(j) for j in range(1, n)]
    return policy_from_names(mdp, n, names)


# --------------------------------------------------------------------------
# D_n


@dataclass(frozen=True)
class Gadget:
    base: tuple[int, int]
    x: int
    y: int
    z: int
    p: Rational


@dataclass(frozen=True)
class GadgetMap:
    """Gadget vertices per replaced base edge, keyed by base ``(v, w)`` indices."""

    n: int
    gadgets: Mapping[tuple[int, int], Gadget]
    probabilities: Mapping[str, Rational]
    _owner: dict = field(init=False, repr=False, compare=False)
    _xy: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        owner, xy = {}, {}
        for (v, w), g in self.gadgets.items():
            owner[(g.x, g.y)] = owner[(v, g.x)] = owner[(g.x, v)] = v
            xy[(g.x, g.y)] = (v, w)
        object.__setattr__(self, "_owner", owner)
        object.__setattr__(self, "_xy", xy)

    def __getitem__(self, base: tuple[int, int]) -> Gadget:
        return self.gadgets[base]

    def successors(self, v: int) -> list[int]:
        return sorted(w for (u, w) in self.gadgets if u == v)

    def owner(self, e: Edge) -> Optional[int]:
        """Base vertex ``v`` with ``e`` in B(v), or None."""
        return self._owner.get(e.key)

    def xy_base(self, e: Edge) -> Optional[tuple[int, int]]:
        """Base edge ``(v, w)`` if ``e`` is ``(x_{v,w}, y_{v,w})``, else None."""
        return self._xy.get(e.key)

    def to_json(self, base: Mdp) -> dict:
        out = {}
        for (v, w), g in self.gadgets.items():
            name = name_from_labels(base.label(v), base.label(w))
            out[str(name)] = {"x": g.x, "y": g.y, "z": g.z, "p": format_rational(g.p)}
        return out


def default_probabilities(n: int) -> dict[str, Rational]:
    """``p_v = 2^{-N_V(v)(n+5)}`` for every base vertex except the sink."""
    labels = base_vertex_labels(n)
    return {lab: Rational(1, 2 ** ((k + 1) * (n + 5))) for k, lab in enumerate(labels) if lab != "s"}


def _default_prepend_key(nv: int, base_bland: int):
    return (nv, base_bland)


def build_D(
    n: int,
    probabilities: Optional[Mapping[str, Rational]] = None,
    prepend_key: Callable[[int, int], object] = _default_prepend_key,
) -> tuple[Mdp, GadgetMap]:
    """B_n with every edge but the sink loop replaced by an x/y/z gadget.

    Args:
        n: number of levels.
        probabilities: ``p_v`` per base vertex label; missing labels use the
            default ``2^{-N_V(v)(n+5)}``.
        prepend_key: sort key ``(N_V(u), N_B(u, w))`` for the ``(x_{u,w}, u)``
            edges placed at the front of the Bland numbering.

    Raises:
        BadProbability: if some ``p_v`` is outside ``(0, 1]``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    probs = default_probabilities(n)
    for lab, p in (probabilities or {}).items():
        if lab not in probs:
            raise BadProbability(f"no base vertex {lab!r} with a probability")
        probs[lab] = Rational(p)
    for lab, p in probs.items():
        if not 0 < p <= 1:
            raise BadProbability(f"p[{lab}] = {p} outside (0, 1]")

    base = build_B(n)
    vertices = [Vertex(v.index, AGENT, v.label) for v in base.vertices]
    replaced = [e for e in sorted(base.edges, key=lambda e: e.bland) if e.source != base.sink]
    gadgets: dict[tuple[int, int], Gadget] = {}
    for e in replaced:
        tag = f"({base.label(e.source)}->{base.label(e.target)})"
        k = len(vertices)
        vertices += [
            Vertex(k, AGENT, "x" + tag),
            Vertex(k + 1, RANDOM, "y" + tag),
            Vertex(k + 2, AGENT, "z" + tag),
        ]
        gadgets[e.key] = Gadget(e.key, k, k + 1, k + 2, probs[base.label(e.source)])

    number = 0

    def nxt():
        nonlocal number
        number += 1
        return number

    edges: list[Edge] = []
    front = sorted(replaced, key=lambda e: prepend_key(e.source + 1, e.bland))
    for e in front:
        g = gadgets[e.key]
        edges.append(Edge(g.x, e.source, Rational(0), nxt()))
    for e in replaced:
        g = gadgets[e.key]
        edges.append(Edge(g.x, g.y, Rational(0), nxt()))
        edges.append(Edge(e.source, g.x, Rational(0), nxt()))
    for e in replaced:
        g = gadgets[e.key]
        edges.append(Edge(g.z, e.target, e.payload, nxt()))
    edges.append(Edge(base.sink, base.sink, Rational(0), nxt()))
    for e in replaced:
        g = gadgets[e.key]
        if g.p != 1:
            edges.append(Edge(g.y, e.source, 1 - g.p))
        edges.append(Edge(g.y, g.z, g.p))
    mdp = Mdp(vertices, edges, base.sink)
    return mdp, GadgetMap(n, gadgets, probs)


def twin_policy(base_policy: Policy, d: Mdp, gadgets: GadgetMap) -> Policy:
    """The D_n policy orienting every base vertex as ``base_policy`` chooses."""
    targets = list(d.out[v][0].target if len(d.out[v]) == 1 else None for v in range(len(d)))
    for (v, w), g in gadgets.gadgets.items():
        if base_policy[v] == w:
            targets[v] = g.x
            targets[g.x] = g.y
        else:
            targets[g.x] = v
    for v in range(len(d)):
        if not d.is_agent(v):
            targets[v] = None
    return Policy(d, tuple(targets))


def untwin(policy: Policy, gadgets: GadgetMap, base: Optional[Mdp] = None) -> Optional[Policy]:
    """The B_n policy whose twin is ``policy``, or None if some vertex is not oriented."""
    base = base or build_B(gadgets.n)
    choice = {}
    for v in range(len(base)):
        if v == base.sink:
            continue
        succ = gadgets.successors(v)
        oriented = [
            w for w in succ
            if policy[v] == gadgets[(v, w)].x and policy[gadgets[(v, w)].x] == gadgets[(v, w)].y
            and all(policy[gadgets[(v, u)].x] == v for u in succ if u != w)
        ]
        if len(oriented) != 1:
            return None
        choice[v] = oriented[0]
    return make_policy(base, choice)


def optimal_policy_D(n: int, d: Optional[Mdp] = None, gadgets: Optional[GadgetMap] = None) -> Policy:
    if d is None or gadgets is None:
        d, gadgets = build_D(n)
    return twin_policy(optimal_policy_B(n), d, gadgets)


def belongs(edge: Edge, v: int, gadgets: GadgetMap) -> bool:
    """True iff ``edge`` is one of the three gadget edges of base vertex ``v``."""
    return gadgets.owner(edge) == v


def xy_base_edge(edge: Edge, gadgets: GadgetMap) -> Optional[tuple[int, int]]:
    """Base edge ``(v, w)`` if ``edge`` is ``(x_{v,w}, y_{v,w})``, else None."""
    return gadgets.xy_base(edge)
