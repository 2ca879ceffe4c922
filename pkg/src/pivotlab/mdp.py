"""Exact finite Markov decision processes under the total-reward criterion.

All numbers are exact ``gmpy2.mpq`` rationals (``Rational`` below); nothing
here ever rounds.  They compare and hash equal to ``fractions.Fraction``.
Vertices are dense integer indices.  An edge is identified by its
``(source, target)`` pair, so parallel edges are rejected.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from gmpy2 import mpq as Rational

AGENT = "agent"
RANDOM = "random"


class MdpError(Exception):
    """Base class for errors raised by the MDP layer."""

    code = "MDP_ERROR"


class InvalidMdp(MdpError):
    code = "INVALID_MDP"


class NotWeakUnichain(MdpError):
    code = "NOT_WEAK_UNICHAIN"


class NotAgentEdge(MdpError):
    code = "NOT_AGENT_EDGE"


class NotSwitchable(MdpError):
    code = "NOT_SWITCHABLE"


def format_rational(q: Rational) -> str:
    """Render ``q`` as ``"num/den"`` (``"num"`` when the denominator is 1)."""
    q = Rational(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text) -> Rational:
    if isinstance(text, int):
        return Rational(text)
    if not isinstance(text, str):
        raise ValueError(f"rationals must be serialized as strings, got {text!r}")
    return Rational(text)


@dataclass(frozen=True)
class Vertex:
    index: int
    kind: str
    label: str


@dataclass(frozen=True)
class Edge:
    """An edge; ``payload`` is a reward for agent sources, a probability otherwise."""

    source: int
    target: int
    payload: Rational
    bland: Optional[int] = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.source, self.target)


class Mdp:
    """An immutable MDP with a designated sink.

    Args:
        vertices: vertices with indices ``0..len(vertices)-1`` in order.
        edges: all agent and randomization edges.
        sink: index of the sink vertex.

    Raises:
        InvalidMdp: if any structural requirement is violated.
    """

    def __init__(self, vertices: Sequence[Vertex], edges: Iterable[Edge], sink: int):
        self.vertices = tuple(vertices)
        self.sink = sink
        self.edges = tuple(edges)
        n = len(self.vertices)
        for i, v in enumerate(self.vertices):
            if v.index != i:
                raise InvalidMdp(f"vertex indices must be dense, found {v.index} at {i}")
            if v.kind not in (AGENT, RANDOM):
                raise InvalidMdp(f"unknown vertex kind {v.kind!r}")
        if not 0 <= sink < n:
            raise InvalidMdp(f"sink {sink} out of range")

        out: list[list[Edge]] = [[] for _ in range(n)]
        self._by_key: dict[tuple[int, int], Edge] = {}
        for e in self.edges:
            if not (0 <= e.source < n and 0 <= e.target < n):
                raise InvalidMdp(f"edge {e.key} references a missing vertex")
            if e.key in self._by_key:
                raise InvalidMdp(f"parallel edge {e.key}")
            self._by_key[e.key] = e
            out[e.source].append(e)
        self.out = tuple(tuple(sorted(es, key=lambda e: e.target)) for es in out)
        self._by_label = {v.label: v.index for v in self.vertices}
        if len(self._by_label) != n:
            raise InvalidMdp("vertex labels must be unique")
        self._validate()

    def _validate(self) -> None:
        s = self.sink
        if self.vertices[s].kind != AGENT:
            raise InvalidMdp("the sink must be an agent vertex")
        if [e.key for e in self.out[s]] != [(s, s)] or self.out[s][0].payload != 0:
            raise InvalidMdp("the sink's only edge must be a zero-reward self-loop")
        blands = [e.bland for e in self.edges if e.bland is not None]
        if len(set(blands)) != len(blands):
            raise InvalidMdp("Bland numbers must be unique")
        for v in self.vertices:
            es = self.out[v.index]
            if not es:
                raise InvalidMdp(f"vertex {v.label} has no outgoing edge")
            if v.kind == RANDOM:
                if any(not (0 < e.payload <= 1) for e in es):
                    raise InvalidMdp(f"probability outside (0,1] at {v.label}")
                if sum(e.payload for e in es) != 1:
                    raise InvalidMdp(f"probabilities at {v.label} do not sum to 1")
                if any(e.bland is not None for e in es):
                    raise InvalidMdp("randomization edges carry no Bland number")
        reach = _backward_reachable(len(self.vertices), s, (e.key for e in self.edges))
        if not all(reach):
            bad = [self.vertices[i].label for i, r in enumerate(reach) if not r]
            raise InvalidMdp(f"sink unreachable from {bad[:5]}")

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"Mdp(|V|={len(self.vertices)}, |E|={len(self.edges)})"

    def edge(self, source: int, target: int) -> Edge:
        return self._by_key[(source, target)]

    def has_edge(self, source: int, target: int) -> bool:
        return (source, target) in self._by_key

    def index(self, label: str) -> int:
        return self._by_label[label]

    def label(self, v: int) -> str:
        return self.vertices[v].label

    def is_agent(self, v: int) -> bool:
        return self.vertices[v].kind == AGENT

    @property
    def agent_vertices(self) -> list[int]:
        return [v.index for v in self.vertices if v.kind == AGENT]

    @property
    def agent_edges(self) -> list[Edge]:
        return [e for e in self.edges if self.is_agent(e.source)]

    def switchable(self, v: int) -> bool:
        return self.is_agent(v) and v != self.sink and len(self.out[v]) >= 2

    def edge_name(self, e: Edge) -> str:
        return f"{self.label(e.source)}->{self.label(e.target)}"

    def with_payload(self, source: int, target: int, payload: Rational) -> "Mdp":
        """Return a copy with one edge payload replaced (used by negative controls)."""
        edges = [
            Edge(e.source, e.target, Rational(payload), e.bland) if e.key == (source, target) else e
            for e in self.edges
        ]
        return Mdp(self.vertices, edges, self.sink)


@dataclass(frozen=True)
class Policy:
    """One chosen successor per agent vertex.

    ``targets[v]`` is the chosen successor of agent vertex ``v`` and ``None``
    for randomization vertices.  Vertices with a single outgoing edge are
    fixed to it.  Equality and hashing ignore the MDP reference.
    """

    mdp: Mdp = field(compare=False, repr=False)
    targets: tuple

    def __getitem__(self, v: int) -> Optional[int]:
        return self.targets[v]

    def active(self, e: Edge) -> bool:
        return self.targets[e.source] == e.target

    def active_edges(self) -> list[Edge]:
        return [self.mdp.edge(v, w) for v, w in enumerate(self.targets) if w is not None]

    def digest(self) -> str:
        blob = json.dumps(list(self.targets), separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def make_policy(mdp: Mdp, choice: dict[int, int]) -> Policy:
    """Build a policy from ``{vertex: successor}`` for the switchable vertices.

    Vertices with one outgoing edge are filled in automatically.
    """
    targets: list[Optional[int]] = [None] * len(mdp)
    for v in mdp.agent_vertices:
        if len(mdp.out[v]) == 1:
            targets[v] = mdp.out[v][0].target
    for v, w in choice.items():
        if not mdp.is_agent(v):
            raise NotAgentEdge(f"{mdp.label(v)} is not an agent vertex")
        if not mdp.has_edge(v, w):
            raise InvalidMdp(f"no edge {mdp.label(v)}->{mdp.label(w)}")
        targets[v] = w
    missing = [mdp.label(v) for v in mdp.agent_vertices if targets[v] is None]
    if missing:
        raise InvalidMdp(f"policy leaves {missing[:5]} undecided")
    return Policy(mdp, tuple(targets))


def _backward_reachable(n: int, root: int, keys: Iterable[tuple[int, int]]) -> list[bool]:
    preds: list[list[int]] = [[] for _ in range(n)]
    for u, v in keys:
        preds[v].append(u)
    seen = [False] * n
    seen[root] = True
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in preds[v]:
            if not seen[u]:
                seen[u] = True
                queue.append(u)
    return seen


def _induced_keys(mdp: Mdp, policy: Policy):
    for v in range(len(mdp)):
        if mdp.is_agent(v):
            yield (v, policy.targets[v])
        else:
            for e in mdp.out[v]:
                yield e.key


def is_weak_unichain(mdp: Mdp, policy: Policy) -> bool:
    """True iff every vertex reaches the sink in the policy-induced graph."""
    return all(_backward_reachable(len(mdp), mdp.sink, _induced_keys(mdp, policy)))


def _sccs(succ: list[list[int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative; components come out sinks-first."""
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            nxt = succ[v]
            while i < len(nxt):
                w = nxt[i]
                i += 1
                if index[w] == -1:
                    work.append((v, i))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def _solve_dense(a: list[list[Rational]], b: list[Rational]) -> list[Rational]:
    n = len(b)
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise NotWeakUnichain("singular Bellman system")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            b[col], b[piv] = b[piv], b[col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col]
            if f:
                f *= inv
                row, prow = a[r], a[col]
                for c in range(col, n):
                    if prow[c]:
                        row[c] -= f * prow[c]
                b[r] -= f * b[col]
    x = [Rational(0)] * n
    for r in range(n - 1, -1, -1):
        acc = b[r] - sum((a[r][c] * x[c] for c in range(r + 1, n) if a[r][c]), Rational(0))
        x[r] = acc / a[r][r]
    return x


def solve_values(mdp: Mdp, policy: Policy) -> list[Rational]:
    """Exact values of ``policy``; ``values[v]`` for every vertex index.

    Components of the induced graph are solved sinks-first, so each
    component only sees already-known values outside it.

    Raises:
        NotWeakUnichain: if some vertex cannot reach the sink under ``policy``.
    """
    if not is_weak_unichain(mdp, policy):
        raise NotWeakUnichain("policy is not weak unichain; values are undefined")
    n = len(mdp)
    # (successor, weight) pairs and constant term per vertex
    trans: list[list[tuple[int, Rational]]] = []
    const: list[Rational] = []
    for v in range(n):
        if mdp.is_agent(v):
            e = mdp.edge(v, policy.targets[v])
            trans.append([(e.target, Rational(1))])
            const.append(e.payload)
        else:
            trans.append([(e.target, e.payload) for e in mdp.out[v]])
            const.append(Rational(0))
    values: list[Optional[Rational]] = [None] * n
    values[mdp.sink] = Rational(0)
    succ = [[w for w, _ in t] for t in trans]
    for comp in _sccs(succ):
        if comp == [mdp.sink]:
            continue
        if len(comp) == 1:
            v = comp[0]
            values[v] = const[v] + sum((p * values[w] for w, p in trans[v]), Rational(0))
            continue
        pos = {v: i for i, v in enumerate(comp)}
        k = len(comp)
        a = [[Rational(0)] * k for _ in range(k)]
        b = [Rational(0)] * k
        for v, i in pos.items():
            a[i][i] += 1
            b[i] = const[v]
            for w, p in trans[v]:
                j = pos.get(w)
                if j is None:
                    b[i] += p * values[w]
                else:
                    a[i][j] -= p
        for v, x in zip(comp, _solve_dense(a, b)):
            values[v] = x
    return values


def reduced_cost(mdp: Mdp, policy: Policy, values: Sequence[Rational], edge: Edge) -> Rational:
    """``r(u,v) + Val(v) - Val(u)`` for an agent edge ``(u,v)``."""
    if not mdp.is_agent(edge.source):
        raise NotAgentEdge(f"{mdp.edge_name(edge)} leaves a randomization vertex")
    return edge.payload + values[edge.target] - values[edge.source]


def improving_switches(mdp: Mdp, policy: Policy, values: Sequence[Rational]) -> list[tuple[Edge, Rational]]:
    """All agent edges with strictly positive reduced cost, ordered by (source, target)."""
    found = []
    for v in mdp.agent_vertices:
        if not mdp.switchable(v):
            continue
        base = values[v]
        for e in mdp.out[v]:
            z = e.payload + values[e.target] - base
            if z > 0:
                found.append((e, z))
    return found


def apply_switch(policy: Policy, edge: Edge) -> Policy:
    mdp = policy.mdp
    if not mdp.switchable(edge.source):
        raise NotSwitchable(f"{mdp.label(edge.source)} has a single outgoing edge")
    if not mdp.has_edge(edge.source, edge.target):
        raise InvalidMdp(f"{mdp.edge_name(edge)} is not an edge of this MDP")
    if policy.targets[edge.source] == edge.target:
        return policy
    targets = list(policy.targets)
    targets[edge.source] = edge.target
    return Policy(mdp, tuple(targets))


def value_sum(mdp: Mdp, values: Sequence[Rational]) -> Rational:
    """Sum of the values over all agent vertices."""
    return sum((values[v] for v in mdp.agent_vertices), Rational(0))


def bellman_residuals(mdp: Mdp, policy: Policy, values: Sequence[Rational]) -> list[Rational]:
    """Per-vertex residual of the Bellman equations (all zero for a true solution)."""
    res = []
    for v in range(len(mdp)):
        if v == mdp.sink:
            res.append(values[v])
        elif mdp.is_agent(v):
            e = mdp.edge(v, policy.targets[v])
            res.append(values[v] - e.payload - values[e.target])
        else:
            res.append(values[v] - sum((e.payload * values[e.target] for e in mdp.out[v]), Rational(0)))
    return res


def mdp_to_json(mdp: Mdp) -> dict:
    edges = []
    for e in mdp.edges:
        item = {"src": e.source, "dst": e.target, "payload": format_rational(e.payload)}
        if e.bland is not None:
            item["bland"] = e.bland
        edges.append(item)
    return {
        "vertices": [{"id": v.index, "kind": v.kind, "label": v.label} for v in mdp.vertices],
        "edges": edges,
        "sink": mdp.sink,
    }


def mdp_from_json(data: dict) -> Mdp:
    vertices = sorted(
        (Vertex(int(v["id"]), v["kind"], v["label"]) for v in data["vertices"]),
        key=lambda v: v.index,
    )
    edges = [
        Edge(int(e["src"]), int(e["dst"]), parse_rational(e["payload"]), e.get("bland"))
        for e in data["edges"]
    ]
    return Mdp(vertices, edges, int(data["sink"]))


def dumps_mdp(mdp: Mdp) -> str:
    return json.dumps(mdp_to_json(mdp), indent=1, sort_keys=True)


def loads_mdp(text: str) -> Mdp:
    return mdp_from_json(json.loads(text))
