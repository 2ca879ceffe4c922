"""Single-switch policy iteration with pluggable pivot rules and a full trace."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .mdp import (
    Edge,
    Mdp,
    MdpError,
    NotWeakUnichain,
    Policy,
    Rational,
    apply_switch,
    format_rational,
    improving_switches,
    is_weak_unichain,
    solve_values,
    value_sum,
)

BLAND = "bland"
DANTZIG = "dantzig"
LARGEST_INCREASE = "li"
MIX = "mix"
BASIC_RULES = (BLAND, DANTZIG, LARGEST_INCREASE)


class IterationCap(MdpError):
    code = "ITERATION_CAP"


class MissingNumber(MdpError):
    code = "MISSING_NUMBER"


@dataclass(frozen=True)
class PivotRule:
    """Which improving switch to apply.

    ``kind`` is one of ``bland``, ``dantzig``, ``li`` or ``mix``.  A mix rule
    either cycles through an explicit ``schedule`` of basic rules or draws one
    uniformly per iteration from ``choices`` with ``random.Random(seed)``.
    """

    kind: str
    schedule: tuple = ()
    seed: Optional[int] = None
    choices: tuple = BASIC_RULES

    def __post_init__(self):
        if self.kind not in BASIC_RULES + (MIX,):
            raise ValueError(f"unknown pivot rule {self.kind!r}")
        if self.kind == MIX:
            if not self.schedule and self.seed is None:
                raise ValueError("a mix rule needs a schedule or a seed")
            bad = [r for r in self.schedule + self.choices if r not in BASIC_RULES]
            if bad:
                raise ValueError(f"unknown rules in mix: {bad}")

    @classmethod
    def parse(cls, text: str) -> "PivotRule":
        """Parse ``bland``, ``dantzig``, ``li``, ``mix:<seed>`` or ``sched:<r1,r2,...>``."""
        text = text.strip().lower()
        if text in BASIC_RULES:
            return cls(text)
        if text.startswith("mix:"):
            return cls(MIX, seed=int(text[4:]))
        if text.startswith("sched:"):
            return cls(MIX, schedule=tuple(r.strip() for r in text[6:].split(",") if r.strip()))
        raise ValueError(f"cannot parse pivot rule {text!r}")

    def __str__(self) -> str:
        if self.kind != MIX:
            return self.kind
        if self.schedule:
            return "sched:" + ",".join(self.schedule)
        return f"mix:{self.seed}"

    def scheduler(self) -> Callable[[int], str]:
        """Map an iteration number to the basic rule used at that iteration."""
        if self.kind != MIX:
            return lambda _: self.kind
        if self.schedule:
            sched = self.schedule
            return lambda it: sched[it % len(sched)]
        rng = random.Random(self.seed)
        choices = self.choices
        return lambda _: rng.choice(choices)


@dataclass
class Step:
    iteration: int
    rule: str
    edge: Edge
    name: str
    reduced_cost: Rational
    value_sum_after: Rational
    improving: int
    ties: int


@dataclass
class Trace:
    steps: list = field(default_factory=list)
    initial: Optional[Policy] = None
    terminal: Optional[Policy] = None
    capped: bool = False

    @property
    def total_switches(self) -> int:
        return len(self.steps)

    @property
    def ties_seen(self) -> int:
        return sum(s.ties for s in self.steps)

    def names(self) -> list[str]:
        return [s.name for s in self.steps]

    def edges(self) -> list[Edge]:
        return [s.edge for s in self.steps]

    def policies(self) -> list[Policy]:
        """Every visited policy, initial included."""
        out = [self.initial]
        for s in self.steps:
            out.append(apply_switch(out[-1], s.edge))
        return out

    def to_jsonl(self) -> str:
        lines = []
        for s in self.steps:
            lines.append(json.dumps({
                "iteration": s.iteration,
                "rule": s.rule,
                "edge": s.name,
                "reduced_cost": format_rational(s.reduced_cost),
                "value_sum_after": format_rational(s.value_sum_after),
                "improving": s.improving,
                "ties": s.ties,
            }, sort_keys=True))
        lines.append(json.dumps({
            "summary": True,
            "total_switches": self.total_switches,
            "terminal_policy": self.terminal.digest() if self.terminal else None,
            "capped": self.capped,
        }, sort_keys=True))
        return "\n".join(lines) + "\n"


def _bland(e: Edge) -> int:
    if e.bland is None:
        raise MissingNumber(f"edge {e.key} has no Bland number")
    return e.bland


def select_bland(candidates: Sequence[tuple[Edge, Rational]]) -> tuple[Edge, int]:
    """The candidate with the smallest Bland number; never a tie."""
    return min(candidates, key=lambda c: _bland(c[0]))[0], 0


def _argmax(candidates, score) -> tuple[Edge, int]:
    best = max(score(c) for c in candidates)
    top = [c[0] for c in candidates if score(c) == best]
    return min(top, key=_bland), len(top) - 1


def select_dantzig(candidates: Sequence[tuple[Edge, Rational]]) -> tuple[Edge, int]:
    """A candidate of maximal reduced cost; ties go to the smallest Bland number.

    Returns the edge and the number of other candidates sharing the maximum.
    """
    return _argmax(candidates, lambda c: c[1])


def select_largest_increase(mdp: Mdp, policy: Policy, candidates) -> tuple[Edge, int]:
    """A candidate maximizing the value sum after the switch, re-solved exactly."""
    sums = {c[0].key: value_sum(mdp, solve_values(mdp, apply_switch(policy, c[0]))) for c in candidates}
    return _argmax(candidates, lambda c: sums[c[0].key])


def run(
    mdp: Mdp,
    initial: Policy,
    rule: PivotRule,
    max_iters: int,
    namer: Optional[Callable[[Mdp, Edge], str]] = None,
    observer: Optional[Callable] = None,
    raise_on_cap: bool = True,
) -> Trace:
    """Apply one improving switch per iteration until none is left.

    Args:
        observer: called as ``observer(policy, values, candidates, chosen)``
            before each switch; used by the property checks.
        raise_on_cap: raise :class:`IterationCap` when ``max_iters`` is hit,
            otherwise return a trace marked ``capped``.

    Raises:
        NotWeakUnichain: the start, or any visited policy, is not weak unichain.
        IterationCap: ``max_iters`` switches were applied without terminating.
    """
    namer = namer or (lambda m, e: m.edge_name(e))
    pick = rule.scheduler()
    trace = Trace(initial=initial)
    policy = initial
    values = solve_values(mdp, policy)
    it = 0
    while True:
        candidates = improving_switches(mdp, policy, values)
        if not candidates:
            break
        if it >= max_iters:
            trace.capped = True
            trace.terminal = policy
            if raise_on_cap:
                raise IterationCap(f"no termination after {max_iters} switches")
            return trace
        which = pick(it)
        if which == BLAND:
            chosen, ties = select_bland(candidates)
        elif which == DANTZIG:
            chosen, ties = select_dantzig(candidates)
        else:
            chosen, ties = select_largest_increase(mdp, policy, candidates)
        z = next(c[1] for c in candidates if c[0] is chosen)
        if observer is not None:
            observer(policy, values, candidates, chosen)
        policy = apply_switch(policy, chosen)
        if not is_weak_unichain(mdp, policy):
            raise NotWeakUnichain(f"iteration {it} left the weak unichain policies")
        values = solve_values(mdp, policy)
        trace.steps.append(Step(it, which, chosen, namer(mdp, chosen), z,
                                value_sum(mdp, values), len(candidates), ties))
        it += 1
    trace.terminal = policy
    return trace


@dataclass
class TraceDiff:
    mismatches: list = field(default_factory=list)
    actual_len: int = 0
    predicted_len: int = 0

    @property
    def ok(self) -> bool:
        return not self.mismatches and self.actual_len == self.predicted_len

    def __str__(self) -> str:
        if self.ok:
            return f"match ({self.actual_len} switches)"
        head = ", ".join(f"#{i}: got {a} expected {p}" for i, a, p in self.mismatches[:5])
        return f"lengths {self.actual_len} vs {self.predicted_len}; {head}"


def verify_trace_against(actual: Sequence, predicted: Sequence) -> TraceDiff:
    """Positional comparison of two switch sequences (any comparable items)."""
    actual = [str(a) for a in actual]
    predicted = [str(p) for p in predicted]
    diff = TraceDiff(actual_len=len(actual), predicted_len=len(predicted))
    for i in range(max(len(actual), len(predicted))):
        a = actual[i] if i < len(actual) else None
        p = predicted[i] if i < len(predicted) else None
        if a != p:
            diff.mismatches.append((i, a, p))
    return diff
