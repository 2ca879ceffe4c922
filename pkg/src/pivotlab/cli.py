"""``pivotlab`` command line: gen, run, sweep, verify and lp.

Exit codes: 0 success, 2 property failure, 3 invariant abort, 4 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .constructions import (
    BadProbability,
    DomainError,
    build_B,
    build_D,
    canonical_policy,
    edge_name,
    n_of,
    optimal_policy_B,
    recognize_canonical,
    twin_policy,
    untwin,
)
from .engine import PivotRule, run
from .lp import (
    EXACT_JSON,
    LOSSY_TEXT,
    LpError,
    basis_of_policy,
    build_flux_lp,
    compare_runs,
    export_lp,
    simplex_run,
)
from .mdp import InvalidMdp, MdpError, apply_switch, format_rational, loads_mdp, mdp_to_json, parse_rational
from .properties import canonical_visits, report, suite

EXIT_OK, EXIT_PROPERTY, EXIT_ABORT, EXIT_USAGE = 0, 2, 3, 4

CSV_COLUMNS = ("family", "n", "rule", "seed", "total_switches", "runtime_ms", "ties_seen",
               "doubling_ratio", "status")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_atomic(path: str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _rule(text: str) -> PivotRule:
    """Parse a rule; ``sched:<file>`` reads a comma/whitespace separated list."""
    if text.startswith("sched:") and Path(text[6:]).is_file():
        names = Path(text[6:]).read_text().replace(",", " ").split()
        text = "sched:" + ",".join(names)
    try:
        return PivotRule.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _overrides(path: Optional[str]) -> Optional[dict]:
    if not path:
        return None
    data = json.loads(Path(path).read_text())
    return {k: parse_rational(v) for k, v in data.items()}


def _instance(family: str, n: int, p_override=None):
    """(mdp, gadgets or None, start policy) for a family."""
    if n < 1:
        raise UsageError("--n must be >= 1")
    if family == "B":
        mdp = build_B(n)
        return mdp, None, canonical_policy(n, 0, mdp)
    if family == "D":
        mdp, g = build_D(n, p_override)
        return mdp, g, twin_policy(canonical_policy(n, 0), mdp, g)
    raise UsageError(f"unknown family {family!r}")


def _cap(args) -> int:
    return args.max_iters if args.max_iters is not None else 2 ** (args.n + 6)


def _summary(family: str, n: int, trace, gadgets) -> dict:
    """Run summary; D_n runs are read through their ``(x, y)`` switches.

    Replaying those switches on B_n gives the base policy each gadget
    reorientation commits to, which is what the canonical count refers to.
    """
    base = build_B(n)
    if gadgets is None:
        policies = trace.policies()
    else:
        pol = canonical_policy(n, 0, base)
        policies = [pol]
        for e in trace.edges():
            xy = gadgets.xy_base(e)
            if xy is not None:
                pol = apply_switch(pol, base.edge(*xy))
                policies.append(pol)
    visited = {recognize_canonical(p, n) for p in policies} - {None}
    term = trace.terminal if gadgets is None else untwin(trace.terminal, gadgets, base)
    optimal = (not trace.capped and term is not None
               and term.targets == optimal_policy_B(n, base).targets)
    return {
        "total_switches": trace.total_switches,
        "terminal_optimal": optimal,
        "canonical_policies_visited": len(visited),
        "ties_seen": trace.ties_seen,
    }

# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    mdp, g, _ = _instance(args.family, args.n, _overrides(args.p_override))
    data = mdp_to_json(mdp)
    if g is not None:
        data["gadgets"] = g.to_json(build_B(args.n))
    text = json.dumps(data, indent=1, sort_keys=True) + "\n"
    if args.out:
        _write_atomic(args.out, text)
        print(f"wrote {args.family}_{args.n}: {len(mdp)} vertices, {len(mdp.edges)} edges -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    rule = _rule(args.rule)
    mdp, g, start = _instance(args.family, args.n, _overrides(args.p_override))
    trace = run(mdp, start, rule, _cap(args), namer=edge_name)
    if args.out:
        _write_atomic(args.out, trace.to_jsonl())
    summary = _summary(args.family, args.n, trace, g)
    summary["config"] = {"family": args.family, "n": args.n, "rule": str(rule), "max_iters": _cap(args),
                         "p_override": args.p_override, "version": __version__}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _sweep_cells(args):
    for family in args.family:
        for rule_text in args.rule:
            rule = _rule(rule_text)
            for n in range(args.n_min, args.n_max + 1):
                yield family, rule, n


def cmd_sweep(args) -> int:
    if not args.rule or not args.family:
        raise UsageError("sweep needs at least one --family and one --rule")
    if args.n_min < 1 or args.n_max < args.n_min:
        raise UsageError("empty n range")
    cells = list(_sweep_cells(args))
    fh = open(args.csv, "w", newline="") if args.csv else sys.stdout
    failed = False
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        prev: dict = {}
        for family, rule, n in cells:
            t0 = time.perf_counter()
            status, total, ties = "ok", "", ""
            try:
                mdp, _, start = _instance(family, n)
                trace = run(mdp, start, rule, 2 ** (n + 6) if args.max_iters is None else args.max_iters)
                total, ties = trace.total_switches, trace.ties_seen
            except MdpError as exc:
                status, failed = f"error:{exc.code}", True
            ms = round((time.perf_counter() - t0) * 1000)
            key = (family, str(rule))
            ratio = ""
            if total != "" and prev.get(key, (None, 0))[0] == n - 1 and prev[key][1]:
                ratio = format_rational(parse_rational(total) / prev[key][1])
            if total != "":
                prev[key] = (n, total)
            seed = "" if rule.seed is None else rule.seed
            writer.writerow((family, n, str(rule), seed, total, ms, ties, ratio, status))
            fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_ABORT if failed else EXIT_OK


def cmd_verify(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    ok = True
    if args.mdp:
        mdp = loads_mdp(Path(args.mdp).read_text())
        ok &= report([canonical_visits(n_of(mdp), mdp)])
    else:
        rules = tuple(r.strip() for r in args.rules.split(",") if r.strip())
        ok &= report(suite(args.n, samples=args.samples, triples=args.triples, rules=rules))
    print("verify:", "all properties pass" if ok else "FAILURES")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_lp(args) -> int:
    mdp, gadgets, start = _instance(args.family, args.n, _overrides(args.p_override))
    if args.action == "export":
        lp = build_flux_lp(mdp, edge_name)
        text = export_lp(lp, EXACT_JSON if args.format == "exact" else LOSSY_TEXT)
        if args.out:
            _write_atomic(args.out, text if text.endswith("\n") else text + "\n")
            print(f"wrote LP with {lp.n_vars} variables and {lp.n_rows} rows -> {args.out}")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    rule = _rule(args.rule)
    if args.action == "run":
        lp = build_flux_lp(mdp, edge_name)
        if args.start == "optimal":
            start = optimal_policy_B(args.n, mdp) if gadgets is None else twin_policy(
                optimal_policy_B(args.n), mdp, gadgets)
        trace = simplex_run(lp, basis_of_policy(lp, start), rule, _cap(args))
        if args.out:
            lines = [json.dumps({"pivot": p.iteration, "rule": p.rule, "entering": p.entering_name,
                                 "leaving": p.leaving_name, "reduced_cost": format_rational(p.reduced_cost),
                                 "step": format_rational(p.step),
                                 "objective": format_rational(p.objective_after)}, sort_keys=True)
                     for p in trace.pivots]
            _write_atomic(args.out, "".join(line + "\n" for line in lines))
        print(json.dumps({"pivots": trace.total_pivots,
                          "objective": format_rational(trace.final_objective)}, sort_keys=True))
        return EXIT_OK
    corr = compare_runs(mdp, start, rule, _cap(args), namer=edge_name)
    print(json.dumps({"pivots": corr.pivots, "switches": corr.switches,
                      "sequences_equal": corr.sequences_equal,
                      "reduced_costs_equal": corr.reduced_costs_equal,
                      "objectives_equal": corr.objectives_equal,
                      "degenerate": corr.degenerate,
                      "first_mismatch": corr.first_mismatch}, sort_keys=True))
    return EXIT_OK if corr.ok else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pivotlab", description="Exact policy iteration on the B_n / D_n families.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, rule=True):
        sp.add_argument("--family", choices=("B", "D"), required=True)
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--p-override", help="JSON file mapping vertex labels to probabilities")
        sp.add_argument("--out")
        if rule:
            sp.add_argument("--rule", default="bland", help="bland|dantzig|li|mix:<seed>|sched:<file or list>")
            sp.add_argument("--max-iters", type=int, help="default 2^(n+6)")

    sp = sub.add_parser("gen", help="write an instance as JSON")
    common(sp, rule=False)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("run", help="run policy iteration from the canonical start")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="switch counts over a grid, as CSV")
    sp.add_argument("--family", action="append", choices=("B", "D"))
    sp.add_argument("--rule", action="append")
    sp.add_argument("--n-min", type=int, default=1)
    sp.add_argument("--n-max", type=int, required=True)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="check the property suite up to --n")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--triples", type=int, default=200)
    sp.add_argument("--rules", default="bland,dantzig,li")
    sp.add_argument("--mdp", help="check canonical visits on this B_n JSON instead")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("lp", help="flux LP export, simplex run or comparison")
    sp.add_argument("action", choices=("export", "run", "compare"))
    common(sp)
    sp.add_argument("--format", choices=("exact", "lossy"), default="exact")
    sp.add_argument("--start", choices=("initial", "optimal"), default="initial")
    sp.set_defaults(func=cmd_lp)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DomainError, BadProbability, InvalidMdp, OSError, json.JSONDecodeError) as exc:
        print(f"pivotlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MdpError, LpError) as exc:
        print(f"pivotlab: invariant abort [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ABORT


def entry() -> None:
    sys.exit(main())
