"""Recovery of interventional queries under missingness.

The engine combines three ingredients: back-door adjustment in the
substantive submodel, the three graph-conditioned rewrite rules for
interventional expressions (checked by d-separation on mutilated graphs),
and the statistical recovery machinery of :mod:`misslab.recovery` for the
do-free remainder.  The derivation search is depth-capped, memoized and
deterministic; it is sound but incomplete, so a failed search reports
Unknown rather than non-identifiability.

A derivation transforms terms P(targets | do(D), conditions) until no do()
remains and no partially observed variable is left outside a proxy:

* rule 3 deletes interventions, rule 2 turns them into observations,
* rule 1 inserts mechanism observations R_X = 0,
* the masking identity replaces a guarded partial variable by its proxy
  (the variable is then latent as far as the expression is concerned),
* conditioning on a set and summing it out splits a term in two,
* a do-free term over observed-data variables is an atom; a do-free term
  over substantive variables is handed to the statistical recovery engine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .algebra import Product, ProbAtom, SumOver, canonicalize
from .dsep import DiGraphView, SepQuery, d_separated
from .errors import UnknownNode
from .graph import MGraph, NodeKind, build_mgraph, mechanism_name, proxy_name
from .recovery import (
    Justification,
    Query,
    RecoveryCertificate,
    RecoveryMethod,
    RecoveryOutcome,
    recover,
)

__all__ = [
    "CausalQuery",
    "MutilatedGraph",
    "DoTerm",
    "rule_applicable",
    "identify_by_adjustment",
    "recover_causal",
]

DEFAULT_DEPTH_CAP = 12
_MAX_EXPANSION_SETS = 8


@dataclass(frozen=True)
class CausalQuery:
    """P(outcome | do(treatments), context)."""

    outcome: frozenset
    do: frozenset
    context: frozenset = frozenset()

    def __post_init__(self):
        o = frozenset(self.outcome)
        d = frozenset(self.do)
        c = frozenset(self.context)
        object.__setattr__(self, "outcome", o)
        object.__setattr__(self, "do", d)
        object.__setattr__(self, "context", c)
        if not o or not d:
            raise ValueError("causal query needs outcome and do variables")
        if o & d or o & c or d & c:
            raise ValueError("outcome, do and context must be disjoint")

    def text(self) -> str:
        o = ",".join(sorted(self.outcome))
        d = ",".join(sorted(self.do))
        tail = ("," + ",".join(sorted(self.context))) if self.context else ""
        return f"P({o}|do({d}){tail})"


@dataclass(frozen=True)
class MutilatedGraph:
    """A graph with incoming edges of ``overline`` and outgoing edges of
    ``underline`` removed; the substrate for rule checks."""

    base: MGraph
    overline: frozenset = frozenset()
    underline: frozenset = frozenset()

    def view(self) -> DiGraphView:
        return DiGraphView.from_mgraph(self.base).mutilate(self.overline, self.underline)


Item = Tuple[str, Optional[object]]


@dataclass(frozen=True)
class DoTerm:
    """One probability term that may carry interventions."""

    targets: Tuple[Item, ...]
    do: Tuple[str, ...] = ()
    conditions: Tuple[Item, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(sorted(self.targets)))
        object.__setattr__(self, "do", tuple(sorted(self.do)))
        object.__setattr__(self, "conditions", tuple(sorted(self.conditions)))

    @property
    def target_names(self):
        return frozenset(n for n, _ in self.targets)

    @property
    def condition_names(self):
        return frozenset(n for n, _ in self.conditions)

    def text(self) -> str:
        def items(seq):
            return ",".join(n if v is None else f"{n}={v}" for n, v in seq)

        inside = items(self.targets)
        rest = []
        if self.do:
            rest.append(f"do({','.join(self.do)})")
        if self.conditions:
            rest.append(items(self.conditions))
        return f"P({inside}|{','.join(rest)})" if rest else f"P({inside})"


def _rule_parts(rule: int, do_rest: frozenset, moved: frozenset):
    # rule 1 tests plain d-separation under the surviving interventions; the
    # inserted/deleted observation set is never mutilated
    if rule == 1:
        return do_rest, frozenset(), None
    if rule == 2:
        return do_rest, moved, None
    if rule == 3:
        return do_rest, frozenset(), moved
    raise ValueError("rule must be 1, 2 or 3")


def rule_applicable(
    g: MGraph,
    rule: int,
    targets: Iterable[str],
    do: Iterable[str],
    conditions: Iterable[str],
    moved: Iterable[str],
) -> bool:
    """Check one rewrite rule on the fragment P(targets | do, conditions).

    ``moved`` is the subset being inserted/deleted (rule 1: an observation
    set; rule 2: interventions exchanged for observations; rule 3:
    interventions deleted).  An empty ``moved`` is vacuously allowed.
    """
    targets = frozenset(targets)
    do = frozenset(do)
    conditions = frozenset(conditions)
    moved = frozenset(moved)
    if not moved:
        return True
    if rule in (2, 3) and not moved <= do:
        raise UnknownNode("rule 2/3 move interventions; 'moved' must be a subset of do")
    do_rest = do - moved if rule in (2, 3) else do
    cond = conditions - moved if rule == 1 else conditions
    base = DiGraphView.from_mgraph(g)
    for n in targets | do | conditions | moved:
        if n not in base.parents:
            raise UnknownNode(f"unknown node {n!r}")

    overline, underline, deleted = _rule_parts(rule, do_rest, moved)
    if rule == 3:
        g1 = base.mutilate(overline=do_rest)
        anc_w = g1.ancestors_of(cond) if cond else set()
        z_w = frozenset(z for z in moved if z not in anc_w)
        overline = do_rest | z_w
    view = base.mutilate(overline=overline, underline=underline)
    return d_separated(view, SepQuery(targets, moved, do_rest | cond))


def _rule_justification(g, rule, targets, do_rest, cond, moved) -> Justification:
    overline, underline, _ = _rule_parts(rule, do_rest, moved)
    if rule == 3:
        g1 = DiGraphView.from_mgraph(g).mutilate(overline=do_rest)
        anc_w = g1.ancestors_of(cond) if cond else set()
        overline = do_rest | frozenset(z for z in moved if z not in anc_w)
    return Justification(
        frozenset(targets),
        frozenset(moved),
        frozenset(do_rest) | frozenset(cond),
        overline=frozenset(overline),
        underline=frozenset(underline),
        note=f"rule {rule}",
    )


def substantive_subgraph(g: MGraph) -> MGraph:
    """The causal submodel: substantive and latent nodes only."""
    keep = g.substantive_vars | g.latent_vars
    nodes = [(n, "latent" if g.kinds[n] is NodeKind.LATENT else "obs") for n in sorted(keep)]
    directed = [(a, b) for a, b in g.directed if a in keep and b in keep]
    bidirected = [(a, b) for a, b in g.bidirected if a in keep and b in keep]
    return build_mgraph(nodes, directed, bidirected)


def identify_by_adjustment(
    g_sub: MGraph, x: Iterable[str], y: Iterable[str]
) -> Optional[frozenset]:
    """Smallest back-door admissible set among observable variables.

    Candidates exclude descendants of the treatments; a set is admissible
    when it blocks every treatment-outcome path that remains after removing
    the treatments' outgoing edges.  Returns None when no such set exists
    (e.g. an unblockable latent path).
    """
    x = frozenset(x)
    y = frozenset(y)
    g_sub.check_nodes(x | y)
    view = DiGraphView.from_mgraph(g_sub)
    pool = sorted(g_sub.substantive_vars - x - y - g_sub.descendants(x))
    backdoor = view.mutilate(underline=x)
    for size in range(len(pool) + 1):
        for cand in itertools.combinations(pool, size):
            z = frozenset(cand)
            if d_separated(backdoor, SepQuery(x, y, z)):
                return z
    return None


# -- the derivation engine ---------------------------------------------------------


class _Derivation:
    def __init__(self, g: MGraph, depth_cap: int):
        self.g = g
        self.base = DiGraphView.from_mgraph(g)
        self.depth_cap = depth_cap
        self.memo: Dict[DoTerm, object] = {}
        self.observed_data = g.observed_vars | g.proxy_vars | g.mechanism_vars

    # ---- helpers

    def _names(self, term: DoTerm) -> frozenset:
        return term.target_names | term.condition_names | frozenset(term.do)

    def _rule_ok(self, rule: int, term: DoTerm, moved: frozenset) -> bool:
        return rule_applicable(
            self.g, rule, term.target_names, term.do, term.condition_names, moved
        )

    def _finish(self, term: DoTerm):
        names = self._names(term)
        if names <= self.observed_data:
            a = ProbAtom(term.targets, term.conditions)
            return a, (), ()
        substantive = self.g.substantive_vars
        plain = all(v is None for _, v in term.targets + term.conditions)
        if plain and names <= substantive:
            out = recover(self.g, Query(term.target_names, term.condition_names))
            if out.recovered and out.certificate and out.certificate.estimand is not None:
                note = (
                    f"statistical recovery of {term.text()} by "
                    f"{out.certificate.method.value}",
                ) + out.certificate.notes
                return out.certificate.estimand, out.certificate.justifications, note
        return None

    def _proxy_step(self, term: DoTerm) -> Optional[DoTerm]:
        cond_names = term.condition_names
        target_names = term.target_names

        def guard_present(v):
            return (mechanism_name(v), 0) in term.conditions or (
                mechanism_name(v),
                0,
            ) in term.targets

        changed = False

        def sub(items):
            nonlocal changed
            out = []
            for n, val in items:
                if n in self.g.partial_vars and guard_present(n):
                    out.append((proxy_name(n), val))
                    changed = True
                else:
                    out.append((n, val))
            return tuple(out)

        new = DoTerm(sub(term.targets), term.do, sub(term.conditions))
        return new if changed else None

    def _expansion_sets(self, term: DoTerm) -> List[frozenset]:
        used = self._names(term)
        do = frozenset(term.do)
        pool = sorted(self.g.observed_vars - used - self.g.descendants(do))
        ranked: List[Tuple[int, frozenset]] = []
        for size in (1, 2):
            for cand in itertools.combinations(pool, size):
                z = frozenset(cand)
                admissible = d_separated(
                    self.base.mutilate(underline=do),
                    SepQuery(do, term.target_names, z | term.condition_names),
                )
                ranked.append((0 if admissible else 1, z))
        ranked.sort(key=lambda t: (t[0], len(t[1]), tuple(sorted(t[1]))))
        return [z for _, z in ranked[:_MAX_EXPANSION_SETS]]

    # ---- search

    def solve(self, term: DoTerm, depth: int):
        cached = self.memo.get(term)
        if cached is not None:
            kind, payload = cached
            if kind == "ok":
                return payload
            if kind == "fail" and payload >= depth:
                return None

        result = self._solve_uncached(term, depth)
        if result is not None:
            self.memo[term] = ("ok", result)
        else:
            self.memo[term] = ("fail", depth)
        return result

    def _solve_uncached(self, term: DoTerm, depth: int):
        if not term.do:
            done = self._finish(term)
            if done is not None:
                return done
        if depth <= 0:
            return None

        do = frozenset(term.do)
        cond = term.condition_names

        # rule 3: delete interventions, largest sets first
        for moved in _subsets_desc(do):
            if self._rule_ok(3, term, moved):
                new = DoTerm(term.targets, tuple(do - moved), term.conditions)
                sub = self.solve(new, depth - 1)
                if sub is not None:
                    j = _rule_justification(self.g, 3, term.target_names, do - moved, cond, moved)
                    return _merge(sub, (j,), (f"rule 3 deletes do({','.join(sorted(moved))})",))

        # rule 2: exchange interventions for observations
        for moved in _subsets_desc(do):
            if self._rule_ok(2, term, moved):
                new = DoTerm(
                    term.targets,
                    tuple(do - moved),
                    term.conditions + tuple((v, None) for v in sorted(moved)),
                )
                sub = self.solve(new, depth - 1)
                if sub is not None:
                    j = _rule_justification(self.g, 2, term.target_names, do - moved, cond, moved)
                    return _merge(
                        sub, (j,), (f"rule 2 exchanges do({','.join(sorted(moved))}) for observation",)
                    )

        # rule 1: insert mechanism observations needed for masking
        unguarded = sorted(
            v
            for v in (term.target_names | cond) & self.g.partial_vars
            if (mechanism_name(v), 0) not in term.conditions
        )
        for v in unguarded:
            r = mechanism_name(v)
            if r in cond:
                continue
            moved = frozenset({r})
            if self._rule_ok(1, term, moved):
                new = DoTerm(term.targets, term.do, term.conditions + ((r, 0),))
                sub = self.solve(new, depth - 1)
                if sub is not None:
                    j = Justification(
                        term.target_names,
                        moved,
                        do | cond,
                        overline=do,
                        note="rule 1",
                    )
                    return _merge(sub, (j,), (f"rule 1 inserts {r}=0",))

        # masking: guarded partial variables become proxies
        masked = self._proxy_step(term)
        if masked is not None:
            sub = self.solve(masked, depth - 1)
            if sub is not None:
                swapped = sorted(
                    (term.target_names | cond) - (masked.target_names | masked.condition_names)
                )
                note = (
                    "masking substitution "
                    + ", ".join(f"{v} -> {proxy_name(v)}" for v in swapped)
                    + " (variable treated as latent afterwards)",
                )
                return _merge(sub, (), note)

        # conditioning + marginalization over an auxiliary observed set
        for aux in self._expansion_sets(term):
            left = DoTerm(
                term.targets, term.do, term.conditions + tuple((v, None) for v in sorted(aux))
            )
            right = DoTerm(tuple((v, None) for v in sorted(aux)), term.do, term.conditions)
            sub_l = self.solve(left, depth - 1)
            if sub_l is None:
                continue
            sub_r = self.solve(right, depth - 1)
            if sub_r is None:
                continue
            e = SumOver(tuple(sorted(aux)), Product((sub_l[0], sub_r[0])))
            justs = sub_l[1] + sub_r[1]
            notes = (
                f"condition on and sum over {{{','.join(sorted(aux))}}}",
            ) + sub_l[2] + sub_r[2]
            return e, justs, notes

        return None


def _subsets_desc(s: frozenset):
    items = sorted(s)
    for size in range(len(items), 0, -1):
        for cand in itertools.combinations(items, size):
            yield frozenset(cand)


def _merge(sub, justs, notes):
    e, j, n = sub
    return e, tuple(justs) + j, tuple(notes) + n


def recover_causal(
    g: MGraph, q: CausalQuery, depth_cap: int = DEFAULT_DEPTH_CAP
) -> RecoveryOutcome:
    """Derive an observed-data estimand for P(outcome | do(...), context).

    Returns Unknown when the bounded search exhausts its depth; the engine
    never asserts non-identifiability.
    """
    for v in q.outcome | q.do | q.context:
        if g.kind(v) not in (NodeKind.OBSERVED, NodeKind.PARTIAL):
            raise UnknownNode(f"causal query variable {v!r} is not substantive")

    notes: Tuple[str, ...] = ()
    adj = identify_by_adjustment(substantive_subgraph(g), q.do, q.outcome)
    if adj is None:
        notes += (
            "no back-door adjustment set exists in the substantive model; "
            "proceeding with the rule engine regardless",
        )
    else:
        notes += (f"substantive-model adjustment set: {{{','.join(sorted(adj)) or ''}}}",)

    engine = _Derivation(g, depth_cap)
    root = DoTerm(
        tuple((v, None) for v in sorted(q.outcome)),
        tuple(sorted(q.do)),
        tuple((v, None) for v in sorted(q.context)),
    )
    result = engine.solve(root, depth_cap)
    if result is None:
        return RecoveryOutcome(
            "unknown",
            reason=f"no derivation of {q.text()} within depth {depth_cap}",
        )
    estimand, justs, trail = result
    cert = RecoveryCertificate(
        canonicalize(estimand),
        RecoveryMethod.DO_CALCULUS,
        justs,
        notes=notes + trail,
    )
    if not cert.verify(g):
        # every recorded claim restates a check the search already passed,
        # so a replay failure can only mean an engine bug
        raise AssertionError("derivation certificate failed its replay check")
    return RecoveryOutcome("recovered", certificate=cert)
