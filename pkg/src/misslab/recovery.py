"""Recoverability of statistical queries from incomplete data.

Given a missingness graph and a target distribution, the routines here
either produce a consistent estimand over the observed-data distribution
(with a certificate of the conditional independencies used), certify that no
consistent estimator exists (self-masking edge or an all-collider path from
a variable to its own mechanism), or report Unknown.  Unknown is never
conflated with impossibility: no implemented criterion fired, nothing more.

Methods, tried in order by :func:`recover`:

* complete-case and available-case conditioning,
* sequential factorization: ordered block factorizations of the target
  (optionally summing in auxiliary variables), each factor admissible when
  its targets are independent of the relevant mechanisms given its
  conditioning set,
* the MAR joint decomposition,
* joint recovery by dividing out mechanism factors over their Markov
  blankets ("R-factorization"),
* matrix recovery for a self-masked variable with a fully observed driver,
  which trades the graphical certificate for an invertibility assumption.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .algebra import Estimand, Product, ProbAtom, Quotient, SumOver, atom, canonicalize, render, substitute_proxies
from .dsep import DiGraphView, SepQuery, d_separated, markov_blanket
from .errors import (
    MGraphSyntaxError,
    ModelOutsideStandardClass,
    NoPartialVariables,
    NotMar,
    PatternNotApplicable,
    REdgesPresent,
    UnknownNode,
)
from .graph import MGraph, NodeKind, mechanism_name
from .taxonomy import MissingnessClass, classify

__all__ = [
    "Query",
    "parse_query",
    "RecoveryMethod",
    "Justification",
    "RecoveryCertificate",
    "Witness",
    "RecoveryOutcome",
    "Factorization",
    "recoverable_complete_cases",
    "recoverable_available_cases",
    "ordered_factorizations",
    "recover_sequential",
    "recover_mar_joint",
    "recover_joint_rfactor",
    "certify_nonrecoverable",
    "MatrixRecoveryPlan",
    "plan_matrix_recovery",
    "recover",
]

DEFAULT_ORDERING_BUDGET = 10_000
_EXHAUSTIVE_LIMIT = 7


@dataclass(frozen=True)
class Query:
    """A joint (empty ``x``) or conditional target P(y | x)."""

    y: frozenset
    x: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "y", frozenset(self.y))
        object.__setattr__(self, "x", frozenset(self.x))
        if not self.y:
            raise ValueError("query needs at least one target variable")
        if self.y & self.x:
            raise ValueError("query targets and conditions overlap")

    @property
    def is_joint(self) -> bool:
        return not self.x

    def text(self) -> str:
        t = ",".join(sorted(self.y))
        return f"P({t}|{','.join(sorted(self.x))})" if self.x else f"P({t})"


_QUERY_RE = re.compile(r"^\s*P\(\s*([^|()]+?)\s*(?:\|\s*([^|()]+?)\s*)?\)\s*$")


def parse_query(text: str) -> Query:
    m = _QUERY_RE.match(text)
    if not m or "=" in text:
        raise MGraphSyntaxError(f"cannot parse query {text!r}; expected P(A,B) or P(A|B,C)")
    y = [v.strip() for v in m.group(1).split(",") if v.strip()]
    x = [v.strip() for v in (m.group(2) or "").split(",") if v.strip()]
    return Query(frozenset(y), frozenset(x))


class RecoveryMethod(Enum):
    COMPLETE_CASE = "CompleteCase"
    AVAILABLE_CASE = "AvailableCase"
    SEQUENTIAL_FACTORIZATION = "SequentialFactorization"
    MAR_JOINT = "MarJoint"
    R_FACTORIZATION = "RFactorization"
    MATRIX_INVERSION = "MatrixInversion"
    DO_CALCULUS = "DoCalculus"


@dataclass(frozen=True)
class Justification:
    """A replayable d-separation claim, optionally on a mutilated graph."""

    x: frozenset
    y: frozenset
    z: frozenset
    overline: frozenset = frozenset()
    underline: frozenset = frozenset()
    note: str = ""

    def verify(self, g: MGraph) -> bool:
        view = DiGraphView.from_mgraph(g).mutilate(self.overline, self.underline)
        return d_separated(view, SepQuery(self.x, self.y, self.z))

    def text(self) -> str:
        z = f" | {','.join(sorted(self.z))}" if self.z else ""
        tag = ""
        if self.overline or self.underline:
            parts = []
            if self.overline:
                parts.append("overline " + ",".join(sorted(self.overline)))
            if self.underline:
                parts.append("underline " + ",".join(sorted(self.underline)))
            tag = f"  [{'; '.join(parts)}]"
        lhs = ",".join(sorted(self.x))
        rhs = ",".join(sorted(self.y))
        note = f"  ({self.note})" if self.note else ""
        return f"{lhs} _||_ {rhs}{z}{tag}{note}"


@dataclass(frozen=True)
class RecoveryCertificate:
    estimand: Optional[Estimand]
    method: RecoveryMethod
    justifications: Tuple[Justification, ...] = ()
    notes: Tuple[str, ...] = ()

    def verify(self, g: MGraph) -> bool:
        return all(j.verify(g) for j in self.justifications)

    @property
    def estimand_text(self) -> Optional[str]:
        return render(self.estimand) if self.estimand is not None else None


@dataclass(frozen=True)
class Witness:
    """Evidence of non-recoverability for a target variable.

    Either the variable neighbors its own mechanism, or an all-collider path
    through the context connects them.  ``extension`` marks the per-variable
    application to multi-variable targets.
    """

    kind: str  # "edge" | "collider_path"
    variable: str
    path: Tuple[str, ...]
    extension: bool = False

    def text(self) -> str:
        route = " ~ ".join(self.path)
        base = (
            f"{self.variable} neighbors {mechanism_name(self.variable)}"
            if self.kind == "edge"
            else f"all-collider path {route}"
        )
        return base + (" [multi-variable extension]" if self.extension else "")


@dataclass(frozen=True)
class RecoveryOutcome:
    status: str  # "recovered" | "non_recoverable" | "unknown"
    certificate: Optional[RecoveryCertificate] = None
    witness: Optional[Witness] = None
    reason: str = ""
    plan: Optional["MatrixRecoveryPlan"] = None

    @property
    def recovered(self) -> bool:
        return self.status == "recovered"


def _require_standard(g: MGraph) -> None:
    for r in g.mechanism_vars:
        for c in g.children(r):
            if g.kinds[c] not in (NodeKind.PROXY, NodeKind.MECHANISM):
                raise ModelOutsideStandardClass(
                    f"mechanism {r!r} has substantive child {c!r}"
                )


def _check_query_vars(g: MGraph, vars_: Iterable[str]) -> None:
    for v in vars_:
        if g.kind(v) not in (NodeKind.OBSERVED, NodeKind.PARTIAL):
            raise UnknownNode(f"query variable {v!r} is not a substantive variable")


def _mechanisms_of(g: MGraph, vars_: Iterable[str]) -> frozenset:
    return frozenset(mechanism_name(v) for v in vars_ if v in g.partial_vars)


def _sep(g, x, y, z) -> bool:
    return d_separated(g, SepQuery(frozenset(x), frozenset(y), frozenset(z)))


def _guarded_atom(g: MGraph, targets: Sequence[str], conditions: Sequence[str]) -> ProbAtom:
    """P(targets | conditions, R=0 guards for every partial variable involved)."""
    guards = _mechanisms_of(g, tuple(targets) + tuple(conditions))
    cond_items = [(c, None) for c in conditions] + [(r, 0) for r in sorted(guards)]
    return atom([(t, None) for t in targets], cond_items)


# -- complete / available cases --------------------------------------------------------


def recoverable_complete_cases(g: MGraph, y: Iterable[str], x: Iterable[str] = ()) -> Optional[Estimand]:
    """Estimand over fully observed rows, if conditioning licenses it.

    Applicable when the targets are independent of *all* mechanisms given the
    conditioning set; the estimand then conditions on every mechanism being 0.
    """
    y, x = frozenset(y), frozenset(x)
    _check_query_vars(g, y | x)
    r_all = frozenset(g.mechanism_vars)
    view = DiGraphView.from_mgraph(g)
    if not _sep(view, y, r_all, x):
        return None
    conds = [(c, None) for c in sorted(x)] + [(r, 0) for r in sorted(r_all)]
    return substitute_proxies(atom([(t, None) for t in sorted(y)], conds), g)


def recoverable_available_cases(g: MGraph, y: Iterable[str], x: Iterable[str] = ()) -> Optional[Estimand]:
    """Estimand over rows where the query's own variables are observed."""
    y, x = frozenset(y), frozenset(x)
    _check_query_vars(g, y | x)
    r_query = _mechanisms_of(g, y | x)
    view = DiGraphView.from_mgraph(g)
    if not _sep(view, y, r_query, x):
        return None
    conds = [(c, None) for c in sorted(x)] + [(r, 0) for r in sorted(r_query)]
    return substitute_proxies(atom([(t, None) for t in sorted(y)], conds), g)


# -- ordered factorizations -------------------------------------------------------------


@dataclass(frozen=True)
class Factorization:
    """Ordered blocks with their minimal conditioning sets (full x retained)."""

    blocks: Tuple[Tuple[Tuple[str, ...], Tuple[str, ...]], ...]  # (targets, given)
    sum_over: Tuple[str, ...] = ()

    def text(self) -> str:
        parts = []
        for targets, given in self.blocks:
            t = ",".join(targets)
            parts.append(f"P({t}|{','.join(given)})" if given else f"P({t})")
        body = " ".join(parts)
        return f"sum_{{{','.join(self.sum_over)}}} {body}" if self.sum_over else body


def _subsets_lex(items: Tuple[str, ...]) -> Iterator[Tuple[str, ...]]:
    def rec(prefix, rest):
        for i, v in enumerate(rest):
            cur = prefix + (v,)
            yield cur
            yield from rec(cur, rest[i + 1 :])

    yield from rec((), tuple(items))


def _partitions_k(items: Tuple[str, ...], k: int) -> Iterator[Tuple[Tuple[str, ...], ...]]:
    if k == 1:
        yield (tuple(items),)
        return
    for first in _subsets_lex(items):
        if len(first) > len(items) - (k - 1):
            continue
        rest = tuple(v for v in items if v not in first)
        for tail in _partitions_k(rest, k - 1):
            yield (first,) + tail


def _ordered_block_partitions(items: Tuple[str, ...]) -> Iterator[Tuple[Tuple[str, ...], ...]]:
    """All ordered set partitions, coarsest first, then lexicographic."""
    for k in range(1, len(items) + 1):
        yield from _partitions_k(items, k)


def _heuristic_partitions(g: MGraph, items: Tuple[str, ...]) -> Iterator[Tuple[Tuple[str, ...], ...]]:
    yield (tuple(items),)
    topo = [v for v in g.topological_order() if v in items]
    yield tuple((v,) for v in reversed(topo))
    yield tuple((v,) for v in topo)


def ordered_factorizations(
    g: MGraph, y: Iterable[str], x: Iterable[str] = ()
) -> Iterator[Factorization]:
    """Enumerate ordered block factorizations of P(y | x).

    Each block's conditioning set is the full ``x`` plus a minimal subset of
    the later blocks rendering the block independent of the rest of them;
    minimal subsets are found in (size, lex) order, so output is
    deterministic.  Beyond 7 target variables only a coarse heuristic family
    (single block, then topological singleton orders) is enumerated.
    """
    y = tuple(sorted(frozenset(y)))
    x = frozenset(x)
    _check_query_vars(g, frozenset(y) | x)
    view = DiGraphView.from_mgraph(g)
    gen = (
        _ordered_block_partitions(y)
        if len(y) <= _EXHAUSTIVE_LIMIT
        else _heuristic_partitions(g, y)
    )
    for partition in gen:
        blocks = []
        for i, block in enumerate(partition):
            later = tuple(v for b in partition[i + 1 :] for v in b)
            w = None
            for size in range(len(later) + 1):
                for cand in itertools.combinations(sorted(later), size):
                    rest = frozenset(later) - frozenset(cand)
                    if _sep(view, frozenset(block), rest, frozenset(cand) | x):
                        w = frozenset(cand)
                        break
                if w is not None:
                    break
            given = tuple(sorted(w | x))
            blocks.append((tuple(sorted(block)), given))
        yield Factorization(tuple(blocks))


def _admissibility_claims(g: MGraph, fact: Factorization) -> Optional[List[Justification]]:
    """Per-factor mechanism-independence claims, or None if any factor fails."""
    view = DiGraphView.from_mgraph(g)
    claims = []
    for targets, given in fact.blocks:
        r_set = _mechanisms_of(g, tuple(targets) + tuple(given))
        if not r_set:
            continue
        if not _sep(view, frozenset(targets), r_set, frozenset(given)):
            return None
        claims.append(
            Justification(frozenset(targets), r_set, frozenset(given), note="factor admissibility")
        )
    return claims


def _factorization_estimand(g: MGraph, fact: Factorization) -> Estimand:
    factors = [_guarded_atom(g, targets, given) for targets, given in fact.blocks]
    body: Estimand = factors[0] if len(factors) == 1 else Product(tuple(factors))
    if fact.sum_over:
        body = SumOver(fact.sum_over, body)
    return canonicalize(substitute_proxies(body, g))


def recover_sequential(
    g: MGraph,
    query: Query,
    budget: int = DEFAULT_ORDERING_BUDGET,
    all_factorizations: bool = False,
):
    """Search ordered factorizations (and sums of them) for an admissible one.

    Auxiliary variables outside the query may be summed in, smallest sets
    first.  Returns the first admissible factorization's certificate under
    the deterministic enumeration order; with ``all_factorizations`` a list
    of every admissible certificate within budget is returned instead.
    """
    _require_standard(g)
    _check_query_vars(g, query.y | query.x)
    extras = tuple(sorted(g.substantive_vars - query.y - query.x))
    found: List[RecoveryCertificate] = []
    attempts = 0
    for size in range(len(extras) + 1):
        for sum_set in itertools.combinations(extras, size):
            targets = query.y | frozenset(sum_set)
            for fact in ordered_factorizations(g, targets, query.x):
                attempts += 1
                if attempts > budget:
                    if all_factorizations and found:
                        return found
                    return RecoveryOutcome(
                        "unknown",
                        reason=f"ordering search budget of {budget} factorizations exceeded",
                    )
                claims = _admissibility_claims(g, fact)
                if claims is None:
                    continue
                fact = Factorization(fact.blocks, tuple(sum_set))
                cert = RecoveryCertificate(
                    _factorization_estimand(g, fact),
                    RecoveryMethod.SEQUENTIAL_FACTORIZATION,
                    tuple(claims),
                    notes=(f"factorization: {fact.text()}",),
                )
                if not all_factorizations:
                    return RecoveryOutcome("recovered", certificate=cert)
                found.append(cert)
    if all_factorizations:
        return found
    return RecoveryOutcome("unknown", reason="no admissible ordered factorization found")


# -- MAR joint --------------------------------------------------------------------------


def recover_mar_joint(g: MGraph, include_alternates: bool = False):
    """Two-factor joint decomposition licensed by (v-)MAR.

    MCAR graphs additionally admit the complete-case form, returned as an
    alternate.  Raises :class:`NotMar` on MNAR graphs.
    """
    _require_standard(g)
    cls = classify(g).missingness_class
    if cls is MissingnessClass.MNAR:
        raise NotMar("the MAR joint decomposition needs a MAR or MCAR graph")
    v_o = sorted(g.observed_vars)
    v_m = sorted(g.partial_vars)
    if not v_m:
        e = atom([(v, None) for v in v_o])
        return [e] if include_alternates else e
    r_all = sorted(g.mechanism_vars)
    main_factor = atom(
        [(v, None) for v in v_m],
        [(c, None) for c in v_o] + [(r, 0) for r in r_all],
    )
    if v_o:
        main = Product((main_factor, atom([(v, None) for v in v_o])))
    else:
        main = main_factor
    main = canonicalize(substitute_proxies(main, g))
    if not include_alternates:
        return main
    out = [main]
    if cls is MissingnessClass.MCAR:
        complete = atom(
            [(v, None) for v in v_m + v_o],
            [(r, 0) for r in r_all],
        )
        out.append(canonicalize(substitute_proxies(complete, g)))
    return out


# -- joint recovery by mechanism factorization -------------------------------------------


def _bidirected_neighbors(g: MGraph, v: str) -> frozenset:
    out = set()
    for a, b in g.bidirected:
        if a == v:
            out.add(b)
        elif b == v:
            out.add(a)
    return frozenset(out)


def _collider_path_witness(
    g: MGraph, x: str, r: str, allowed: frozenset
) -> Optional[Tuple[str, ...]]:
    """Path x ~ c1 ~ ... ~ r whose interior nodes are all colliders in ``allowed``.

    Interior colliders force arrowheads at both ends of every interior edge,
    so the interior is a chain of bidirected edges ending at ``r``, entered
    from ``x`` by a directed or bidirected edge.  Bidirected edges count as
    primitive double-arrowhead arcs here.
    """
    prev: Dict[str, Optional[str]] = {r: None}
    frontier = [r]
    while frontier:
        cur = frontier.pop()
        for nb in sorted(_bidirected_neighbors(g, cur)):
            if nb in allowed and nb not in prev:
                prev[nb] = cur
                frontier.append(nb)
    for c in sorted(prev):
        if c == r:
            continue
        if (x, c) in g.directed or c in _bidirected_neighbors(g, x):
            path = [x]
            node: Optional[str] = c
            while node is not None:
                path.append(node)
                node = prev[node]
            return tuple(path)
    return None


def _observable_blanket(g: MGraph, r: str) -> Optional[frozenset]:
    """A Markov blanket of ``r`` within the substantive variables."""
    blanket = markov_blanket(g, r)
    observable = g.substantive_vars
    view = DiGraphView.from_mgraph(g)
    rest_all = (g.substantive_vars | g.mechanism_vars | g.latent_vars) - {r}
    if blanket <= observable:
        if _sep(view, {r}, rest_all - blanket, blanket):
            return blanket
    pool = sorted(observable)
    for size in range(len(pool) + 1):
        for cand in itertools.combinations(pool, size):
            z = frozenset(cand)
            if _sep(view, {r}, rest_all - z, z):
                return z
    return None


def recover_joint_rfactor(g: MGraph) -> RecoveryOutcome:
    """Recover the full joint by dividing out per-mechanism factors.

    Requires no edges between mechanism variables.  The joint is recoverable
    exactly when no partially observed variable neighbors its own mechanism
    or reaches it through an all-collider substantive path; the estimand
    divides the fully observed stratum by one conditional factor per
    mechanism over its Markov blanket.
    """
    _require_standard(g)
    mech = g.mechanism_vars
    if not g.partial_vars:
        raise NoPartialVariables("joint recovery over mechanisms needs partial variables")
    for a, b in g.directed:
        if a in mech and b in mech:
            raise REdgesPresent(f"edge {a} -> {b} between mechanisms")
    for a, b in g.bidirected:
        if a in mech and b in mech:
            raise REdgesPresent(f"bidirected edge {a} <-> {b} between mechanisms")

    substantive = g.substantive_vars
    for x in sorted(g.partial_vars):
        r = mechanism_name(x)
        if g.adjacent(x, r):
            return RecoveryOutcome(
                "non_recoverable", witness=Witness("edge", x, (x, r))
            )
        path = _collider_path_witness(g, x, r, substantive - {x})
        if path is not None:
            return RecoveryOutcome(
                "non_recoverable", witness=Witness("collider_path", x, path)
            )

    v_all = sorted(substantive)
    r_all = sorted(mech)
    numerator = Product(
        (
            atom([(r, 0) for r in r_all]),
            atom([(v, None) for v in v_all], [(r, 0) for r in r_all]),
        )
    )
    den_factors = []
    claims = []
    view = DiGraphView.from_mgraph(g)
    for x in sorted(g.partial_vars):
        r = mechanism_name(x)
        blanket = _observable_blanket(g, r)
        if blanket is None:
            return RecoveryOutcome(
                "unknown",
                reason=f"no Markov blanket of {r} within the substantive variables",
            )
        guards = sorted(_mechanisms_of(g, blanket))
        den_factors.append(
            atom([(r, 0)], [(b, None) for b in sorted(blanket)] + [(q, 0) for q in guards])
        )
        rest = (substantive | mech | g.latent_vars) - {r} - blanket
        claims.append(
            Justification(frozenset({r}), frozenset(rest), blanket, note="mechanism blanket")
        )
    estimand = Quotient(numerator, Product(tuple(den_factors)))
    cert = RecoveryCertificate(
        canonicalize(substitute_proxies(estimand, g)),
        RecoveryMethod.R_FACTORIZATION,
        tuple(claims),
    )
    return RecoveryOutcome("recovered", certificate=cert)


# -- non-recoverability -------------------------------------------------------------------


def certify_nonrecoverable(g: MGraph, y: Iterable[str], x: Iterable[str] = ()) -> Optional[Witness]:
    """Witness that P(y | x) admits no consistent estimator, if one exists.

    Checks, for each partially observed target, whether it neighbors its own
    mechanism or reaches it by an all-collider path through the conditioning
    context.  Multi-variable targets are checked per variable with the rest
    of the query as context; such witnesses are flagged as the documented
    extension of the single-variable criterion.
    """
    y, x = frozenset(y), frozenset(x)
    _check_query_vars(g, y | x)
    extension = len(y) > 1
    for v in sorted(y):
        if v not in g.partial_vars:
            continue
        r = mechanism_name(v)
        context = (y - {v}) | x
        if g.adjacent(v, r):
            return Witness("edge", v, (v, r), extension=extension)
        path = _collider_path_witness(g, v, r, context)
        if path is not None:
            return Witness("collider_path", v, path, extension=extension)
    return None


# -- matrix recovery -----------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixRecoveryPlan:
    """Recipe for recovering a self-masked variable via a driver variable.

    ``conditional`` recovers P(driver | target) from observed rows; the
    target's marginal then solves the linear system
    P(driver) = sum_x P(driver | target=x) P(target=x), assuming the
    conditional matrix is invertible.  ``include_joint`` requests the joint
    P(driver, target) = P(driver | target) P(target) afterwards.
    """

    target: str
    driver: str
    conditional: Estimand
    driver_marginal: Estimand
    justifications: Tuple[Justification, ...]
    include_joint: bool
    notes: Tuple[str, ...] = ()

    def text(self) -> str:
        steps = [
            f"1. estimate M[d, t] = {render(self.conditional)}",
            f"2. estimate b[d] = {render(self.driver_marginal)}",
            f"3. solve M pi = b for pi = P({self.target}) (assumes M invertible)",
        ]
        if self.include_joint:
            steps.append(f"4. joint P({self.driver},{self.target}) = M[d, t] * pi[t]")
        return "\n".join(steps)


def plan_matrix_recovery(g: MGraph, query: Query) -> MatrixRecoveryPlan:
    """Match the self-masked-variable-with-driver pattern or raise.

    The pattern: the query is P(X) or P(X, Y) with X partially observed and
    self-masked, and some fully observed parent Y of X satisfies
    Y independent of R_X given X.
    """
    _require_standard(g)
    if not query.is_joint or len(query.y) > 2:
        raise PatternNotApplicable("matrix recovery targets P(X) or P(X,Y) only")
    _check_query_vars(g, query.y)
    masked = sorted(
        v
        for v in query.y
        if v in g.partial_vars and (v, mechanism_name(v)) in g.directed
    )
    if len(masked) != 1:
        raise PatternNotApplicable("need exactly one self-masked variable in the query")
    target = masked[0]
    others = query.y - {target}
    view = DiGraphView.from_mgraph(g)

    def driver_ok(cand: str) -> bool:
        return (
            cand in g.observed_vars
            and (cand, target) in g.directed
            and _sep(view, {cand}, {mechanism_name(target)}, {target})
        )

    if others:
        driver = next(iter(others))
        if not driver_ok(driver):
            raise PatternNotApplicable(
                f"{driver!r} is not a fully observed driver of {target!r}"
            )
    else:
        candidates = [c for c in sorted(g.observed_vars) if driver_ok(c)]
        if not candidates:
            raise PatternNotApplicable(f"no fully observed driver for {target!r}")
        driver = candidates[0]

    r = mechanism_name(target)
    conditional = substitute_proxies(atom([(driver, None)], [(target, None), (r, 0)]), g)
    marginal = atom([(driver, None)])
    just = Justification(frozenset({driver}), frozenset({r}), frozenset({target}), note="driver independence")
    return MatrixRecoveryPlan(
        target=target,
        driver=driver,
        conditional=conditional,
        driver_marginal=marginal,
        justifications=(just,),
        include_joint=bool(others),
        notes=(
            "consistency holds only where the conditional matrix is invertible; "
            "this is an extra, non-graphical assumption",
        ),
    )


# -- dispatcher ------------------------------------------------------------------------------


def recover(
    g: MGraph,
    query: Query,
    budget: int = DEFAULT_ORDERING_BUDGET,
) -> RecoveryOutcome:
    """Try every implemented statistical criterion on P(y | x), in order."""
    _require_standard(g)
    _check_query_vars(g, query.y | query.x)

    witness = certify_nonrecoverable(g, query.y, query.x)
    if witness is not None:
        try:
            plan = plan_matrix_recovery(g, query)
        except PatternNotApplicable:
            return RecoveryOutcome("non_recoverable", witness=witness)
        cert = RecoveryCertificate(
            None,
            RecoveryMethod.MATRIX_INVERSION,
            plan.justifications,
            notes=plan.notes + (plan.text(),),
        )
        return RecoveryOutcome("recovered", certificate=cert, plan=plan, witness=witness)

    complete = recoverable_complete_cases(g, query.y, query.x)
    if complete is not None:
        r_all = frozenset(g.mechanism_vars)
        just = Justification(query.y, r_all, query.x, note="complete-case conditioning") if r_all else None
        return RecoveryOutcome(
            "recovered",
            certificate=RecoveryCertificate(
                complete, RecoveryMethod.COMPLETE_CASE, (just,) if just else ()
            ),
        )

    available = recoverable_available_cases(g, query.y, query.x)
    if available is not None:
        r_q = _mechanisms_of(g, query.y | query.x)
        just = Justification(query.y, r_q, query.x, note="available-case conditioning") if r_q else None
        return RecoveryOutcome(
            "recovered",
            certificate=RecoveryCertificate(
                available, RecoveryMethod.AVAILABLE_CASE, (just,) if just else ()
            ),
        )

    seq = recover_sequential(g, query, budget=budget)
    if seq.recovered:
        return seq
    pending = seq.reason

    if query.is_joint and query.y == g.substantive_vars:
        try:
            alternates = recover_mar_joint(g, include_alternates=True)
            v_o = frozenset(g.observed_vars)
            just = Justification(
                frozenset(g.partial_vars) | frozenset(g.latent_vars),
                frozenset(g.mechanism_vars),
                v_o,
                note="variable-level MAR",
            )
            return RecoveryOutcome(
                "recovered",
                certificate=RecoveryCertificate(
                    alternates[0],
                    RecoveryMethod.MAR_JOINT,
                    (just,),
                    notes=tuple(f"alternate: {render(a)}" for a in alternates[1:]),
                ),
            )
        except NotMar:
            pass
        try:
            rf = recover_joint_rfactor(g)
            if rf.status != "unknown":
                return rf
            pending = pending + "; " + rf.reason
        except (REdgesPresent, NoPartialVariables) as exc:
            pending = pending + f"; mechanism factorization inapplicable ({exc})"

    return RecoveryOutcome("unknown", reason=pending)
