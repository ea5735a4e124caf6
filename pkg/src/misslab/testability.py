"""Testable implications of a missingness model.

Not all that looks testable is testable: a claim of the form
``X _||_ R_X | Z, W, R_Z`` (partial X and Z, observed W) is satisfied by
construction in any distribution recovered under it, so data can never
refute it.  The remaining machinery enumerates missing-edge independencies,
keeps those whose mechanisms can join the separating set without spoiling
separation (three syntactic forms), compiles them to proxy-level equations,
and builds the generic test suites for the MAR and MCAR assumptions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import Estimand, Product, atom, canonicalize, render
from .dsep import DiGraphView, SepQuery, d_separated, find_minimal_separator
from .errors import NoPartialVariables
from .estimation import Dataset, ObservedDistribution, ProbTable, TestSpec, TestResult, run_test
from .graph import MGraph, mechanism_name, proxy_name

__all__ = [
    "Claim",
    "TestEquation",
    "ImplicationReport",
    "is_untestable",
    "thm_form",
    "testable_implications",
    "Suite",
    "mar_test_suite",
    "mcar_test_suite",
    "SuiteResult",
    "run_suite",
    "untestable_reconstruction",
]


@dataclass(frozen=True)
class Claim:
    """An asserted conditional independence ``x _||_ y | z`` over graph nodes."""

    x: frozenset
    y: frozenset
    z: frozenset
    provenance: str = ""
    partials: frozenset = frozenset()  # which substantive members are partially observed

    def __post_init__(self):
        object.__setattr__(self, "x", frozenset(self.x))
        object.__setattr__(self, "y", frozenset(self.y))
        object.__setattr__(self, "z", frozenset(self.z))
        object.__setattr__(self, "partials", frozenset(self.partials))

    def text(self) -> str:
        lhs = ",".join(sorted(self.x))
        rhs = ",".join(sorted(self.y))
        cond = f" | {','.join(sorted(self.z))}" if self.z else ""
        return f"{lhs} _||_ {rhs}{cond}"

    def holds_in(self, g: MGraph) -> bool:
        return d_separated(g, SepQuery(self.x, self.y, self.z))

    def _compiled(self, name: str) -> str:
        return proxy_name(name) if name in self.partials else name

    def to_test_spec(self) -> TestSpec:
        mech_z = sorted(n for n in self.z if n.startswith("R_"))
        sub_z = sorted(n for n in self.z if not n.startswith("R_"))
        return TestSpec(
            x_vars=tuple(self._compiled(n) for n in sorted(self.x)),
            y_vars=tuple(self._compiled(n) for n in sorted(self.y)),
            strata=tuple(self._compiled(n) for n in sub_z),
            fixed=tuple((r, 0) for r in mech_z),
        )


@dataclass(frozen=True)
class TestEquation:
    """Two observed-data estimands whose equality operationalizes a claim."""

    __test__ = False

    left: Estimand
    right: Estimand
    claim: Claim
    form: Optional[int] = None
    hint: str = ""

    def text(self) -> str:
        return f"{render(self.left)} = {render(self.right)}"

    def to_test_spec(self) -> TestSpec:
        return self.claim.to_test_spec()

    def gap_on(self, p: ObservedDistribution) -> float:
        """Largest cellwise violation of the equation on a distribution.

        The sides may differ in axes (the right side typically carries the
        extra variable whose irrelevance is being asserted); the difference
        broadcasts over the union.
        """
        from .estimation import evaluate
        import numpy as np

        diff = evaluate(self.left, p) - evaluate(self.right, p)
        return float(np.abs(diff.values).max())

    def holds_on(self, p: ObservedDistribution, tol: float = 1e-10) -> bool:
        return self.gap_on(p) <= tol


def _is_mech(n: str) -> bool:
    return n.startswith("R_")


def is_untestable(g: MGraph, c: Claim) -> bool:
    """Match the schema of claims that no recovered distribution can refute.

    One side is a single partially observed variable, the other is its own
    mechanism, and the conditioning set consists of substantive variables
    plus exactly the mechanisms of its partially observed members (the
    degenerate empty conditioning included).
    """
    sides = [c.x, c.y]
    for a_side, b_side in (sides, sides[::-1]):
        if len(a_side) != 1 or len(b_side) != 1:
            continue
        (v,) = a_side
        (r,) = b_side
        if v not in g.partial_vars or r != mechanism_name(v):
            continue
        cond_sub = {n for n in c.z if not _is_mech(n)}
        cond_mech = {n for n in c.z if _is_mech(n)}
        if not cond_sub <= g.substantive_vars:
            continue
        needed = {mechanism_name(u) for u in cond_sub & g.partial_vars}
        if cond_mech == needed:
            return True
    return False


def thm_form(g: MGraph, c: Claim) -> Optional[int]:
    """Syntactic form of a testable claim (1, 2 or 3), or None.

    Form 1: substantive _||_ substantive given substantive plus all relevant
    mechanisms; form 2: substantive _||_ mechanism; form 3: mechanism _||_
    mechanism.  Mechanisms of fully observed variables are never required.
    """
    if len(c.x) != 1 or len(c.y) != 1:
        return None
    (a,) = tuple(c.x)
    (b,) = tuple(c.y)
    cond_sub = {n for n in c.z if not _is_mech(n)}
    cond_mech = {n for n in c.z if _is_mech(n)}
    if not cond_sub <= g.substantive_vars:
        return None
    required = {mechanism_name(u) for u in cond_sub & g.partial_vars}

    def substantive(n):
        return n in g.substantive_vars

    if substantive(a) and substantive(b):
        for v in (a, b):
            if v in g.partial_vars:
                required.add(mechanism_name(v))
        return 1 if cond_mech == required else None
    if substantive(a) != substantive(b):
        sub, mech = (a, b) if substantive(a) else (b, a)
        if mech == mechanism_name(sub):
            return None
        if sub in g.partial_vars:
            required.add(mechanism_name(sub))
        if mech in required or mechanism_name(mech[len("R_"):]) != mech:
            return None
        return 2 if cond_mech == required else None
    if _is_mech(a) and _is_mech(b):
        if a in required or b in required:
            return None
        return 3 if cond_mech == required else None
    return None


def _claim_equation(g: MGraph, c: Claim, form: int) -> TestEquation:
    """Proxy-level conditional-equality operationalization of a claim."""

    def px(n):
        return proxy_name(n) if n in g.partial_vars else n

    cond_sub = sorted(n for n in c.z if not _is_mech(n))
    guards = sorted(n for n in c.z if _is_mech(n))
    base_conds = [(px(n), None) for n in cond_sub] + [(r, 0) for r in guards]

    (a,) = tuple(c.x)
    (b,) = tuple(c.y)
    if form in (1, 2):
        if not (a in g.substantive_vars):
            a, b = b, a
    if form in (1, 3) and b < a:
        a, b = b, a
    target = px(a) if form in (1, 2) else a
    other = px(b) if form == 1 else b
    left = atom([(target, None)], base_conds)
    right = atom([(target, None)], base_conds + [(other, None)])
    hint = f"consider adding an edge between {a} and {b}"
    return TestEquation(canonicalize(left), canonicalize(right), c, form, hint)


@dataclass(frozen=True)
class ImplicationReport:
    testable: Tuple[Tuple[Claim, TestEquation], ...]
    untestable: Tuple[Claim, ...]
    unknown: Tuple[Claim, ...]


def testable_implications(g: MGraph) -> ImplicationReport:
    """Missing-edge independencies, split by testability.

    For every non-adjacent pair of substantive/mechanism nodes with a
    separating set among the substantive variables, the mechanisms of the
    partially observed variables involved are added to the separating set
    when that does not spoil the separation; claims matching one of the
    three syntactic forms are compiled to proxy-level test equations.
    Self-mechanism claims are reported untestable; the remainder (the
    criterion is sufficient, not complete) are reported with unknown status.
    """
    view = DiGraphView.from_mgraph(g)
    pool = sorted(g.substantive_vars | g.mechanism_vars)
    testable: List[Tuple[Claim, TestEquation]] = []
    untestable: List[Claim] = []
    unknown: List[Claim] = []
    seen = set()
    for a, b in itertools.combinations(pool, 2):
        if g.adjacent(a, b):
            continue
        if _is_mech(a) and not _is_mech(b):
            a, b = b, a
        z0 = find_minimal_separator(g, {a}, {b}, candidates=g.substantive_vars - {a, b})
        if z0 is None:
            continue
        needed = {
            mechanism_name(v)
            for v in ({a, b} | z0) & g.partial_vars
            if mechanism_name(v) not in {a, b}
        }
        z = z0
        if needed - z0:
            augmented = z0 | needed
            if d_separated(view, SepQuery(frozenset({a}), frozenset({b}), augmented)):
                z = augmented
        claim = Claim(
            frozenset({a}),
            frozenset({b}),
            z,
            provenance=f"missing edge {a} -- {b}",
            partials=frozenset(({a, b} | z) & g.partial_vars),
        )
        key = (frozenset({a, b}), z)
        if key in seen:
            continue
        seen.add(key)
        if is_untestable(g, claim):
            untestable.append(claim)
            continue
        form = thm_form(g, claim)
        if form is None:
            unknown.append(claim)
            continue
        testable.append((claim, _claim_equation(g, claim, form)))
    return ImplicationReport(tuple(testable), tuple(untestable), tuple(unknown))


# -- generic MAR / MCAR suites ----------------------------------------------------------


@dataclass(frozen=True)
class Suite:
    name: str
    tests: Tuple[Tuple[Claim, TestEquation], ...]
    notice: Optional[str] = None


def _pair_test(a: str, b: str, v_o: Sequence[str], partials: frozenset) -> Tuple[Claim, TestEquation]:
    """The A _||_ R_B | V_o, R_A test in product form."""
    r_a = mechanism_name(a)
    r_b = mechanism_name(b)
    claim = Claim(
        frozenset({a}),
        frozenset({r_b}),
        frozenset(v_o) | {r_a},
        provenance="variable-level MAR",
        partials=partials,
    )
    conds = [(c, None) for c in sorted(v_o)] + [(r_a, 0)]
    left = atom([(proxy_name(a), None), (r_b, None)], conds)
    right = Product(
        (
            atom([(proxy_name(a), None)], conds),
            atom([(r_b, None)], conds),
        )
    )
    hint = f"consider adding an edge between {a} and {r_b}"
    return claim, TestEquation(canonicalize(left), canonicalize(right), claim, 2, hint)


def mar_test_suite(v_m: Iterable[str], v_o: Iterable[str]) -> Suite:
    """All ordered-pair mechanism tests implied by variable-level MAR.

    With a single partially observed variable the MAR condition has no
    testable implication; the suite is then empty with a notice.
    """
    v_m = sorted(set(v_m))
    v_o = sorted(set(v_o))
    if not v_m:
        raise NoPartialVariables("the MAR condition concerns partially observed variables")
    if len(v_m) == 1:
        return Suite(
            "mar",
            (),
            notice="MAR is untestable with a single partially observed variable",
        )
    partials = frozenset(v_m)
    tests = [
        _pair_test(a, b, v_o, partials)
        for a, b in itertools.permutations(v_m, 2)
    ]
    return Suite("mar", tuple(tests))


def mcar_test_suite(v_m: Iterable[str], v_o: Iterable[str]) -> Suite:
    """MAR-suite tests plus marginal independence of mechanisms from V_o."""
    v_m = sorted(set(v_m))
    v_o = sorted(set(v_o))
    if not v_m:
        raise NoPartialVariables("the MCAR condition concerns partially observed variables")
    if len(v_m) + len(v_o) < 2:
        return Suite(
            "mcar",
            (),
            notice="MCAR is untestable with a single variable in total",
        )
    tests: List[Tuple[Claim, TestEquation]] = []
    if len(v_m) > 1:
        tests.extend(mar_test_suite(v_m, v_o).tests)
    partials = frozenset(v_m)
    for c in v_o:
        for a in v_m:
            r_a = mechanism_name(a)
            claim = Claim(
                frozenset({c}),
                frozenset({r_a}),
                frozenset(),
                provenance="MCAR",
                partials=partials,
            )
            left = atom([(c, None), (r_a, None)])
            right = Product((atom([(c, None)]), atom([(r_a, None)])))
            hint = f"consider adding an edge between {c} and {r_a}"
            tests.append(
                (claim, TestEquation(canonicalize(left), canonicalize(right), claim, 2, hint))
            )
    return Suite("mcar", tuple(tests))


@dataclass(frozen=True)
class SuiteResult:
    suite: Suite
    results: Tuple[Tuple[Claim, Optional[TestResult]], ...]
    alpha: float
    per_test_alpha: float
    rejected: bool
    hints: Tuple[str, ...]


def run_suite(
    suite: Suite,
    dataset: Dataset,
    alpha: float = 0.05,
    min_expected: float = 5.0,
) -> SuiteResult:
    """Run every suite test; family-wise level held at ``alpha`` via Sidak."""
    from .errors import InsufficientData

    k = len(suite.tests)
    per_test = 1.0 - (1.0 - alpha) ** (1.0 / k) if k else alpha
    results = []
    hints = []
    rejected = False
    for claim, eq in suite.tests:
        try:
            res = run_test(eq, dataset, alpha=per_test, min_expected=min_expected)
        except InsufficientData:
            results.append((claim, None))
            continue
        results.append((claim, res))
        if res.reject:
            rejected = True
            hints.append(eq.hint)
    return SuiteResult(suite, tuple(results), alpha, per_test, rejected, tuple(hints))


# -- untestability demonstration -----------------------------------------------------------


def untestable_reconstruction(p: ObservedDistribution, var: str) -> ProbTable:
    """Distribution over (var, R_var) recovered under ``var _||_ R_var``.

    Built as P(var* | R=0) * P(R); the claim holds in the output by
    construction for any input observed-data distribution, which is exactly
    why data cannot refute it.
    """
    s = proxy_name(var)
    r = mechanism_name(var)
    cond = p.table.marginal([s, r]).restrict(s, p.substantive_domain(s)).fix({r: 0})
    cond = ProbTable([s], cond.domains, cond.values / cond.values.sum()).rename({s: var})
    r_marg = p.table.marginal([r])
    return (cond * r_marg).transpose_to((var, r))
