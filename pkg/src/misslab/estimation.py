"""Evaluation of estimands and tests against exact or empirical tables.

The workhorse is :class:`ProbTable`, a named-axis probability array.  An
:class:`ObservedDistribution` is a ProbTable over the observed-data
variables (fully observed columns, proxies, mechanisms) plus provenance;
it is built either by exact enumeration (see :mod:`misslab.simulate`) or
from a dataset by relative frequencies.

Estimand evaluation is strict about positivity: conditioning on an event
with zero mass raises :class:`ZeroProbabilityConditioning` naming the event,
never imputes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

from .algebra import Difference, Estimand, ProbAtom, Product, Quotient, SumOver, canonicalize
from .errors import (
    DomainMismatch,
    EmptyDataset,
    InfeasibleSolution,
    InsufficientData,
    PatternNotApplicable,
    SingularSystem,
    UnboundVariable,
    ZeroProbabilityConditioning,
)
from .graph import MGraph, MISSING_MARKER, mechanism_name, proxy_name

__all__ = [
    "ProbTable",
    "Dataset",
    "ObservedDistribution",
    "empirical_distribution",
    "evaluate",
    "solve_matrix_recovery",
    "TestSpec",
    "TestResult",
    "run_test",
]

CONDITION_NUMBER_LIMIT = 1e8
CLAMP_TOL_EXACT = 1e-9
CLAMP_TOL_EMPIRICAL = 1e-3


# -- named-axis probability tables ----------------------------------------------

class ProbTable:
    """A nonnegative array with named, finite-domain axes."""

    __slots__ = ("axes", "domains", "values")

    def __init__(self, axes: Sequence[str], domains: Mapping[str, tuple], values: np.ndarray):
        self.axes = tuple(axes)
        self.domains = {a: tuple(domains[a]) for a in self.axes}
        values = np.asarray(values, dtype=float)
        expected = tuple(len(self.domains[a]) for a in self.axes)
        if values.shape != expected:
            raise ValueError(f"shape {values.shape} does not match domains {expected}")
        self.values = values

    def copy(self) -> "ProbTable":
        return ProbTable(self.axes, self.domains, self.values.copy())

    def total(self) -> float:
        return float(self.values.sum())

    def index_of(self, axis: str, value) -> int:
        try:
            return self.domains[axis].index(value)
        except ValueError:
            raise DomainMismatch(f"value {value!r} not in domain of {axis!r}")

    def marginal(self, keep: Sequence[str]) -> "ProbTable":
        keep = tuple(keep)
        for a in keep:
            if a not in self.axes:
                raise UnboundVariable(f"variable {a!r} not in table axes {self.axes}")
        drop = tuple(i for i, a in enumerate(self.axes) if a not in keep)
        vals = self.values.sum(axis=drop) if drop else self.values
        remaining = [a for a in self.axes if a in keep]
        out = ProbTable(remaining, self.domains, vals)
        return out.transpose_to(keep)

    def transpose_to(self, order: Sequence[str]) -> "ProbTable":
        order = tuple(order)
        if order == self.axes:
            return self
        perm = [self.axes.index(a) for a in order]
        return ProbTable(order, self.domains, np.transpose(self.values, perm))

    def fix(self, assignment: Mapping[str, object]) -> "ProbTable":
        """Slice the listed axes at fixed values, dropping them."""
        idx = []
        new_axes = []
        for a in self.axes:
            if a in assignment:
                idx.append(self.index_of(a, assignment[a]))
            else:
                idx.append(slice(None))
                new_axes.append(a)
        return ProbTable(new_axes, self.domains, self.values[tuple(idx)])

    def restrict(self, axis: str, values: Sequence) -> "ProbTable":
        """Keep only the listed values along one axis."""
        pos = [self.index_of(axis, v) for v in values]
        take = np.take(self.values, pos, axis=self.axes.index(axis))
        domains = dict(self.domains)
        domains[axis] = tuple(values)
        return ProbTable(self.axes, domains, take)

    def rename(self, mapping: Mapping[str, str]) -> "ProbTable":
        axes = tuple(mapping.get(a, a) for a in self.axes)
        domains = {mapping.get(a, a): d for a, d in self.domains.items()}
        return ProbTable(axes, domains, self.values)

    def sum_out(self, names: Iterable[str]) -> "ProbTable":
        keep = [a for a in self.axes if a not in set(names)]
        return self.marginal(keep)

    def _align(self, other: "ProbTable"):
        union = list(self.axes) + [a for a in other.axes if a not in self.axes]
        for a in self.axes:
            if a in other.axes and self.domains[a] != other.domains[a]:
                raise DomainMismatch(f"domain mismatch on {a!r}")
        domains = dict(self.domains)
        domains.update(other.domains)

        def expand(t: ProbTable):
            shape = [len(domains[a]) if a in t.axes else 1 for a in union]
            order = [a for a in union if a in t.axes]
            vals = t.transpose_to(order).values.reshape(shape)
            return vals

        return union, domains, expand(self), expand(other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return ProbTable(self.axes, self.domains, self.values * other)
        union, domains, a, b = self._align(other)
        return ProbTable(union, domains, a * b)

    def __truediv__(self, other):
        union, domains, a, b = self._align(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a / b
        if np.any(np.broadcast_to(b, out.shape) == 0):
            raise ZeroProbabilityConditioning("division by a zero-probability cell")
        return ProbTable(union, domains, out)

    def __sub__(self, other):
        union, domains, a, b = self._align(other)
        return ProbTable(union, domains, a - b)

    def _match(self, other: "ProbTable", rename: Optional[Mapping[str, str]]) -> "ProbTable":
        o = other.rename(rename) if rename else other
        if set(o.axes) != set(self.axes):
            raise UnboundVariable(f"axes differ: {self.axes} vs {o.axes}")
        o = o.transpose_to(self.axes)
        for a in self.axes:
            if o.domains[a] != self.domains[a]:
                o = o.restrict(a, self.domains[a])
        return o

    def max_abs_diff(self, other: "ProbTable", rename: Optional[Mapping[str, str]] = None) -> float:
        o = self._match(other, rename)
        return float(np.max(np.abs(self.values - o.values))) if self.values.size else 0.0

    def l1_diff(self, other: "ProbTable", rename: Optional[Mapping[str, str]] = None) -> float:
        o = self._match(other, rename)
        return float(np.sum(np.abs(self.values - o.values)))

    def cells(self):
        """Iterate ``(assignment dict, probability)`` over all cells."""
        if not self.axes:
            yield {}, float(self.values)
            return
        for idx in np.ndindex(*self.values.shape):
            yield (
                {a: self.domains[a][i] for a, i in zip(self.axes, idx)},
                float(self.values[idx]),
            )

    def get(self, assignment: Mapping[str, object]) -> float:
        idx = tuple(self.index_of(a, assignment[a]) for a in self.axes)
        return float(self.values[idx])

    def __repr__(self):
        return f"ProbTable(axes={self.axes}, total={self.total():.6f})"


# -- datasets --------------------------------------------------------------------

@dataclass
class Dataset:
    """A discrete dataset; partially observed columns use the missing marker."""

    columns: Tuple[str, ...]
    rows: List[tuple]
    marker: str = MISSING_MARKER

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            if len(r) != len(self.columns):
                raise DomainMismatch("row width does not match header")

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        try:
            i = self.columns.index(name)
        except ValueError:
            raise UnboundVariable(f"no column {name!r}")
        return [r[i] for r in self.rows]

    @classmethod
    def from_csv(cls, path, marker: str = MISSING_MARKER) -> "Dataset":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise EmptyDataset(f"{path}: no header row")
            rows = [tuple(r) for r in reader]
        if not rows:
            raise EmptyDataset(f"{path}: no data rows")
        return cls(tuple(header), rows, marker)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows([str(v) for v in row] for row in self.rows)


@dataclass
class ObservedDistribution:
    """Probability table over (V*, V_o, R) with provenance.

    ``table`` axes are the fully observed variables, the proxies (domain
    extended by the missing marker) and the mechanisms (domain ``(0, 1)``).
    ``source`` is ``"exact"`` or ``("empirical", n)``.
    """

    table: ProbTable
    observed: Tuple[str, ...]
    proxies: Tuple[str, ...]
    mechanisms: Tuple[str, ...]
    source: object = "exact"
    marker: str = MISSING_MARKER

    def __post_init__(self):
        total = self.table.total()
        if not math.isclose(total, 1.0, abs_tol=1e-12):
            raise DomainMismatch(f"observed distribution sums to {total!r}, not 1")
        if np.any(self.table.values < 0):
            raise DomainMismatch("negative probability cell")

    @property
    def n(self) -> Optional[int]:
        return self.source[1] if isinstance(self.source, tuple) else None

    def substantive_domain(self, proxy: str) -> tuple:
        """Domain of the variable behind a proxy axis, marker excluded."""
        return tuple(v for v in self.table.domains[proxy] if v != self.marker)

    def is_strictly_positive(self, tol: float = 0.0) -> bool:
        """Positive everywhere except the structural masking zeros."""
        for assignment, p in self.table.cells():
            structural = False
            for s in self.proxies:
                r = mechanism_name(s[:-1])
                if (assignment[s] == self.marker) != (assignment[r] == 1):
                    structural = True
                    break
            if not structural and p <= tol:
                return False
        return True


def empirical_distribution(
    dataset: Dataset,
    g: MGraph,
    domains: Optional[Mapping[str, Sequence]] = None,
    marker: Optional[str] = None,
) -> ObservedDistribution:
    """Relative-frequency observed-data distribution of a dataset.

    Columns must be exactly the substantive variables of ``g``; mechanism
    columns are derived from the missing marker, never stored.  Domains are
    inferred from the data (sorted distinct non-marker values) unless given.
    """
    if dataset.n == 0:
        raise EmptyDataset("empty dataset")
    marker = dataset.marker if marker is None else marker
    cols = set(dataset.columns)
    want = set(g.substantive_vars)
    if cols != want:
        raise DomainMismatch(f"columns {sorted(cols)} != substantive variables {sorted(want)}")

    doms: Dict[str, tuple] = {}
    for v in sorted(want):
        col = dataset.column(v)
        if v in g.observed_vars and any(x == marker for x in col):
            raise DomainMismatch(f"missing marker in fully observed column {v!r}")
        if domains and v in domains:
            doms[v] = tuple(domains[v])
        else:
            distinct = sorted({x for x in col if x != marker}, key=lambda x: (str(type(x)), x))
            if not distinct:
                raise DomainMismatch(f"column {v!r} has no observed values to infer a domain")
            doms[v] = tuple(distinct)

    observed = tuple(sorted(g.observed_vars))
    partials = tuple(sorted(g.partial_vars))
    proxies = tuple(proxy_name(x) for x in partials)
    mechanisms = tuple(mechanism_name(x) for x in partials)

    axes = list(observed) + list(proxies) + list(mechanisms)
    table_domains: Dict[str, tuple] = {}
    for v in observed:
        table_domains[v] = doms[v]
    for x, s in zip(partials, proxies):
        table_domains[s] = doms[x] + (marker,)
    for r in mechanisms:
        table_domains[r] = (0, 1)

    shape = tuple(len(table_domains[a]) for a in axes)
    index_of = {a: {v: i for i, v in enumerate(table_domains[a])} for a in axes}

    def encode(axis: str, values: np.ndarray) -> np.ndarray:
        uniq, inv = np.unique(values, return_inverse=True)
        lut = np.empty(len(uniq), dtype=np.intp)
        for i, u in enumerate(uniq):
            if u not in index_of[axis]:
                raise DomainMismatch(f"value {u!r} outside declared domain of {axis!r}")
            lut[i] = index_of[axis][u]
        return lut[inv]

    col_arrays = {v: np.array(dataset.column(v), dtype=object) for v in want}
    idx_arrays = []
    for v in observed:
        idx_arrays.append(encode(v, col_arrays[v]))
    for x, s in zip(partials, proxies):
        idx_arrays.append(encode(s, col_arrays[x]))
    for x in partials:
        idx_arrays.append((col_arrays[x] == marker).astype(np.intp))

    flat = np.ravel_multi_index(tuple(idx_arrays), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    table = ProbTable(axes, table_domains, counts.astype(float) / dataset.n)
    return ObservedDistribution(
        table, observed, proxies, mechanisms, source=("empirical", dataset.n), marker=marker
    )


# -- estimand evaluation -----------------------------------------------------------

def _proxy_axes(p: ObservedDistribution) -> set:
    return set(p.proxies)


def _event_text(names_values) -> str:
    return ", ".join(f"{n}={v}" for n, v in names_values)


def _atom_table(a: ProbAtom, p: ObservedDistribution) -> ProbTable:
    for n, _ in a.targets + a.conditions:
        if n not in p.table.axes:
            raise UnboundVariable(f"atom variable {n!r} not in the observed-data table")

    fixed = {n: v for n, v in a.targets + a.conditions if v is not None}
    free_targets = [n for n, v in a.targets if v is None]
    free_conds = [n for n, v in a.conditions if v is None]

    mentioned = [n for n, _ in a.targets + a.conditions]
    joint = p.table.marginal(mentioned)
    for s in _proxy_axes(p) & set(free_targets + free_conds):
        joint = joint.restrict(s, p.substantive_domain(s))
    joint = joint.fix(fixed)

    cond_names = [n for n, _ in a.conditions]
    if not cond_names:
        return joint

    den = p.table.marginal(cond_names)
    for s in _proxy_axes(p) & set(free_conds):
        den = den.restrict(s, p.substantive_domain(s))
    den = den.fix({n: v for n, v in a.conditions if v is not None})

    if den.axes:
        zeros = np.argwhere(den.values == 0)
        if zeros.size:
            where = zeros[0]
            event = [(ax, den.domains[ax][i]) for ax, i in zip(den.axes, where)]
            event += [(n, v) for n, v in a.conditions if v is not None]
            raise ZeroProbabilityConditioning(
                f"conditioning event has zero probability: {_event_text(event)}"
            )
    elif float(den.values) == 0:
        event = [(n, v) for n, v in a.conditions if v is not None]
        raise ZeroProbabilityConditioning(
            f"conditioning event has zero probability: {_event_text(event)}"
        )
    return joint / den


def evaluate(e: Estimand, p: ObservedDistribution) -> ProbTable:
    """Evaluate an estimand to a table over its free variables.

    Free proxy variables range over the substantive domain (the marker cell
    is structural, not a value of the underlying variable).  Atoms are
    conditional frequencies; products, quotients and differences combine
    pointwise with broadcasting; sums marginalize the bound variables.
    """
    e = canonicalize(e)
    if isinstance(e, ProbAtom):
        return _atom_table(e, p)
    if isinstance(e, Product):
        out = evaluate(e.factors[0], p)
        for f in e.factors[1:]:
            out = out * evaluate(f, p)
        return out
    if isinstance(e, Quotient):
        return evaluate(e.numerator, p) / evaluate(e.denominator, p)
    if isinstance(e, SumOver):
        return evaluate(e.body, p).sum_out(e.variables)
    if isinstance(e, Difference):
        return evaluate(e.left, p) - evaluate(e.right, p)
    raise TypeError(f"not an estimand: {e!r}")


# -- matrix recovery ----------------------------------------------------------------

def solve_matrix_recovery(plan, p: ObservedDistribution, want_joint: bool = False) -> ProbTable:
    """Solve the linear system of a matrix-recovery plan on a distribution.

    Builds M[y, x] = P(driver=y | target=x, observed) and b[y] = P(driver=y),
    solves M pi = b for the target's distribution, clamps tiny negatives
    (tolerance depends on exact vs empirical input) and renormalizes.
    """
    cond = evaluate(plan.conditional, p)
    b = evaluate(plan.driver_marginal, p)
    target_axis = proxy_name(plan.target)
    cond = cond.transpose_to((plan.driver, target_axis))
    m = cond.values
    if m.shape[0] != m.shape[1]:
        raise PatternNotApplicable(
            f"linear system is {m.shape[0]}x{m.shape[1]}; matrix recovery needs a square system"
        )
    if np.linalg.cond(m) > CONDITION_NUMBER_LIMIT:
        raise SingularSystem(
            f"conditional matrix condition number exceeds {CONDITION_NUMBER_LIMIT:g}"
        )
    pi = np.linalg.solve(m, b.transpose_to((plan.driver,)).values)

    tol = CLAMP_TOL_EXACT if p.source == "exact" else CLAMP_TOL_EMPIRICAL
    if np.any(pi < -tol) or np.any(pi > 1 + tol):
        raise InfeasibleSolution(f"solved distribution {pi} outside [0, 1] beyond tolerance {tol:g}")
    pi = np.clip(pi, 0.0, None)
    s = pi.sum()
    if s <= 0:
        raise InfeasibleSolution("solved distribution sums to zero")
    pi = pi / s

    target_dom = cond.domains[target_axis]
    marg = ProbTable([plan.target], {plan.target: target_dom}, pi)
    if not want_joint:
        return marg
    joint_vals = m * pi[np.newaxis, :]
    joint = ProbTable(
        (plan.driver, plan.target),
        {plan.driver: cond.domains[plan.driver], plan.target: target_dom},
        joint_vals,
    )
    return joint


# -- independence tests ---------------------------------------------------------------

@dataclass(frozen=True)
class TestSpec:
    """A stratified independence test over dataset-derivable factors.

    Variable names use the claim namespace: ``X`` for a raw column, ``X*``
    for a proxy (read from the X column) and ``R_X`` for the derived
    missingness indicator of X.  ``fixed`` entries filter rows.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    x_vars: Tuple[str, ...]
    y_vars: Tuple[str, ...]
    strata: Tuple[str, ...] = ()
    fixed: Tuple[Tuple[str, object], ...] = ()


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    dof: int
    p_value: float
    alpha: float
    reject: bool
    n_used: int


def _resolve_column(dataset: Dataset, name: str) -> list:
    if name.endswith("*"):
        return dataset.column(name[:-1])
    if name.startswith("R_"):
        base = name[len("R_"):]
        return [1 if v == dataset.marker else 0 for v in dataset.column(base)]
    return dataset.column(name)


def run_test(spec, dataset: Dataset, alpha: float = 0.05, min_expected: float = 5.0) -> TestResult:
    """Likelihood-ratio (G) test of conditional independence on a dataset.

    Strata failing the minimum expected cell count are pooled into one
    combined stratum; if nothing passes the threshold the test aborts with
    :class:`InsufficientData`.
    """
    if hasattr(spec, "to_test_spec"):
        spec = spec.to_test_spec()
    if dataset.n == 0:
        raise EmptyDataset("empty dataset")

    columns = {}
    for name in spec.x_vars + spec.y_vars + spec.strata + tuple(n for n, _ in spec.fixed):
        if name not in columns:
            columns[name] = _resolve_column(dataset, name)

    keep = np.ones(dataset.n, dtype=bool)
    for name, value in spec.fixed:
        col = columns[name]
        keep &= np.array([v == value for v in col])

    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        raise InsufficientData("no rows satisfy the test's fixed conditions")

    def key(names, i):
        return tuple(columns[n][i] for n in names)

    strata_counts: Dict[tuple, Dict[tuple, float]] = {}
    for i in idx:
        s = key(spec.strata, i)
        cell = (key(spec.x_vars, i), key(spec.y_vars, i))
        strata_counts.setdefault(s, {}).setdefault(cell, 0.0)
        strata_counts[s][cell] += 1.0

    def as_matrix(cells: Dict[tuple, float]):
        xs = sorted({c[0] for c in cells})
        ys = sorted({c[1] for c in cells})
        mat = np.zeros((len(xs), len(ys)))
        for (cx, cy), n in cells.items():
            mat[xs.index(cx), ys.index(cy)] += n
        return mat

    usable = []
    pooled: Dict[tuple, float] = {}
    for s in sorted(strata_counts):
        mat = as_matrix(strata_counts[s])
        total = mat.sum()
        expected = np.outer(mat.sum(1), mat.sum(0)) / total
        if expected[expected > 0].min() >= min_expected and min(mat.shape) >= 2:
            usable.append(mat)
        else:
            for cell, n in strata_counts[s].items():
                pooled[cell] = pooled.get(cell, 0.0) + n
    if pooled:
        mat = as_matrix(pooled)
        total = mat.sum()
        if min(mat.shape) >= 2:
            expected = np.outer(mat.sum(1), mat.sum(0)) / total
            if expected[expected > 0].min() >= min_expected:
                usable.append(mat)
    if not usable:
        raise InsufficientData(
            f"every stratum falls below the minimum expected count {min_expected:g}"
        )

    g_stat = 0.0
    dof = 0
    n_used = 0
    for mat in usable:
        total = mat.sum()
        n_used += int(total)
        rows = mat.sum(1)
        cols = mat.sum(0)
        expected = np.outer(rows, cols) / total
        mask = mat > 0
        g_stat += 2.0 * float(np.sum(mat[mask] * np.log(mat[mask] / expected[mask])))
        dof += (int((rows > 0).sum()) - 1) * (int((cols > 0).sum()) - 1)

    if dof <= 0:
        return TestResult(g_stat, 0, 1.0, alpha, False, n_used)
    p = float(chi2.sf(g_stat, dof))
    return TestResult(g_stat, dof, p, alpha, p < alpha, n_used)
