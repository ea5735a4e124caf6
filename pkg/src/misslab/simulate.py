"""Ground-truth models over missingness graphs.

A :class:`DiscreteModel` attaches finite domains and CPTs to a graph's
substantive, latent and mechanism nodes; proxies are deterministic via the
masking rule.  The module provides exact enumeration of the underlying and
observed-data distributions, ancestral sampling with masking, and CPT
surgery for interventions.  Everything is seed-deterministic: sampling uses
per-block child seeds so results do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import FloorTooLarge, MGraphSyntaxError, StateSpaceTooLarge, UnknownNode
from .estimation import Dataset, ObservedDistribution, ProbTable
from .graph import (
    MGraph,
    MISSING_MARKER,
    NodeKind,
    expand_latents,
    mechanism_name,
    parse_mgraph,
    proxy_name,
    serialize_mgraph,
)

__all__ = [
    "DiscreteModel",
    "random_model",
    "enumerate_joint",
    "enumerate_observed",
    "sample",
    "intervene",
    "interventional_table",
    "parse_model",
    "serialize_model",
]

ENUMERATION_BUDGET = 10_000_000
_SAMPLE_BLOCK = 1 << 16


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MISSLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Cpt:
    parents: Tuple[str, ...]
    table: np.ndarray  # shape: (#parent configurations, domain size), rows normalized

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2:
            raise ValueError("CPT table must be 2-D (parent configurations x values)")
        if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("CPT rows must be nonnegative and sum to 1")
        object.__setattr__(self, "table", t)


@dataclass(frozen=True)
class DiscreteModel:
    """CPT parameterization of a (latent-expanded) missingness graph."""

    graph: MGraph
    domains: Mapping[str, tuple]
    cpts: Mapping[str, Cpt]

    def __post_init__(self):
        if self.graph.bidirected:
            raise ValueError("DiscreteModel requires an explicit-latent graph; call expand_latents")
        nodes = self.stochastic_nodes()
        for v in nodes:
            if v not in self.domains:
                raise UnknownNode(f"no domain for node {v!r}")
            if v not in self.cpts:
                raise UnknownNode(f"no CPT for node {v!r}")
            cpt = self.cpts[v]
            # point-mass CPTs (from interventions) may drop parents
            if not set(cpt.parents) <= set(self.graph.parents(v)) - set(self.graph.proxy_vars):
                raise ValueError(f"CPT parents for {v!r} do not match the graph")
            rows = int(np.prod([len(self.domains[p]) for p in cpt.parents])) if cpt.parents else 1
            if cpt.table.shape != (rows, len(self.domains[v])):
                raise ValueError(f"CPT shape for {v!r} does not match domains")
        for r in self.graph.mechanism_vars:
            if tuple(self.domains[r]) != (0, 1):
                raise ValueError(f"mechanism {r!r} must be binary (0, 1)")

    def stochastic_nodes(self) -> List[str]:
        """Every node carrying a CPT (all but the deterministic proxies)."""
        g = self.graph
        return sorted(g.substantive_vars | g.latent_vars | g.mechanism_vars)

    def domain(self, v: str) -> tuple:
        return tuple(self.domains[v])

    def config_count(self) -> int:
        out = 1
        for v in self.stochastic_nodes():
            out *= len(self.domains[v])
        return out


def random_model(
    g: MGraph,
    domains: Optional[object] = None,
    positivity_floor: float = 0.05,
    seed: int = 0,
) -> DiscreteModel:
    """Random CPTs with every entry at least ``positivity_floor``.

    ``domains`` is either a mapping from substantive/latent names to value
    tuples, or an int giving a uniform domain size (values ``"0"``,
    ``"1"``, ...).  Mechanisms are always binary.  Deterministic under
    ``seed``.
    """
    ex = expand_latents(g)
    rng = np.random.default_rng(seed)

    doms: Dict[str, tuple] = {}
    size = 2 if domains is None or isinstance(domains, int) else None
    if isinstance(domains, int):
        size = domains
    for v in sorted(ex.substantive_vars | ex.latent_vars):
        if isinstance(domains, Mapping) and v in domains:
            doms[v] = tuple(domains[v])
        else:
            doms[v] = tuple(str(i) for i in range(size))
    for r in sorted(ex.mechanism_vars):
        doms[r] = (0, 1)

    cpts: Dict[str, Cpt] = {}
    for v in sorted(ex.substantive_vars | ex.latent_vars | ex.mechanism_vars):
        k = len(doms[v])
        if not 0 < positivity_floor < 1.0 / k:
            raise FloorTooLarge(f"floor {positivity_floor} infeasible for domain size {k}")
        parents = tuple(sorted(p for p in ex.parents(v) if ex.kinds[p] is not NodeKind.PROXY))
        rows = int(np.prod([len(doms[p]) for p in parents])) if parents else 1
        raw = rng.dirichlet(np.ones(k), size=rows)
        table = positivity_floor + (1.0 - k * positivity_floor) * raw
        cpts[v] = Cpt(parents, table)
    return DiscreteModel(ex, doms, cpts)


def _parent_config_index(m: DiscreteModel, cpt: Cpt, indices: Mapping[str, np.ndarray]):
    if not cpt.parents:
        return np.zeros(1, dtype=int)
    dims = [len(m.domains[p]) for p in cpt.parents]
    return np.ravel_multi_index([indices[p] for p in cpt.parents], dims)


def enumerate_joint(m: DiscreteModel, keep_latents: bool = False) -> ProbTable:
    """Exact underlying distribution over (V_m, V_o, R); latents summed out."""
    nodes = m.stochastic_nodes()
    if m.config_count() > ENUMERATION_BUDGET:
        raise StateSpaceTooLarge(f"{m.config_count()} configurations exceed the budget")
    shape = tuple(len(m.domains[v]) for v in nodes)
    joint = np.ones(shape)
    pos = {v: i for i, v in enumerate(nodes)}
    for v in nodes:
        cpt = m.cpts[v]
        dims = [len(m.domains[p]) for p in cpt.parents] + [len(m.domains[v])]
        local = cpt.table.reshape(dims)
        order = list(cpt.parents) + [v]
        # broadcast local table into the global axis layout
        expand_shape = [1] * len(nodes)
        perm = sorted(range(len(order)), key=lambda i: pos[order[i]])
        local = np.transpose(local, perm)
        for name in order:
            expand_shape[pos[name]] = len(m.domains[name])
        joint = joint * local.reshape(expand_shape)
    table = ProbTable(nodes, {v: m.domains[v] for v in nodes}, joint)
    if keep_latents:
        return table
    return table.sum_out(m.graph.latent_vars)


def enumerate_observed(m: DiscreteModel) -> ObservedDistribution:
    """Exact observed-data distribution over (V*, V_o, R) via masking."""
    under = enumerate_joint(m)
    g = m.graph
    partials = sorted(g.partial_vars)
    table = under
    for x in partials:
        s = proxy_name(x)
        r = mechanism_name(x)
        dom = tuple(m.domains[x])
        x_ax = table.axes.index(x)
        r_ax = table.axes.index(r)
        vals = np.moveaxis(table.values, (x_ax, r_ax), (0, 1))  # (|X|, 2, ...)
        out = np.zeros((len(dom) + 1, 2) + vals.shape[2:])
        out[: len(dom), 0] = vals[:, 0]
        out[len(dom), 1] = vals[:, 1].sum(axis=0)
        rest = [a for a in table.axes if a not in (x, r)]
        new_axes = [s, r] + rest
        domains = {a: table.domains[a] for a in rest}
        domains[s] = dom + (MISSING_MARKER,)
        domains[r] = (0, 1)
        table = ProbTable(new_axes, domains, out)
    observed = tuple(sorted(g.observed_vars))
    proxies = tuple(proxy_name(x) for x in partials)
    mechanisms = tuple(mechanism_name(x) for x in partials)
    order = list(observed) + list(proxies) + list(mechanisms)
    return ObservedDistribution(
        table.transpose_to(order), observed, proxies, mechanisms, source="exact"
    )


def _sample_block(m: DiscreteModel, n: int, seed_seq: np.random.SeedSequence) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    order = [v for v in m.graph.topological_order() if v in m.cpts]
    out: Dict[str, np.ndarray] = {}
    for v in order:
        cpt = m.cpts[v]
        if cpt.parents:
            rows = cpt.table[_parent_config_index(m, cpt, out)]
        else:
            rows = np.broadcast_to(cpt.table[0], (n, cpt.table.shape[1]))
        u = rng.random(n)
        idx = (u[:, None] > np.cumsum(rows, axis=1)).sum(axis=1)
        out[v] = np.minimum(idx, cpt.table.shape[1] - 1)
    return out


def sample(m: DiscreteModel, n: int, seed: int = 0, marker: str = MISSING_MARKER) -> Dataset:
    """Draw ``n`` i.i.d. rows by ancestral sampling, then mask.

    Columns are the substantive variables (sorted); partially observed
    columns carry ``marker`` exactly where the mechanism fired.  Sampling is
    split into fixed-size blocks with spawned seeds, so output is identical
    for any MISSLAB_THREADS setting.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    root = np.random.SeedSequence(seed)
    blocks = [(i, min(_SAMPLE_BLOCK, n - i)) for i in range(0, n, _SAMPLE_BLOCK)]
    seeds = root.spawn(len(blocks))

    def run(args):
        (start, size), ss = args
        return _sample_block(m, size, ss)

    workers = thread_count()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, zip(blocks, seeds)))
    else:
        parts = [run(a) for a in zip(blocks, seeds)]

    cols = sorted(m.graph.substantive_vars)
    arrays = {v: np.concatenate([p[v] for p in parts]) for v in parts[0]}
    partials = set(m.graph.partial_vars)
    col_values = []
    for v in cols:
        vals = np.array(m.domains[v], dtype=object)[arrays[v]]
        if v in partials:
            vals = np.where(arrays[mechanism_name(v)] == 1, marker, vals)
        col_values.append(vals)
    rows = list(zip(*col_values))
    return Dataset(tuple(cols), rows, marker)


def intervene(m: DiscreteModel, assignments: Mapping[str, object]) -> DiscreteModel:
    """Point-mass CPT surgery; the returned model's joint is interventional."""
    cpts = dict(m.cpts)
    for v, value in assignments.items():
        dom = m.domain(v)
        if value not in dom:
            raise UnknownNode(f"value {value!r} not in domain of {v!r}")
        row = np.zeros((1, len(dom)))
        row[0, dom.index(value)] = 1.0
        cpts[v] = Cpt((), row)
    return DiscreteModel(m.graph, m.domains, cpts)


def interventional_table(m: DiscreteModel, do_vars: Sequence[str], outcomes: Sequence[str]) -> ProbTable:
    """Oracle P(outcomes | do(do_vars)) as a table with do-variables as axes."""
    do_vars = list(do_vars)
    outcomes = list(outcomes)
    doms = [m.domain(v) for v in do_vars]
    shape = [len(m.domain(o)) for o in outcomes] + [len(d) for d in doms]
    out = np.zeros(shape)
    for idx in np.ndindex(*[len(d) for d in doms]):
        assignment = {v: doms[k][idx[k]] for k, v in enumerate(do_vars)}
        joint = enumerate_joint(intervene(m, assignment))
        marg = joint.marginal(outcomes)
        out[(...,) + idx] = marg.values
    domains = {o: m.domain(o) for o in outcomes}
    domains.update({v: m.domain(v) for v in do_vars})
    return ProbTable(outcomes + do_vars, domains, out)


# -- model files -----------------------------------------------------------------
#
# A model file is an m-graph file plus:
#   domain <var> : v1,v2,...          (optional; default binary "0","1")
#   cpt <var> : p1 p2 ...             (exogenous)
#   cpt <var> | A,B : p1 p2 ...       (row-major over A,B configurations)
# Latent nodes may omit their cpt line and default to uniform.

def parse_model(text: str) -> DiscreteModel:
    graph_lines = []
    domain_lines = []
    cpt_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()[0]
        if head == "domain":
            domain_lines.append((lineno, line))
        elif head == "cpt":
            cpt_lines.append((lineno, line))
        else:
            graph_lines.append(raw)
    g = expand_latents(parse_mgraph("\n".join(graph_lines)))

    doms: Dict[str, tuple] = {}
    for lineno, line in domain_lines:
        body = line[len("domain"):].strip()
        if ":" not in body:
            raise MGraphSyntaxError("expected 'domain <var> : v1,v2,...'", lineno)
        name, values = body.split(":", 1)
        name = name.strip()
        if not g.has_node(name):
            raise MGraphSyntaxError(f"domain for unknown node {name!r}", lineno)
        doms[name] = tuple(v.strip() for v in values.split(",") if v.strip())
    for v in sorted(g.substantive_vars | g.latent_vars):
        doms.setdefault(v, ("0", "1"))
    for r in sorted(g.mechanism_vars):
        doms[r] = (0, 1)

    cpts: Dict[str, Cpt] = {}
    for lineno, line in cpt_lines:
        body = line[len("cpt"):].strip()
        if ":" not in body:
            raise MGraphSyntaxError("expected 'cpt <var> [| parents] : probabilities'", lineno)
        headpart, probs = body.split(":", 1)
        if "|" in headpart:
            name, parents_part = headpart.split("|", 1)
            parents = tuple(p.strip() for p in parents_part.split(",") if p.strip())
        else:
            name, parents = headpart, ()
        name = name.strip()
        if not g.has_node(name):
            raise MGraphSyntaxError(f"cpt for unknown node {name!r}", lineno)
        flat = [float(tok) for tok in probs.replace(",", " ").split()]
        k = len(doms[name])
        rows = int(np.prod([len(doms[p]) for p in parents])) if parents else 1
        if len(flat) != rows * k:
            raise MGraphSyntaxError(
                f"cpt for {name!r}: expected {rows * k} probabilities, got {len(flat)}", lineno
            )
        try:
            cpts[name] = Cpt(parents, np.array(flat).reshape(rows, k))
        except ValueError as exc:
            raise MGraphSyntaxError(f"cpt for {name!r}: {exc}", lineno)

    for v in sorted(g.latent_vars):
        if v not in cpts:
            k = len(doms[v])
            cpts[v] = Cpt((), np.full((1, k), 1.0 / k))
    return DiscreteModel(g, doms, cpts)


def serialize_model(m: DiscreteModel) -> str:
    lines = [serialize_mgraph(m.graph).rstrip("\n")]
    for v in sorted(m.graph.substantive_vars | m.graph.latent_vars):
        lines.append(f"domain {v} : {','.join(str(x) for x in m.domains[v])}")
    for v in m.stochastic_nodes():
        cpt = m.cpts[v]
        flat = " ".join(f"{x:.12g}" for x in cpt.table.ravel())
        if cpt.parents:
            lines.append(f"cpt {v} | {','.join(cpt.parents)} : {flat}")
        else:
            lines.append(f"cpt {v} : {flat}")
    return "\n".join(lines) + "\n"


def load_model(path) -> DiscreteModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
