"""Missingness graphs: typed DAGs with mechanism and proxy nodes.

A missingness graph is a causal DAG over five kinds of nodes:

* fully observed variables,
* partially observed variables,
* latent variables,
* mechanism variables ``R_X`` (one per partially observed ``X``), and
* proxy variables ``X*`` (one per partially observed ``X``).

The proxy carries the actually recorded value: ``X* = X`` when ``R_X = 0``
and ``X* = NA`` when ``R_X = 1``.  Mechanism and proxy nodes are synthesized
automatically; users declare only the substantive and latent nodes.
Bidirected edges stand for an unnamed latent common parent and can be
expanded into explicit latent nodes with :func:`expand_latents`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import networkx as nx

from .errors import (
    CycleDetected,
    DanglingProxy,
    DuplicateName,
    MechanismHasForbiddenChild,
    MGraphSyntaxError,
    UnknownNode,
)

__all__ = [
    "NodeKind",
    "MGraph",
    "build_mgraph",
    "expand_latents",
    "parse_mgraph",
    "serialize_mgraph",
    "mechanism_name",
    "proxy_name",
]

MISSING_MARKER = "NA"

_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class NodeKind(Enum):
    OBSERVED = "obs"
    PARTIAL = "partial"
    LATENT = "latent"
    MECHANISM = "mechanism"
    PROXY = "proxy"


def mechanism_name(var: str) -> str:
    """Derived name of the missingness mechanism of ``var``."""
    return "R_" + var


def proxy_name(var: str) -> str:
    """Derived name of the observed proxy of ``var``."""
    return var + "*"


@dataclass(frozen=True)
class MGraph:
    """An immutable, validated missingness graph.

    ``kinds`` maps every node (including synthesized mechanisms and proxies)
    to its :class:`NodeKind`.  ``directed`` holds ordered pairs; ``bidirected``
    holds pairs stored in sorted order.  Values are never mutated after
    construction, so instances are safe to share across threads.
    """

    kinds: Mapping[str, NodeKind]
    directed: frozenset
    bidirected: frozenset
    allow_mechanism_children: bool = False
    _parents: dict = field(default_factory=dict, repr=False, compare=False)
    _children: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        parents = {n: set() for n in self.kinds}
        children = {n: set() for n in self.kinds}
        for a, b in self.directed:
            parents[b].add(a)
            children[a].add(b)
        object.__setattr__(self, "_parents", {n: frozenset(s) for n, s in parents.items()})
        object.__setattr__(self, "_children", {n: frozenset(s) for n, s in children.items()})

    # -- basic accessors ------------------------------------------------------

    @property
    def nodes(self):
        return frozenset(self.kinds)

    def kind(self, n: str) -> NodeKind:
        try:
            return self.kinds[n]
        except KeyError:
            raise UnknownNode(f"unknown node {n!r}")

    def has_node(self, n: str) -> bool:
        return n in self.kinds

    def check_nodes(self, names: Iterable[str]) -> None:
        for n in names:
            self.kind(n)

    def parents(self, n: str) -> frozenset:
        self.kind(n)
        return self._parents[n]

    def children(self, n: str) -> frozenset:
        self.kind(n)
        return self._children[n]

    def of_kind(self, kind: NodeKind) -> frozenset:
        return frozenset(n for n, k in self.kinds.items() if k is kind)

    @property
    def observed_vars(self):
        return self.of_kind(NodeKind.OBSERVED)

    @property
    def partial_vars(self):
        return self.of_kind(NodeKind.PARTIAL)

    @property
    def latent_vars(self):
        return self.of_kind(NodeKind.LATENT)

    @property
    def mechanism_vars(self):
        return self.of_kind(NodeKind.MECHANISM)

    @property
    def proxy_vars(self):
        return self.of_kind(NodeKind.PROXY)

    @property
    def substantive_vars(self):
        """Fully plus partially observed variables (the modelled quantities)."""
        return self.observed_vars | self.partial_vars

    def mechanism_of(self, var: str) -> str:
        if self.kind(var) is not NodeKind.PARTIAL:
            raise UnknownNode(f"{var!r} is not partially observed; it has no mechanism")
        return mechanism_name(var)

    def proxy_of(self, var: str) -> str:
        if self.kind(var) is not NodeKind.PARTIAL:
            raise UnknownNode(f"{var!r} is not partially observed; it has no proxy")
        return proxy_name(var)

    def base_of(self, node: str) -> str:
        """The partially observed variable behind a mechanism or proxy node."""
        k = self.kind(node)
        if k is NodeKind.MECHANISM:
            return node[len("R_"):]
        if k is NodeKind.PROXY:
            return node[:-1]
        raise UnknownNode(f"{node!r} is not a mechanism or proxy node")

    def adjacent(self, a: str, b: str) -> bool:
        return (
            (a, b) in self.directed
            or (b, a) in self.directed
            or tuple(sorted((a, b))) in self.bidirected
        )

    def topological_order(self) -> list:
        return list(nx.topological_sort(self.to_networkx()))

    def to_networkx(self) -> nx.DiGraph:
        """Directed part only (bidirected edges are ignored)."""
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.kinds))
        g.add_edges_from(sorted(self.directed))
        return g

    def descendants(self, vs: Iterable[str]) -> frozenset:
        g = self.to_networkx()
        out = set()
        for v in vs:
            self.kind(v)
            out |= nx.descendants(g, v)
        return frozenset(out)

    def ancestors(self, vs: Iterable[str]) -> frozenset:
        g = self.to_networkx()
        out = set()
        for v in vs:
            self.kind(v)
            out |= nx.ancestors(g, v)
        return frozenset(out)


def _validate(g: MGraph) -> MGraph:
    names = sorted(g.kinds)
    for n in names:
        for p in g.parents(n) | g.children(n):
            if p not in g.kinds:
                raise UnknownNode(f"edge references undeclared node {p!r}")

    if not nx.is_directed_acyclic_graph(g.to_networkx()):
        cycle = nx.find_cycle(g.to_networkx())
        raise CycleDetected(f"directed edges contain a cycle: {cycle}")

    for r in sorted(g.mechanism_vars):
        base = r[len("R_"):]
        if base not in g.kinds or g.kinds[base] is not NodeKind.PARTIAL:
            raise DanglingProxy(f"mechanism {r!r} has no partially observed variable {base!r}")
        for c in g.children(r):
            if g.kinds[c] in (NodeKind.PROXY, NodeKind.MECHANISM):
                continue  # proxies always; mechanism-to-mechanism edges are legal
            if not g.allow_mechanism_children:
                raise MechanismHasForbiddenChild(
                    f"mechanism {r!r} has substantive child {c!r} "
                    "(pass allow_mechanism_children=True to override)"
                )

    for s in sorted(g.proxy_vars):
        base = s[:-1]
        if base not in g.kinds or g.kinds[base] is not NodeKind.PARTIAL:
            raise DanglingProxy(f"proxy {s!r} has no partially observed variable {base!r}")
        want = {base, mechanism_name(base)}
        if g.parents(s) != frozenset(want):
            raise DanglingProxy(f"proxy {s!r} must have exactly the parents {sorted(want)}")
        if g.children(s):
            raise DanglingProxy(f"proxy {s!r} may not have children")

    for x in sorted(g.partial_vars):
        if mechanism_name(x) not in g.kinds or proxy_name(x) not in g.kinds:
            raise DanglingProxy(f"partial variable {x!r} lacks its mechanism/proxy pair")

    for pair in g.bidirected:
        a, b = pair
        for end in (a, b):
            if end not in g.kinds:
                raise UnknownNode(f"bidirected edge references undeclared node {end!r}")
            if g.kinds[end] is NodeKind.PROXY:
                raise DanglingProxy(f"bidirected edges may not touch proxy {end!r}")
        if a == b:
            raise MGraphSyntaxError(f"bidirected self-loop on {a!r}")
    return g


def build_mgraph(
    nodes: Iterable[tuple],
    directed_edges: Iterable[tuple] = (),
    bidirected_edges: Iterable[tuple] = (),
    allow_mechanism_children: bool = False,
) -> MGraph:
    """Build and validate a missingness graph.

    Parameters
    ----------
    nodes
        Iterable of ``(name, kind)`` where kind is ``"obs"``, ``"partial"``,
        ``"latent"`` or a :class:`NodeKind`.  Mechanism and proxy nodes are
        synthesized for every partial variable and must not be declared.
    directed_edges
        ``(parent, child)`` pairs.  Mechanisms ``R_X`` may be referenced once
        ``X`` is declared partial.
    bidirected_edges
        Unordered pairs, each denoting a latent common parent.
    allow_mechanism_children
        Permit mechanism-to-substantive edges.  Taxonomy and recovery
        operations refuse such graphs.

    Raises
    ------
    DuplicateName, CycleDetected, MechanismHasForbiddenChild, DanglingProxy,
    UnknownNode, MGraphSyntaxError
    """
    kinds: dict = {}
    for name, kind in nodes:
        if isinstance(kind, str):
            try:
                kind = NodeKind(kind)
            except ValueError:
                raise MGraphSyntaxError(f"unknown node kind {kind!r} for {name!r}")
        if not _NAME_RE.match(name):
            raise MGraphSyntaxError(f"invalid node name {name!r}")
        if name.startswith("R_"):
            raise DuplicateName(f"{name!r} collides with the derived mechanism namespace")
        if name in kinds:
            raise DuplicateName(f"node {name!r} declared twice")
        if kind not in (NodeKind.OBSERVED, NodeKind.PARTIAL, NodeKind.LATENT):
            raise MGraphSyntaxError(
                f"node {name!r}: only obs/partial/latent may be declared; "
                "mechanisms and proxies are synthesized"
            )
        kinds[name] = kind

    for x in [n for n, k in kinds.items() if k is NodeKind.PARTIAL]:
        for derived, kind in ((mechanism_name(x), NodeKind.MECHANISM), (proxy_name(x), NodeKind.PROXY)):
            if derived in kinds:
                raise DuplicateName(f"derived node {derived!r} collides with a declared name")
            kinds[derived] = kind

    def resolve(n: str) -> str:
        if n in kinds:
            return n
        raise UnknownNode(f"edge references undeclared node {n!r}")

    directed = set()
    for a, b in directed_edges:
        directed.add((resolve(a), resolve(b)))
    for x in [n for n, k in kinds.items() if k is NodeKind.PARTIAL]:
        directed.add((x, proxy_name(x)))
        directed.add((mechanism_name(x), proxy_name(x)))

    bidirected = set()
    for a, b in bidirected_edges:
        bidirected.add(tuple(sorted((resolve(a), resolve(b)))))

    g = MGraph(
        kinds=dict(sorted(kinds.items())),
        directed=frozenset(directed),
        bidirected=frozenset(bidirected),
        allow_mechanism_children=allow_mechanism_children,
    )
    return _validate(g)


def expand_latents(g: MGraph) -> MGraph:
    """Replace every bidirected edge with a fresh explicit latent parent.

    The output has no bidirected edges and gains one latent node per input
    bidirected edge; the directed part is otherwise unchanged.  Idempotent on
    bidirected-free graphs (returns ``g`` itself).
    """
    if not g.bidirected:
        return g
    kinds = dict(g.kinds)
    directed = set(g.directed)
    for a, b in sorted(g.bidirected):
        latent = f"U_{a}_{b}"
        suffix = 0
        while latent in kinds:
            suffix += 1
            latent = f"U_{a}_{b}_{suffix}"
        kinds[latent] = NodeKind.LATENT
        directed.add((latent, a))
        directed.add((latent, b))
    out = MGraph(
        kinds=dict(sorted(kinds.items())),
        directed=frozenset(directed),
        bidirected=frozenset(),
        allow_mechanism_children=g.allow_mechanism_children,
    )
    return _validate(out)


# -- text format ---------------------------------------------------------------
#
#   node <name> (obs|partial|latent)
#   edge <a> -> <b>
#   biedge <a> <-> <b>
#   # comment
#
# Proxies are implicit.  Mechanisms R_X may appear in edges once X is partial.

def parse_mgraph(text: str, allow_mechanism_children: bool = False) -> MGraph:
    """Parse the line-oriented m-graph format; see the module docstring."""
    nodes = []
    directed = []
    bidirected = []
    declared = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "node":
            if len(parts) != 3:
                raise MGraphSyntaxError("expected 'node <name> <kind>'", lineno)
            name, kind = parts[1], parts[2]
            if kind not in ("obs", "partial", "latent"):
                raise MGraphSyntaxError(f"unknown kind {kind!r}", lineno, len(line) - len(kind) + 1)
            nodes.append((name, kind))
            declared.add(name)
            if kind == "partial":
                declared.add(mechanism_name(name))
        elif parts[0] == "edge":
            if len(parts) != 4 or parts[2] != "->":
                raise MGraphSyntaxError("expected 'edge <a> -> <b>'", lineno)
            directed.append((parts[1], parts[3]))
        elif parts[0] == "biedge":
            if len(parts) != 4 or parts[2] != "<->":
                raise MGraphSyntaxError("expected 'biedge <a> <-> <b>'", lineno)
            bidirected.append((parts[1], parts[3]))
        else:
            raise MGraphSyntaxError(f"unknown directive {parts[0]!r}", lineno, 1)
    for a, b in directed + bidirected:
        for n in (a, b):
            if n not in declared:
                raise MGraphSyntaxError(f"edge references undeclared node {n!r}")
    return build_mgraph(nodes, directed, bidirected, allow_mechanism_children)


def serialize_mgraph(g: MGraph) -> str:
    """Deterministic text form; ``parse_mgraph`` round-trips it exactly."""
    lines = []
    for name in sorted(g.kinds):
        k = g.kinds[name]
        if k in (NodeKind.OBSERVED, NodeKind.PARTIAL, NodeKind.LATENT):
            lines.append(f"node {name} {k.value}")
    skip = set()
    for x in g.partial_vars:
        skip.add((x, proxy_name(x)))
        skip.add((mechanism_name(x), proxy_name(x)))
    for a, b in sorted(g.directed):
        if (a, b) not in skip:
            lines.append(f"edge {a} -> {b}")
    for a, b in sorted(g.bidirected):
        lines.append(f"biedge {a} <-> {b}")
    return "\n".join(lines) + "\n"


def load_mgraph(path) -> MGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mgraph(fh.read())
