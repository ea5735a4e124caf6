"""d-separation queries, minimal separators and Markov blankets.

Two independent decision procedures are provided: a linear-time reachability
sweep (the default) and a moral-graph check used to cross-validate it.  Both
operate on the latent-expanded graph, so bidirected edges behave as latent
common parents.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional

import networkx as nx

from .errors import UnknownNode
from .graph import MGraph, expand_latents

__all__ = [
    "SepQuery",
    "DiGraphView",
    "d_separated",
    "d_separated_moral",
    "find_minimal_separator",
    "markov_blanket",
]


@dataclass(frozen=True)
class SepQuery:
    """A conditional-independence query ``x independent of y given z``."""

    x: FrozenSet[str]
    y: FrozenSet[str]
    z: FrozenSet[str]

    def __post_init__(self):
        x, y, z = frozenset(self.x), frozenset(self.y), frozenset(self.z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if x & y or x & z or y & z:
            raise ValueError("query sets must be pairwise disjoint")


class DiGraphView:
    """A plain directed graph with cheap edge-deletion variants.

    This is the substrate for d-separation on mutilated graphs: ``overline``
    removes incoming edges of a node set, ``underline`` removes outgoing ones.
    """

    __slots__ = ("parents", "children")

    def __init__(self, parents: dict):
        self.parents = {n: frozenset(ps) for n, ps in parents.items()}
        children = {n: set() for n in parents}
        for n, ps in parents.items():
            for p in ps:
                children[p].add(n)
        self.children = {n: frozenset(cs) for n, cs in children.items()}

    @classmethod
    def from_mgraph(cls, g: MGraph) -> "DiGraphView":
        ex = expand_latents(g)
        return cls({n: ex.parents(n) for n in ex.nodes})

    @property
    def nodes(self):
        return self.parents.keys()

    def mutilate(self, overline: Iterable[str] = (), underline: Iterable[str] = ()) -> "DiGraphView":
        over = set(overline)
        under = set(underline)
        parents = {}
        for n, ps in self.parents.items():
            if n in over:
                parents[n] = frozenset()
            else:
                parents[n] = frozenset(p for p in ps if p not in under)
        return DiGraphView(parents)

    def ancestors_of(self, seeds: Iterable[str]) -> set:
        out = set()
        stack = list(seeds)
        while stack:
            n = stack.pop()
            if n in out:
                continue
            out.add(n)
            stack.extend(self.parents[n])
        return out


def _as_view(g) -> DiGraphView:
    if isinstance(g, DiGraphView):
        return g
    return DiGraphView.from_mgraph(g)


def _check_query(view: DiGraphView, q: SepQuery) -> None:
    for n in q.x | q.y | q.z:
        if n not in view.parents:
            raise UnknownNode(f"unknown node {n!r} in separation query")


def d_separated(g, q: SepQuery) -> bool:
    """Decide whether ``q.x`` and ``q.y`` are d-separated by ``q.z``.

    ``g`` may be an :class:`~misslab.graph.MGraph` (latents are expanded
    first) or a :class:`DiGraphView`.  Empty ``x`` or ``y`` is vacuously
    separated.  A path is blocked at a non-collider in ``z`` and at a
    collider whose descendants (itself included) avoid ``z``; a collider is
    a node the path enters and leaves via arrowheads.
    """
    view = _as_view(g)
    _check_query(view, q)
    if not q.x or not q.y:
        return True

    # Reachability sweep over (node, direction) states: "up" means the node
    # was entered from a child (against an edge), "down" from a parent.
    z = q.z
    an_z = view.ancestors_of(z)
    reached_up = set()
    reached_down = set()
    stack = [(s, "up") for s in q.x]
    while stack:
        node, direction = stack.pop()
        if direction == "up":
            if node in z or node in reached_up:
                continue
            reached_up.add(node)
            if node in q.y:
                return False
            for p in view.parents[node]:
                stack.append((p, "up"))
            for c in view.children[node]:
                stack.append((c, "down"))
        else:
            if node in reached_down:
                continue
            reached_down.add(node)
            if node not in z:
                if node in q.y:
                    return False
                for c in view.children[node]:
                    stack.append((c, "down"))
            if node in an_z:
                # collider (or its ancestor chain) activated by conditioning
                for p in view.parents[node]:
                    stack.append((p, "up"))
    return True


def d_separated_moral(g, q: SepQuery) -> bool:
    """Moralization-based d-separation; semantically equal to d_separated.

    Restrict to the ancestral subgraph of the query, marry co-parents, drop
    orientations and ``z``, then test undirected reachability.
    """
    view = _as_view(g)
    _check_query(view, q)
    if not q.x or not q.y:
        return True
    anc = view.ancestors_of(q.x | q.y | q.z)
    moral = nx.Graph()
    moral.add_nodes_from(anc)
    for n in anc:
        ps = [p for p in view.parents[n] if p in anc]
        for p in ps:
            moral.add_edge(p, n)
        for a, b in itertools.combinations(sorted(ps), 2):
            moral.add_edge(a, b)
    moral.remove_nodes_from(q.z)
    for s in q.x:
        if s not in moral:
            continue
        reachable = nx.node_connected_component(moral, s)
        if reachable & q.y:
            return False
    return True


def sep(g, x, y, z=()) -> bool:
    """Convenience wrapper building the query from iterables."""
    return d_separated(g, SepQuery(frozenset(x), frozenset(y), frozenset(z)))


def _default_pool(g: MGraph, include_proxies: bool, include_latents: bool) -> set:
    pool = set(g.substantive_vars) | set(g.mechanism_vars)
    if include_proxies:
        pool |= set(g.proxy_vars)
    if include_latents:
        pool |= set(g.latent_vars)
    return pool


def find_minimal_separator(
    g: MGraph,
    x: Iterable[str],
    y: Iterable[str],
    must_include: Iterable[str] = (),
    forbidden: Iterable[str] = (),
    candidates: Optional[Iterable[str]] = None,
    include_proxies: bool = False,
    include_latents: bool = False,
) -> Optional[frozenset]:
    """Smallest set containing ``must_include`` that d-separates x from y.

    Candidates default to substantive and mechanism nodes; proxies and
    latents are derived/unobservable and excluded unless opted in.  The
    search is restricted to ancestors of the query and enumerates candidate
    sets in (size, lexicographic) order, so ties resolve deterministically
    and the result is minimal: no proper subset containing ``must_include``
    separates.  Returns None when no separator exists within constraints.
    """
    x = frozenset(x)
    y = frozenset(y)
    must = frozenset(must_include)
    forb = frozenset(forbidden)
    if must & forb:
        raise ValueError("must_include and forbidden overlap")
    g.check_nodes(x | y | must | forb)
    view = DiGraphView.from_mgraph(g)

    if candidates is None:
        pool = _default_pool(g, include_proxies, include_latents)
    else:
        pool = set(candidates)
    # Only ancestors of the query can block or open paths.
    pool &= view.ancestors_of(x | y | must)
    pool -= x | y | must | forb
    base = sorted(pool)

    for size in range(len(base) + 1):
        for extra in itertools.combinations(base, size):
            z = must | frozenset(extra)
            if d_separated(view, SepQuery(x, y, z)):
                return z
    return None


def markov_blanket(g: MGraph, v: str, include_proxies: bool = False) -> frozenset:
    """Parents, children and co-parents of children of ``v``.

    Computed on the latent-expanded graph with proxy nodes removed by
    default, since proxies are derived bookkeeping rather than substantive
    neighbours.  Conditioning on the blanket renders ``v`` independent of
    every other node in that graph.
    """
    g.kind(v)
    ex = expand_latents(g)
    drop = set() if include_proxies else set(ex.proxy_vars)
    if v in drop:
        drop.discard(v)
    blanket = set()
    kids = [c for c in ex.children(v) if c not in drop]
    blanket.update(p for p in ex.parents(v) if p not in drop)
    blanket.update(kids)
    for c in kids:
        blanket.update(p for p in ex.parents(c) if p not in drop and p != v)
    return frozenset(blanket)
