import itertools

import pytest

from misslab.errors import CycleDetected, ModelOutsideStandardClass
from misslab.graph import build_mgraph
from misslab.taxonomy import MissingnessClass, classify, classify_by_edges


def test_fig1_goldens(graphs):
    assert classify(graphs["fig1b"]).missingness_class is MissingnessClass.MCAR
    assert classify(graphs["fig1c"]).missingness_class is MissingnessClass.MAR
    assert classify(graphs["fig1d"]).missingness_class is MissingnessClass.MNAR


def test_no_missingness(graphs):
    assert classify(graphs["fig1a"]).missingness_class is MissingnessClass.NO_MISSINGNESS
    dense = build_mgraph([("A", "obs"), ("B", "obs")], [("A", "B")])
    assert classify(dense).missingness_class is MissingnessClass.NO_MISSINGNESS


def test_mnar_witnesses(graphs):
    c = classify(graphs["fig1d"])
    assert c.witnesses == ("O -> R_O",)
    c2 = classify(graphs["fig6a"])
    assert any("<->" in w for w in c2.witnesses)


def test_label_uses_variable_level_mar(graphs):
    assert classify(graphs["fig1c"]).label == "v-MAR"
    assert classify(graphs["fig1b"]).label == "MCAR"


def test_mcar_implies_mar_condition(graphs):
    # every MCAR graph also satisfies the MAR d-separation
    from misslab.dsep import SepQuery, d_separated
    from misslab.graph import expand_latents

    g = expand_latents(graphs["fig1b"])
    assert d_separated(
        g,
        SepQuery(g.partial_vars | g.latent_vars, g.mechanism_vars, g.observed_vars),
    )


def test_override_graphs_refused():
    g = build_mgraph([("X", "partial"), ("Y", "obs")], [("R_X", "Y")], allow_mechanism_children=True)
    with pytest.raises(ModelOutsideStandardClass):
        classify(g)
    with pytest.raises(ModelOutsideStandardClass):
        classify_by_edges(g)


def _all_two_var_graphs():
    """Every m-graph over substantive {A, B}: kinds, directed edges among
    substantive and into mechanisms, and bidirected edges."""
    for ka, kb in itertools.product(("obs", "partial"), repeat=2):
        nodes = [("A", ka), ("B", kb)]
        mechs = [f"R_{v}" for v, k in nodes if k == "partial"]
        sub_edge_options = [(), (("A", "B"),), (("B", "A"),)]
        mech_parent_options = []
        for r in mechs:
            mech_parent_options.append([frozenset(s) for s in _subsets(["A", "B"])])
        bi_pool = ["A", "B"] + mechs
        bi_options = [frozenset(s) for s in _subsets(list(itertools.combinations(bi_pool, 2)))]
        for sub_edges in sub_edge_options:
            for mech_parents in itertools.product(*mech_parent_options) if mechs else [()]:
                edges = list(sub_edges)
                for r, parents in zip(mechs, mech_parents):
                    edges += [(p, r) for p in parents]
                for bis in bi_options:
                    yield nodes, edges, [tuple(b) for b in bis]


def _subsets(items):
    for k in range(len(items) + 1):
        yield from itertools.combinations(items, k)


def test_routes_agree_exhaustively_two_vars():
    count = 0
    for nodes, edges, bis in _all_two_var_graphs():
        g = build_mgraph(nodes, edges, bis)
        a = classify(g).missingness_class
        b = classify_by_edges(g).missingness_class
        assert a is b, (nodes, edges, bis, a, b)
        count += 1
    assert count > 500


def test_routes_agree_three_vars_directed_only():
    names = ["A", "B", "C"]
    count = 0
    for kinds in itertools.product(("obs", "partial"), repeat=3):
        nodes = list(zip(names, kinds))
        mechs = [f"R_{v}" for v, k in nodes if k == "partial"]
        pairs = list(itertools.combinations(names, 2))
        for orient in itertools.product((0, 1, 2), repeat=3):
            edges = []
            for (x, y), o in zip(pairs, orient):
                if o == 1:
                    edges.append((x, y))
                elif o == 2:
                    edges.append((y, x))
            # a deterministic but varied assignment of mechanism parents
            for mask in range(0, 3 ** len(mechs)):
                extra = []
                mm = mask
                for r in mechs:
                    choice = mm % 3
                    mm //= 3
                    if choice == 1:
                        extra.append((names[0], r))
                    elif choice == 2:
                        extra.append((names[2], r))
                try:
                    g = build_mgraph(nodes, edges + extra)
                except CycleDetected:
                    continue
                assert classify(g).missingness_class is classify_by_edges(g).missingness_class
                count += 1
    assert count > 1500
