import pytest

from misslab.algebra import (
    Difference,
    ProbAtom,
    Product,
    Quotient,
    SumOver,
    atom,
    canonicalize,
    equal,
    estimand_from_json,
    estimand_to_json,
    free_vars,
    parse_estimand,
    render,
    substitute_proxies,
)
from misslab.errors import MGraphSyntaxError, UnguardedPartialVariable
from misslab.graph import build_mgraph


def test_atom_invariants():
    with pytest.raises(ValueError):
        ProbAtom((), ())
    with pytest.raises(ValueError):
        atom(["A"], ["A"])


def test_item_sorting_mechanisms_last():
    a = atom([("R_B", None), "A"], [("R_A", 0), "C"])
    assert render(a) == "P(A,R_B|C,R_A=0)"


def test_product_commutativity():
    a, b = atom(["A"]), atom(["B"])
    assert equal(Product((a, b)), Product((b, a)))


def test_no_semantic_rewriting():
    assert not equal(Product((atom(["A"]), atom(["B"]))), atom(["A", "B"]))


def test_nested_product_flattening():
    a, b, c = atom(["A"]), atom(["B"]), atom(["C"])
    nested = Product((Product((c, b)), a))
    assert render(nested) == "P(A) * P(B) * P(C)"


def test_quotient_render():
    e = Quotient(
        Product((atom([("R_X", 0), ("R_Y", 0)]), atom(["X", "Y"], [("R_X", 0), ("R_Y", 0)]))),
        Product((atom([("R_X", 0)], ["Y"]), atom([("R_Y", 0)], ["X"]))),
    )
    assert render(e) == (
        "P(R_X=0,R_Y=0) * P(X,Y|R_X=0,R_Y=0) / (P(R_X=0|Y) * P(R_Y=0|X))"
    )


def test_sum_requires_free_variable():
    with pytest.raises(ValueError):
        SumOver(("B",), atom(["A"]))
    s = SumOver(("A",), atom(["A"], ["B"]))
    assert free_vars(s) == {"B"}


def test_difference_render():
    e = Difference(atom(["A"]), atom(["B"]))
    assert render(e) == "(P(A) - P(B))"


def test_substitute_proxies_golden():
    g = build_mgraph(
        [("A", "obs"), ("G", "obs"), ("O", "partial")],
        [("A", "O"), ("G", "O"), ("A", "R_O")],
    )
    e = Product((atom(["G", "O"], ["A", ("R_O", 0)]), atom(["A"])))
    out = substitute_proxies(e, g)
    assert render(out) == "P(A) * P(G,O*|A,R_O=0)"
    # idempotent
    assert equal(substitute_proxies(out, g), out)


def test_substitute_proxies_unguarded():
    g = build_mgraph([("A", "obs"), ("O", "partial")], [("A", "O")])
    with pytest.raises(UnguardedPartialVariable):
        substitute_proxies(atom(["O"], ["A"]), g)


def test_substitute_proxies_no_partials_is_identity():
    g = build_mgraph([("A", "obs"), ("B", "obs")], [("A", "B")])
    e = atom(["A"], ["B"])
    assert equal(substitute_proxies(e, g), e)


def test_substitute_binds_sum_variable():
    g = build_mgraph([("T", "obs"), ("O", "partial")], [("T", "O"), ("T", "R_O")])
    e = SumOver(("O",), Product((atom(["O"], ["T", ("R_O", 0)]), atom(["T"]))))
    out = substitute_proxies(e, g)
    assert render(out) == "sum_{O*} (P(O*|T,R_O=0) * P(T))"


@pytest.mark.parametrize(
    "text",
    [
        "P(A)",
        "P(A,B|C,R_A=0)",
        "P(A) * P(G,O*|A,R_O=0)",
        "P(R_X=0,R_Y=0) * P(X*,Y*|R_X=0,R_Y=0) / (P(R_X=0|Y*,R_Y=0) * P(R_Y=0|X*,R_X=0))",
        "sum_{W} (P(W|R_Y=0) * P(Y*|W,Z,R_Y=0))",
        "(P(A) - P(B))",
        "sum_{A,B} (P(A,B|C) * P(C))",
    ],
)
def test_render_parse_identity(text):
    assert render(parse_estimand(text)) == text


def test_parse_rejects_trailing_garbage():
    with pytest.raises(MGraphSyntaxError):
        parse_estimand("P(A) P(B)")


def test_json_round_trip():
    e = parse_estimand("sum_{W} (P(W|R_Y=0) * P(Y*|W,Z,R_Y=0))")
    assert equal(estimand_from_json(estimand_to_json(e)), e)


def test_canonicalize_sorts_factors():
    e1 = parse_estimand("P(B) * P(A)")
    e2 = parse_estimand("P(A) * P(B)")
    assert canonicalize(e1) == canonicalize(e2)
    assert render(e1) == "P(A) * P(B)"


def _random_estimand(rng, vars_pool, depth=2):
    import numpy as np

    def rand_atom(bound):
        names = list(rng.choice(vars_pool, size=rng.integers(1, 3), replace=False))
        targets = [(str(n), None) for n in names]
        rest = [v for v in vars_pool if v not in names]
        conds = []
        for v in rest:
            if rng.random() < 0.3:
                conds.append((f"R_{v}", 0) if rng.random() < 0.5 else (str(v), None))
        return atom(targets, conds)

    def rec(d):
        roll = rng.random()
        if d == 0 or roll < 0.35:
            return rand_atom(())
        if roll < 0.6:
            return Product(tuple(rec(d - 1) for _ in range(rng.integers(2, 4))))
        if roll < 0.8:
            return Quotient(rec(d - 1), rec(d - 1))
        body = rec(d - 1)
        free = sorted(free_vars(body))
        if not free:
            return body
        return SumOver((free[0],), body)

    return canonicalize(rec(depth))


def test_random_trees_round_trip_text_and_json():
    import numpy as np

    rng = np.random.default_rng(9)
    pool = ["A", "B", "C", "D"]
    for _ in range(200):
        e = _random_estimand(rng, pool)
        text = render(e)
        assert render(parse_estimand(text)) == text
        assert equal(estimand_from_json(estimand_to_json(e)), e)
