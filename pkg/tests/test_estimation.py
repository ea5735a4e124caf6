import math

import numpy as np
import pytest

from misslab.algebra import atom, parse_estimand
from misslab.errors import (
    DomainMismatch,
    EmptyDataset,
    InfeasibleSolution,
    InsufficientData,
    SingularSystem,
    UnboundVariable,
    ZeroProbabilityConditioning,
)
from misslab.estimation import (
    Dataset,
    ProbTable,
    TestSpec,
    empirical_distribution,
    evaluate,
    run_test,
    solve_matrix_recovery,
)
from misslab.graph import build_mgraph
from misslab.recovery import parse_query, recover
from misslab.simulate import enumerate_joint, enumerate_observed, random_model, sample


@pytest.fixture
def school_graph():
    return build_mgraph(
        [("A", "obs"), ("G", "obs"), ("O", "partial")],
        [("A", "O"), ("G", "O"), ("A", "R_O")],
    )


def table_one_dataset():
    rows = [
        ("16", "F", "Obese"),
        ("15", "F", "NA"),
        ("15", "M", "NA"),
        ("14", "F", "NotObese"),
        ("13", "M", "NotObese"),
        ("15", "M", "Obese"),
        ("14", "F", "Obese"),
    ]
    return Dataset(("A", "G", "O"), rows)


def test_empirical_distribution_cells(school_graph):
    d = table_one_dataset()
    p = empirical_distribution(d, school_graph)
    assert p.n == 7
    got = p.table.marginal(["A", "G", "O*", "R_O"]).get(
        {"A": "15", "G": "F", "O*": "NA", "R_O": 1}
    )
    assert got == pytest.approx(1 / 7)
    assert p.table.marginal(["A"]).get({"A": "15"}) == pytest.approx(3 / 7)


def test_single_row_point_mass(school_graph):
    d = Dataset(("A", "G", "O"), [("16", "F", "Obese")])
    p = empirical_distribution(d, school_graph)
    assert p.table.get(
        {"A": "16", "G": "F", "O*": "Obese", "R_O": 0}
    ) == pytest.approx(1.0)


def test_marker_in_observed_column_rejected(school_graph):
    d = Dataset(("A", "G", "O"), [("NA", "F", "Obese")])
    with pytest.raises(DomainMismatch):
        empirical_distribution(d, school_graph)


def test_empty_dataset(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("A,G,O\n")
    with pytest.raises(EmptyDataset):
        Dataset.from_csv(path)


def test_csv_round_trip(tmp_path, school_graph):
    d = table_one_dataset()
    path = tmp_path / "t1.csv"
    d.to_csv(path)
    d2 = Dataset.from_csv(path)
    assert d2.columns == d.columns
    assert d2.rows == [tuple(str(v) for v in r) for r in d.rows]


def test_evaluate_marginal_atom(school_graph):
    m = random_model(school_graph, seed=0)
    p = enumerate_observed(m)
    got = evaluate(atom(["A"]), p)
    want = enumerate_joint(m).marginal(["A"])
    assert got.max_abs_diff(want) < 1e-15


def test_evaluate_deterministic(school_graph):
    m = random_model(school_graph, seed=1)
    p = enumerate_observed(m)
    e = parse_estimand("P(A) * P(G,O*|A,R_O=0)")
    a = evaluate(e, p).values
    b = evaluate(e, p).values
    assert np.array_equal(a, b)


def test_joint_estimand_sums_to_one(school_graph):
    m = random_model(school_graph, seed=2)
    p = enumerate_observed(m)
    e = parse_estimand("P(A) * P(G,O*|A,R_O=0)")
    assert math.isclose(evaluate(e, p).total(), 1.0, abs_tol=1e-9)


def test_zero_probability_conditioning_raises(school_graph):
    axes = ["A", "O*", "R_O"]
    domains = {"A": ("0", "1"), "O*": ("0", "1", "NA"), "R_O": (0, 1)}
    vals = np.zeros((2, 3, 2))
    vals[0, 0, 0] = 0.5
    vals[0, 2, 1] = 0.5  # all mass on A=0
    table = ProbTable(axes, domains, vals)
    from misslab.estimation import ObservedDistribution

    p = ObservedDistribution(table, ("A",), ("O*",), ("R_O",))
    with pytest.raises(ZeroProbabilityConditioning) as err:
        evaluate(atom(["O*"], ["A", ("R_O", 0)]), p)
    assert "A=1" in str(err.value)


def test_unbound_variable(school_graph):
    m = random_model(school_graph, seed=0)
    p = enumerate_observed(m)
    with pytest.raises(UnboundVariable):
        evaluate(atom(["Q"]), p)


def test_free_proxy_axes_exclude_marker(school_graph):
    m = random_model(school_graph, seed=3)
    p = enumerate_observed(m)
    got = evaluate(atom(["O*"], [("R_O", 0)]), p)
    assert got.domains["O*"] == m.domain("O")


# -- matrix recovery ---------------------------------------------------------


def matrix_graph():
    return build_mgraph([("Y", "obs"), ("I", "partial")], [("Y", "I"), ("I", "R_I")])


def test_matrix_recovery_exact():
    g = matrix_graph()
    out = recover(g, parse_query("P(I)"))
    m = random_model(g, seed=11)
    sol = solve_matrix_recovery(out.plan, enumerate_observed(m))
    want = enumerate_joint(m).marginal(["I"])
    assert sol.max_abs_diff(want) < 1e-8


def test_matrix_recovery_singular():
    g = matrix_graph()
    out = recover(g, parse_query("P(I)"))
    m = random_model(g, seed=0)
    from misslab.simulate import Cpt, DiscreteModel

    cpts = dict(m.cpts)
    cpts["I"] = Cpt(("Y",), np.array([[0.4, 0.6], [0.4, 0.6]]))  # driver has no effect
    m2 = DiscreteModel(m.graph, m.domains, cpts)
    with pytest.raises(SingularSystem):
        solve_matrix_recovery(out.plan, enumerate_observed(m2))


def test_matrix_recovery_infeasible_detection():
    # a driver marginal outside the image of the conditional matrix's columns
    g = matrix_graph()
    out = recover(g, parse_query("P(I)"))
    axes = ["Y", "I*", "R_I"]
    domains = {"Y": ("0", "1"), "I*": ("0", "1", "NA"), "R_I": (0, 1)}
    vals = np.zeros((2, 3, 2))
    vals[0, 0, 0] = 0.045
    vals[0, 1, 0] = 0.005
    vals[1, 0, 0] = 0.005
    vals[1, 1, 0] = 0.045
    vals[0, 2, 1] = 0.88
    vals[1, 2, 1] = 0.02
    from misslab.estimation import ObservedDistribution

    fabricated = ObservedDistribution(
        ProbTable(axes, domains, vals), ("Y",), ("I*",), ("R_I",), source="exact"
    )
    with pytest.raises(InfeasibleSolution):
        solve_matrix_recovery(out.plan, fabricated)


# -- independence tests --------------------------------------------------------


def test_run_test_null_calibration(school_graph):
    # claim among fully observed variables that holds in the model
    g = build_mgraph([("A", "obs"), ("B", "obs")], [])
    m = random_model(g, seed=4)
    rejections = 0
    pvals = []
    for seed in range(40):
        d = sample(m, 4000, seed=seed)
        spec = TestSpec(("A",), ("B",))
        res = run_test(spec, d, alpha=0.05)
        pvals.append(res.p_value)
        rejections += res.reject
    assert rejections <= 6
    assert min(pvals) < 0.5  # p-values spread out rather than stuck at 1


def test_run_test_detects_dependence():
    g = build_mgraph([("A", "obs"), ("B", "obs")], [("A", "B")])
    from misslab.simulate import Cpt, DiscreteModel

    m = random_model(g, seed=0)
    cpts = dict(m.cpts)
    cpts["B"] = Cpt(("A",), np.array([[0.9, 0.1], [0.2, 0.8]]))
    m = DiscreteModel(m.graph, m.domains, cpts)
    d = sample(m, 5000, seed=1)
    res = run_test(TestSpec(("A",), ("B",)), d, alpha=0.05)
    assert res.reject and res.p_value < 1e-6


def test_run_test_insufficient_data(school_graph):
    d = table_one_dataset()
    spec = TestSpec(("A",), ("R_O",), strata=("G",))
    with pytest.raises(InsufficientData):
        run_test(spec, d, alpha=0.05, min_expected=5.0)


def test_run_test_fixed_filter(school_graph):
    m = random_model(school_graph, seed=6)
    d = sample(m, 6000, seed=2)
    spec = TestSpec(("G",), ("R_O",), strata=("A",), fixed=())
    res = run_test(spec, d)
    assert 0.0 <= res.p_value <= 1.0
    assert res.dof >= 1
    # filtering to observed rows only
    spec2 = TestSpec(("G",), ("A",), fixed=(("R_O", 0),))
    res2 = run_test(spec2, d)
    assert res2.n_used < d.n
