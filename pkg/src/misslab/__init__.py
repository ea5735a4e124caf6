"""misslab: missingness graphs, recoverability and testability for incomplete data."""

__version__ = "0.1.0"

from .algebra import (
    Difference,
    Estimand,
    ProbAtom,
    Product,
    Quotient,
    SumOver,
    atom,
    equal,
    parse_estimand,
    render,
    substitute_proxies,
)
from .docalc import CausalQuery, MutilatedGraph, identify_by_adjustment, recover_causal, rule_applicable
from .dsep import SepQuery, d_separated, find_minimal_separator, markov_blanket
from .estimation import (
    Dataset,
    ObservedDistribution,
    ProbTable,
    TestResult,
    TestSpec,
    empirical_distribution,
    evaluate,
    run_test,
    solve_matrix_recovery,
)
from .graph import (
    MGraph,
    NodeKind,
    build_mgraph,
    expand_latents,
    load_mgraph,
    mechanism_name,
    parse_mgraph,
    proxy_name,
    serialize_mgraph,
)
from .recovery import (
    Query,
    RecoveryCertificate,
    RecoveryMethod,
    RecoveryOutcome,
    Witness,
    certify_nonrecoverable,
    ordered_factorizations,
    parse_query,
    plan_matrix_recovery,
    recover,
    recover_joint_rfactor,
    recover_mar_joint,
    recover_sequential,
    recoverable_available_cases,
    recoverable_complete_cases,
)
from .simulate import (
    DiscreteModel,
    enumerate_joint,
    enumerate_observed,
    intervene,
    interventional_table,
    load_model,
    parse_model,
    random_model,
    sample,
    serialize_model,
)
from .taxonomy import Classification, MissingnessClass, classify, classify_by_edges
from .testability import (
    Claim,
    Suite,
    TestEquation,
    is_untestable,
    mar_test_suite,
    mcar_test_suite,
    run_suite,
    testable_implications,
    untestable_reconstruction,
)
