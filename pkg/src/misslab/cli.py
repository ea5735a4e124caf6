"""Command-line interface.

One subcommand per analysis: classify, dsep, recover, recover-causal,
implications, mar-tests, mcar-tests, estimate, test, simulate, report.
``--json`` switches any of them to a machine-readable run report.  Exit
codes: 0 for completed analyses (a NonRecoverable or Unknown verdict is an
analysis result, not a failure), 1 for domain errors, 2 for usage errors.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import click

from . import __version__
from .algebra import render
from .docalc import CausalQuery, recover_causal
from .dsep import SepQuery, d_separated
from .errors import MisslabError
from .estimation import Dataset, empirical_distribution, evaluate, solve_matrix_recovery
from .graph import load_mgraph
from .recovery import (
    RecoveryOutcome,
    parse_query,
    recover,
    recover_joint_rfactor,
    recover_mar_joint,
    recover_sequential,
)
from .simulate import load_model, sample
from .taxonomy import classify as classify_graph
from .testability import mar_test_suite, mcar_test_suite, run_suite, testable_implications

_started = time.perf_counter()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(as_json, subcommand, inputs, payload, lines):
    if as_json:
        report = {
            "subcommand": subcommand,
            "inputs": {str(p): _sha256(p) for p in inputs},
            "outcome": payload,
            "timing_s": round(time.perf_counter() - _started, 6),
        }
        click.echo(json.dumps(report, indent=2, sort_keys=True, default=str))
    else:
        for line in lines:
            click.echo(line)


def _split(value):
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def _outcome_payload(out: RecoveryOutcome) -> dict:
    from .algebra import estimand_to_json

    payload = {"status": out.status}
    if out.certificate:
        cert = out.certificate
        payload["method"] = cert.method.value
        payload["estimand"] = cert.estimand_text
        if cert.estimand is not None:
            payload["estimand_tree"] = json.loads(estimand_to_json(cert.estimand))
        payload["justifications"] = [j.text() for j in cert.justifications]
        payload["notes"] = list(cert.notes)
    if out.witness:
        payload["witness"] = out.witness.text()
    if out.reason:
        payload["reason"] = out.reason
    if out.plan:
        payload["plan"] = out.plan.text()
    return payload


def _outcome_lines(out: RecoveryOutcome) -> list:
    lines = [f"status: {out.status}"]
    if out.certificate:
        cert = out.certificate
        lines.append(f"method: {cert.method.value}")
        if cert.estimand is not None:
            lines.append(f"estimand: {render(cert.estimand)}")
        for j in cert.justifications:
            lines.append(f"justification: {j.text()}")
        for n in cert.notes:
            lines.append(f"note: {n}")
    if out.witness:
        lines.append(f"witness: {out.witness.text()}")
    if out.reason:
        lines.append(f"reason: {out.reason}")
    if out.plan:
        lines.append("plan:")
        lines.extend("  " + l for l in out.plan.text().splitlines())
    return lines


@click.group()
@click.version_option(__version__)
def main():
    """Missingness-graph analysis: taxonomy, recoverability, testability."""


def _wrap(fn):
    """Map domain errors to exit code 1 with a clean message."""

    def runner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MisslabError as exc:
            raise click.ClickException(str(exc))

    runner.__name__ = fn.__name__
    runner.__doc__ = fn.__doc__
    return runner


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@_wrap
def classify(graph_file, as_json):
    """Classify the missingness mechanism of a graph."""
    g = load_mgraph(graph_file)
    c = classify_graph(g)
    lines = [c.missingness_class.value]
    lines += [f"witness: {w}" for w in c.witnesses]
    _emit(
        as_json,
        "classify",
        [graph_file],
        {"class": c.missingness_class.value, "label": c.label, "witnesses": list(c.witnesses)},
        lines,
    )


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--x", required=True, help="comma-separated node set")
@click.option("--y", required=True, help="comma-separated node set")
@click.option("--z", default="", help="comma-separated conditioning set")
@click.option("--json", "as_json", is_flag=True)
@_wrap
def dsep(graph_file, x, y, z, as_json):
    """Decide a d-separation query."""
    g = load_mgraph(graph_file)
    q = SepQuery(frozenset(_split(x)), frozenset(_split(y)), frozenset(_split(z)))
    separated = d_separated(g, q)
    _emit(
        as_json,
        "dsep",
        [graph_file],
        {"separated": separated},
        ["separated" if separated else "connected"],
    )


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--query", "query_text", required=True, help='e.g. "P(X,Y)" or "P(Y|X)"')
@click.option(
    "--method",
    type=click.Choice(["auto", "sequential", "rfactor", "mar"]),
    default="auto",
    show_default=True,
)
@click.option("--all-factorizations", is_flag=True, help="list every admissible factorization")
@click.option("--budget", type=int, default=10000, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_wrap
def recover_cmd(graph_file, query_text, method, all_factorizations, budget, as_json):
    """Derive a consistent estimand for a statistical query."""
    g = load_mgraph(graph_file)
    query = parse_query(query_text)
    if all_factorizations:
        certs = recover_sequential(g, query, budget=budget, all_factorizations=True)
        if isinstance(certs, RecoveryOutcome):
            certs = []
        payload = {"factorizations": [c.estimand_text for c in certs]}
        lines = [f"admissible factorizations: {len(certs)}"]
        lines += [f"  {c.estimand_text}" for c in certs]
        _emit(as_json, "recover", [graph_file], payload, lines)
        return
    if method == "sequential":
        out = recover_sequential(g, query, budget=budget)
    elif method == "rfactor":
        out = recover_joint_rfactor(g)
    elif method == "mar":
        estimands = recover_mar_joint(g, include_alternates=True)
        payload = {"status": "recovered", "method": "MarJoint",
                   "estimand": render(estimands[0]),
                   "alternates": [render(e) for e in estimands[1:]]}
        lines = ["status: recovered", "method: MarJoint", f"estimand: {render(estimands[0])}"]
        lines += [f"alternate: {render(e)}" for e in estimands[1:]]
        _emit(as_json, "recover", [graph_file], payload, lines)
        return
    else:
        out = recover(g, query, budget=budget)
    _emit(as_json, "recover", [graph_file], _outcome_payload(out), _outcome_lines(out))


main.add_command(recover_cmd, name="recover")


@main.command(name="recover-causal")
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--do", "do_vars", required=True, help="comma-separated treatments")
@click.option("--outcome", required=True, help="comma-separated outcomes")
@click.option("--context", default="", help="comma-separated context variables")
@click.option("--depth", type=int, default=12, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_wrap
def recover_causal_cmd(graph_file, do_vars, outcome, context, depth, as_json):
    """Derive an estimand for an interventional query."""
    g = load_mgraph(graph_file)
    q = CausalQuery(
        frozenset(_split(outcome)), frozenset(_split(do_vars)), frozenset(_split(context))
    )
    out = recover_causal(g, q, depth_cap=depth)
    _emit(as_json, "recover-causal", [graph_file], _outcome_payload(out), _outcome_lines(out))


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@_wrap
def implications(graph_file, as_json):
    """List the graph's testable implications (and the untestable ones)."""
    g = load_mgraph(graph_file)
    rep = testable_implications(g)
    payload = {
        "testable": [
            {"claim": c.text(), "form": eq.form, "equation": eq.text(), "hint": eq.hint}
            for c, eq in rep.testable
        ],
        "untestable": [c.text() for c in rep.untestable],
        "unknown": [c.text() for c in rep.unknown],
    }
    lines = []
    for c, eq in rep.testable:
        lines.append(f"testable (form {eq.form}): {c.text()}")
        lines.append(f"  equation: {eq.text()}")
    lines += [f"untestable: {c.text()}" for c in rep.untestable]
    lines += [f"unknown status: {c.text()}" for c in rep.unknown]
    if not lines:
        lines = ["no missing-edge implications"]
    _emit(as_json, "implications", [graph_file], payload, lines)


def _suite_cmd(name, builder):
    @main.command(name=name)
    @click.argument("graph_file", type=click.Path(exists=True))
    @click.option("--json", "as_json", is_flag=True)
    @_wrap
    def cmd(graph_file, as_json):
        g = load_mgraph(graph_file)
        suite = builder(sorted(g.partial_vars), sorted(g.observed_vars))
        payload = {
            "tests": [
                {"claim": c.text(), "equation": eq.text(), "hint": eq.hint}
                for c, eq in suite.tests
            ],
            "notice": suite.notice,
        }
        lines = [f"{c.text()}  =>  {eq.text()}" for c, eq in suite.tests]
        if suite.notice:
            lines.append(f"notice: {suite.notice}")
        _emit(as_json, name, [graph_file], payload, lines)

    cmd.__doc__ = f"Print the {name.replace('-', ' ')} for the graph's variables."
    return cmd


_suite_cmd("mar-tests", mar_test_suite)
_suite_cmd("mcar-tests", mcar_test_suite)


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.argument("data_file", type=click.Path(exists=True))
@click.option("--query", "query_text", required=True)
@click.option("--na-marker", default="NA", show_default=True)
@click.option("--out", "out_file", type=click.Path(), default=None, help="write the table as CSV")
@click.option("--json", "as_json", is_flag=True)
@_wrap
def estimate(graph_file, data_file, query_text, na_marker, out_file, as_json):
    """Recover a query and evaluate its estimand on a dataset."""
    g = load_mgraph(graph_file)
    dataset = Dataset.from_csv(data_file, marker=na_marker)
    p = empirical_distribution(dataset, g)
    query = parse_query(query_text)
    out = recover(g, query)
    if not out.recovered:
        _emit(as_json, "estimate", [graph_file, data_file], _outcome_payload(out), _outcome_lines(out))
        return
    if out.plan is not None:
        table = solve_matrix_recovery(out.plan, p, want_joint=out.plan.include_joint)
    else:
        table = evaluate(out.certificate.estimand, p)
    rows = [list(table.axes) + ["probability"]]
    for assignment, prob in table.cells():
        rows.append([assignment[a] for a in table.axes] + [f"{prob:.10g}"])
    if out_file:
        from .report import write_rows

        write_rows(rows, out_file)
    payload = _outcome_payload(out)
    payload["table"] = [
        {**{a: assignment[a] for a in table.axes}, "p": prob}
        for assignment, prob in table.cells()
    ]
    lines = _outcome_lines(out) + [",".join(str(c) for c in row) for row in rows]
    _emit(as_json, "estimate", [graph_file, data_file], payload, lines)


@main.command(name="test")
@click.argument("graph_file", type=click.Path(exists=True))
@click.argument("data_file", type=click.Path(exists=True))
@click.option(
    "--suite",
    "suite_name",
    type=click.Choice(["mar", "mcar", "implications"]),
    default="mar",
    show_default=True,
)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--na-marker", default="NA", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_wrap
def test_cmd(graph_file, data_file, suite_name, alpha, na_marker, as_json):
    """Run a test suite against a dataset."""
    g = load_mgraph(graph_file)
    dataset = Dataset.from_csv(data_file, marker=na_marker)
    if suite_name == "implications":
        from .testability import Suite

        rep = testable_implications(g)
        suite = Suite("implications", rep.testable)
    elif suite_name == "mar":
        suite = mar_test_suite(sorted(g.partial_vars), sorted(g.observed_vars))
    else:
        suite = mcar_test_suite(sorted(g.partial_vars), sorted(g.observed_vars))
    result = run_suite(suite, dataset, alpha=alpha)
    payload = {
        "suite": suite.name,
        "alpha": alpha,
        "per_test_alpha": result.per_test_alpha,
        "rejected": result.rejected,
        "notice": suite.notice,
        "tests": [
            {
                "claim": c.text(),
                "p_value": None if r is None else r.p_value,
                "statistic": None if r is None else r.statistic,
                "dof": None if r is None else r.dof,
                "reject": None if r is None else r.reject,
            }
            for c, r in result.results
        ],
        "hints": list(result.hints),
    }
    lines = []
    for c, r in result.results:
        if r is None:
            lines.append(f"{c.text()}: insufficient data")
        else:
            verdict = "reject" if r.reject else "keep"
            lines.append(f"{c.text()}: G={r.statistic:.3f} dof={r.dof} p={r.p_value:.4g} -> {verdict}")
    if suite.notice:
        lines.append(f"notice: {suite.notice}")
    lines.append(f"suite verdict: {'rejected' if result.rejected else 'not rejected'}")
    lines += [f"hint: {h}" for h in result.hints]
    _emit(as_json, "test", [graph_file, data_file], payload, lines)


@main.command()
@click.argument("model_file", type=click.Path(exists=True))
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_file", type=click.Path(), required=True)
@click.option("--na-marker", default="NA", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_wrap
def simulate(model_file, n, seed, out_file, na_marker, as_json):
    """Sample a masked dataset from a model file."""
    m = load_model(model_file)
    dataset = sample(m, n, seed=seed, marker=na_marker)
    dataset.to_csv(out_file)
    _emit(
        as_json,
        "simulate",
        [model_file],
        {"rows": dataset.n, "columns": list(dataset.columns), "out": str(out_file)},
        [f"wrote {dataset.n} rows x {len(dataset.columns)} columns to {out_file}"],
    )


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.argument("data_file", type=click.Path(exists=True), required=False)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--query", "query_text", default=None, help="also estimate this query")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--na-marker", default="NA", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_wrap
def report(graph_file, data_file, out_dir, query_text, alpha, na_marker, as_json):
    """Render a full analysis report: CSV summary plus figures."""
    from .report import draw_mgraph, plot_pvalues, plot_table, write_rows

    g = load_mgraph(graph_file)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    figures = []
    rows = [["section", "item", "value"]]

    c = classify_graph(g)
    rows.append(["taxonomy", "class", c.label])
    for w in c.witnesses:
        rows.append(["taxonomy", "witness", w])
    figures.append(str(draw_mgraph(g, out_path / "mgraph.png")))

    rep = testable_implications(g)
    for claim, eq in rep.testable:
        rows.append(["implication", claim.text(), eq.text()])
    for claim in rep.untestable:
        rows.append(["untestable", claim.text(), ""])
    for claim in rep.unknown:
        rows.append(["unknown-status", claim.text(), ""])

    dataset = None
    if data_file:
        dataset = Dataset.from_csv(data_file, marker=na_marker)
        suite = (
            mar_test_suite(sorted(g.partial_vars), sorted(g.observed_vars))
            if g.partial_vars
            else None
        )
        if suite and suite.tests:
            result = run_suite(suite, dataset, alpha=alpha)
            entries = []
            for claim, r in result.results:
                rows.append(
                    ["mar-test", claim.text(), "n/a" if r is None else f"p={r.p_value:.4g}"]
                )
                entries.append((claim.text(), None if r is None else r.p_value))
            rows.append(["mar-test", "suite verdict", "rejected" if result.rejected else "not rejected"])
            figures.append(str(plot_pvalues(entries, result.per_test_alpha, out_path / "tests.png")))

    if query_text and dataset is not None:
        query = parse_query(query_text)
        out = recover(g, query)
        rows.append(["estimate", "query", query.text()])
        rows.append(["estimate", "status", out.status])
        if out.recovered:
            p = empirical_distribution(dataset, g)
            if out.plan is not None:
                table = solve_matrix_recovery(out.plan, p, want_joint=out.plan.include_joint)
                rows.append(["estimate", "method", "MatrixInversion"])
            else:
                table = evaluate(out.certificate.estimand, p)
                rows.append(["estimate", "method", out.certificate.method.value])
                rows.append(["estimate", "estimand", render(out.certificate.estimand)])
            for assignment, prob in table.cells():
                key = ",".join(f"{k}={v}" for k, v in sorted(assignment.items()))
                rows.append(["estimate", key, f"{prob:.10g}"])
            figures.append(
                str(plot_table(table, out_path / "estimate.png", title=query.text()))
            )
        elif out.witness:
            rows.append(["estimate", "witness", out.witness.text()])

    csv_path = write_rows(rows, out_path / "report.csv")
    inputs = [graph_file] + ([data_file] if data_file else [])
    payload = {"report": str(csv_path), "figures": figures}
    lines = [f"wrote {csv_path}"] + [f"figure: {f}" for f in figures]
    _emit(as_json, "report", inputs, payload, lines)


if __name__ == "__main__":
    main()
