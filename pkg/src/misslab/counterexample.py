"""Constructions witnessing non-recoverability numerically.

A target is non-recoverable exactly when two models agree on the entire
observed-data distribution yet disagree on the target.  For self-masking
patterns an explicit one-parameter family exists and is constructed in
closed form; for other certified patterns a seeded least-squares search
finds a second model on the observed-equivalence manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from .errors import PatternNotApplicable
from .graph import MGraph, mechanism_name
from .simulate import Cpt, DiscreteModel, enumerate_joint, enumerate_observed, random_model

__all__ = ["ModelPair", "self_masking_pair", "search_indistinguishable_pair"]


@dataclass(frozen=True)
class ModelPair:
    model_a: DiscreteModel
    model_b: DiscreteModel
    variable: str
    observed_gap: float  # L-infinity between observed-data distributions
    target_gap: float  # max cell difference on the target marginal


def _flat_masking_model(g: MGraph, var: str, seed: int) -> DiscreteModel:
    """Random model in which ``var`` ignores its parents and only ``var``
    drives its mechanism; the observed distribution then factorizes."""
    m = random_model(g, seed=seed)
    r = mechanism_name(var)
    cpts = dict(m.cpts)

    var_cpt = cpts[var]
    rows = var_cpt.table.shape[0]
    marginal = var_cpt.table[0:1]
    cpts[var] = Cpt(var_cpt.parents, np.repeat(marginal, rows, axis=0))

    r_cpt = cpts[r]
    if tuple(r_cpt.parents) != (var,):
        raise PatternNotApplicable(f"{r!r} must depend on {var!r} alone")
    return DiscreteModel(m.graph, m.domains, cpts)


def self_masking_pair(g: MGraph, var: str, seed: int = 0, delta: float = 0.08) -> ModelPair:
    """Two models with identical observed-data laws but P(var) apart by ``delta``.

    Requires the self-masking edge ``var -> R_var`` with no other parents of
    the mechanism, and a binary domain for ``var``.  Model A makes ``var``
    independent of the remaining variables; model B reweights P(var) and the
    masking rates so every observed cell is unchanged.
    """
    r = mechanism_name(var)
    if var not in g.partial_vars or (var, r) not in g.directed:
        raise PatternNotApplicable(f"{var!r} is not self-masked in this graph")
    a = _flat_masking_model(g, var, seed)
    dom = a.domain(var)
    if len(dom) != 2:
        raise PatternNotApplicable("closed-form pair needs a binary variable")

    p = float(a.cpts[var].table[0, 1])
    mask = a.cpts[r].table  # rows: var value; columns: (R=0, R=1)
    y0 = (1 - p) * mask[0, 0]
    y1 = p * mask[1, 0]

    for d in (delta, -delta):
        q = p + d
        if not 0.0 < q < 1.0:
            continue
        keep1 = y1 / q
        keep0 = y0 / (1 - q)
        if not (0.0 < keep0 < 1.0 and 0.0 < keep1 < 1.0):
            continue
        cpts = dict(a.cpts)
        var_cpt = a.cpts[var]
        rows = var_cpt.table.shape[0]
        cpts[var] = Cpt(var_cpt.parents, np.repeat([[1 - q, q]], rows, axis=0))
        cpts[r] = Cpt((var,), np.array([[keep0, 1 - keep0], [keep1, 1 - keep1]]))
        b = DiscreteModel(a.graph, a.domains, cpts)
        gap = enumerate_observed(a).table.max_abs_diff(enumerate_observed(b).table)
        tgap = enumerate_joint(a).marginal([var]).max_abs_diff(enumerate_joint(b).marginal([var]))
        return ModelPair(a, b, var, gap, tgap)
    raise PatternNotApplicable(
        f"delta {delta} infeasible for the drawn masking rates; lower it or reseed"
    )


def _pack(m: DiscreteModel) -> Tuple[np.ndarray, list]:
    layout = []
    chunks = []
    for v in m.stochastic_nodes():
        t = m.cpts[v].table
        layout.append((v, t.shape))
        chunks.append(np.log(np.clip(t, 1e-9, None)).ravel())
    return np.concatenate(chunks), layout


def _unpack(theta: np.ndarray, layout, base: DiscreteModel) -> DiscreteModel:
    cpts: Dict[str, Cpt] = {}
    pos = 0
    for v, shape in layout:
        size = shape[0] * shape[1]
        logits = np.clip(theta[pos : pos + size].reshape(shape), -16.0, 16.0)
        pos += size
        ex = np.exp(logits - logits.max(axis=1, keepdims=True))
        cpts[v] = Cpt(base.cpts[v].parents, ex / ex.sum(axis=1, keepdims=True))
    return DiscreteModel(base.graph, base.domains, cpts)


def search_indistinguishable_pair(
    g: MGraph,
    target_vars,
    seed: int = 0,
    min_target_gap: float = 0.02,
    attempts: int = 12,
    match_tol: float = 1e-12,
) -> Optional[ModelPair]:
    """Seeded least-squares search for an observationally equivalent model.

    Fits a fresh random model's CPTs so its observed-data distribution
    matches model A's exactly; a fit that lands away from A on the
    equivalence manifold (the joint over ``target_vars`` differing by at
    least ``min_target_gap`` in some cell) is returned.  None means the
    search failed, which carries no evidence either way.
    """
    target_vars = sorted(target_vars)
    a = random_model(g, seed=seed)
    obs_a = enumerate_observed(a)
    target_a = enumerate_joint(a).marginal(target_vars)

    for k in range(attempts):
        start = random_model(g, seed=seed + 1000 + 997 * k)
        theta0, layout = _pack(start)

        def residual(theta):
            b = _unpack(theta, layout, a)
            return (enumerate_observed(b).table.values - obs_a.table.values).ravel()

        fit = least_squares(
            residual, theta0, method="trf", bounds=(-14.0, 14.0), xtol=1e-15, ftol=1e-15, gtol=1e-15
        )
        fit = least_squares(
            residual, fit.x, method="trf", bounds=(-14.0, 14.0), xtol=1e-15, ftol=1e-15, gtol=1e-15
        )
        b = _unpack(fit.x, layout, a)
        gap = float(np.abs(fit.fun).max())
        if gap > match_tol:
            continue
        tgap = target_a.max_abs_diff(enumerate_joint(b).marginal(target_vars))
        if tgap >= min_target_gap:
            return ModelPair(a, b, ",".join(target_vars), gap, tgap)
    return None
