"""Classification of the missingness mechanism: MCAR, MAR or MNAR.

The classes are graphical.  Missingness is completely at random when the
mechanism variables are jointly independent of every substantive and latent
variable; it is (variable-level) at random when that independence holds
conditional on the fully observed variables.  Anything else is MNAR.  Two
decision routes are implemented, a d-separation test and a direct edge
inspection, and they are required to agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

from .dsep import SepQuery, d_separated
from .errors import ModelOutsideStandardClass
from .graph import MGraph, NodeKind, expand_latents

__all__ = ["MissingnessClass", "Classification", "classify", "classify_by_edges"]


class MissingnessClass(Enum):
    MCAR = "MCAR"
    MAR = "MAR"
    MNAR = "MNAR"
    NO_MISSINGNESS = "NONE"


@dataclass(frozen=True)
class Classification:
    missingness_class: MissingnessClass
    # Edges that defeat the MAR condition; empty unless MNAR.
    witnesses: Tuple[str, ...] = ()

    @property
    def label(self) -> str:
        # Variable-level MAR, as opposed to Rubin's event-level notion.
        if self.missingness_class is MissingnessClass.MAR:
            return "v-MAR"
        return self.missingness_class.value


def _require_standard(g: MGraph) -> None:
    for r in g.mechanism_vars:
        for c in g.children(r):
            if g.kinds[c] not in (NodeKind.PROXY, NodeKind.MECHANISM):
                raise ModelOutsideStandardClass(
                    f"mechanism {r!r} has substantive child {c!r}; "
                    "the taxonomy is defined for standard m-graphs only"
                )


def classify(g: MGraph) -> Classification:
    """Classify by d-separation on the latent-expanded graph."""
    _require_standard(g)
    if not g.partial_vars:
        return Classification(MissingnessClass.NO_MISSINGNESS)
    ex = expand_latents(g)
    mech = frozenset(ex.mechanism_vars)
    v_o = frozenset(ex.observed_vars)
    v_m = frozenset(ex.partial_vars)
    latents = frozenset(ex.latent_vars)
    if d_separated(ex, SepQuery(v_m | v_o | latents, mech, frozenset())):
        return Classification(MissingnessClass.MCAR)
    if d_separated(ex, SepQuery(v_m | latents, mech, v_o)):
        return Classification(MissingnessClass.MAR)
    return Classification(MissingnessClass.MNAR, witnesses=_mnar_witnesses(g))


def classify_by_edges(g: MGraph) -> Classification:
    """Classify by inspecting edges incident to mechanism nodes.

    MCAR: every mechanism's parents are mechanisms and no bidirected edge
    touches a mechanism.  MAR additionally admits fully observed parents.
    """
    _require_standard(g)
    if not g.partial_vars:
        return Classification(MissingnessClass.NO_MISSINGNESS)
    mech = g.mechanism_vars
    bidirected_on_mech = any(a in mech or b in mech for a, b in g.bidirected)
    parent_kinds = {
        r: {g.kinds[p] for p in g.parents(r)} for r in mech
    }
    mcar_ok = not bidirected_on_mech and all(
        kinds <= {NodeKind.MECHANISM} for kinds in parent_kinds.values()
    )
    if mcar_ok:
        return Classification(MissingnessClass.MCAR)
    mar_ok = not bidirected_on_mech and all(
        kinds <= {NodeKind.MECHANISM, NodeKind.OBSERVED} for kinds in parent_kinds.values()
    )
    if mar_ok:
        return Classification(MissingnessClass.MAR)
    return Classification(MissingnessClass.MNAR, witnesses=_mnar_witnesses(g))


def _mnar_witnesses(g: MGraph) -> Tuple[str, ...]:
    """Edges incident to mechanisms that defeat the MAR condition."""
    mech = g.mechanism_vars
    out: List[str] = []
    for r in sorted(mech):
        for p in sorted(g.parents(r)):
            if g.kinds[p] in (NodeKind.PARTIAL, NodeKind.LATENT):
                out.append(f"{p} -> {r}")
    for a, b in sorted(g.bidirected):
        if a in mech or b in mech:
            out.append(f"{a} <-> {b}")
    return tuple(out)
