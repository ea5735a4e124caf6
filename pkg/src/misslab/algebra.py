"""Symbolic expressions over the observed-data distribution.

An estimand is an expression tree over conditional-probability atoms of the
observed-data distribution P(V*, V_o, R): products, quotients, sums over a
variable's domain, and differences.  Equality is structural after
canonicalization (products flattened and sorted, atom items sorted); no
semantic rewriting is attempted, so ``P(A)*P(B)`` never equals ``P(A,B)``.

The canonical text grammar (also accepted by :func:`parse_estimand`)::

    expr     := chunk (" - " chunk)*
    chunk    := factor ((" * " | " / ") factor)*      # "/" binds the rest as denominator
    factor   := atom | "sum_{" names "}" "(" expr ")" | "(" expr ")"
    atom     := "P(" items ")" | "P(" items "|" items ")"
    items    := item ("," item)*
    item     := name | name "=" value

Mechanism conditions such as ``R_X=0`` are ordinary valued items; within an
atom, items sort substantive/proxy names first and mechanism names last.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .errors import MGraphSyntaxError, UnguardedPartialVariable
from .graph import MGraph, mechanism_name, proxy_name

__all__ = [
    "ProbAtom",
    "Product",
    "Quotient",
    "SumOver",
    "Difference",
    "Estimand",
    "atom",
    "canonicalize",
    "render",
    "equal",
    "free_vars",
    "substitute_proxies",
    "estimand_to_json",
    "estimand_from_json",
    "parse_estimand",
]

Item = Tuple[str, Optional[object]]


def _norm_items(items) -> Tuple[Item, ...]:
    out = []
    for it in items:
        if isinstance(it, str):
            out.append((it, None))
        else:
            name, value = it
            out.append((str(name), value))
    return tuple(sorted(out, key=_item_key))


def _item_key(item: Item):
    name, _ = item
    return (1 if name.startswith("R_") else 0, name)


@dataclass(frozen=True)
class ProbAtom:
    """One conditional-probability term P(targets | conditions).

    Items are ``(variable, value)`` pairs; a ``None`` value leaves the
    variable free.  Targets must be nonempty and disjoint from conditions.
    """

    targets: Tuple[Item, ...]
    conditions: Tuple[Item, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", _norm_items(self.targets))
        object.__setattr__(self, "conditions", _norm_items(self.conditions))
        if not self.targets:
            raise ValueError("atom needs at least one target")
        tnames = {n for n, _ in self.targets}
        cnames = {n for n, _ in self.conditions}
        if tnames & cnames:
            raise ValueError(f"targets and conditions overlap: {sorted(tnames & cnames)}")

    @property
    def names(self):
        return tuple(n for n, _ in self.targets) + tuple(n for n, _ in self.conditions)


@dataclass(frozen=True)
class Product:
    factors: Tuple["Estimand", ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("empty product")


@dataclass(frozen=True)
class Quotient:
    numerator: "Estimand"
    denominator: "Estimand"


@dataclass(frozen=True)
class SumOver:
    variables: Tuple[str, ...]
    body: "Estimand"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(sorted(set(self.variables))))
        if not self.variables:
            raise ValueError("sum binds no variable")
        fv = free_vars(self.body)
        for v in self.variables:
            if v not in fv:
                raise ValueError(f"sum binds {v!r} which is not free in its body")


@dataclass(frozen=True)
class Difference:
    left: "Estimand"
    right: "Estimand"


Estimand = Union[ProbAtom, Product, Quotient, SumOver, Difference]


def atom(targets, conditions=()) -> ProbAtom:
    """Convenience constructor accepting names or (name, value) pairs."""
    return ProbAtom(_norm_items(targets), _norm_items(conditions))


def free_vars(e: Estimand) -> frozenset:
    if isinstance(e, ProbAtom):
        return frozenset(n for n, v in e.targets + e.conditions if v is None)
    if isinstance(e, Product):
        out = frozenset()
        for f in e.factors:
            out |= free_vars(f)
        return out
    if isinstance(e, Quotient):
        return free_vars(e.numerator) | free_vars(e.denominator)
    if isinstance(e, SumOver):
        return free_vars(e.body) - frozenset(e.variables)
    if isinstance(e, Difference):
        return free_vars(e.left) | free_vars(e.right)
    raise TypeError(f"not an estimand: {e!r}")


def canonicalize(e: Estimand) -> Estimand:
    """Flatten nested products, sort factors, and recurse into children."""
    if isinstance(e, ProbAtom):
        return e
    if isinstance(e, Product):
        flat = []
        for f in e.factors:
            cf = canonicalize(f)
            if isinstance(cf, Product):
                flat.extend(cf.factors)
            else:
                flat.append(cf)
        if len(flat) == 1:
            return flat[0]
        return Product(tuple(sorted(flat, key=render)))
    if isinstance(e, Quotient):
        return Quotient(canonicalize(e.numerator), canonicalize(e.denominator))
    if isinstance(e, SumOver):
        return SumOver(e.variables, canonicalize(e.body))
    if isinstance(e, Difference):
        return Difference(canonicalize(e.left), canonicalize(e.right))
    raise TypeError(f"not an estimand: {e!r}")


def _render_item(item: Item) -> str:
    name, value = item
    return name if value is None else f"{name}={value}"


def _render_atom(a: ProbAtom) -> str:
    t = ",".join(_render_item(i) for i in a.targets)
    if a.conditions:
        c = ",".join(_render_item(i) for i in a.conditions)
        return f"P({t}|{c})"
    return f"P({t})"


def render(e: Estimand) -> str:
    """Deterministic canonical text; see the module docstring for the grammar."""
    e = e if isinstance(e, ProbAtom) else e

    def rec(node, *, as_factor=False):
        if isinstance(node, ProbAtom):
            return _render_atom(node)
        if isinstance(node, Product):
            factors = sorted((rec(f, as_factor=True) for f in node.factors))
            s = " * ".join(factors)
            return f"({s})" if as_factor else s
        if isinstance(node, Quotient):
            num = rec(node.numerator)
            den = rec(node.denominator, as_factor=True)
            if not isinstance(node.denominator, (ProbAtom,)):
                den = den if den.startswith("(") else f"({den})"
            s = f"{num} / {den}"
            return f"({s})" if as_factor else s
        if isinstance(node, SumOver):
            body = rec(node.body)
            s = "sum_{" + ",".join(node.variables) + "} (" + body + ")"
            return f"({s})" if as_factor else s
        if isinstance(node, Difference):
            return f"({rec(node.left)} - {rec(node.right)})"
        raise TypeError(f"not an estimand: {node!r}")

    return rec(canonicalize(e))


def equal(e1: Estimand, e2: Estimand) -> bool:
    """Structural equality after canonicalization."""
    return canonicalize(e1) == canonicalize(e2)


def _guarded(a: ProbAtom, var: str) -> bool:
    guard = (mechanism_name(var), 0)
    return guard in a.targets or guard in a.conditions


def substitute_proxies(e: Estimand, g: MGraph) -> Estimand:
    """Replace guarded partially observed variables with their proxies.

    Every atom mentioning a partial variable ``X`` must already carry the
    ``R_X=0`` condition (or target); the masking rule then licenses writing
    ``X*`` for ``X``.  An unguarded mention raises
    :class:`UnguardedPartialVariable`, which signals a recovery bug.
    Idempotent: proxies are left alone.
    """
    partial = g.partial_vars

    def sub_items(a: ProbAtom, items):
        out = []
        for name, value in items:
            if name in partial:
                if not _guarded(a, name):
                    raise UnguardedPartialVariable(
                        f"atom {_render_atom(a)} mentions {name!r} without {mechanism_name(name)}=0"
                    )
                out.append((proxy_name(name), value))
            else:
                out.append((name, value))
        return tuple(out)

    def rec(node):
        if isinstance(node, ProbAtom):
            return ProbAtom(sub_items(node, node.targets), sub_items(node, node.conditions))
        if isinstance(node, Product):
            return Product(tuple(rec(f) for f in node.factors))
        if isinstance(node, Quotient):
            return Quotient(rec(node.numerator), rec(node.denominator))
        if isinstance(node, SumOver):
            new_vars = tuple(proxy_name(v) if v in partial else v for v in node.variables)
            return SumOver(new_vars, rec(node.body))
        if isinstance(node, Difference):
            return Difference(rec(node.left), rec(node.right))
        raise TypeError(f"not an estimand: {node!r}")

    return canonicalize(rec(e))


# -- JSON serialization ---------------------------------------------------------

def _to_obj(e: Estimand):
    if isinstance(e, ProbAtom):
        return {
            "kind": "atom",
            "targets": [[n, v] for n, v in e.targets],
            "conditions": [[n, v] for n, v in e.conditions],
        }
    if isinstance(e, Product):
        return {"kind": "product", "factors": [_to_obj(f) for f in e.factors]}
    if isinstance(e, Quotient):
        return {
            "kind": "quotient",
            "numerator": _to_obj(e.numerator),
            "denominator": _to_obj(e.denominator),
        }
    if isinstance(e, SumOver):
        return {"kind": "sum", "variables": list(e.variables), "body": _to_obj(e.body)}
    if isinstance(e, Difference):
        return {"kind": "difference", "left": _to_obj(e.left), "right": _to_obj(e.right)}
    raise TypeError(f"not an estimand: {e!r}")


def _from_obj(obj) -> Estimand:
    kind = obj["kind"]
    if kind == "atom":
        return ProbAtom(
            tuple((n, v) for n, v in obj["targets"]),
            tuple((n, v) for n, v in obj["conditions"]),
        )
    if kind == "product":
        return Product(tuple(_from_obj(f) for f in obj["factors"]))
    if kind == "quotient":
        return Quotient(_from_obj(obj["numerator"]), _from_obj(obj["denominator"]))
    if kind == "sum":
        return SumOver(tuple(obj["variables"]), _from_obj(obj["body"]))
    if kind == "difference":
        return Difference(_from_obj(obj["left"]), _from_obj(obj["right"]))
    raise ValueError(f"unknown estimand kind {kind!r}")


def estimand_to_json(e: Estimand) -> str:
    return json.dumps(_to_obj(canonicalize(e)), sort_keys=True)


def estimand_from_json(text: str) -> Estimand:
    return canonicalize(_from_obj(json.loads(text)))


# -- text parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg):
        raise MGraphSyntaxError(f"estimand syntax: {msg}", 1, self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] == " ":
            self.pos += 1

    def peek(self, s: str) -> bool:
        self.skip_ws()
        return self.text.startswith(s, self.pos)

    def eat(self, s: str) -> bool:
        if self.peek(s):
            self.pos += len(s)
            return True
        return False

    def expect(self, s: str):
        if not self.eat(s):
            self.error(f"expected {s!r}")

    def token(self, stop: str) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in stop:
            self.pos += 1
        tok = self.text[start:self.pos].strip()
        if not tok:
            self.error("expected a name")
        return tok

    def parse_items(self, closing: str):
        items = []
        while True:
            tok = self.token(",|=" + closing)
            if self.eat("="):
                raw = self.token("," + "|" + closing)
                value: object = int(raw) if raw.lstrip("-").isdigit() else raw
                items.append((tok, value))
            else:
                items.append((tok, None))
            if not self.eat(","):
                return items

    def parse_atom(self) -> ProbAtom:
        self.expect("P(")
        targets = self.parse_items(")|")
        conditions = []
        if self.eat("|"):
            conditions = self.parse_items(")")
        self.expect(")")
        return ProbAtom(tuple(targets), tuple(conditions))

    def parse_factor(self) -> Estimand:
        if self.peek("P("):
            return self.parse_atom()
        if self.peek("sum_{"):
            self.expect("sum_{")
            names = [t.strip() for t in self.token("}").split(",")]
            self.expect("}")
            self.expect("(")
            body = self.parse_expr()
            self.expect(")")
            return SumOver(tuple(names), body)
        if self.eat("("):
            inner = self.parse_expr()
            self.expect(")")
            return inner
        self.error("expected an atom, sum, or parenthesized expression")

    def parse_chunk(self) -> Estimand:
        factors = [self.parse_factor()]
        while True:
            if self.eat("*"):
                factors.append(self.parse_factor())
            elif self.eat("/"):
                num = factors[0] if len(factors) == 1 else Product(tuple(factors))
                den_factors = [self.parse_factor()]
                while self.eat("*"):
                    den_factors.append(self.parse_factor())
                den = den_factors[0] if len(den_factors) == 1 else Product(tuple(den_factors))
                factors = [Quotient(num, den)]
            else:
                break
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def parse_expr(self) -> Estimand:
        left = self.parse_chunk()
        while self.eat("-"):
            right = self.parse_chunk()
            left = Difference(left, right)
        return left


def parse_estimand(text: str) -> Estimand:
    """Parse canonical estimand text; render(parse(s)) == s on canonical input."""
    p = _Parser(text)
    e = p.parse_expr()
    p.skip_ws()
    if p.pos != len(p.text):
        p.error("trailing input")
    return canonicalize(e)
