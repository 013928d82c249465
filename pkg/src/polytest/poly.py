"""Multivariate polynomials in the parameter coordinates.

A polynomial is stored as a constant plus a list of terms, each term a real
coefficient together with a tuple of parameter indices (repeats allowed, so
``theta_1^2 theta_3`` is the tuple ``(1, 1, 3)``).  The representation is
deliberately index-tuple based rather than exponent-vector based: it maps
one-to-one onto the block assignment used when building unbiased kernel
estimators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InputError

Term = tuple[float, tuple[int, ...]]


@dataclass(frozen=True)
class PolynomialSpec:
    """A polynomial ``a0 + sum_r a_(i1..ir) theta_i1 ... theta_ir``.

    On construction, index tuples are sorted, textually different but equal
    terms are merged, and terms with coefficient zero are dropped, so two
    specs describing the same polynomial compare equal.

    Attributes:
      constant: the degree-zero coefficient a0.
      terms: normalized ``(coefficient, indices)`` pairs, coefficient != 0.
      dim: number of parameter coordinates; every index lies in [0, dim).
      total_degree: maximum index-tuple length (0 for a constant polynomial).
    """

    constant: float
    terms: tuple[Term, ...]
    dim: int
    total_degree: int = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise InputError(f"polynomial dimension must be >= 1, got {self.dim}")
        merged: dict[tuple[int, ...], float] = {}
        for coef, idx in self.terms:
            idx = tuple(sorted(int(i) for i in idx))
            if len(idx) == 0:
                raise InputError("empty index tuple; fold constants into 'constant'")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise InputError(
                    f"term index out of range: {idx} with dim {self.dim}"
                )
            merged[idx] = merged.get(idx, 0.0) + float(coef)
        norm = tuple(
            (c, idx) for idx, c in sorted(merged.items()) if c != 0.0
        )
        object.__setattr__(self, "terms", norm)
        object.__setattr__(self, "constant", float(self.constant))
        degree = max((len(idx) for _, idx in norm), default=0)
        object.__setattr__(self, "total_degree", degree)

    def evaluate(self, theta: Sequence[float]) -> float:
        """Evaluate the polynomial at a parameter vector of length ``dim``."""
        if len(theta) != self.dim:
            raise InputError(
                f"parameter vector has length {len(theta)}, expected {self.dim}"
            )
        value = self.constant
        for coef, idx in self.terms:
            prod = coef
            for i in idx:
                prod *= theta[i]
            value += prod
        return value

    def scaled(self, factor: float) -> "PolynomialSpec":
        """Return the polynomial multiplied by a scalar."""
        return PolynomialSpec(
            self.constant * factor,
            tuple((c * factor, idx) for c, idx in self.terms),
            self.dim,
        )

    def negated(self) -> "PolynomialSpec":
        return self.scaled(-1.0)


# --- constraint text format -------------------------------------------------
#
# One constraint per line:
#
#     <label> <op> : <expr>
#
# where op is "eq" (f = 0) or "le" (f <= 0) and <expr> is a signed sum of
# terms.  Each term is an optional real coefficient and zero or more factors
# "t<i>" joined by "*", e.g.
#
#     tetrad_a eq : 1*t1*t6 - 1*t2*t4
#     shifted  le : -2.5*t0*t0 + t3 + 0.75
#
# A term without factors contributes to the constant.  Lines that are blank
# or start with "#" are ignored.

_FACTOR_RE = re.compile(r"^t(\d+)$")


def _split_terms(expr: str, where: str) -> list[tuple[int, str]]:
    """Split into (sign, body) pairs on +/- that are not exponent signs."""
    tokens: list[tuple[int, str]] = []
    sign = 1
    body: list[str] = []
    for i, c in enumerate(expr):
        if c in "+-":
            prev = expr[:i].rstrip()
            is_exponent = (
                len(prev) >= 2 and prev[-1] in "eE" and prev[-2].isdigit()
            )
            if not is_exponent:
                if body and "".join(body).strip():
                    tokens.append((sign, "".join(body).strip()))
                elif tokens or "".join(body).strip():
                    raise InputError(f"{where}: dangling sign near position {i}")
                sign = -1 if c == "-" else 1
                body = []
                continue
        body.append(c)
    tail = "".join(body).strip()
    if not tail:
        raise InputError(f"{where}: empty polynomial expression")
    tokens.append((sign, tail))
    return tokens


def _parse_expr(expr: str, dim: int, where: str) -> tuple[float, list[Term]]:
    tokens = _split_terms(expr.strip(), where)
    constant = 0.0
    terms: list[Term] = []
    for sign, body in tokens:
        coef = float(sign)
        indices: list[int] = []
        saw_coef = False
        for factor in body.split("*"):
            factor = factor.strip()
            if not factor:
                raise InputError(f"{where}: empty factor in {body!r}")
            fm = _FACTOR_RE.match(factor)
            if fm:
                idx = int(fm.group(1))
                if idx >= dim:
                    raise InputError(
                        f"{where}: parameter index t{idx} out of range (dim {dim})"
                    )
                indices.append(idx)
            else:
                if saw_coef:
                    raise InputError(f"{where}: two coefficients in {body!r}")
                try:
                    coef *= float(factor)
                except ValueError as exc:
                    raise InputError(
                        f"{where}: bad coefficient {factor!r}"
                    ) from exc
                saw_coef = True
        if indices:
            terms.append((coef, tuple(indices)))
        else:
            constant += coef
    return constant, terms


def parse_constraint_line(
    line: str, dim: int, where: str = "constraint"
) -> tuple[str, str, PolynomialSpec]:
    """Parse one ``<label> <op> : <expr>`` line into (label, kind, polynomial)."""
    head, sep, expr = line.partition(":")
    if not sep:
        raise InputError(f"{where}: missing ':' separator")
    fields = head.split()
    if len(fields) != 2:
        raise InputError(f"{where}: expected '<label> <op> :', got {head!r}")
    label, op = fields
    if op not in ("eq", "le"):
        raise InputError(f"{where}: operator must be 'eq' or 'le', got {op!r}")
    constant, terms = _parse_expr(expr, dim, where)
    return label, op, PolynomialSpec(constant, tuple(terms), dim)


def parse_constraints(
    lines: Iterable[str], dim: int, source: str = "<constraints>"
) -> list[tuple[str, str, PolynomialSpec]]:
    """Parse a constraint-set text into a list of (label, kind, polynomial)."""
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append(parse_constraint_line(line, dim, f"{source}:{lineno}"))
    return out


def format_constraint(label: str, kind: str, poly: PolynomialSpec) -> str:
    """Render a constraint back into the text format."""
    parts = []
    if poly.constant != 0.0 or not poly.terms:
        parts.append(repr(poly.constant))
    for coef, idx in poly.terms:
        term = "*".join([repr(coef)] + [f"t{i}" for i in idx])
        parts.append(term)
    expr = " + ".join(parts).replace("+ -", "- ")
    return f"{label} {kind} : {expr}"
