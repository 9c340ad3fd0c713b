"""Sparse homogeneous multivariate polynomials and symmetric-tensor coordinates.

Coefficients are duck-typed: floats for numeric work, ints or
``fractions.Fraction`` when identities must hold exactly. The monomial
order everywhere is graded-lexicographic with x[0] greatest; since all
terms of a homogeneous polynomial share one degree, this is descending
lexicographic order on exponent vectors.
"""

from __future__ import annotations

import json
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .errors import LengthMismatch, VarMismatch


def exponents_iter(nvars: int, degree: int) -> Iterator[tuple[int, ...]]:
    """Yield all exponent vectors of the given total degree in graded-lex order."""
    if nvars == 1:
        yield (degree,)
        return
    for head in range(degree, -1, -1):
        for tail in exponents_iter(nvars - 1, degree - head):
            yield (head,) + tail


class MonomialBasis:
    """Index <-> exponent bijection for the monomials of one degree.

    The basis of the space of symmetric tensors of degree ``degree`` in
    ``nvars`` variables; its size is C(nvars + degree - 1, degree).
    """

    def __init__(self, nvars: int, degree: int):
        if nvars < 1 or degree < 0:
            raise ValueError(f"need nvars >= 1 and degree >= 0, got ({nvars}, {degree})")
        self.nvars = nvars
        self.degree = degree
        self.exponents = list(exponents_iter(nvars, degree))
        self.index = {e: i for i, e in enumerate(self.exponents)}
        assert len(self.exponents) == comb(nvars + degree - 1, degree)

    def __len__(self):
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)


_BASIS_CACHE: dict[tuple[int, int], MonomialBasis] = {}


def monomial_basis(nvars: int, degree: int) -> MonomialBasis:
    key = (nvars, degree)
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = MonomialBasis(nvars, degree)
    return _BASIS_CACHE[key]


class HomoPoly:
    """Homogeneous polynomial stored as a map exponent-vector -> coefficient.

    Invariants: every stored exponent vector sums to ``degree``; zero
    coefficients are never stored; iteration over terms is graded-lex.
    """

    __slots__ = ("nvars", "degree", "terms")

    def __init__(self, nvars: int, degree: int, terms: dict | None = None):
        self.nvars = nvars
        self.degree = degree
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c == 0:
                    continue
                e = tuple(e)
                if len(e) != nvars or sum(e) != degree or any(a < 0 for a in e):
                    raise ValueError(f"exponent {e} invalid for degree-{degree} polynomial in {nvars} vars")
                self.terms[e] = c

    @classmethod
    def zero(cls, nvars: int, degree: int) -> "HomoPoly":
        return cls(nvars, degree)

    @classmethod
    def variable(cls, nvars: int, index: int, coeff=1) -> "HomoPoly":
        e = tuple(1 if i == index else 0 for i in range(nvars))
        return cls(nvars, 1, {e: coeff})

    @classmethod
    def constant(cls, nvars: int, value) -> "HomoPoly":
        return cls(nvars, 0, {(0,) * nvars: value})

    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        """Terms in graded-lex order (x[0] greatest)."""
        return sorted(self.terms.items(), key=lambda kv: kv[0], reverse=True)

    def __eq__(self, other):
        return (isinstance(other, HomoPoly) and self.nvars == other.nvars
                and self.degree == other.degree and self.terms == other.terms)

    def __hash__(self):
        return hash((self.nvars, self.degree, frozenset(self.terms.items())))

    def __repr__(self):
        if self.is_zero():
            return "0"
        parts = []
        for e, c in self.items():
            mono = "*".join(f"x{i}^{p}" if p > 1 else f"x{i}"
                            for i, p in enumerate(e) if p > 0)
            parts.append(f"{c}*{mono}" if mono else f"{c}")
        return " + ".join(parts)

    def __add__(self, other: "HomoPoly") -> "HomoPoly":
        if self.nvars != other.nvars:
            raise VarMismatch(f"{self.nvars} vs {other.nvars} variables")
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self.degree != other.degree:
            raise ValueError(f"cannot add degrees {self.degree} and {other.degree}")
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, 0) + c
            if s == 0:
                out.pop(e, None)
            else:
                out[e] = s
        p = HomoPoly(self.nvars, self.degree)
        p.terms = out
        return p

    def __neg__(self):
        p = HomoPoly(self.nvars, self.degree)
        p.terms = {e: -c for e, c in self.terms.items()}
        return p

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, HomoPoly):
            return poly_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, r: int):
        return poly_pow(self, r)

    def scale(self, c) -> "HomoPoly":
        p = HomoPoly(self.nvars, self.degree)
        if c != 0:
            p.terms = {e: c * v for e, v in self.terms.items()}
        return p

    def shift_vars(self, offset: int) -> "HomoPoly":
        """Rename x[i] -> x[i + offset]; the support must stay inside nvars."""
        out = {}
        for e, c in self.terms.items():
            support = [i for i, p in enumerate(e) if p > 0]
            if support and (support[-1] + offset >= self.nvars or support[0] + offset < 0):
                raise ValueError("shifted monomial leaves the variable range")
            ne = [0] * self.nvars
            for i, p in enumerate(e):
                if p:
                    ne[i + offset] = p
            out[tuple(ne)] = c
        p = HomoPoly(self.nvars, self.degree)
        p.terms = out
        return p

    def partial(self, i: int) -> "HomoPoly":
        """Formal partial derivative with respect to x[i] (degree drops by one)."""
        out = HomoPoly(self.nvars, max(self.degree - 1, 0))
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            out.terms[tuple(ne)] = c * e[i]
        return out


def poly_mul(p: HomoPoly, q: HomoPoly) -> HomoPoly:
    """Product of homogeneous polynomials; degrees add."""
    if p.nvars != q.nvars:
        raise VarMismatch(f"{p.nvars} vs {q.nvars} variables")
    out = {}
    for e1, c1 in p.terms.items():
        for e2, c2 in q.terms.items():
            c = c1 * c2
            if c == 0:
                continue
            e = tuple(a + b for a, b in zip(e1, e2))
            s = out.get(e, 0) + c
            if s == 0:
                out.pop(e, None)
            else:
                out[e] = s
    res = HomoPoly(p.nvars, p.degree + q.degree)
    res.terms = out
    return res


def poly_pow(p: HomoPoly, r: int) -> HomoPoly:
    """r-th power by binary exponentiation; poly_pow(p, 0) is the constant 1."""
    if r < 0:
        raise ValueError("negative power")
    result = HomoPoly.constant(p.nvars, 1)
    base = p
    while r:
        if r & 1:
            result = poly_mul(result, base)
        base_needed = r >> 1
        if base_needed:
            base = poly_mul(base, base)
        r = base_needed
    return result


def evaluate(p: HomoPoly, x: Sequence) -> object:
    if len(x) != p.nvars:
        raise LengthMismatch(f"point has {len(x)} coordinates, polynomial has {p.nvars} variables")
    total = 0
    for e, c in p.terms.items():
        v = c
        for xi, pw in zip(x, e):
            if pw:
                v = v * xi ** pw
        total = total + v
    return total


def sym_coords(p: HomoPoly) -> np.ndarray:
    """Dense coefficient vector in the graded-lex monomial basis.

    The pairing <sym_coords(p), veronese(x, deg p)> equals evaluate(p, x);
    no multinomial weights enter, the basis is the raw monomial one.
    """
    basis = monomial_basis(p.nvars, p.degree)
    coeffs = [p.terms.get(e, 0) for e in basis.exponents]
    return np.asarray(coeffs)


def poly_from_coords(coords, nvars: int, degree: int) -> HomoPoly:
    """Inverse of sym_coords."""
    basis = monomial_basis(nvars, degree)
    if len(coords) != len(basis):
        raise LengthMismatch(f"expected {len(basis)} coordinates, got {len(coords)}")
    return HomoPoly(nvars, degree, dict(zip(basis.exponents, coords)))


def veronese(x: Sequence, degree: int) -> np.ndarray:
    """All degree-``degree`` monomials of x, graded-lex order."""
    basis = monomial_basis(len(x), degree)
    vals = []
    for e in basis.exponents:
        v = 1
        for xi, pw in zip(x, e):
            if pw:
                v = v * xi ** pw
        vals.append(v)
    return np.asarray(vals)


def _coeff_to_json(c):
    if isinstance(c, (int, float)):
        return c
    if isinstance(c, np.integer):
        return int(c)
    if isinstance(c, np.floating):
        return float(c)
    num, den = c.as_integer_ratio()
    return int(num) if den == 1 else f"{num}/{den}"


def _coeff_from_json(c):
    if isinstance(c, str):
        from fractions import Fraction
        return Fraction(c)
    return c


def to_json(p: HomoPoly) -> str:
    """Serialize as {"nvars":n,"degree":d,"terms":[{"e":[...],"c":num}...]}.

    Terms appear in graded-lex order. Non-integral exact coefficients are
    written as "num/den" strings so the round trip stays exact.
    """
    terms = [{"e": list(e), "c": _coeff_to_json(c)} for e, c in p.items()]
    return json.dumps({"nvars": p.nvars, "degree": p.degree, "terms": terms})


def from_json(s: str) -> HomoPoly:
    d = json.loads(s)
    terms = {tuple(t["e"]): _coeff_from_json(t["c"]) for t in d["terms"]}
    return HomoPoly(d["nvars"], d["degree"], terms)
