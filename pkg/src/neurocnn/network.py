"""The network parametrization: forward map, symbolic coefficient expansion,
the per-layer Veronese lift, and the factorization through the
Segre-Veronese embedding.

A weight tuple w = (w_0, ..., w_{L-1}) defines the map
phi_w(x) = w_{L-1} * sigma_r( ... sigma_r(w_0 * x)) with sigma_r the
entrywise r-th power; its entries are homogeneous polynomials in x of
degree r^(L-1). Writing nu for the map sending w to the tensor product of
the r^(L-1-i)-th symmetric powers of the w_i, the coefficient vector of
phi_w factors as a fixed linear map applied to nu(w).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import poly
from .conv import Architecture, convolve
from .errors import LengthMismatch, MaterializationLimit, ZeroFilter
from .poly import HomoPoly, monomial_basis

LAMBDA_ENTRY_LIMIT = 100_000  # guard for dense factorization matrices


@dataclass
class WeightTuple:
    """One filter per layer; filters[i] has length arch.k[i]."""

    filters: list

    @classmethod
    def from_flat(cls, arch: Architecture, theta: Sequence) -> "WeightTuple":
        theta = list(theta)
        if len(theta) != arch.total_k:
            raise LengthMismatch(f"expected {arch.total_k} parameters, got {len(theta)}")
        filters, pos = [], 0
        for ki in arch.k:
            filters.append(np.asarray(theta[pos: pos + ki]))
            pos += ki
        return cls(filters)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.asarray(f, dtype=float).ravel() for f in self.filters])

    def all_nonzero(self) -> bool:
        return all(np.any(np.asarray(f, dtype=float) != 0) for f in self.filters)

    def check_sizes(self, arch: Architecture):
        if len(self.filters) != arch.L or any(len(f) != ki for f, ki in zip(self.filters, arch.k)):
            raise LengthMismatch("filter sizes do not match the architecture")


def layer_degrees(arch: Architecture) -> list[int]:
    """Degree of phi_w in the entries of each filter: (r^(L-1), ..., r, 1)."""
    return [arch.r ** (arch.L - 1 - i) for i in range(arch.L)]


def forward(arch: Architecture, w: WeightTuple, x: Sequence) -> np.ndarray:
    """Evaluate the network; convolution and entrywise power alternate,
    and no activation follows the last convolution."""
    w.check_sizes(arch)
    if len(x) != arch.d0:
        raise LengthMismatch(f"input length {len(x)} != d0 = {arch.d0}")
    h = convolve(w.filters[0], arch.s[0], x)
    for i in range(1, arch.L):
        h = np.asarray(h) ** arch.r if isinstance(h, np.ndarray) else [v ** arch.r for v in h]
        h = convolve(w.filters[i], arch.s[i], h)
    return np.asarray(h) if isinstance(h, np.ndarray) else h


def symbolic_network(arch: Architecture, w: WeightTuple) -> list[HomoPoly]:
    """The d_L output entries of phi_w as polynomials in the d0 inputs.

    Exact when the filter entries are ints or Fractions. Entry i equals
    entry 0 with all input indices shifted by i times the stride product.
    """
    w.check_sizes(arch)
    h = [HomoPoly.variable(arch.d0, j) for j in range(arch.d0)]
    for i in range(arch.L):
        if i > 0:
            h = [poly.poly_pow(p, arch.r) for p in h]
        s, k, d_out = arch.s[i], arch.k[i], arch.d[i + 1]
        fi = list(w.filters[i])
        nxt = []
        for out in range(d_out):
            acc = HomoPoly.zero(arch.d0, h[0].degree)
            for j in range(k):
                acc = acc + h[s * out + j].scale(fi[j])
            nxt.append(acc)
        h = nxt
    return h


def sym_stack(arch: Architecture, polys: list[HomoPoly]) -> np.ndarray:
    """Stack the coefficient vectors of all outputs, output index major."""
    return np.concatenate([poly.sym_coords(p) for p in polys])


@dataclass
class LayerLift:
    """sigma_r(w *_s x) rewritten as a single convolution on lifted data.

    The lifted filter has one entry per multi-index a with |a| = r over the
    k filter slots, value multinomial(r; a) * prod_j w[j]^a_j. The lifted
    input has one block of those monomials per stride-1 window of x, so the
    lifted stride is s * len(block).
    """

    exponents: list[tuple[int, ...]]
    w_lift: np.ndarray
    s_lift: int
    k_lift: int

    def lift_input(self, x: Sequence) -> np.ndarray:
        k = len(self.exponents[0])
        nwin = len(x) - k + 1
        blocks = [poly.veronese(np.asarray(x)[i: i + k], sum(self.exponents[0])) for i in range(nwin)]
        return np.concatenate(blocks)


def _multinomial(r: int, a: tuple[int, ...]) -> int:
    out, rem = 1, r
    for ai in a:
        out *= comb(rem, ai)
        rem -= ai
    return out


def veronese_lift(w: Sequence, s: int, r: int) -> LayerLift:
    """Lift one activated layer to a plain convolution.

    Returns the lifted filter, the lifted stride s * C(r+k-1, r), and the
    recipe for the lifted input; sigma_r(w *_s x) == w_lift *_(s_lift) x_lift.
    """
    k = len(w)
    basis = monomial_basis(k, r)
    exps = basis.exponents
    vals = []
    for a in exps:
        v = _multinomial(r, a)
        for wj, aj in zip(w, a):
            if aj:
                v = v * wj ** aj
        vals.append(v)
    k_lift = len(exps)
    assert k_lift == comb(r + k - 1, r)
    return LayerLift(exponents=exps, w_lift=np.asarray(vals), s_lift=s * k_lift, k_lift=k_lift)


# ---------------------------------------------------------------------------
# Segre-Veronese coordinates and the factorization matrix
# ---------------------------------------------------------------------------

class SegreVeroneseBasis:
    """Flattened basis of the tensor product of per-layer symmetric powers.

    Column c corresponds to one choice of a degree-m_i monomial in the
    entries of filter i for every layer; columns are enumerated in
    row-major order over the per-layer graded-lex bases. Because the layer
    blocks are disjoint variable sets, each column is itself a monomial in
    all |k| parameters; ``exponent_matrix`` collects those exponents.
    """

    def __init__(self, arch: Architecture):
        self.arch = arch
        self.m = layer_degrees(arch)
        self.layer_bases = [monomial_basis(ki, mi) for ki, mi in zip(arch.k, self.m)]
        self.block_sizes = [len(b) for b in self.layer_bases]
        self.dim = int(np.prod(self.block_sizes))
        P = arch.total_k
        offs = np.cumsum([0] + list(arch.k))
        rows = []
        for combo in _product_indices(self.block_sizes):
            e = [0] * P
            for layer, idx in enumerate(combo):
                exp = self.layer_bases[layer].exponents[idx]
                for j, a in enumerate(exp):
                    e[offs[layer] + j] = a
            rows.append(e)
        self.exponent_matrix = np.array(rows, dtype=np.int64)
        self.index = {tuple(row): i for i, row in enumerate(rows)}


def _product_indices(sizes):
    if not sizes:
        yield ()
        return
    for head in range(sizes[0]):
        for tail in _product_indices(sizes[1:]):
            yield (head,) + tail


_SV_CACHE: dict[Architecture, SegreVeroneseBasis] = {}


def sv_basis(arch: Architecture) -> SegreVeroneseBasis:
    if arch not in _SV_CACHE:
        _SV_CACHE[arch] = SegreVeroneseBasis(arch)
    return _SV_CACHE[arch]


def segre_veronese_embed(w: WeightTuple, arch: Architecture) -> np.ndarray:
    """Coordinates of w under the Segre-Veronese embedding.

    Entry c is the product over layers of the c-th basis monomial evaluated
    at the corresponding filter; the result is a rank-one tensor of
    per-layer Veronese vectors.
    """
    w.check_sizes(arch)
    basis = sv_basis(arch)
    per_layer = [poly.veronese(list(f), m) for f, m in zip(w.filters, basis.m)]
    out = per_layer[0]
    for v in per_layer[1:]:
        out = np.multiply.outer(out, v).reshape(-1)
    return out


def bigraded_network(arch: Architecture) -> list[HomoPoly]:
    """phi with both filter entries and inputs treated as variables.

    Variables 0 .. |k|-1 are the filter entries in layer order, variables
    |k| .. |k|+d0-1 the inputs. Each output is homogeneous of degree
    sum_i r^(L-1-i) in the filter block plus r^(L-1) in the input block.
    """
    P, d0 = arch.total_k, arch.d0
    nvars = P + d0
    offs = np.cumsum([0] + list(arch.k))
    h = [HomoPoly.variable(nvars, P + j) for j in range(d0)]
    for i in range(arch.L):
        if i > 0:
            h = [poly.poly_pow(p, arch.r) for p in h]
        s, k, d_out = arch.s[i], arch.k[i], arch.d[i + 1]
        nxt = []
        for out in range(d_out):
            acc = None
            for j in range(k):
                wvar = HomoPoly.variable(nvars, offs[i] + j)
                term = poly.poly_mul(wvar, h[s * out + j])
                acc = term if acc is None else acc + term
            nxt.append(acc)
        h = nxt
    return h


def factorization_matrix(arch: Architecture) -> np.ndarray:
    """The linear map from Segre-Veronese coordinates of w to the stacked
    coefficient vector of phi_w.

    Built by bigraded expansion: each (output, input-monomial) coefficient
    of phi is a linear functional on the Segre-Veronese monomials in w.
    Satisfies factorization_matrix(arch) @ segre_veronese_embed(w, arch)
    == sym_stack(symbolic_network(w)) for every w.
    """
    basis = sv_basis(arch)
    N = comb(arch.d0 + arch.out_degree - 1, arch.out_degree)
    rows = arch.d_out * N
    if rows * basis.dim > LAMBDA_ENTRY_LIMIT:
        raise MaterializationLimit(
            f"factorization matrix would hold {rows * basis.dim} entries "
            f"(limit {LAMBDA_ENTRY_LIMIT})")
    P = arch.total_k
    x_basis = monomial_basis(arch.d0, arch.out_degree)
    Lam = np.zeros((rows, basis.dim))
    for out, q in enumerate(bigraded_network(arch)):
        for e, c in q.terms.items():
            e_w, e_x = e[:P], e[P:]
            row = out * N + x_basis.index[e_x]
            col = basis.index[e_w]
            Lam[row, col] += float(c)
    return Lam


_LAMBDA_CACHE: dict[Architecture, np.ndarray] = {}


def factorization_matrix_cached(arch: Architecture) -> np.ndarray:
    if arch not in _LAMBDA_CACHE:
        _LAMBDA_CACHE[arch] = factorization_matrix(arch)
    return _LAMBDA_CACHE[arch]


def require_nonzero_filters(w: WeightTuple):
    if not w.all_nonzero():
        raise ZeroFilter("all filters must be nonzero here")
