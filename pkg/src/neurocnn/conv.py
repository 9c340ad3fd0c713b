"""Strided 1-D convolution as linear algebra and as bivariate polynomial algebra.

A filter w of size k applied with stride s maps R^d -> R^d' where
d = s*(d' - 1) + k, via (w * x)[i] = sum_j w[j] x[s*i + j]. The same data
is carried by a banded d' x d Toeplitz matrix and by the bivariate form
pi_s(w) = sum_i w[i] a^(s(k-i-1)) b^(s i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, NonIntegralWidth, NonPositiveWidth, ZeroFilter
from .poly import HomoPoly

RANK_TOL = 1e-9  # relative singular value threshold for numeric rank


@dataclass(frozen=True)
class Architecture:
    """Layer plan of a polynomial convolutional network.

    r is the activation exponent (activation x -> x^r between layers),
    k[i] and s[i] the filter size and stride of layer i, and d the full
    width chain, d[0] the input width down to d[L] the output width.
    """

    r: int
    k: tuple[int, ...]
    s: tuple[int, ...]
    d: tuple[int, ...]

    @property
    def L(self) -> int:
        return len(self.k)

    @property
    def d0(self) -> int:
        return self.d[0]

    @property
    def d_out(self) -> int:
        return self.d[-1]

    @property
    def total_k(self) -> int:
        return sum(self.k)

    @property
    def out_degree(self) -> int:
        """Degree of the polynomial map computed by the network."""
        return self.r ** (self.L - 1)

    def spec_string(self) -> str:
        k = ",".join(str(v) for v in self.k)
        s = ",".join(str(v) for v in self.s)
        return f"d0={self.d0};k={k};s={s};r={self.r}"


def validate_architecture(d0: int, k: Sequence[int], s: Sequence[int], r: int) -> Architecture:
    """Build the width chain d[i+1] = (d[i] - k[i]) / s[i] + 1, validating integrality."""
    k = tuple(int(v) for v in k)
    s = tuple(int(v) for v in s)
    if len(k) != len(s) or not k:
        raise LengthMismatch(f"need equal nonempty filter/stride lists, got {len(k)} and {len(s)}")
    if any(v < 1 for v in k) or any(v < 1 for v in s) or r < 1 or d0 < 1:
        raise NonPositiveWidth("filter sizes, strides, r and d0 must all be >= 1")
    d = [int(d0)]
    for i, (ki, si) in enumerate(zip(k, s)):
        num = d[-1] - ki
        if num % si != 0:
            raise NonIntegralWidth(f"layer {i}: ({d[-1]} - {ki}) not divisible by stride {si}")
        nxt = num // si + 1
        if nxt < 1:
            raise NonPositiveWidth(f"layer {i}: output width {nxt} < 1")
        d.append(nxt)
    return Architecture(r=int(r), k=k, s=s, d=tuple(d))


def input_width(k: Sequence[int], s: Sequence[int], d_out: int) -> int:
    """Width chain run backwards: the d0 that yields output width d_out."""
    d = int(d_out)
    for ki, si in zip(reversed(k), reversed(s)):
        d = si * (d - 1) + ki
    return d


def architecture_for_output(k: Sequence[int], s: Sequence[int], r: int, d_out: int = 1) -> Architecture:
    return validate_architecture(input_width(k, s, d_out), k, s, r)


def toeplitz(w: Sequence, s: int, d_out: int) -> np.ndarray:
    """The d_out x (s*(d_out-1)+k) matrix of the stride-s convolution with w.

    Row i has support exactly {s*i, ..., s*i + k - 1} with entries w.
    """
    if d_out < 1:
        raise NonPositiveWidth(f"d_out must be >= 1, got {d_out}")
    w = np.asarray(w)
    k = len(w)
    d_in = s * (d_out - 1) + k
    T = np.zeros((d_out, d_in), dtype=w.dtype if w.dtype.kind == "f" else float)
    for i in range(d_out):
        T[i, s * i: s * i + k] = w
    return T


def convolve(w: Sequence, s: int, x: Sequence):
    """(w * x)[i] = sum_j w[j] x[s*i + j]; output length follows from len(x).

    Works on float arrays and on sequences of exact scalars alike.
    """
    k = len(w)
    if (len(x) - k) % s != 0 or len(x) < k:
        raise LengthMismatch(f"input length {len(x)} incompatible with k={k}, s={s}")
    d_out = (len(x) - k) // s + 1
    wa, xa = np.asarray(w), np.asarray(x)
    if wa.dtype.kind in "fiu" and xa.dtype.kind in "fiu":
        windows = np.stack([xa[s * i: s * i + k] for i in range(d_out)])
        return windows @ wa
    return [sum(w[j] * x[s * i + j] for j in range(k)) for i in range(d_out)]


def filter_to_poly(w: Sequence, s: int) -> HomoPoly:
    """The bivariate form pi_s(w) = sum_i w[i] a^(s(k-i-1)) b^(s i), degree s(k-1)."""
    k = len(w)
    terms = {}
    for i, wi in enumerate(w):
        if wi != 0:
            terms[(s * (k - i - 1), s * i)] = wi
    return HomoPoly(2, s * (k - 1), terms)


def compose_filters(v: Sequence, t: int, w: Sequence) -> list:
    """Filter q with pi_1(q) = pi_t(v) * pi_1(w).

    t is the stride at which w is applied first: for every outer stride u,
    v *_u (w *_t x) == q *_(t*u) x. The size of q is t*(len(v)-1) + len(w).
    """
    kv, kw = len(v), len(w)
    kq = t * (kv - 1) + kw
    q = [0] * kq
    for m in range(kv):
        for j in range(kw):
            q[t * m + j] = q[t * m + j] + v[m] * w[j]
    return q


def toeplitz_rank(w: Sequence, s: int, d_out: int, tol: float = RANK_TOL) -> int:
    """Numeric rank of the convolution matrix; full (= d_out) for nonzero w."""
    wa = np.asarray(w, dtype=float)
    if not np.any(wa):
        raise ZeroFilter("rank of the zero filter's convolution is degenerate")
    sv = np.linalg.svd(toeplitz(wa, s, d_out), compute_uv=False)
    return int(np.sum(sv > tol * sv[0]))
