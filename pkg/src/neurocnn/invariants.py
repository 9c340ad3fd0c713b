"""Exact integer invariants of the neuromanifold: dimension, degree, and
generic Euclidean distance degree (gED).

Everything here runs in exact rational arithmetic; values grow
super-exponentially with depth and must never touch floating point. The
gED is computed along two routes, a closed formula for the network and the
general Segre-Veronese formula specialized to the network's multidegrees,
and the two are asserted equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Iterator, Sequence

from .conv import Architecture
from .errors import (FormulaMismatch, NonIntegralDegree, NonIntegralGED,
                     RequiresRGreaterOne)


@dataclass
class InvariantReport:
    dim: int
    degree: int
    ged: int
    m: tuple[int, ...]
    p: tuple[int, ...]

    def as_dict(self):
        return {"dim": self.dim, "degree": self.degree, "ged": self.ged,
                "m": list(self.m), "p": list(self.p)}


def _bounded_compositions(total: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """All vectors alpha with |alpha| = total and 0 <= alpha_j <= caps[j],
    enumerated odometer style (first coordinate slowest)."""
    n = len(caps)

    def rec(pos: int, rem: int):
        if pos == n - 1:
            if rem <= caps[pos]:
                yield (rem,)
            return
        for a in range(min(rem, caps[pos]), -1, -1):
            for tail in rec(pos + 1, rem - a):
                yield (a,) + tail

    if n == 0:
        if total == 0:
            yield ()
        return
    yield from rec(0, total)


def _require_r_gt_1(arch: Architecture, what: str):
    if arch.r <= 1:
        raise RequiresRGreaterOne(f"{what} requires activation exponent r > 1")


def neuromanifold_dim(arch: Architecture) -> int:
    """dim = |k| - L + 1 (the affine cone over a product of projective spaces)."""
    _require_r_gt_1(arch, "the dimension formula")
    return arch.total_k - arch.L + 1


def neuromanifold_degree(arch: Architecture) -> int:
    """deg = (|k|-L)! * prod_j r^((L-j-1)(k_j-1)) / (k_j-1)!, exactly."""
    _require_r_gt_1(arch, "the degree formula")
    L, r = arch.L, arch.r
    val = Fraction(factorial(arch.total_k - L))
    for j, kj in enumerate(arch.k):
        val *= Fraction(r ** ((L - j - 1) * (kj - 1)), factorial(kj - 1))
    if val.denominator != 1:
        raise NonIntegralDegree(f"degree formula gave non-integer {val}")
    return int(val)


def ged_segre_veronese(m: Sequence[int], p: Sequence[int]) -> int:
    """gED of the Segre-Veronese variety with symmetric powers m over
    projective factors of dimensions p.

    sum over 0 <= i <= |p| of (-1)^i (2^(|p|+1-i) - 1) (|p|-i)! times the
    sum over |alpha| = i, alpha_j <= p_j of
    prod_j C(p_j+1, alpha_j) / (p_j - alpha_j)! * m_j^(p_j - alpha_j).
    """
    m, p = tuple(int(v) for v in m), tuple(int(v) for v in p)
    if len(m) != len(p) or any(v < 1 for v in m) or any(v < 0 for v in p):
        raise ValueError("need len(m) == len(p), m >= 1, p >= 0")
    P = sum(p)
    total = Fraction(0)
    for i in range(P + 1):
        inner = Fraction(0)
        for alpha in _bounded_compositions(i, p):
            term = Fraction(1)
            for pj, aj, mj in zip(p, alpha, m):
                term *= Fraction(comb(pj + 1, aj), factorial(pj - aj))
                term *= mj ** (pj - aj)
            inner += term
        total += (-1) ** i * (2 ** (P + 1 - i) - 1) * factorial(P - i) * inner
    if total.denominator != 1:
        raise NonIntegralGED(f"gED formula gave non-integer {total}")
    if total <= 0:
        raise NonIntegralGED(f"gED formula gave non-positive {total}")
    return int(total)


def _ged_network_formula(arch: Architecture) -> int:
    """Closed form in the architecture data, with kbar = |k| - L."""
    L, r = arch.L, arch.r
    kbar = arch.total_k - L
    caps = [kj - 1 for kj in arch.k]
    total = Fraction(0)
    for i in range(kbar + 1):
        inner = Fraction(0)
        for alpha in _bounded_compositions(i, caps):
            term = Fraction(1)
            for j, (kj, aj) in enumerate(zip(arch.k, alpha)):
                term *= Fraction(comb(kj, aj), factorial(kj - aj - 1))
                term *= r ** ((L - j - 1) * (kj - aj - 1))
            inner += term
        total += (-1) ** i * (2 ** (kbar + 1 - i) - 1) * factorial(kbar - i) * inner
    if total.denominator != 1:
        raise NonIntegralGED(f"network gED formula gave non-integer {total}")
    return int(total)


def network_multidegrees(arch: Architecture) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """The (m, p) of the Segre-Veronese variety the network factors through:
    m = (r^(L-1), ..., r, 1) and p = (k_0 - 1, ..., k_{L-1} - 1)."""
    m = tuple(arch.r ** (arch.L - 1 - i) for i in range(arch.L))
    p = tuple(kj - 1 for kj in arch.k)
    return m, p


def ged_neuromanifold(arch: Architecture) -> int:
    """gED of the neuromanifold; both the closed form and the Segre-Veronese
    specialization are evaluated and must agree exactly.

    The geometric interpretation needs r > 1, but the formula itself is
    well defined for every r >= 1 (r = 1 reproduces known linear values).
    """
    direct = _ged_network_formula(arch)
    m, p = network_multidegrees(arch)
    via_sv = ged_segre_veronese(m, p)
    if direct != via_sv:
        raise FormulaMismatch(f"gED routes disagree: {direct} vs {via_sv}")
    return direct


def invariant_report(arch: Architecture) -> InvariantReport:
    m, p = network_multidegrees(arch)
    return InvariantReport(dim=neuromanifold_dim(arch),
                           degree=neuromanifold_degree(arch),
                           ged=ged_neuromanifold(arch), m=m, p=p)


def ged_depth2_grid(r_values=range(1, 7), k_values=range(2, 7)) -> list[list[int]]:
    """gED of two-layer networks with equal filter sizes, one row per r."""
    from .conv import architecture_for_output
    grid = []
    for r in r_values:
        row = []
        for k in k_values:
            arch = architecture_for_output([k, k], [1, 1], r, d_out=1)
            row.append(ged_neuromanifold(arch))
        grid.append(row)
    return grid


# Frozen gED values for the two-layer equal-filter family, r = 1..6 down the
# rows and k = 2..6 across; regression anchor for the formulas above.
DEPTH2_GED_KNOWN = (
    (6, 39, 284, 2205, 17730),
    (14, 219, 3772, 68405, 1277898),
    (22, 543, 14684, 417005, 12186066),
    (30, 1011, 37244, 1439205, 57202074),
    (38, 1623, 75676, 3699005, 185917794),
    (46, 2379, 134204, 7933205, 482134890),
)
