"""Differential of the parametrization w -> coefficients of phi_w.

The matrix is built two independent ways and cross-checked: a layerwise
Leibniz recursion on the network polynomials, and the chain rule through
the Segre-Veronese embedding (exact product-rule derivatives of monomials,
then the fixed factorization matrix). For r > 1 and all filters nonzero
the kernel has dimension exactly L - 1, spanned by the per-filter scaling
directions; both facts are checked numerically here.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import poly
from .conv import Architecture
from .errors import FormulaMismatch, ZeroFilter
from .network import (WeightTuple, factorization_matrix_cached, layer_degrees,
                      sv_basis, sym_stack, symbolic_network)
from .poly import HomoPoly

KERNEL_TOL = 1e-7          # relative SVD threshold for kernel dimension
ROUTE_AGREEMENT_TOL = 1e-9  # the two constructions must agree to this, relative
SPECTRUM_BAND = (1e-9, 1e-5)  # singular values in this relative band are ambiguous


def _conv_polys(f, s: int, polys: list[HomoPoly], d_out: int) -> list[HomoPoly]:
    out = []
    for i in range(d_out):
        acc = HomoPoly.zero(polys[0].nvars, polys[0].degree)
        for j, fj in enumerate(f):
            acc = acc + polys[s * i + j].scale(fj)
        out.append(acc)
    return out


def jacobian_recursive(arch: Architecture, w: WeightTuple) -> np.ndarray:
    """Columns d(phi coefficients)/d(parameter) via the Leibniz recursion.

    Peeling the last layer, the differential applied to a tangent tuple is
    (last-filter perturbation convolved with sigma_r of the truncated net)
    plus r times (last filter convolved with sigma_{r-1} of the truncated
    net times the truncated differential), entrywise products throughout.
    """
    w.check_sizes(arch)
    d0, r = arch.d0, arch.r
    # phi of the first i layers and its per-parameter differential, as polys
    phi = [HomoPoly.variable(d0, j) for j in range(d0)]
    s0, k0, d1 = arch.s[0], arch.k[0], arch.d[1]
    cols: list[list[HomoPoly]] = []
    for j in range(k0):
        unit = [1 if jj == j else 0 for jj in range(k0)]
        cols.append(_conv_polys(unit, s0, phi, d1))
    phi = _conv_polys(list(w.filters[0]), s0, phi, d1)
    for i in range(1, arch.L):
        s, k, d_next = arch.s[i], arch.k[i], arch.d[i + 1]
        fi = list(w.filters[i])
        act = [poly.poly_pow(p, r) for p in phi]
        act_dm1 = [poly.poly_pow(p, r - 1) for p in phi]
        new_cols = []
        for col in cols:  # parameters of earlier layers
            had = [poly.poly_mul(a, c) for a, c in zip(act_dm1, col)]
            new_cols.append([p.scale(r) for p in _conv_polys(fi, s, had, d_next)])
        for j in range(k):  # parameters of layer i
            unit = [1 if jj == j else 0 for jj in range(k)]
            new_cols.append(_conv_polys(unit, s, act, d_next))
        cols = new_cols
        phi = _conv_polys(fi, s, act, d_next)
    return np.column_stack([sym_stack(arch, col).astype(float) for col in cols])


def sv_point(arch: Architecture, theta: np.ndarray) -> np.ndarray:
    """Segre-Veronese coordinates as monomials theta^E, E the exponent rows."""
    E = sv_basis(arch).exponent_matrix
    return np.prod(np.asarray(theta, dtype=float) ** E, axis=1)


def sv_differential(arch: Architecture, theta: np.ndarray) -> np.ndarray:
    """Exact product-rule differential of the embedding, one column per parameter."""
    E = sv_basis(arch).exponent_matrix
    theta = np.asarray(theta, dtype=float)
    C, P = E.shape
    D = np.zeros((C, P))
    for p in range(P):
        rows = E[:, p] > 0
        if not np.any(rows):
            continue
        Em = E[rows].copy()
        Em[:, p] -= 1
        D[rows, p] = E[rows, p] * np.prod(theta ** Em, axis=1)
    return D


def jacobian_via_embedding(arch: Architecture, w: WeightTuple) -> np.ndarray:
    Lam = factorization_matrix_cached(arch)
    return Lam @ sv_differential(arch, w.flat())


def jacobian(arch: Architecture, w: WeightTuple, check: bool = True) -> np.ndarray:
    """The differential at w, rows indexed by (output, monomial), columns by
    parameters. With check=True both constructions run and must agree."""
    J = jacobian_via_embedding(arch, w)
    if check:
        J2 = jacobian_recursive(arch, w)
        scale = max(np.linalg.norm(J), 1.0)
        if np.linalg.norm(J - J2) > ROUTE_AGREEMENT_TOL * scale:
            raise FormulaMismatch("recursive and embedding Jacobians disagree")
    return J


def claimed_kernel_basis(arch: Architecture, w: WeightTuple) -> list[np.ndarray]:
    """The L-1 scaling directions that span the kernel of the differential.

    Vector i (top to bottom pair) places w_i in block i and -r*w_{i+1} in
    block i+1, zeros elsewhere; requires every filter nonzero.
    """
    w.check_sizes(arch)
    if not w.all_nonzero():
        raise ZeroFilter("kernel description assumes all filters nonzero")
    offs = np.cumsum([0] + list(arch.k))
    out = []
    for i in range(arch.L - 2, -1, -1):
        v = np.zeros(arch.total_k)
        v[offs[i]: offs[i + 1]] = np.asarray(w.filters[i], dtype=float)
        v[offs[i + 1]: offs[i + 2]] = -arch.r * np.asarray(w.filters[i + 1], dtype=float)
        out.append(v)
    return out


def scaling_identity_check(arch: Architecture, w: WeightTuple, lam) -> float:
    """Residual of the per-filter scaling identity.

    The differential sends (lam_0 w_0, ..., lam_{L-1} w_{L-1}) to
    (sum_i r^(L-1-i) lam_i) * phi_w; returns the norm of the difference.
    """
    w.check_sizes(arch)
    lam = np.asarray(lam, dtype=float)
    J = jacobian_via_embedding(arch, w)
    v = np.concatenate([li * np.asarray(f, dtype=float) for li, f in zip(lam, w.filters)])
    weights = np.array(layer_degrees(arch), dtype=float)
    coeff = float(weights @ lam)
    m = sym_stack(arch, symbolic_network(arch, w)).astype(float)
    return float(np.linalg.norm(J @ v - coeff * m))


def kernel_dim(arch: Architecture, w: WeightTuple, tol: float = KERNEL_TOL) -> int:
    """Number of singular values of the differential below tol * sigma_max.

    Warns when the spectrum has a value inside the ambiguous relative band,
    where zero modes and genuine directions cannot be told apart.
    """
    J = jacobian_via_embedding(arch, w)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] == 0:
        return J.shape[1]
    rel = sv / sv[0]
    lo, hi = SPECTRUM_BAND
    if np.any((rel > lo) & (rel < hi)):
        warnings.warn("degenerate spectrum: singular value in the ambiguous band",
                      RuntimeWarning, stacklevel=2)
    return int(np.sum(rel <= tol))


def kernel_principal_angle(arch: Architecture, w: WeightTuple) -> float:
    """Largest principal angle between the numeric kernel of the differential
    and the span of the claimed scaling directions (radians)."""
    J = jacobian_via_embedding(arch, w)
    U, sv, Vt = np.linalg.svd(J)
    ker_dim = int(np.sum(sv <= KERNEL_TOL * sv[0]))
    ncols = J.shape[1]
    K = Vt[ncols - ker_dim:].T if ker_dim else np.zeros((ncols, 0))
    B = np.column_stack(claimed_kernel_basis(arch, w)) if arch.L > 1 else np.zeros((ncols, 0))
    if B.shape[1] != ker_dim:
        return np.pi / 2
    if ker_dim == 0:
        return 0.0
    Qb, _ = np.linalg.qr(B)
    cosines = np.linalg.svd(K.T @ Qb, compute_uv=False)
    return float(np.arccos(np.clip(cosines.min(), -1.0, 1.0)))
