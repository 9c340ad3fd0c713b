"""Fibers of the parametrization: per-filter rescaling, index-shift
symmetries of zero-padded filters, and the resulting singularity test.

Two weight tuples define the same network function exactly when they are
related by per-filter scalings acting trivially overall and by sliding
zero padding through the filters, subject to stride divisibility. Both
symmetries are realized constructively here.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .conv import Architecture
from .errors import InadmissibleShift, ZeroFilter
from .network import WeightTuple, layer_degrees, sym_stack, symbolic_network

PROJECTIVE_TOL = 1e-8  # normalized SymVector distance for projective equality


@dataclass
class CanonicalWeights:
    """Scaling-orbit representative of a weight tuple.

    All filters have unit Euclidean norm; filters 0..L-2 additionally have
    their first nonzero entry positive, while the last filter keeps the
    residual sign. scales[i] * weights.filters[i] recovers the input filter
    for i < L-1 (up to round-off); the last input filter is
    weights.filters[-1] * global_factor / prod_{i<L-1} scales[i]^(r^(L-1-i)).
    phi of the input tuple equals global_factor times phi of the canonical
    one, and global_factor is positive.
    """

    weights: WeightTuple
    scales: list[float]
    global_factor: float

    def reconstruct(self) -> WeightTuple:
        filters = [s * np.asarray(f, dtype=float)
                   for s, f in zip(self.scales, self.weights.filters)]
        return WeightTuple(filters)


def canonical_form(arch: Architecture, w: WeightTuple) -> CanonicalWeights:
    """Collapse the per-filter scaling orbit.

    Idempotent; tuples related by per-filter scalings whose combined action
    on phi is trivial map to the same canonical form, and the combined
    action is recorded in global_factor when it is not.
    """
    w.check_sizes(arch)
    if not w.all_nonzero():
        raise ZeroFilter("canonical form needs every filter nonzero")
    degrees = layer_degrees(arch)
    canon, scales = [], []
    carried = 1.0
    for i, f in enumerate(w.filters[:-1]):
        f = np.asarray(f, dtype=float)
        alpha = float(np.linalg.norm(f))
        lead = f[np.nonzero(f)[0][0]]
        if lead < 0:
            alpha = -alpha
        canon.append(f / alpha)
        scales.append(alpha)
        carried *= alpha ** degrees[i]
    last = np.asarray(w.filters[-1], dtype=float) * carried
    beta = float(np.linalg.norm(last))
    canon.append(last / beta)
    scales.append(beta / carried)
    return CanonicalWeights(weights=WeightTuple(canon), scales=scales, global_factor=beta)


def zero_profile(w: WeightTuple, tol: float = 0.0) -> list[tuple[int, int]]:
    """Leading and trailing zero counts per filter; |entry| <= tol counts as zero."""
    prof = []
    for f in w.filters:
        fa = np.asarray(f, dtype=float)
        nz = np.nonzero(np.abs(fa) > tol)[0]
        if len(nz) == 0:
            prof.append((len(fa), len(fa)))
        else:
            prof.append((int(nz[0]), int(len(fa) - 1 - nz[-1])))
    return prof


def shift_admissible(arch: Architecture, t) -> bool:
    """Stride-divisibility test for a shift vector.

    With tt_{-1} = 0 and tt_i = t_i + tt_{i-1} / s_{i-1}, every tt_i must be
    an integer and tt_{L-1} must vanish. Sign convention: t_i > 0 consumes
    zeros on the left of filter i, t_i < 0 zeros on the right.
    """
    tt = Fraction(0)
    for i, ti in enumerate(t):
        if i == 0:
            tt = Fraction(ti)
        else:
            tt = ti + tt / arch.s[i - 1]
        if tt.denominator != 1:
            return False
    return tt == 0


def admissible_shifts(arch: Architecture, profile) -> list[tuple[int, ...]]:
    """All shift vectors compatible with the given zero profile.

    profile[i] = (leading zeros, trailing zeros) of filter i. The zero
    shift is always included.
    """
    ranges = [range(-trail, lead + 1) for lead, trail in profile]
    out = [t for t in product(*ranges) if shift_admissible(arch, t)]
    assert (0,) * arch.L in out
    return out


def apply_shift(arch: Architecture, w: WeightTuple, t) -> WeightTuple:
    """Slide filter entries by t with zero fill; phi is preserved exactly.

    t_i > 0 moves entries of filter i left by t_i (its leading zeros are
    consumed); t_i < 0 moves them right. Raises InadmissibleShift when the
    shift would destroy a nonzero entry or violates stride divisibility.
    """
    w.check_sizes(arch)
    prof = zero_profile(w)
    for (lead, trail), ti in zip(prof, t):
        if ti > lead or -ti > trail:
            raise InadmissibleShift(f"shift {tuple(t)} exceeds available zero padding")
    if not shift_admissible(arch, t):
        raise InadmissibleShift(f"shift {tuple(t)} violates stride divisibility")
    shifted = []
    for f, ti in zip(w.filters, t):
        entries = list(f)
        pad = [0] * abs(ti)
        if ti > 0:
            entries = entries[ti:] + pad
        elif ti < 0:
            entries = pad + entries[:ti]
        shifted.append(np.asarray(entries))
    return WeightTuple(shifted)


def _normalized_sign_fixed(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    nz = np.nonzero(np.abs(v) > 1e-12)[0]
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return v


def same_function(arch: Architecture, w: WeightTuple, v: WeightTuple,
                  mode: str = "exact", tol: float = PROJECTIVE_TOL) -> bool:
    """Do w and v define the same network function?

    exact mode compares symbolic coefficients exactly (use int or Fraction
    entries); projective mode compares coefficient vectors after unit
    normalization and sign alignment, so it ignores one global rescaling.
    """
    pw = symbolic_network(arch, w)
    pv = symbolic_network(arch, v)
    if mode == "exact":
        return pw == pv
    if mode != "projective":
        raise ValueError(f"unknown mode {mode!r}")
    a = sym_stack(arch, pw).astype(float)
    b = sym_stack(arch, pv).astype(float)
    if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
        return np.linalg.norm(a) == np.linalg.norm(b)
    return bool(np.linalg.norm(_normalized_sign_fixed(a) - _normalized_sign_fixed(b)) < tol)


SMOOTH = "Smooth"
NODAL_SINGULAR = "NodalSingular"
CONE_VERTEX = "ConeVertex"


def is_singular_parameter(arch: Architecture, w: WeightTuple, zero_tol: float = 0.0) -> str:
    """Classify phi_w as a point of the neuromanifold.

    ConeVertex when phi_w is the zero function (equivalently, some filter
    vanishes); NodalSingular when the fiber through w contains several
    points, detected combinatorially as a nonzero admissible shift of w's
    zero profile; Smooth otherwise.
    """
    w.check_sizes(arch)
    prof = zero_profile(w, tol=zero_tol)
    if any(lead + trail >= ki for (lead, trail), ki in zip(prof, arch.k)):
        return CONE_VERTEX
    if len(admissible_shifts(arch, prof)) > 1:
        return NODAL_SINGULAR
    return SMOOTH
