"""Square-error regression on a polynomial network, rewritten as a weighted
distance problem in coefficient space.

For a dataset D the loss sum ||phi_w(x) - y||^2 equals, up to an additive
constant, the squared distance from the coefficient matrix of phi_w to the
unconstrained least-squares solution, measured in the Gram metric of the
Veronese-embedded inputs. The network coefficients always live inside a
convolution-structured subspace V, determined by their first output row;
projecting the anchor into V only shifts the constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .conv import Architecture
from .errors import IllConditionedProjection, ShapeMismatch, SingularGram
from .network import WeightTuple, forward, sym_stack, symbolic_network
from .poly import monomial_basis, veronese

PROJECTION_COND_LIMIT = 1e12


@dataclass
class Dataset:
    """Input-output pairs; xs is (n, d0) and ys is (n, d_L)."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        self.ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        if self.xs.shape[0] != self.ys.shape[0]:
            raise ShapeMismatch(f"{self.xs.shape[0]} inputs vs {self.ys.shape[0]} outputs")

    def __len__(self):
        return self.xs.shape[0]

    def check_shapes(self, arch: Architecture):
        if self.xs.shape[1] != arch.d0 or self.ys.shape[1] != arch.d_out:
            raise ShapeMismatch(
                f"dataset shapes {self.xs.shape[1]}/{self.ys.shape[1]} do not match "
                f"architecture widths {arch.d0}/{arch.d_out}")

    def save_jsonl(self, path):
        with open(path, "w") as fh:
            for x, y in zip(self.xs, self.ys):
                fh.write(json.dumps({"x": list(x), "y": list(y)}) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "Dataset":
        xs, ys = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                xs.append(rec["x"])
                ys.append(rec["y"])
        return cls(np.asarray(xs), np.asarray(ys))


def generate_dataset(arch: Architecture, n: int, mode: str = "generic",
                     noise: float = 0.1, seed: int = 0,
                     teacher: WeightTuple | None = None) -> Dataset:
    """Random dataset with standard-normal inputs.

    mode "generic" draws the targets standard normal as well; mode
    "teacher" evaluates a teacher network (random normal filters when not
    given) and adds Gaussian noise of the given scale.
    """
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, arch.d0))
    if mode == "generic":
        ys = rng.standard_normal((n, arch.d_out))
    elif mode == "teacher":
        if teacher is None:
            teacher = WeightTuple([rng.standard_normal(ki) for ki in arch.k])
        ys = np.stack([forward(arch, teacher, x) for x in xs])
        if noise:
            ys = ys + noise * rng.standard_normal(ys.shape)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Dataset(xs, ys)


def default_dataset_size(arch: Architecture, margin: int = 5) -> int:
    """N + margin, the smallest size we consider safely generic."""
    return sym_dim(arch) + margin


def sym_dim(arch: Architecture) -> int:
    return comb(arch.d0 + arch.out_degree - 1, arch.out_degree)


@dataclass
class DesignSystem:
    """Veronese design matrix and Gram data of a dataset.

    X (N x n) holds the degree-r^(L-1) Veronese coordinates of the inputs,
    Y (d_L x n) the targets, G = X X^T. The anchor Y X^T G^{-1} is the
    unconstrained least-squares coefficient matrix; asking for it on a
    rank-deficient design raises SingularGram.
    """

    arch: Architecture
    X: np.ndarray
    Y: np.ndarray
    G: np.ndarray
    rank: int
    full_rank: bool
    _anchor: np.ndarray | None = field(default=None, repr=False)
    _cho: tuple | None = field(default=None, repr=False)

    @property
    def anchor(self) -> np.ndarray:
        if self._anchor is None:
            self._anchor = cho_solve(self.cho, self.X @ self.Y.T).T
        return self._anchor

    @property
    def cho(self):
        if self._cho is None:
            if not self.full_rank:
                raise SingularGram(f"design rank {self.rank} < {self.X.shape[0]}")
            try:
                self._cho = cho_factor(self.G)
            except np.linalg.LinAlgError as exc:
                raise SingularGram("Gram matrix is not positive definite") from exc
        return self._cho

    def metric_blockdiag(self) -> np.ndarray:
        """G repeated per output coordinate, matching the stacked layout."""
        return np.kron(np.eye(self.arch.d_out), self.G)

    def stacked_anchor(self) -> np.ndarray:
        return self.anchor.ravel()

    def lstsq_residual(self) -> float:
        """Residual of the unconstrained least-squares fit, ||anchor X - Y||_F^2."""
        R = self.anchor @ self.X - self.Y
        return float(np.sum(R * R))


def design_system(data: Dataset, arch: Architecture) -> DesignSystem:
    data.check_shapes(arch)
    if len(data) < 1:
        raise ShapeMismatch("dataset is empty")
    deg = arch.out_degree
    X = np.column_stack([veronese(x, deg).astype(float) for x in data.xs])
    Y = data.ys.T.copy()
    G = X @ X.T
    rank = int(np.linalg.matrix_rank(X))
    return DesignSystem(arch=arch, X=X, Y=Y, G=G, rank=rank, full_rank=rank == X.shape[0])


def loss(arch: Architecture, w: WeightTuple, data: Dataset) -> float:
    """sum over pairs of ||phi_w(x) - y||^2; zero exactly at interpolation."""
    data.check_shapes(arch)
    total = 0.0
    for x, y in zip(data.xs, data.ys):
        resid = np.asarray(forward(arch, w, x), dtype=float) - y
        total += float(resid @ resid)
    return total


def coefficient_matrix(arch: Architecture, w: WeightTuple) -> np.ndarray:
    """Coefficients of phi_w arranged d_L x N."""
    m = sym_stack(arch, symbolic_network(arch, w)).astype(float)
    return m.reshape(arch.d_out, -1)


def loss_as_distance(arch: Architecture, w: WeightTuple, data: Dataset,
                     system: DesignSystem | None = None) -> tuple[float, float]:
    """Split the loss into a Gram-metric distance and a w-independent constant.

    Returns (dist_sq, constant) with dist_sq = tr((M - A) G (M - A)^T) for
    M the coefficient matrix of phi_w and A the anchor, and
    constant = tr(Y Y^T) - tr(A G A^T); loss == dist_sq + constant.
    """
    ds = system if system is not None else design_system(data, arch)
    M = coefficient_matrix(arch, w)
    Dm = M - ds.anchor
    dist_sq = float(np.trace(Dm @ ds.G @ Dm.T))
    constant = float(np.sum(ds.Y * ds.Y) - np.trace(ds.anchor @ ds.G @ ds.anchor.T))
    return dist_sq, constant


@dataclass
class ConvSubspace:
    """Linear maps from coefficient space to R^(d_L) with convolution structure.

    Row 0 of a member is any functional supported on monomials in the first
    W input variables, W the receptive field width of one output; row i is
    row 0 with every variable index shifted by i times the stride product.
    One basis element per degree-r^(L-1) monomial in W variables.
    """

    arch: Architecture
    width: int
    step: int
    basis: list[np.ndarray]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def basis_stacked(self) -> np.ndarray:
        """Basis elements flattened to rows of a (dim, d_L*N) matrix."""
        return np.stack([B.ravel() for B in self.basis])

    def containment_residual(self, stacked: np.ndarray) -> float:
        """Relative distance from a stacked coefficient vector to the span."""
        A = self.basis_stacked().T
        coef, *_ = np.linalg.lstsq(A, stacked, rcond=None)
        resid = stacked - A @ coef
        scale = max(float(np.linalg.norm(stacked)), 1e-30)
        return float(np.linalg.norm(resid)) / scale


def receptive_field(arch: Architecture) -> tuple[int, int]:
    """(W, S): one output reads W = 1 + sum_i (k_i - 1) prod_{j<i} s_j inputs,
    and consecutive outputs are S = prod_i s_i inputs apart."""
    W, stretch = 1, 1
    for ki, si in zip(arch.k, arch.s):
        W += (ki - 1) * stretch
        stretch *= si
    return W, stretch


def conv_subspace(arch: Architecture) -> ConvSubspace:
    W, S = receptive_field(arch)
    deg = arch.out_degree
    N = sym_dim(arch)
    big = monomial_basis(arch.d0, deg)
    basis = []
    for e in monomial_basis(W, deg).exponents:
        B = np.zeros((arch.d_out, N))
        for i in range(arch.d_out):
            shifted = [0] * arch.d0
            for j, a in enumerate(e):
                shifted[j + i * S] = a
            B[i, big.index[tuple(shifted)]] = 1.0
        basis.append(B)
    return ConvSubspace(arch=arch, width=W, step=S, basis=basis)


def project_anchor(ds: DesignSystem, sub: ConvSubspace) -> np.ndarray:
    """Orthogonal projection of the anchor onto the subspace, in the inner
    product <M, M'> = tr(M G M'^T).

    The residual is orthogonal to every basis element; swapping the anchor
    for its projection changes the distance split only by a constant.
    """
    A = ds.anchor
    k = sub.dim
    gram = np.empty((k, k))
    rhs = np.empty(k)
    BG = [B @ ds.G for B in sub.basis]
    for i in range(k):
        rhs[i] = float(np.sum(BG[i] * A))
        for j in range(i, k):
            gram[i, j] = gram[j, i] = float(np.sum(BG[i] * sub.basis[j]))
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > PROJECTION_COND_LIMIT:
        raise IllConditionedProjection(f"basis Gram condition {cond:.3e}")
    coef = np.linalg.solve(gram, rhs)
    return sum(c * B for c, B in zip(coef, sub.basis))
