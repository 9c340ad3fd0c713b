"""Multi-start search for stationary points of the regression loss in
parameter space, symmetry-aware deduplication, and comparison with the
generic Euclidean distance degree.

The loss is a polynomial in the parameters: its value, gradient and
Hessian are evaluated exactly through the factorization of the coefficient
map (a fixed linear map applied to parameter monomials), so the search
needs no autodiff and no finite differences. The count of distinct smooth
stationary functions found is checked against the gED upper bound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fibers
from .conv import Architecture
from .errors import PropertyError, SingularPointRejected
from .invariants import ged_neuromanifold
from .jacobian import claimed_kernel_basis, sv_differential, sv_point
from .network import WeightTuple, factorization_matrix_cached, sv_basis
from .regression import Dataset, DesignSystem, design_system

GRAD_TOL = 1e-10
MAX_ITER = 500
DEDUP_TOL = 1e-6
CRITICALITY_TOL = 1e-7
HESS_EIG_TOL = 1e-6       # relative eigenvalue cutoff for classification
ZERO_ENTRY_TOL = 1e-9     # relative threshold for structural zeros in weights


class LossLandscape:
    """Exact polynomial evaluator for the loss in parameter space.

    With m(theta) = Lambda nu(theta) the stacked coefficient vector, the
    loss is m^T Q m - 2 c^T m + const where Q is the blockdiagonal Gram
    metric and c the stacked anchor image. Gradient and Hessian follow from
    the product rule on the parameter monomials nu.
    """

    def __init__(self, arch: Architecture, ds: DesignSystem):
        self.arch = arch
        self.ds = ds
        self.Lam = factorization_matrix_cached(arch)
        self.E = sv_basis(arch).exponent_matrix
        self.Q = ds.metric_blockdiag()
        N = self.Lam.shape[0] // arch.d_out
        self.c = (ds.Y @ ds.X.T).reshape(arch.d_out * N)
        self.const = float(np.sum(ds.Y * ds.Y))
        self.nparams = arch.total_k

    def coeffs(self, theta: np.ndarray) -> np.ndarray:
        return self.Lam @ sv_point(self.arch, theta)

    def loss(self, theta: np.ndarray) -> float:
        m = self.coeffs(theta)
        return float(m @ self.Q @ m - 2.0 * self.c @ m + self.const)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        m = self.coeffs(theta)
        J = self.Lam @ sv_differential(self.arch, theta)
        return 2.0 * J.T @ (self.Q @ m - self.c)

    def _sv_second(self, theta: np.ndarray) -> np.ndarray:
        """d2 nu / d theta^2, shape (dim, P, P), exact product rule."""
        E = self.E
        C, P = E.shape
        out = np.zeros((C, P, P))
        theta = np.asarray(theta, dtype=float)
        for p in range(P):
            for q in range(p, P):
                coef = E[:, p] * (E[:, q] - (1 if p == q else 0))
                rows = coef > 0
                if not np.any(rows):
                    continue
                Em = E[rows].copy()
                Em[:, p] -= 1
                Em[:, q] -= 1
                vals = coef[rows] * np.prod(theta ** Em, axis=1)
                out[rows, p, q] = vals
                if p != q:
                    out[rows, q, p] = vals
        return out

    def hess(self, theta: np.ndarray) -> np.ndarray:
        m = self.coeffs(theta)
        J = self.Lam @ sv_differential(self.arch, theta)
        rho = 2.0 * (self.Q @ m - self.c)
        H = 2.0 * J.T @ self.Q @ J
        u = self.Lam.T @ rho
        H += np.einsum("c,cpq->pq", u, self._sv_second(theta))
        return H

    def criticality_residual(self, theta: np.ndarray) -> float:
        """Angle-like residual of the tangency condition in coefficient space.

        The stationarity of the loss at theta is equivalent to the metric
        gradient Q(m - anchor) annihilating the tangent directions J.
        """
        m = self.coeffs(theta)
        J = self.Lam @ sv_differential(self.arch, theta)
        diff = self.Q @ m - self.c
        resid = float(np.linalg.norm(J.T @ diff))
        scale = max(1.0, float(np.linalg.norm(J) * np.linalg.norm(diff)))
        return resid / scale

    # ----- batched evaluation, one row of Theta per search trajectory -----

    def coeffs_batch(self, Theta: np.ndarray) -> np.ndarray:
        nu = np.prod(Theta[:, None, :] ** self.E[None, :, :], axis=2)
        return nu @ self.Lam.T

    def loss_batch(self, Theta: np.ndarray) -> np.ndarray:
        m = self.coeffs_batch(Theta)
        return np.einsum("nr,nr->n", m @ self.Q, m) - 2.0 * m @ self.c + self.const

    def _tangent_batch(self, Theta: np.ndarray) -> np.ndarray:
        """Stacked Jacobians, shape (n, rows, P)."""
        E = self.E
        C, P = E.shape
        n = Theta.shape[0]
        dnu = np.zeros((n, C, P))
        for p in range(P):
            rows = E[:, p] > 0
            if not np.any(rows):
                continue
            Em = E[rows].copy()
            Em[:, p] -= 1
            dnu[:, rows, p] = E[rows, p] * np.prod(Theta[:, None, :] ** Em[None], axis=2)
        return np.einsum("rc,ncp->nrp", self.Lam, dnu)

    def grad_batch(self, Theta: np.ndarray) -> np.ndarray:
        m = self.coeffs_batch(Theta)
        J = self._tangent_batch(Theta)
        return 2.0 * np.einsum("nrp,nr->np", J, m @ self.Q - self.c)

    def hess_batch(self, Theta: np.ndarray) -> np.ndarray:
        E = self.E
        C, P = E.shape
        n = Theta.shape[0]
        m = self.coeffs_batch(Theta)
        J = self._tangent_batch(Theta)
        H = 2.0 * np.einsum("nrp,rt,ntq->npq", J, self.Q, J)
        u = (2.0 * (m @ self.Q - self.c)) @ self.Lam  # (n, C)
        for p in range(P):
            for q in range(p, P):
                coef = E[:, p] * (E[:, q] - (1 if p == q else 0))
                rows = coef > 0
                if not np.any(rows):
                    continue
                Em = E[rows].copy()
                Em[:, p] -= 1
                Em[:, q] -= 1
                vals = np.prod(Theta[:, None, :] ** Em[None], axis=2) * coef[rows]
                contrib = np.einsum("nc,nc->n", u[:, rows], vals)
                H[:, p, q] += contrib
                if p != q:
                    H[:, q, p] += contrib
        return H


def _newton_batch(problem: LossLandscape, Theta0: np.ndarray, tol: float,
                  max_iter: int):
    """Damped Newton on the gradient system, all trajectories at once.

    The merit is the gradient norm, so saddles attract as well as minima;
    rows where the Newton step fails to reduce it take one descent step on
    the loss instead, and rows where both fail stop as non-converged.
    """
    Theta = np.array(Theta0, dtype=float)
    n, P = Theta.shape
    g = problem.grad_batch(Theta)
    gn = np.linalg.norm(g, axis=1)
    active = gn >= tol
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        Th = Theta[idx]
        H = problem.hess_batch(Th)
        step = -np.einsum("npq,nq->np", np.linalg.pinv(H), g[idx])
        # backtracking on the gradient norm
        alpha = np.ones(len(idx))
        need = np.ones(len(idx), dtype=bool)
        improved = np.zeros(len(idx), dtype=bool)
        for _ in range(30):
            rows = np.flatnonzero(need)
            if len(rows) == 0:
                break
            trial = Th[rows] + alpha[rows, None] * step[rows]
            gt = problem.grad_batch(trial)
            gtn = np.linalg.norm(gt, axis=1)
            ok = gtn < gn[idx][rows]
            hit = rows[ok]
            Theta[idx[hit]] = trial[ok]
            g[idx[hit]] = gt[ok]
            gn[idx[hit]] = gtn[ok]
            improved[hit] = True
            need[hit] = False
            alpha[rows[~ok]] *= 0.5
        # descent fallback on the loss for rows the Newton step failed
        rows = np.flatnonzero(~improved)
        if len(rows) > 0:
            sub = idx[rows]
            f = problem.loss_batch(Theta[sub])
            d = -g[sub]
            gnorm2 = gn[sub] ** 2
            alpha = 1.0 / np.maximum(1.0, gn[sub])
            need = np.ones(len(sub), dtype=bool)
            saved = np.zeros(len(sub), dtype=bool)
            for _ in range(40):
                rr = np.flatnonzero(need)
                if len(rr) == 0:
                    break
                trial = Theta[sub[rr]] + alpha[rr, None] * d[rr]
                ft = problem.loss_batch(trial)
                ok = ft < f[rr] - 1e-4 * alpha[rr] * gnorm2[rr]
                hit = rr[ok]
                Theta[sub[hit]] = trial[ok]
                saved[hit] = True
                need[hit] = False
                alpha[rr[~ok]] *= 0.5
            if np.any(saved):
                moved = sub[saved]
                g[moved] = problem.grad_batch(Theta[moved])
                gn[moved] = np.linalg.norm(g[moved], axis=1)
            active[sub[~saved]] = False  # stalled
        active &= gn >= tol
    return Theta, gn


def find_stationary(arch: Architecture, data: Dataset, n_starts: int, seed: int = 0,
                    tol: float = GRAD_TOL, max_iter: int = MAX_ITER,
                    system: DesignSystem | None = None, n_jobs: int = 1):
    """Damped Newton on the gradient system from random starts.

    Newton steps target any stationary point, saddles included; failed
    steps fall back to descent with line search. Returns (points, diag,
    problem) where points are the parameter vectors with gradient norm
    below tol and diag counts the rest.
    """
    ds = system if system is not None else design_system(data, arch)
    problem = LossLandscape(arch, ds)
    streams = np.random.SeedSequence(seed).spawn(n_starts)
    starts = []
    for stream in streams:
        rng = np.random.default_rng(stream)
        w = WeightTuple([rng.standard_normal(ki) for ki in arch.k])
        starts.append(fibers.canonical_form(arch, w).weights.flat())
    Theta0 = np.stack(starts)
    if n_jobs > 1:
        chunks = np.array_split(np.arange(n_starts), n_jobs)
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(
                lambda ix: _newton_batch(problem, Theta0[ix], tol, max_iter), chunks))
        Theta = np.concatenate([p[0] for p in parts])
        gn = np.concatenate([p[1] for p in parts])
    else:
        Theta, gn = _newton_batch(problem, Theta0, tol, max_iter)
    ok = gn < tol
    points = [Theta[i] for i in np.flatnonzero(ok)]
    diag = {"converged": int(ok.sum()),
            "nonconverged": int((~ok).sum()),
            "worst_grad_norm": float(gn[~ok].max()) if np.any(~ok) else 0.0}
    return points, diag, problem


@dataclass
class CriticalPoint:
    theta: np.ndarray
    coeffs: np.ndarray
    loss: float
    grad_norm: float
    classification: str | None  # None on non-smooth points
    smoothness: str
    multiplicity: int
    criticality_residual: float | None = None
    canonical: object = field(default=None, repr=False)

    def as_dict(self):
        return {"loss": self.loss, "grad_norm": self.grad_norm,
                "classification": self.classification,
                "smoothness": self.smoothness,
                "multiplicity": self.multiplicity,
                "criticality_residual": self.criticality_residual,
                "theta": list(map(float, self.theta)),
                "coeffs": list(map(float, self.coeffs))}


def _classify(problem: LossLandscape, theta: np.ndarray, arch: Architecture,
              smooth: bool) -> str:
    """Hessian inertia on the complement of the structural scaling kernel."""
    H = problem.hess(theta)
    P = len(theta)
    if arch.L > 1 and smooth:
        w = WeightTuple.from_flat(arch, theta)
        K = np.column_stack(claimed_kernel_basis(arch, w))
        Qk, _ = np.linalg.qr(K)
        U, sv, Vt = np.linalg.svd(np.eye(P) - Qk @ Qk.T)
        B = U[:, sv > 0.5]
    else:
        B = np.eye(P)
    eig = np.linalg.eigvalsh(B.T @ H @ B)
    if len(eig) == 0:
        return "degenerate"
    thr = HESS_EIG_TOL * max(np.max(np.abs(eig)), 1e-300)
    pos = int(np.sum(eig > thr))
    neg = int(np.sum(eig < -thr))
    small = len(eig) - pos - neg
    if small:
        return "degenerate"
    if neg == 0:
        return "min"
    if pos == 0:
        return "max"
    return "saddle"


def dedup(points, arch: Architecture, problem: LossLandscape,
          tol: float = DEDUP_TOL) -> list[CriticalPoint]:
    """Merge stationary parameters that define the same network function.

    Comparison happens on the coefficient vectors of phi, which collapses
    every fiber symmetry (per-filter rescalings acting trivially and index
    shifts) at once. Points whose function is negligibly small against the
    anchor scale all represent the zero function and merge into a single
    cone-vertex cluster. Representative per cluster: smallest gradient norm.
    """
    zero_floor = tol * max(1.0, float(np.linalg.norm(problem.ds.stacked_anchor())))
    clusters: list[dict] = []
    vertex: dict | None = None
    for theta in points:
        m = problem.coeffs(theta)
        gn = float(np.linalg.norm(problem.grad(theta)))
        nm = float(np.linalg.norm(m))
        if nm < zero_floor:
            if vertex is None:
                vertex = {"theta": theta, "coeffs": m, "norm": nm,
                          "grad_norm": gn, "count": 1}
            else:
                vertex["count"] += 1
                if nm < vertex["norm"]:
                    vertex.update(theta=theta, coeffs=m, norm=nm, grad_norm=gn)
            continue
        matched = False
        for cl in clusters:
            denom = max(nm, cl["norm"])
            if np.linalg.norm(m - cl["coeffs"]) / denom < tol:
                cl["count"] += 1
                if gn < cl["grad_norm"]:
                    cl.update(theta=theta, coeffs=m, norm=nm, grad_norm=gn)
                matched = True
                break
        if not matched:
            clusters.append({"theta": theta, "coeffs": m, "norm": nm,
                             "grad_norm": gn, "count": 1})
    out = []
    for cl in clusters:
        theta = cl["theta"]
        w = WeightTuple.from_flat(arch, theta)
        ztol = ZERO_ENTRY_TOL * max(1.0, float(np.max(np.abs(theta))))
        smoothness = fibers.is_singular_parameter(arch, w, zero_tol=ztol)
        smooth = smoothness == fibers.SMOOTH
        canonical = None
        if smooth:
            try:
                canonical = fibers.canonical_form(arch, w)
            except Exception:
                canonical = None
        out.append(CriticalPoint(
            theta=theta, coeffs=cl["coeffs"], loss=problem.loss(theta),
            grad_norm=cl["grad_norm"],
            classification=_classify(problem, theta, arch, smooth),
            smoothness=smoothness, multiplicity=cl["count"],
            canonical=canonical))
    if vertex is not None:
        out.append(CriticalPoint(
            theta=vertex["theta"], coeffs=vertex["coeffs"],
            loss=problem.loss(vertex["theta"]), grad_norm=vertex["grad_norm"],
            classification=None, smoothness=fibers.CONE_VERTEX,
            multiplicity=vertex["count"], canonical=None))
    out.sort(key=lambda p: (p.loss, p.grad_norm))
    return out


def verify_criticality_on_manifold(arch: Architecture, theta: np.ndarray,
                                   system: DesignSystem,
                                   problem: LossLandscape | None = None) -> float:
    """Tangency residual of a stationary parameter, in coefficient space.

    Only meaningful on smooth points; raises SingularPointRejected on
    singular parameters.
    """
    w = WeightTuple.from_flat(arch, theta)
    ztol = ZERO_ENTRY_TOL * max(1.0, float(np.max(np.abs(theta))))
    if fibers.is_singular_parameter(arch, w, zero_tol=ztol) != fibers.SMOOTH:
        raise SingularPointRejected("criticality check requires a smooth parameter")
    pb = problem if problem is not None else LossLandscape(arch, system)
    return pb.criticality_residual(theta)


@dataclass
class CensusReport:
    arch: Architecture
    ged: int
    n_starts: int
    seed: int
    grad_tol: float
    points: list[CriticalPoint]
    diagnostics: dict
    counts: dict
    bound_ok: bool

    def smooth_points(self):
        return [p for p in self.points if p.smoothness == fibers.SMOOTH]

    def as_dict(self):
        return {"arch": self.arch.spec_string(), "ged": self.ged,
                "n_starts": self.n_starts, "seed": self.seed,
                "grad_tol": self.grad_tol, "counts": self.counts,
                "bound_ok": self.bound_ok, "diagnostics": self.diagnostics,
                "points": [p.as_dict() for p in self.points]}


def census(arch: Architecture, data: Dataset, n_starts: int = 500, seed: int = 0,
           tol: float = GRAD_TOL, dedup_tol: float = DEDUP_TOL,
           n_jobs: int = 1) -> CensusReport:
    """Full stationary-point census against the gED bound.

    Hard guarantees on the output: every accepted smooth point passes the
    tangency check, no accepted point is a nodal singularity, and the
    number of distinct smooth stationary functions is at most the gED.
    """
    ged = ged_neuromanifold(arch)
    points, diag, problem = find_stationary(arch, data, n_starts, seed=seed,
                                            tol=tol, n_jobs=n_jobs)
    crits = dedup(points, arch, problem, tol=dedup_tol)
    accepted, rejected = [], 0
    for p in crits:
        if p.smoothness == fibers.SMOOTH:
            p.criticality_residual = problem.criticality_residual(p.theta)
            if p.criticality_residual < CRITICALITY_TOL:
                accepted.append(p)
            else:
                rejected += 1
        else:
            accepted.append(p)  # reported, but outside the smooth count
    smooth = [p for p in accepted if p.smoothness == fibers.SMOOTH]
    nodal = [p for p in accepted if p.smoothness == fibers.NODAL_SINGULAR]
    if nodal:
        raise PropertyError(
            f"{len(nodal)} nodal-singular stationary points found; "
            "generic data admits none")
    counts = {"smooth": len(smooth),
              "min": sum(1 for p in smooth if p.classification == "min"),
              "saddle": sum(1 for p in smooth if p.classification == "saddle"),
              "max": sum(1 for p in smooth if p.classification == "max"),
              "degenerate": sum(1 for p in smooth if p.classification == "degenerate"),
              "cone_vertex": sum(1 for p in accepted
                                 if p.smoothness == fibers.CONE_VERTEX),
              "rejected": rejected,
              "nonconverged": diag["nonconverged"]}
    bound_ok = len(smooth) <= ged
    report = CensusReport(arch=arch, ged=ged, n_starts=n_starts, seed=seed,
                          grad_tol=tol, points=accepted, diagnostics=diag,
                          counts=counts, bound_ok=bound_ok)
    if not bound_ok:
        raise PropertyError(
            f"{len(smooth)} distinct smooth stationary points exceed gED = {ged}")
    return report
