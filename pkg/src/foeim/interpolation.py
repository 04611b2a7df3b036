"""Empirical interpolation systems: greedy construction and online evaluation.

Candidate functions are plain value vectors over a fixed evaluation point set
(the truth quadrature points).  The greedy construction keeps a running
residual matrix of all candidates and applies the rank-one update

    r <- r - r(x_hat_M) * psi_M

after each selection, which is equivalent to re-interpolating every candidate
on the enlarged point set because each new basis function vanishes at all
previously selected points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .terms import NonlinearTerm

__all__ = [
    "DiscreteFunction", "CandidateSpace", "InterpolationSystem", "RegressionSystem",
    "snapshot_nonlinear", "taylor_candidates", "independent_subset",
    "eim_greedy", "foeim1_construct", "foeim2_construct",
    "interp_coeffs", "regress_coeffs", "interpolant_values",
    "lebesgue_constant", "max_interp_error",
]

EXHAUST_TOL = 1e-13
ZERO_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass
class DiscreteFunction:
    """Values of a candidate function over the evaluation point set."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise ValueError("values must be a finite 1-d array")


class CandidateSpace:
    """Ordered family of candidate functions stored row-wise.

    ``kind`` is one of ``lagrange`` (nonlinear-term snapshots), ``taylor``
    (independent first-order derivative candidates) or ``lagrange-taylor``.
    """

    def __init__(self, values: np.ndarray, kind: str, labels=None):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        self.kind = kind
        self.labels = list(labels) if labels is not None else \
            [f"{kind}-{i}" for i in range(self.values.shape[0])]

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def functions(self):
        return [DiscreteFunction(v, l) for v, l in zip(self.values, self.labels)]

    def concat(self, other: "CandidateSpace") -> "CandidateSpace":
        if other.n_points != self.n_points:
            raise ValueError("evaluation point sets differ")
        return CandidateSpace(np.vstack([self.values, other.values]),
                              "lagrange-taylor", self.labels + other.labels)


@dataclass
class InterpolationSystem:
    """Interpolation points, basis functions, and the triangular system matrix."""

    point_indices: np.ndarray       # (M,) indices into the evaluation set
    basis: np.ndarray               # (n_points, M) columns psi_m
    B: np.ndarray                   # (M, M), B[k, m] = psi_m(x_hat_k)
    construction_log: list[tuple[int, float]]   # (selected candidate, residual sup)
    status: str = "ok"
    points: np.ndarray | None = None  # physical coordinates when available

    @property
    def M(self) -> int:
        return self.point_indices.size

    def check_invariants(self, tol: float = 1e-12) -> None:
        B = self.B
        M = self.M
        if len(np.unique(self.point_indices)) != M:
            raise AssertionError("interpolation points are not distinct")
        if np.abs(np.triu(B, 1)).max(initial=0.0) > tol:
            raise AssertionError("B is not lower triangular")
        if np.abs(np.diag(B) - 1.0).max(initial=0.0) > tol:
            raise AssertionError("B diagonal is not unity")
        if M > 1 and np.abs(np.tril(B, -1)).max(initial=0.0) > 1.0 + tol:
            raise AssertionError("|B_ij| <= 1 violated below the diagonal")

    def head(self, M: int) -> "InterpolationSystem":
        """The nested sub-system built from the first M selections."""
        if M > self.M:
            raise ValueError("cannot extend a system by truncation")
        return InterpolationSystem(
            self.point_indices[:M], self.basis[:, :M], self.B[:M, :M],
            self.construction_log[:M], self.status,
            None if self.points is None else self.points[:M])

    def save(self, path) -> None:
        np.savez_compressed(
            path, point_indices=self.point_indices, basis=self.basis, B=self.B,
            log_idx=np.array([i for i, _ in self.construction_log]),
            log_res=np.array([r for _, r in self.construction_log]),
            status=np.array(self.status),
            points=self.points if self.points is not None else np.empty((0, 2)))

    @classmethod
    def load(cls, path) -> "InterpolationSystem":
        d = np.load(path, allow_pickle=False)
        pts = d["points"]
        return cls(d["point_indices"], d["basis"], d["B"],
                   list(zip(d["log_idx"].tolist(), d["log_res"].tolist())),
                   str(d["status"]), pts if pts.size else None)


def _point_values(f, op, quad):
    """Field values at the evaluation points; accepts FEM fields or arrays."""
    if isinstance(f, np.ndarray):
        return f
    return getattr(quad, op) @ f.coefficients


def snapshot_nonlinear(raw_fields, term: NonlinearTerm, samples, quad) -> CandidateSpace:
    """Nonlinear-term snapshots xi_n = g(zeta_n, mu_n) at the quadrature points."""
    rows = []
    labels = []
    for n, (f, mu) in enumerate(zip(raw_fields, samples)):
        u = _point_values(f, "phi", quad)
        if term.needs_gradient:
            gx = _point_values(f, "gx", quad)
            gy = _point_values(f, "gy", quad)
            rows.append(term.value(u, mu, gx, gy))
        else:
            rows.append(term.value(u, mu))
        labels.append(f"xi_{n+1}")
    return CandidateSpace(np.vstack(rows), "lagrange", labels)


def taylor_candidates(raw_fields, term: NonlinearTerm, samples, quad,
                      include_mu_family: bool = True) -> np.ndarray:
    """First-order Taylor candidate functions, unfiltered.

    Row (n-1)N + k holds the u-derivative family member built at snapshot n
    toward snapshot k; rows N^2 + (n-1)N + k hold the parameter-derivative
    family.  The k = n rows are identically zero.  For gradient-dependent
    terms the u-family applies the product rule through both the value and
    the gradient difference.
    """
    mus = np.atleast_2d(np.asarray([np.asarray(m) for m in samples], dtype=float))
    N = len(raw_fields)
    m = quad.n_points
    U = np.column_stack([_point_values(f, "phi", quad) for f in raw_fields])
    if term.needs_gradient:
        GX = np.column_stack([_point_values(f, "gx", quad) for f in raw_fields])
        GY = np.column_stack([_point_values(f, "gy", quad) for f in raw_fields])

    out = np.zeros((2 * N * N if include_mu_family else N * N, m))
    for n in range(N):
        mu_n = mus[n]
        if term.needs_gradient:
            du = term.du(U[:, n], mu_n, GX[:, n], GY[:, n])
            kap = term.dgrad(U[:, n], mu_n)
            G = GX if term.component == 0 else GY
            blk = (du[:, None] * (U - U[:, n][:, None])
                   + kap[:, None] * (G - G[:, n][:, None])).T
            d1, d2 = term.dmu(U[:, n], mu_n, GX[:, n], GY[:, n])
        else:
            du = term.du(U[:, n], mu_n)
            blk = (du[:, None] * (U - U[:, n][:, None])).T
            d1, d2 = term.dmu(U[:, n], mu_n)
        blk[n] = 0.0
        out[n * N:(n + 1) * N] = blk
        if include_mu_family:
            dmu = mus - mu_n                            # (N, 2)
            mublk = (np.outer(dmu[:, 0], d1) + np.outer(dmu[:, 1], d2))
            mublk[n] = 0.0
            out[N * N + n * N:N * N + (n + 1) * N] = mublk
    return out


def independent_subset(candidates: np.ndarray, zero_tol: float = ZERO_TOL,
                       rank_tol: float = RANK_TOL) -> CandidateSpace:
    """Numerically independent subset of the Taylor candidates, in input order.

    Drops functions whose sup-norm is below ``zero_tol`` times the largest
    candidate sup-norm, then greedily keeps functions whose Euclidean
    residual after projection onto the kept set exceeds ``rank_tol`` times
    their own norm.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    sup = np.abs(candidates).max(axis=1, initial=0.0)
    scale = sup.max(initial=0.0)
    Q = np.empty((min(candidates.shape), candidates.shape[1]))
    nq = 0
    kept_idx = []
    block = 128
    for start in range(0, candidates.shape[0], block):
        idx = [i for i in range(start, min(start + block, candidates.shape[0]))
               if scale > 0.0 and sup[i] >= zero_tol * scale]
        if not idx:
            continue
        V = candidates[idx].copy()
        norms0 = np.linalg.norm(V, axis=1)
        base = nq
        for _ in range(2):                       # block projection + re-pass
            if base:
                V -= (V @ Q[:base].T) @ Q[:base]
        for v, i, norm0 in zip(V, idx, norms0):
            for _ in range(2):                   # vectors added within block
                if nq > base:
                    v -= Q[base:nq].T @ (Q[base:nq] @ v)
            rnorm = np.linalg.norm(v)
            if rnorm <= rank_tol * norm0 or nq == Q.shape[0]:
                continue
            Q[nq] = v / rnorm
            nq += 1
            kept_idx.append(i)
    if not kept_idx:
        return CandidateSpace(np.empty((0, candidates.shape[1])), "taylor", [])
    return CandidateSpace(candidates[kept_idx], "taylor",
                          [f"rho_{i}" for i in kept_idx])


def _greedy(residuals: np.ndarray, n_steps: int, points_idx, basis_cols, B_rows,
            log, offset: int = 0):
    """Run ``n_steps`` greedy selections, mutating the running residual matrix.

    ``residuals`` holds the current interpolation residual of every candidate
    (rows).  Ties in the argmax break toward the smallest index (numpy
    argmax convention), which makes construction deterministic.
    """
    for _ in range(n_steps):
        sup = np.abs(residuals).max(axis=1, initial=0.0)
        j = int(np.argmax(sup))
        if sup[j] < EXHAUST_TOL:
            return False
        r = residuals[j]
        x_idx = int(np.argmax(np.abs(r)))
        psi = r / r[x_idx]
        log.append((offset + j, float(sup[j])))
        points_idx.append(x_idx)
        basis_cols.append(psi)
        residuals -= residuals[:, x_idx][:, None] * psi[None, :]
    return True


def _finalize(points_idx, basis_cols, log, status, quad=None) -> InterpolationSystem:
    idx = np.asarray(points_idx, dtype=int)
    Psi = np.column_stack(basis_cols)
    B = Psi[idx, :]
    pts = quad.points[idx] if quad is not None else None
    return InterpolationSystem(idx, Psi, B, log, status, pts)


def eim_greedy(candidates: CandidateSpace, M: int, quad=None) -> InterpolationSystem:
    """Empirical interpolation greedy over the given candidate family.

    Picks the candidate with largest residual sup-norm, takes its argmax
    point, and appends the normalized residual as the next basis function.
    Returns a shorter system with ``status='exhausted'`` if the candidates
    are numerically exhausted before reaching M.
    """
    if M < 1 or M > len(candidates):
        raise ValueError("require 1 <= M <= number of candidates")
    residuals = candidates.values.copy()
    points_idx, basis_cols, log = [], [], []
    ok = _greedy(residuals, M, points_idx, basis_cols, None, log)
    return _finalize(points_idx, basis_cols, log, "ok" if ok else "exhausted", quad)


def foeim1_construct(lagrange: CandidateSpace, taylor: CandidateSpace, M: int,
                     quad=None) -> InterpolationSystem:
    """Two-stage construction: greedy over the snapshots, then over the
    derivative candidates with the accumulated points and basis retained."""
    N = len(lagrange)
    if M > N + len(taylor):
        raise ValueError("M exceeds the Lagrange-Taylor dimension")
    residuals = lagrange.values.copy()
    points_idx, basis_cols, log = [], [], []
    ok = _greedy(residuals, min(M, N), points_idx, basis_cols, None, log)
    if ok and M > N:
        res_t = taylor.values.copy()
        for x_idx, psi in zip(points_idx, basis_cols):
            res_t -= res_t[:, x_idx][:, None] * psi[None, :]
        ok = _greedy(res_t, M - N, points_idx, basis_cols, None, log, offset=N)
    return _finalize(points_idx, basis_cols, log, "ok" if ok else "exhausted", quad)


def foeim2_construct(lagrange: CandidateSpace, taylor: CandidateSpace, M: int,
                     quad=None) -> InterpolationSystem:
    """Single greedy over the combined Lagrange-Taylor candidate family."""
    return eim_greedy(lagrange.concat(taylor), M, quad)


def interp_coeffs(system: InterpolationSystem, samples: np.ndarray) -> np.ndarray:
    """Coefficients beta with B beta = samples, by forward substitution."""
    b = np.asarray(samples, dtype=float)
    return sla.solve_triangular(system.B, b, lower=True)


def interpolant_values(system: InterpolationSystem, beta: np.ndarray,
                       at: np.ndarray | None = None) -> np.ndarray:
    """Values of the interpolant sum_m beta_m psi_m, optionally on a subset."""
    Psi = system.basis if at is None else system.basis[at]
    return Psi @ np.asarray(beta, dtype=float)


@dataclass
class RegressionSystem:
    """Oversampled least-squares variant: N basis functions, M >= N points.

    Reuses the first N basis functions and all M points of an interpolation
    system.  The precomputed operator C maps point samples to coefficients,
    C = (B_NM B_NM^T)^{-1} B_NM, formed through a QR factorization of
    B_NM^T for stability.
    """

    basis: np.ndarray           # (n_points, N)
    point_indices: np.ndarray   # (M,)
    C: np.ndarray               # (N, M)

    @classmethod
    def from_interpolation(cls, system: InterpolationSystem, N: int) -> "RegressionSystem":
        M = system.M
        if not 1 <= N <= M:
            raise ValueError("require 1 <= N <= M")
        Bnm = system.basis[system.point_indices, :N].T     # (N, M)
        Q, R = np.linalg.qr(Bnm.T)                          # (M, N), (N, N)
        if np.abs(np.diag(R)).min() <= 1e-12 * np.abs(np.diag(R)).max():
            raise ValueError("basis-at-points matrix is rank deficient")
        C = sla.solve_triangular(R, Q.T, lower=False)
        return cls(system.basis[:, :N], system.point_indices.copy(), C)

    @property
    def N(self) -> int:
        return self.basis.shape[1]

    @property
    def M(self) -> int:
        return self.point_indices.size


def regress_coeffs(rsys: RegressionSystem, samples: np.ndarray) -> np.ndarray:
    """Least-squares coefficients beta = C b."""
    return rsys.C @ np.asarray(samples, dtype=float)


def lebesgue_constant(system: InterpolationSystem) -> float:
    """Sup-norm operator norm of the interpolation: max_x sum_k |(Psi B^-1)_xk|."""
    Binv = sla.solve_triangular(system.B, np.eye(system.M), lower=True)
    cardinal = system.basis @ Binv
    return float(np.abs(cardinal).sum(axis=1).max())


def max_interp_error(system, term: NonlinearTerm, test_samples, truth_values,
                     regression: bool = False):
    """Max interpolation (or regression) error over a parameter test set.

    ``truth_values`` maps mu -> values of u at all evaluation points (and
    gradients, for gradient-dependent terms, as a (u, gx, gy) tuple).
    Returns (eps_max, per-mu array).
    """
    errs = []
    for mu in test_samples:
        tv = truth_values(mu)
        if term.needs_gradient:
            g = term.value(tv[0], mu, tv[1], tv[2])
        else:
            g = term.value(tv, mu)
        b = g[system.point_indices]
        if regression:
            beta = regress_coeffs(system, b)
            gm = system.basis @ beta
        else:
            beta = interp_coeffs(system, b)
            gm = system.basis @ beta
        errs.append(float(np.abs(g - gm).max()))
    errs = np.asarray(errs)
    return float(errs.max()), errs
