"""Reduced-basis Galerkin solvers and error/effectivity metrics.

Two online solvers per problem: the standard Galerkin reduced model whose
nonlinear term is integrated by the full truth quadrature every Newton
iteration (the expensive baseline), and the interpolation-accelerated model
whose nonlinear term is sampled at the M interpolation points only, so the
online cost is independent of the truth dimension.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fem import FomProblem, NewtonReport, SolverError, solve_fom
from .interpolation import InterpolationSystem
from .sampling import SampleSet, SnapshotBasis
from .terms import DiffusionFluxTerm

__all__ = [
    "RomOperators", "RomSolution", "ErrorReport",
    "build_standard_rb", "solve_standard_rb",
    "build_ei_rb", "solve_ei_rb",
    "error_and_effectivity", "timing_harness",
]

ONLINE_TOL = 1e-10
ONLINE_MAXIT = 50


@dataclass
class RomOperators:
    """Parameter-independent reduced operators.

    Only N- and M-sized arrays may live here for the interpolation-based
    online stage; the structural test in the acceptance suite relies on it.
    """

    problem: str
    N: int
    A: np.ndarray | None            # (N, N) stiffness projection (elliptic)
    F: np.ndarray                   # (N,)
    L: np.ndarray                   # (N,) output functional
    # interpolation coupling; elliptic uses E/at-points only, diffusion g and h
    E: np.ndarray | None = None
    Zpts: np.ndarray | None = None          # (M, N) basis values at points
    Eg: np.ndarray | None = None
    Eh: np.ndarray | None = None
    Zg: np.ndarray | None = None            # (M, N) values at g-points
    Zg_dx: np.ndarray | None = None         # (M, N) d/dx1 at g-points
    Zh: np.ndarray | None = None
    Zh_dy: np.ndarray | None = None
    # training anchors: (sample points (n, 2), projected coordinates (n, N));
    # online continuation starts from the nearest anchor so that the solve
    # tracks the solution branch the basis was built from
    anchors: tuple[np.ndarray, np.ndarray] | None = None

    def array_sizes(self) -> list[int]:
        out = []
        for v in vars(self).values():
            if isinstance(v, np.ndarray):
                out.append(max(v.shape) if v.ndim else 1)
        return out


@dataclass
class RomSolution:
    alpha: np.ndarray
    s: float
    report: NewtonReport
    beta: np.ndarray | None = None
    gamma: np.ndarray | None = None


def _reduced_quantities(basis: SnapshotBasis, problem: FomProblem):
    Z = basis.basis_matrix()
    A_N = Z.T @ (problem.stiffness @ Z)
    F_N = Z.T @ problem.load
    L_N = Z.T @ problem.mass_lumped
    return Z, A_N, F_N, L_N


def _training_anchors(basis: SnapshotBasis, problem: FomProblem, Z: np.ndarray):
    """Reduced coordinates of the raw truth snapshots at the training points."""
    U = basis.raw_matrix()
    alpha = (Z.T @ (problem.stiffness @ U)).T        # (n_train, N)
    return np.asarray(basis.samples.points, dtype=float), alpha


def build_standard_rb(basis: SnapshotBasis, problem: FomProblem) -> RomOperators:
    """Dense projections A_N, F_N, L_N of the truth operators."""
    Z, A_N, F_N, L_N = _reduced_quantities(basis, problem)
    return RomOperators(problem.name, basis.n, A_N, F_N, L_N,
                        anchors=_training_anchors(basis, problem, Z))


class StandardRbSolver:
    """Galerkin reduced solver with genuine full-order nonlinear assembly.

    Each Newton iteration lifts the reduced coordinates to the truth space,
    assembles the full-order residual and sparse Jacobian, and projects both
    onto the reduced basis.  This is the classical reduced-basis online
    procedure: its per-iteration cost scales with the truth dimension, which
    is exactly why the interpolated variant exists.
    """

    def __init__(self, ops: RomOperators, basis: SnapshotBasis, problem: FomProblem):
        self.ops = ops
        self.problem = problem
        self.Z = basis.basis_matrix()

    def residual_jacobian(self, alpha, mu):
        Z = self.Z
        u = Z @ alpha
        r = self.problem.residual(u, mu)
        J = self.problem.jacobian(u, mu)
        return Z.T @ r, Z.T @ (J @ Z)


def _newton_reduced(res_jac, N, mu, alpha0=None, tol=ONLINE_TOL,
                    maxit=ONLINE_MAXIT, line_search=False):
    alpha = np.zeros(N) if alpha0 is None else np.array(alpha0, dtype=float)
    r, J = res_jac(alpha, mu)
    rn = float(np.linalg.norm(r))
    residuals = [rn]
    for it in range(1, maxit + 1):
        if not np.isfinite(rn):
            raise SolverError(f"reduced Newton diverged at mu={tuple(mu)}", residuals)
        if rn <= tol:
            # one polish step: the residual tolerance alone leaves coefficient
            # error ~ tol/|J| which is visible for small-scale residuals
            dalpha = np.linalg.lstsq(J, -r, rcond=1e-12)[0]
            if np.all(np.isfinite(dalpha)):
                r2, _ = res_jac(alpha + dalpha, mu)
                if float(np.linalg.norm(r2)) <= rn:
                    alpha = alpha + dalpha
            return alpha, NewtonReport(True, it - 1, residuals)
        # pseudo-inverse step: robust to the near-singular Jacobians the
        # saturating conductivity produces, and cheap at reduced dimension
        dalpha = np.linalg.lstsq(J, -r, rcond=1e-12)[0]
        if not np.all(np.isfinite(dalpha)):
            raise SolverError(f"singular reduced system at mu={tuple(mu)}", residuals)
        cap = 100.0 * max(1.0, float(np.linalg.norm(alpha)))
        dn = float(np.linalg.norm(dalpha))
        if dn > cap:
            dalpha *= cap / dn
        if not line_search:
            alpha = alpha + dalpha
            r, J = res_jac(alpha, mu)
            rn = float(np.linalg.norm(r))
            residuals.append(rn)
            continue
        t = 1.0
        for _ in range(30):
            at = alpha + t * dalpha
            rt, Jt = res_jac(at, mu)
            rtn = float(np.linalg.norm(rt))
            if np.isfinite(rtn) and rtn < (1.0 - 1e-4 * t) * rn:
                alpha, r, J, rn = at, rt, Jt, rtn
                break
            t *= 0.5
        else:
            raise SolverError(f"reduced line search stalled at mu={tuple(mu)}", residuals)
        residuals.append(rn)
    raise SolverError(f"reduced Newton did not converge at mu={tuple(mu)}", residuals)


def _lm_fallback(res_jac, N, mu, guesses):
    """Levenberg-Marquardt search for a root, then a Newton polish."""
    from scipy.optimize import least_squares
    for guess in guesses:
        g = np.zeros(N) if guess is None else np.asarray(guess, dtype=float)
        try:
            res = least_squares(lambda a: res_jac(a, mu)[0], g,
                                jac=lambda a: res_jac(a, mu)[1],
                                method="lm", xtol=1e-14, ftol=1e-14)
        except Exception:
            continue
        if float(np.linalg.norm(res.fun)) < 1e-6:
            try:
                return _newton_reduced(res_jac, N, mu, alpha0=res.x,
                                       maxit=20, line_search=True)
            except SolverError:
                continue
    return None


def _anchor_continuation(res_jac, N, mu, anchors, line_search):
    """Track the solution branch from the nearest training point to mu.

    Starting from the projected truth coordinates at a training sample keeps
    the online Newton iteration on the physical branch when the reduced
    system has spurious roots; plain (even warm-started) Newton can converge
    cleanly to a wrong root without any sign of trouble.
    """
    mu = np.asarray(mu, dtype=float)
    mu_train, alpha_train = anchors
    span = np.maximum(mu_train.max(axis=0) - mu_train.min(axis=0), 1e-30)
    j = int(np.argmin(np.linalg.norm((mu_train - mu) / span, axis=1)))
    start = mu_train[j]
    alpha = alpha_train[j].copy()
    if np.allclose(start, mu, rtol=0.0, atol=1e-14):
        return _newton_reduced(res_jac, N, tuple(mu), alpha0=alpha,
                               line_search=line_search)
    cur, step, prev = 0.0, 0.125, None       # path parameter t in [0, 1]
    rep = None
    while cur < 1.0:
        nxt = min(cur + step, 1.0)
        guess = alpha
        if prev is not None and cur > prev[0]:
            # secant predictor along the straight path in parameter space
            guess = alpha + (alpha - prev[1]) * ((nxt - cur) / (cur - prev[0]))
        trial = tuple(start + nxt * (mu - start))
        try:
            alpha_new, rep = _newton_reduced(res_jac, N, trial, alpha0=guess,
                                             line_search=line_search, maxit=30)
        except SolverError:
            step *= 0.5
            if step < 1e-5:
                raise
            continue
        prev = (cur, alpha)
        alpha, cur = alpha_new, nxt
        step *= 1.5
    return alpha, rep


def _solve_reduced(res_jac, N, L, mu, problem_name, alpha0=None, anchors=None):
    ls = problem_name == "diffusion"
    if ls and mu[0] == 0.0:
        # zero Neumann data: alpha = 0 solves exactly, and the conductivity
        # may be uniformly tiny, making any continuation ill-scaled
        return _newton_reduced(res_jac, N, mu, line_search=ls)
    if ls and anchors is not None:
        # the conduction problem's reduced system has non-physical roots that
        # attract plain Newton; always branch-track from a training anchor
        try:
            return _anchor_continuation(res_jac, N, mu, anchors, ls)
        except SolverError:
            pass
    try:
        alpha, rep = _newton_reduced(res_jac, N, mu, alpha0=alpha0, line_search=ls)
    except SolverError:
        try:
            if anchors is not None:
                alpha, rep = _anchor_continuation(res_jac, N, mu, anchors, ls)
            else:
                raise
        except SolverError:
            # last resort; may settle on a non-physical root, so it is only
            # reached when branch tracking has already failed
            polished = _lm_fallback(res_jac, N, mu, (alpha0, None))
            if polished is None:
                raise
            alpha, rep = polished
    return alpha, rep


def solve_standard_rb(solver: StandardRbSolver, mu, alpha0=None) -> RomSolution:
    """Newton solve of the standard Galerkin reduced model at mu."""
    alpha, rep = _solve_reduced(solver.residual_jacobian, solver.ops.N,
                                solver.ops.L, mu, solver.problem.name, alpha0,
                                anchors=solver.ops.anchors)
    return RomSolution(alpha, float(solver.ops.L @ alpha), rep)


def build_ei_rb(basis: SnapshotBasis, systems, problem: FomProblem) -> RomOperators:
    """Reduced operators coupling the RB space to the interpolation basis.

    ``systems`` is a single InterpolationSystem for the elliptic problem or
    a (g-system, h-system) pair for the diffusion problem.  The couplings
    C are integrated by the truth quadrature and folded with the triangular
    interpolation matrix into E = C B^{-1}.
    """
    q = problem.space.quadrature
    Z, A_N, F_N, L_N = _reduced_quantities(basis, problem)
    w = q.weights

    def coupling(system: InterpolationSystem, test_values: np.ndarray) -> np.ndarray:
        if system.basis.shape[0] != q.n_points:
            raise ValueError("interpolation system built on a different evaluation set")
        C = test_values.T @ (system.basis * w[:, None])   # (N, M)
        return sla.solve_triangular(system.B.T, C.T, lower=False).T

    if problem.name == "elliptic":
        system = systems
        Zq = q.phi @ Z
        E = coupling(system, Zq)
        Zpts = Zq[system.point_indices]
        return RomOperators("elliptic", basis.n, A_N, F_N, L_N,
                            E=E, Zpts=Zpts,
                            anchors=_training_anchors(basis, problem, Z))
    sys_g, sys_h = systems
    Zq = q.phi @ Z
    Zx = q.gx @ Z
    Zy = q.gy @ Z
    Eg = coupling(sys_g, Zx)
    Eh = coupling(sys_h, Zy)
    return RomOperators("diffusion", basis.n, None, F_N, L_N,
                        Eg=Eg, Eh=Eh,
                        Zg=Zq[sys_g.point_indices], Zg_dx=Zx[sys_g.point_indices],
                        Zh=Zq[sys_h.point_indices], Zh_dy=Zy[sys_h.point_indices],
                        anchors=_training_anchors(basis, problem, Z))


class EiRbSolver:
    """Online solver touching only M-point samples of the nonlinear terms."""

    def __init__(self, ops: RomOperators, term=None):
        self.ops = ops
        self.term = term

    def residual_jacobian(self, alpha, mu):
        ops = self.ops
        if ops.problem == "elliptic":
            u_pts = ops.Zpts @ alpha
            g = self.term.value(u_pts, mu)
            gp = self.term.du(u_pts, mu)
            r = ops.A @ alpha + mu[0] * (ops.E @ g) - ops.F
            J = ops.A + mu[0] * (ops.E @ (ops.Zpts * gp[:, None]))
            return r, J
        kap_g = DiffusionFluxTerm.kappa(ops.Zg @ alpha, mu)
        kdu_g = DiffusionFluxTerm.kappa_du(ops.Zg @ alpha, mu)
        ux_g = ops.Zg_dx @ alpha
        kap_h = DiffusionFluxTerm.kappa(ops.Zh @ alpha, mu)
        kdu_h = DiffusionFluxTerm.kappa_du(ops.Zh @ alpha, mu)
        uy_h = ops.Zh_dy @ alpha
        g = kap_g * ux_g
        h = kap_h * uy_h
        r = ops.Eg @ g + ops.Eh @ h - mu[0] * ops.F
        Hg = ops.Zg * (kdu_g * ux_g)[:, None] + ops.Zg_dx * kap_g[:, None]
        Hh = ops.Zh * (kdu_h * uy_h)[:, None] + ops.Zh_dy * kap_h[:, None]
        J = ops.Eg @ Hg + ops.Eh @ Hh
        return r, J


def solve_ei_rb(solver: EiRbSolver, mu, alpha0=None) -> RomSolution:
    """Newton solve of the interpolation-accelerated reduced model at mu."""
    ops = solver.ops
    alpha, rep = _solve_reduced(solver.residual_jacobian, ops.N, ops.L, mu,
                                ops.problem, alpha0, anchors=ops.anchors)
    return RomSolution(alpha, float(ops.L @ alpha), rep)


@dataclass
class ErrorReport:
    """Per-test-point errors and effectivities plus the paper-style aggregates."""

    mus: np.ndarray
    s_truth: np.ndarray
    s_rb: np.ndarray
    s_ei: np.ndarray
    eps_s_rb: np.ndarray
    eps_s_ei: np.ndarray
    eps_u_rb: np.ndarray
    eps_u_ei: np.ndarray
    eta_s: np.ndarray
    eta_u: np.ndarray
    excluded: np.ndarray
    failed: np.ndarray | None = None
    mean_eps_s_rb: float = 0.0
    mean_eps_s_ei: float = 0.0
    mean_eps_u_rb: float = 0.0
    mean_eps_u_ei: float = 0.0
    mean_eta_s: float = 0.0
    mean_eta_u: float = 0.0

    def finalize(self, u_norms: np.ndarray):
        solved = (np.ones(len(self.s_truth), dtype=bool)
                  if self.failed is None else ~self.failed)
        s_sum = np.abs(self.s_truth[solved]).sum()
        u_sum = u_norms[solved].sum()
        self.mean_eps_s_rb = float(self.eps_s_rb[solved].sum() / s_sum)
        self.mean_eps_s_ei = float(self.eps_s_ei[solved].sum() / s_sum)
        self.mean_eps_u_rb = float(self.eps_u_rb[solved].sum() / u_sum)
        self.mean_eps_u_ei = float(self.eps_u_ei[solved].sum() / u_sum)
        ok = ~self.excluded
        self.mean_eta_s = float(self.eta_s[ok].mean()) if ok.any() else np.nan
        self.mean_eta_u = float(self.eta_u[ok].mean()) if ok.any() else np.nan
        return self


UNDERFLOW_GUARD = 1e-14


def error_and_effectivity(problem: FomProblem, basis: SnapshotBasis,
                          rb_solver: StandardRbSolver, ei_solver: EiRbSolver,
                          test_samples: SampleSet,
                          truth_provider=None) -> ErrorReport:
    """Output/field errors of both reduced models and their effectivities.

    ``truth_provider(mu)`` returns (coefficients, s); defaults to solving the
    FOM.  Test points where the standard-RB error underflows are excluded
    from the averaged effectivities.
    """
    A = problem.stiffness
    Z = basis.basis_matrix()
    n = len(test_samples)
    out = {k: np.zeros(n) for k in
           ("s_truth", "s_rb", "s_ei", "eps_s_rb", "eps_s_ei",
            "eps_u_rb", "eps_u_ei", "eta_s", "eta_u")}
    excluded = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    u_norms = np.zeros(n)
    alpha_rb = alpha_ei = None
    prev_mu = None
    for i, mu in enumerate(test_samples):
        if prev_mu is not None and mu[1] < prev_mu[1]:
            # new sweep row: a warm start from the far end of the previous
            # row could drop the solve onto a non-physical branch
            alpha_rb = alpha_ei = None
        prev_mu = mu
        if truth_provider is not None:
            u, s = truth_provider(mu)
        else:
            f, s, _ = solve_fom(problem, mu)
            u = f.coefficients
        try:
            sol_rb = solve_standard_rb(rb_solver, mu, alpha0=alpha_rb)
            sol_ei = solve_ei_rb(ei_solver, mu, alpha0=alpha_ei)
        except SolverError:
            # recorded and excluded; the sweep continues at the next point
            failed[i] = excluded[i] = True
            out["s_truth"][i] = s
            continue
        alpha_rb, alpha_ei = sol_rb.alpha, sol_ei.alpha
        Au = A @ u
        uu = float(u @ Au)
        ZAu = Z.T @ Au
        u_norms[i] = np.sqrt(max(uu, 0.0))

        def xerr(alpha):
            # ||u - Z a||_X^2 with Z X-orthonormal
            return float(np.sqrt(max(uu - 2.0 * (alpha @ ZAu) + alpha @ alpha, 0.0)))

        out["s_truth"][i] = s
        out["s_rb"][i] = sol_rb.s
        out["s_ei"][i] = sol_ei.s
        out["eps_s_rb"][i] = abs(s - sol_rb.s)
        out["eps_s_ei"][i] = abs(s - sol_ei.s)
        out["eps_u_rb"][i] = xerr(sol_rb.alpha)
        out["eps_u_ei"][i] = xerr(sol_ei.alpha)
        if out["eps_s_rb"][i] < UNDERFLOW_GUARD or out["eps_u_rb"][i] < UNDERFLOW_GUARD:
            excluded[i] = True
        else:
            out["eta_s"][i] = out["eps_s_ei"][i] / out["eps_s_rb"][i]
            out["eta_u"][i] = out["eps_u_ei"][i] / out["eps_u_rb"][i]
    report = ErrorReport(mus=test_samples.points, excluded=excluded,
                         failed=failed, **out)
    return report.finalize(u_norms)


def timing_harness(problem: FomProblem, rb_solver: StandardRbSolver,
                   ei_solver: EiRbSolver, test_samples: SampleSet) -> dict:
    """Median wall time per solve over the test set, normalized by the FOM."""

    def median_time(fn):
        times = []
        for mu in test_samples:
            t0 = time.perf_counter()
            fn(tuple(mu))
            times.append(time.perf_counter() - t0)
        return float(np.median(times))

    # warm-up on the first point
    mu0 = tuple(test_samples.points[0])
    solve_fom(problem, mu0)
    solve_standard_rb(rb_solver, mu0)
    solve_ei_rb(ei_solver, mu0)

    t_fom = median_time(lambda mu: solve_fom(problem, mu))
    t_rb = median_time(lambda mu: solve_standard_rb(rb_solver, mu))
    t_ei = median_time(lambda mu: solve_ei_rb(ei_solver, mu))
    return {
        "fom": 1.0,
        "standard_rb": t_rb / t_fom,
        "ei_rb": t_ei / t_fom,
        "fom_seconds": t_fom,
    }
