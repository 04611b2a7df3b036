"""Assembly and Newton solution of the two truth (full-order) model problems.

Problem "elliptic": -lap(u) + mu1 exp(sin(mu2 u)) = 100 sin(2 pi x1) cos(2 pi x2)
on the unit square with homogeneous Dirichlet boundary.

Problem "diffusion": -div(kappa(u, mu) grad u) = 0 on the T-shaped domain with
kappa = exp(-(u - mu2)^2), Dirichlet top, flux mu1 at the bottom, insulated
elsewhere.

All integrals use the space's tensor Gauss quadrature through the sparse
point-evaluation operators phi/gx/gy, so assembly reduces to sparse algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import ConfigurationError, DiscreteSpace, edge_quadrature, t_shape, unit_square, build_space
from .terms import DiffusionFluxTerm, EllipticTerm, get_term

__all__ = [
    "Field", "NewtonReport", "SolverError",
    "assemble_stiffness", "assemble_load", "assemble_boundary_load",
    "evaluate_field", "inner_product_x", "integrate_field",
    "FomProblem", "elliptic_problem", "diffusion_problem", "solve_fom",
]

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50


class SolverError(RuntimeError):
    """Newton failed to converge; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass
class Field:
    """Coefficient vector of an FE function on a given space."""

    space: DiscreteSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_nodes,):
            raise ValueError("coefficient length does not match the space")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residuals: list[float]


def assemble_stiffness(space: DiscreteSpace) -> sp.csr_matrix:
    """Stiffness matrix a(phi_i, phi_j) = int grad phi_i . grad phi_j."""
    q = space.quadrature
    W = sp.diags(q.weights)
    A = q.gx.T @ W @ q.gx + q.gy.T @ W @ q.gy
    A = (A + A.T) * 0.5  # exact symmetry
    return A.tocsr()


def assemble_load(space: DiscreteSpace, f) -> np.ndarray:
    """Volumetric load vector with density f(x, y) integrated by quadrature."""
    q = space.quadrature
    fv = f(q.points[:, 0], q.points[:, 1])
    return q.phi.T @ (q.weights * fv)


def assemble_boundary_load(space: DiscreteSpace, label: str = "neumann-flux") -> np.ndarray:
    """Unit-flux boundary load on the segments carrying the given label."""
    segs = [s for s in space.geometry.segments if s.label == label]
    if not segs:
        raise ConfigurationError(f"no boundary segment labeled {label!r}")
    F = np.zeros(space.n_nodes)
    for seg in segs:
        eq = edge_quadrature(space, seg)
        F += eq.phi.T @ eq.weights
    return F


def evaluate_field(space: DiscreteSpace, field: Field, quad=None):
    """Values and gradients of the FE function at the quadrature points."""
    if field.space is not space:
        raise ValueError("field does not belong to the given space")
    q = quad or space.quadrature
    u = field.coefficients
    return q.phi @ u, np.column_stack([q.gx @ u, q.gy @ u])


def integrate_field(space: DiscreteSpace, coeffs: np.ndarray) -> float:
    """int_Omega u by quadrature."""
    q = space.quadrature
    return float(q.weights @ (q.phi @ coeffs))


def inner_product_x(space: DiscreteSpace, w: Field | np.ndarray, v: Field | np.ndarray,
                    stiffness: sp.csr_matrix | None = None) -> float:
    """X-inner product a(w, v) = int grad w . grad v."""
    wc = w.coefficients if isinstance(w, Field) else np.asarray(w)
    vc = v.coefficients if isinstance(v, Field) else np.asarray(v)
    if wc.shape != (space.n_nodes,) or vc.shape != (space.n_nodes,):
        raise ValueError("fields do not match the space")
    A = assemble_stiffness(space) if stiffness is None else stiffness
    return float(wc @ (A @ vc))


def _source(x, y):
    return 100.0 * np.sin(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y)


class FomProblem:
    """One of the two truth problems on its discrete space, ready to solve."""

    def __init__(self, name: str, space: DiscreteSpace):
        if name not in ("elliptic", "diffusion"):
            raise ConfigurationError(f"unknown problem {name!r}")
        self.name = name
        self.space = space
        self.stiffness = assemble_stiffness(space)
        q = space.quadrature
        self.mass_lumped = q.phi.T @ q.weights  # entries int phi_j
        if name == "elliptic":
            self.load = assemble_load(space, _source)
            self.term = EllipticTerm()
            self.domain = ((1.0, 10.0), (1.0, 10.0))
        else:
            self.load = assemble_boundary_load(space)
            self.term_g = DiffusionFluxTerm(0)
            self.term_h = DiffusionFluxTerm(1)
            self.domain = ((1.0, 10.0), (0.0, 10.0))
        free = space.free
        self._free = free
        self._Aff = self.stiffness[free][:, free].tocsc()

    def residual(self, u: np.ndarray, mu) -> np.ndarray:
        """Discrete residual over all nodes (Dirichlet rows not yet eliminated)."""
        q = self.space.quadrature
        if self.name == "elliptic":
            g = self.term.value(q.phi @ u, mu)
            return self.stiffness @ u + mu[0] * (q.phi.T @ (q.weights * g)) - self.load
        uq = q.phi @ u
        ux, uy = q.gx @ u, q.gy @ u
        kap = DiffusionFluxTerm.kappa(uq, mu)
        r = q.gx.T @ (q.weights * kap * ux) + q.gy.T @ (q.weights * kap * uy)
        return r - mu[0] * self.load

    def jacobian(self, u: np.ndarray, mu) -> sp.csr_matrix:
        q = self.space.quadrature
        if self.name == "elliptic":
            gp = self.term.du(q.phi @ u, mu)
            return self.stiffness + mu[0] * (q.phi.T @ sp.diags(q.weights * gp) @ q.phi)
        uq = q.phi @ u
        ux, uy = q.gx @ u, q.gy @ u
        kap = DiffusionFluxTerm.kappa(uq, mu)
        kdu = DiffusionFluxTerm.kappa_du(uq, mu)
        J = q.gx.T @ sp.diags(q.weights * kap) @ q.gx
        J = J + q.gy.T @ sp.diags(q.weights * kap) @ q.gy
        J = J + q.gx.T @ sp.diags(q.weights * kdu * ux) @ q.phi
        J = J + q.gy.T @ sp.diags(q.weights * kdu * uy) @ q.phi
        return J


def elliptic_problem(n: int = 32, degree: int = 3) -> FomProblem:
    space = build_space(unit_square(), (n, n), degree)
    return FomProblem("elliptic", space)


#: domain scale for the heat conduction study; keeps mu1 * stem height below
#: the conductivity saturation bound sqrt(pi)/2 over the whole parameter box
T_SHAPE_SCALE = 0.01


def diffusion_problem(degree: int = 3, scale: float = T_SHAPE_SCALE) -> FomProblem:
    space = build_space(t_shape(scale), [(40, 10), (10, 50)], degree)
    return FomProblem("diffusion", space)


def newton_solve(problem: FomProblem, mu, u0=None, tol: float = NEWTON_TOL,
                 maxit: int = NEWTON_MAXIT, line_search: bool = False):
    """Newton iteration on the free degrees of freedom.

    With ``line_search`` the step is backtracked (halving, at most 25 times)
    until the residual norm decreases; used for the strongly nonlinear
    diffusion problem, where full steps can overshoot the conductivity well.
    """
    space = problem.space
    free = problem._free
    u = np.zeros(space.n_nodes) if u0 is None else np.array(u0, dtype=float)
    u[~free] = 0.0
    residuals = []
    r = problem.residual(u, mu)[free]
    rn = float(np.linalg.norm(r))
    residuals.append(rn)
    for it in range(1, maxit + 1):
        if not np.isfinite(rn):
            raise SolverError(f"Newton diverged at mu={tuple(mu)}", residuals)
        if rn <= tol:
            # polish toward the round-off floor: the absolute tolerance is
            # loose relative to the tiny residual scales the saturating
            # conductivity produces, and downstream reduced solvers amplify
            # the leftover
            for _ in range(3):
                J = problem.jacobian(u, mu)[free][:, free].tocsc()
                with np.errstate(all="ignore"):
                    du = spla.spsolve(J, -r)
                if not np.all(np.isfinite(du)):
                    break
                ut = u.copy()
                ut[free] += du
                rt = problem.residual(ut, mu)[free]
                rtn = float(np.linalg.norm(rt))
                if not np.isfinite(rtn) or rtn >= 0.1 * rn:
                    break
                u, r, rn = ut, rt, rtn
                residuals.append(rn)
            return u, NewtonReport(True, it - 1, residuals)
        J = problem.jacobian(u, mu)[free][:, free].tocsc()
        with np.errstate(all="ignore"):
            du = spla.spsolve(J, -r)
        if not np.all(np.isfinite(du)):
            raise SolverError(f"singular Newton system at mu={tuple(mu)}", residuals)
        if not line_search:
            u[free] += du
            r = problem.residual(u, mu)[free]
            rn = float(np.linalg.norm(r))
            residuals.append(rn)
            continue
        t = 1.0
        for _ in range(25):
            ut = u.copy()
            ut[free] += t * du
            rt = problem.residual(ut, mu)[free]
            rtn = float(np.linalg.norm(rt))
            if np.isfinite(rtn) and rtn < (1.0 - 1e-4 * t) * rn:
                u, r, rn = ut, rt, rtn
                break
            t *= 0.5
        else:
            raise SolverError(f"line search stalled at mu={tuple(mu)}", residuals)
        residuals.append(rn)
    raise SolverError(f"Newton did not converge at mu={tuple(mu)}", residuals)


def solve_fom(problem: FomProblem, mu, u0=None, continuation: bool = True):
    """Solve the truth problem at mu; returns (Field, output s, NewtonReport).

    If Newton from the zero (or supplied) initial guess fails and
    ``continuation`` is enabled, the solve is retried by walking mu2
    (diffusion) or mu1 (elliptic) from a benign value toward its target,
    reusing each converged state as the next initial guess.
    """
    mu = (float(mu[0]), float(mu[1]))
    ls = problem.name == "diffusion"
    try:
        u, rep = newton_solve(problem, mu, u0=u0, line_search=ls)
    except SolverError:
        if not continuation:
            raise
        u, rep = _continuation_solve(problem, mu)
    field = Field(problem.space, u)
    s = integrate_field(problem.space, u)
    return field, s, rep


def _continuation_solve(problem: FomProblem, mu):
    """Adaptive homotopy in mu2 (diffusion) or mu1 (elliptic)."""
    comp = 1 if problem.name == "diffusion" else 0
    ls = problem.name == "diffusion"
    start = list(mu)
    start[comp] = 0.0
    u, rep = newton_solve(problem, tuple(start), line_search=ls)
    cur = 0.0
    target = mu[comp]
    step = max(abs(target) / 8.0, 1e-3)
    while cur < target:
        nxt = min(cur + step, target)
        trial = list(mu)
        trial[comp] = nxt
        try:
            u_new, rep = newton_solve(problem, tuple(trial), u0=u,
                                      line_search=ls, maxit=30)
        except SolverError:
            step *= 0.5
            if step < abs(target) * 1e-4 + 1e-12:
                raise
            continue
        u, cur = u_new, nxt
        step *= 1.5
    return u, rep
