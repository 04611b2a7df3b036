"""Reduced-basis solver for a nonlinear reaction problem, with and without
empirical interpolation of the reaction term.

Truth problem: -Laplace(u) + mu1 * exp(sin(mu2 * u)) = forcing on the unit
square, homogeneous Dirichlet data, parameters mu in [1,10]^2.  A coarse mesh
keeps this demo under a minute; the shipped studies use the full resolution.

Shows: (a) Galerkin reproduction -- at training parameters the reduced
solution matches the truth snapshot to solver tolerance; (b) at unseen test
parameters the interpolated ROM tracks the projection error while solving a
small dense system instead of the full sparse one.

Run:  python3 demos/reaction_rom.py
"""

import numpy as np

from foeim import (elliptic_problem, build_sample_grid, solve_fom,
                   compute_snapshot_basis, snapshot_nonlinear,
                   taylor_candidates, independent_subset, foeim1_construct,
                   build_standard_rb, build_ei_rb, StandardRbSolver,
                   EiRbSolver, solve_standard_rb, solve_ei_rb,
                   inner_product_x)
from foeim.studies import STUDY_DOMAINS


def main():
    problem = elliptic_problem(12, 2)       # coarse truth mesh for the demo
    dom = STUDY_DOMAINS["elliptic"]
    train = build_sample_grid(dom, 3)       # N = 9 training parameters

    print("Solving the truth problem at 9 training parameters ...")
    basis = compute_snapshot_basis(train, problem)
    quad = problem.space.quadrature

    lagrange = snapshot_nonlinear(basis.raw, problem.term, train, quad)
    raw = taylor_candidates(basis.raw, problem.term, train, quad)
    taylor = independent_subset(raw)
    N = len(basis.basis)
    M = 3 * N
    system = foeim1_construct(lagrange, taylor, M, quad)

    rb_ops = build_standard_rb(basis, problem)
    ei_ops = build_ei_rb(basis, system, problem)
    rb = StandardRbSolver(rb_ops, basis, problem)
    ei = EiRbSolver(ei_ops, problem.term)

    print("\nGalerkin reproduction at training parameters:")
    worst = 0.0
    for n, mu in enumerate(train):
        sol = solve_standard_rb(rb, mu)
        err_vec = (np.column_stack([b.coefficients for b in basis.basis])
                   @ sol.alpha) - basis.raw[n].coefficients
        err = np.sqrt(inner_product_x(problem.space, err_vec, err_vec))
        worst = max(worst, err)
    print(f"  max ||u_N(mu_n) - zeta_n||_X over training set = {worst:.2e}")

    print(f"\nTest parameters (EI-ROM with M = {M} interpolation points):")
    rng = np.random.default_rng(0)
    print(f"  {'mu1':>6} {'mu2':>6}  {'|s - s_NM|/|s|':>15}")
    for _ in range(4):
        mu = dom.lower + rng.random(2) * (np.asarray(dom.upper) - dom.lower)
        _, s_truth, _ = solve_fom(problem, mu)
        sol = solve_ei_rb(ei, mu)
        rel = abs(sol.s - s_truth) / abs(s_truth)
        print(f"  {mu[0]:6.2f} {mu[1]:6.2f}  {rel:15.3e}")

    nA = problem.stiffness.shape[0]
    print(f"\nOnline system size: {N} x {N} dense "
          f"(truth: {nA} x {nA} sparse).")


if __name__ == "__main__":
    main()
