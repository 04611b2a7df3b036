"""Parameter domains, structured sample grids, snapshots, and orthonormal bases."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import Field, FomProblem, assemble_stiffness, solve_fom

__all__ = [
    "ParameterDomain", "SampleSet", "SnapshotBasis",
    "log_map", "build_sample_grid", "compute_snapshot_basis",
]

ORTHO_TOL = 1e-10
DROP_TOL = 1e-12


@dataclass(frozen=True)
class ParameterDomain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower/upper dimension mismatch")
        if not all(a < b for a, b in zip(self.lower, self.upper)):
            raise ValueError("require lower < upper componentwise")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, mu, tol: float = 1e-12) -> bool:
        return all(a - tol <= x <= b + tol
                   for x, a, b in zip(mu, self.lower, self.upper))


@dataclass
class SampleSet:
    """Ordered list of parameter points with a provenance tag."""

    points: np.ndarray  # (n, P)
    provenance: str = "explicit"

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.points, delimiter=",",
                   header=",".join(f"mu{i+1}" for i in range(self.points.shape[1])))

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2), provenance="explicit")


def log_map(x: float, a: float, b: float, alpha: float):
    """Monotone map of [a, b] onto itself clustering points toward b.

    y(x) = a + (b-a) (1 - exp(-alpha (x-a)/(b-a))) / (1 - exp(-alpha)).
    """
    if not (a < b and alpha > 0):
        raise ValueError("require a < b and alpha > 0")
    x = np.asarray(x, dtype=float)
    if np.any(x < a - 1e-14) or np.any(x > b + 1e-14):
        raise ValueError("x outside [a, b]")
    t = (x - a) / (b - a)
    return a + (b - a) * (1.0 - np.exp(-alpha * t)) / (1.0 - np.exp(-alpha))


def build_sample_grid(domain: ParameterDomain, k: int,
                      distribution: str = "uniform",
                      alpha: float = 3.0) -> SampleSet:
    """Tensor k-by-k grid, uniform or logarithmically clustered per axis.

    Ordering is row-major: the first parameter component varies slowest.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    axes = []
    for a, b in zip(domain.lower, domain.upper):
        ax = np.linspace(a, b, k) if k > 1 else np.array([a])
        if distribution == "log":
            ax = log_map(ax, a, b, alpha)
        elif distribution != "uniform":
            raise ValueError(f"unknown distribution {distribution!r}")
        axes.append(ax)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    tag = "uniform-grid" if distribution == "uniform" else f"log-grid(alpha={alpha:g})"
    return SampleSet(pts, provenance=tag)


@dataclass
class SnapshotBasis:
    """Raw truth snapshots and their X-orthonormalization."""

    raw: list[Field]
    basis: list[Field]
    samples: SampleSet
    gram_error: float
    dropped: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.basis)

    def raw_matrix(self) -> np.ndarray:
        return np.column_stack([f.coefficients for f in self.raw])

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack([f.coefficients for f in self.basis])


def orthonormalize(space, snapshots: np.ndarray, stiffness=None):
    """Modified Gram-Schmidt in the X-inner product with one re-orthogonalization.

    Returns (Z, dropped) where Z columns are X-orthonormal and ``dropped``
    lists indices of near-linearly-dependent snapshots that were discarded.
    """
    A = assemble_stiffness(space) if stiffness is None else stiffness
    cols = []
    dropped = []
    for j in range(snapshots.shape[1]):
        v = snapshots[:, j].copy()
        norm0 = np.sqrt(v @ (A @ v))
        for _ in range(2):  # MGS + one re-orthogonalization pass
            for z in cols:
                v -= (z @ (A @ v)) * z
        norm = np.sqrt(max(v @ (A @ v), 0.0))
        if norm < DROP_TOL * max(norm0, 1.0):
            dropped.append(j)
            continue
        cols.append(v / norm)
    return np.column_stack(cols) if cols else np.empty((snapshots.shape[0], 0)), dropped


def compute_snapshot_basis(samples: SampleSet, problem: FomProblem,
                           warm_start: bool = True,
                           fields: list[Field] | None = None) -> SnapshotBasis:
    """Truth snapshots at the sample points and their X-orthonormal basis.

    ``fields`` may supply precomputed truth solutions (e.g. from a cache);
    otherwise the FOM is solved at every sample point, warm starting each
    solve from the previous solution.
    """
    space = problem.space
    if fields is None:
        fields = []
        u_prev = None
        for mu in samples:
            try:
                f, _, _ = solve_fom(problem, mu,
                                    u0=u_prev if warm_start else None)
            except Exception as exc:
                raise RuntimeError(f"FOM solve failed at mu={tuple(mu)}") from exc
            fields.append(f)
            u_prev = f.coefficients
    snaps = np.column_stack([f.coefficients for f in fields])
    A = problem.stiffness
    Z, dropped = orthonormalize(space, snaps, stiffness=A)
    G = Z.T @ (A @ Z)
    gram_err = float(np.abs(G - np.eye(Z.shape[1])).max()) if Z.size else 0.0
    basis = [Field(space, Z[:, j]) for j in range(Z.shape[1])]
    return SnapshotBasis(fields, basis, samples, gram_err, dropped)
