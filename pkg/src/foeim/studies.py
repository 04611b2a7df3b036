"""Experiment drivers: the three numerical studies, truth caching, reports.

A study is described by an :class:`ExperimentConfig` and produces a report
directory containing deterministic CSV tables plus a manifest listing every
output file with a content hash.  Truth finite-element solutions are cached
on disk keyed by a content hash of (problem identity, mesh, parameter), so
re-running a study with a warm cache performs no full-order solves.
"""

from __future__ import annotations

import hashlib
import json
import os
import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .fem import FomProblem, elliptic_problem, diffusion_problem, solve_fom
from .interpolation import (InterpolationSystem, RegressionSystem,
                            snapshot_nonlinear, taylor_candidates,
                            independent_subset, eim_greedy,
                            foeim1_construct, foeim2_construct,
                            lebesgue_constant, max_interp_error)
from .mesh import ConfigurationError, build_space, unit_square
from .rom import (StandardRbSolver, EiRbSolver, build_standard_rb, build_ei_rb,
                  solve_standard_rb, solve_ei_rb, error_and_effectivity,
                  timing_harness)
from .sampling import (ParameterDomain, SampleSet, build_sample_grid,
                       compute_snapshot_basis)
from .terms import GaussianTerm, get_term

__all__ = ["ExperimentConfig", "run_experiment", "compare_report",
           "emit_plotdata", "load_golden", "TruthCache"]

WORKER_ENV = "FOEIM_WORKERS"

STUDY_DOMAINS = {
    "gaussian": ParameterDomain((-1.0, -1.0), (-0.01, -0.01)),
    "elliptic": ParameterDomain((1.0, 1.0), (10.0, 10.0)),
    "diffusion": ParameterDomain((1.0, 0.0), (10.0, 10.0)),
}

INTERP_METHODS = ("eim", "foeim1", "foeim2", "foerm1", "foerm2")


@dataclass
class ExperimentConfig:
    """Declarative description of one study run."""

    study: str
    n_list: list[int] = field(default_factory=list)
    m_factors: list[int] = field(default_factory=lambda: [1])
    m_values: list[int] | None = None           # overrides m_factors if set
    methods: list[str] = field(default_factory=list)
    resolution: int = 32
    degree: int = 3
    sample_distribution: str = "uniform"        # gaussian study uses "log"
    sample_alpha: float = 3.0
    test_grid: int = 30
    newton_tol: float = 1e-10
    cache_dir: str | None = None
    rng_seed: int = 0

    def validate(self) -> None:
        if self.study not in STUDY_DOMAINS:
            raise ConfigurationError(f"unknown study {self.study!r}")
        for m in self.methods:
            if m not in INTERP_METHODS + ("standard-rb",):
                raise ConfigurationError(f"unknown method {m!r}")
        for n in self.n_list:
            k = round(np.sqrt(n))
            if k * k != n:
                raise ConfigurationError(
                    f"N={n} is not a square; sample grids are k x k")
        if self.sample_distribution not in ("uniform", "log"):
            raise ConfigurationError("distribution must be uniform or log")
        if self.test_grid < 1 or self.degree < 1 or self.resolution < 1:
            raise ConfigurationError("grid sizes and degree must be positive")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def content_key(self) -> str:
        return _hash_obj(asdict(self))


def _hash_obj(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKER_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# truth caching

class TruthCache:
    """Disk cache of truth solves keyed by problem identity + parameter."""

    def __init__(self, problem: FomProblem, cache_dir):
        self.problem = problem
        self.dir = Path(cache_dir) if cache_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)
        g = problem.space.geometry
        self.base = _hash_obj({
            "problem": problem.name,
            "rectangles": [list(map(list, r)) for r in g.rectangles],
            "resolution": list(problem.space.resolution),
            "degree": problem.space.degree,
        })
        self.hits = 0
        self.misses = 0
        self._mem: dict[str, tuple[np.ndarray, float]] = {}

    def _key(self, mu) -> str:
        return self.base + "-" + _hash_obj([float(v) for v in mu])

    def get(self, mu, warm=None):
        """Truth (coefficients, output) at mu, from cache or a fresh solve."""
        key = self._key(mu)
        if key in self._mem:
            self.hits += 1
            return self._mem[key]
        if self.dir:
            f = self.dir / f"{key}.npz"
            if f.exists():
                d = np.load(f)
                out = (d["u"], float(d["s"]))
                self._mem[key] = out
                self.hits += 1
                return out
        fld, s, _ = solve_fom(self.problem, tuple(mu), u0=warm)
        out = (fld.coefficients, float(s))
        self._mem[key] = out
        if self.dir:
            np.savez_compressed(self.dir / f"{key}.npz", u=out[0], s=s)
        self.misses += 1
        return out

    def sweep(self, samples: SampleSet):
        """Solve (or load) the whole sample set, warm-starting consecutive
        points; sorted so the stiff parameter component increases."""
        comp = 1 if self.problem.name == "diffusion" else 0
        order = np.lexsort((samples.points[:, comp],
                            samples.points[:, 1 - comp]))
        warm = None
        for i in order:
            u, _ = self.get(samples.points[i], warm=warm)
            warm = u


# ---------------------------------------------------------------------------
# interpolation-system construction shared by the studies

def build_systems(lagrange, taylor, methods, M, quad):
    """Interpolation/regression systems of size M for the requested methods."""
    out = {}
    L = len(lagrange) + len(taylor)
    for method in methods:
        if method == "eim":
            if M > len(lagrange):
                continue
            out[method] = eim_greedy(lagrange, M, quad)
        elif method in ("foeim1", "foerm1"):
            out[method] = foeim1_construct(lagrange, taylor, min(M, L), quad)
        elif method in ("foeim2", "foerm2"):
            out[method] = foeim2_construct(lagrange, taylor, min(M, L), quad)
    return out


def _m_list(cfg: ExperimentConfig, N: int) -> list[int]:
    if cfg.m_values:
        return [m for m in cfg.m_values]
    return [f * N for f in cfg.m_factors]


# ---------------------------------------------------------------------------
# gaussian study (analytic fields, no PDE solve)

def gaussian_field(points: np.ndarray, mu) -> np.ndarray:
    """Inverse-distance field 1/|x - mu| at the evaluation points."""
    return 1.0 / np.sqrt((points[:, 0] - mu[0]) ** 2
                         + (points[:, 1] - mu[1]) ** 2)


def run_gaussian(cfg: ExperimentConfig, out: Path) -> list[Path]:
    dom = STUDY_DOMAINS["gaussian"]
    space = build_space(unit_square(), cfg.resolution, cfg.degree)
    quad = space.quadrature
    term = GaussianTerm()
    test = build_sample_grid(dom, cfg.test_grid, "uniform")

    def truth(mu):
        return gaussian_field(quad.points, mu)

    interp_rows = []
    point_rows = []
    for N in cfg.n_list:
        k = round(np.sqrt(N))
        S = build_sample_grid(dom, k, cfg.sample_distribution, cfg.sample_alpha)
        raw = [gaussian_field(quad.points, mu) for mu in S]
        lag = snapshot_nonlinear(raw, term, S, quad)
        tay = independent_subset(
            taylor_candidates(raw, term, S, quad, include_mu_family=False))
        for M in _m_list(cfg, N):
            systems = build_systems(lag, tay, cfg.methods, M, quad)
            for method, sysM in systems.items():
                if method.startswith("foerm"):
                    rsys = RegressionSystem.from_interpolation(sysM, min(N, sysM.M))
                    eps, _ = max_interp_error(rsys, term, test, truth,
                                              regression=True)
                    leb = ""
                else:
                    eps, _ = max_interp_error(sysM, term, test, truth)
                    leb = f"{lebesgue_constant(sysM):.12e}"
                interp_rows.append([N, sysM.M, method, f"{eps:.12e}", leb])
            # point scatter for the largest M of the first interpolation method
        for method in cfg.methods:
            if method not in INTERP_METHODS:
                continue
            Ms = _m_list(cfg, N)
            systems = build_systems(lag, tay, [method], max(Ms), quad)
            for name, sysM in systems.items():
                for order, (x, idx) in enumerate(
                        zip(sysM.points, sysM.point_indices), start=1):
                    point_rows.append([name, N, sysM.M, order,
                                       f"{x[0]:.12e}", f"{x[1]:.12e}"])
    files = []
    files.append(_write_csv(out / "interp_errors.csv",
                            ["N", "M", "method", "eps_max", "lebesgue"],
                            interp_rows))
    files.append(_write_csv(out / "points.csv",
                            ["method", "N", "M", "order", "x1", "x2"],
                            point_rows))
    return files


# ---------------------------------------------------------------------------
# PDE studies (elliptic, diffusion)

def make_problem(cfg: ExperimentConfig) -> FomProblem:
    if cfg.study == "elliptic":
        return elliptic_problem(cfg.resolution, cfg.degree)
    return diffusion_problem(cfg.degree)


def pde_systems(problem: FomProblem, basis, samples, M):
    """FOEIM-I system(s) of size M for the problem's nonlinear term(s)."""
    quad = problem.space.quadrature
    raw = basis.raw  # list of Field
    if problem.name == "elliptic":
        term = problem.term
        lag = snapshot_nonlinear(raw, term, samples, quad)
        tay = independent_subset(taylor_candidates(raw, term, samples, quad))
        L = len(lag) + len(tay)
        return foeim1_construct(lag, tay, min(M, L), quad)
    sys_pair = []
    for term in (problem.term_g, problem.term_h):
        lag = snapshot_nonlinear(raw, term, samples, quad)
        tay = independent_subset(taylor_candidates(raw, term, samples, quad))
        L = len(lag) + len(tay)
        sys_pair.append(foeim1_construct(lag, tay, min(M, L), quad))
    return tuple(sys_pair)


def run_pde(cfg: ExperimentConfig, out: Path) -> list[Path]:
    dom = STUDY_DOMAINS[cfg.study]
    problem = make_problem(cfg)
    test = build_sample_grid(dom, cfg.test_grid, "uniform")
    cache = TruthCache(problem, cfg.cache_dir)
    cache.sweep(test)

    rom_rows, summary_rows = [], []
    for N in cfg.n_list:
        k = round(np.sqrt(N))
        S = build_sample_grid(dom, k, cfg.sample_distribution, cfg.sample_alpha)
        cache.sweep(S)
        fields = [_as_field(problem, cache.get(mu)[0]) for mu in S]
        basis = compute_snapshot_basis(S, problem, fields=fields)
        rb_ops = build_standard_rb(basis, problem)
        rb_solver = StandardRbSolver(rb_ops, basis, problem)
        for M in _m_list(cfg, N):
            systems = pde_systems(problem, basis, S, M)
            Meff = (systems.M if isinstance(systems, InterpolationSystem)
                    else max(s.M for s in systems))
            ei_ops = build_ei_rb(basis, systems, problem)
            ei_solver = EiRbSolver(ei_ops, getattr(problem, "term", None))
            rep = error_and_effectivity(problem, basis, rb_solver, ei_solver,
                                        test, truth_provider=cache.get)
            for i, mu in enumerate(test.points):
                rom_rows.append([
                    N, Meff, f"{mu[0]:.12e}", f"{mu[1]:.12e}",
                    f"{rep.s_truth[i]:.12e}", f"{rep.s_rb[i]:.12e}",
                    f"{rep.s_ei[i]:.12e}",
                    f"{rep.eps_s_rb[i]:.12e}", f"{rep.eps_s_ei[i]:.12e}",
                    f"{rep.eps_u_rb[i]:.12e}", f"{rep.eps_u_ei[i]:.12e}",
                    f"{rep.eta_s[i]:.12e}", f"{rep.eta_u[i]:.12e}"])
            summary_rows.append([
                N, Meff, "foeim1",
                f"{rep.mean_eps_s_rb:.12e}", f"{rep.mean_eps_s_ei:.12e}",
                f"{rep.mean_eps_u_rb:.12e}", f"{rep.mean_eps_u_ei:.12e}",
                f"{rep.mean_eta_s:.12e}", f"{rep.mean_eta_u:.12e}",
                int(rep.excluded.sum())])
    files = []
    files.append(_write_csv(
        out / "rom_errors.csv",
        ["N", "M", "mu1", "mu2", "s_truth", "s_N", "s_NM", "eps_s_N",
         "eps_s_NM", "eps_u_N", "eps_u_NM", "eta_s", "eta_u"], rom_rows))
    files.append(_write_csv(
        out / "summary.csv",
        ["N", "M", "method", "eps_s_N_bar", "eps_s_NM_bar", "eps_u_N_bar",
         "eps_u_NM_bar", "eta_s_bar", "eta_u_bar", "excluded"], summary_rows))
    return files


def _as_field(problem, coeffs):
    from .fem import Field
    return Field(problem.space, coeffs)


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# run / compare / plotdata

def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Execute a study and write its report directory with a manifest."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    if cfg.methods:
        if cfg.study == "gaussian":
            files = run_gaussian(cfg, out)
        else:
            files = run_pde(cfg, out)
    manifest = {
        "config": asdict(cfg),
        "config_key": cfg.content_key(),
        "files": {f.name: _file_hash(f) for f in files},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def load_golden(table_id: str) -> dict:
    path = Path(__file__).parent / "golden" / f"{table_id}.json"
    if not path.exists():
        raise ConfigurationError(f"unknown golden table {table_id!r}")
    with open(path) as fh:
        return json.load(fh)


def _read_csv(path: Path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def compare_report(report_dir, table_id: str):
    """Compare a report against a golden table; returns per-row results."""
    golden = load_golden(table_id)
    report = Path(report_dir)
    src = report / golden["source"]
    if not src.exists():
        return [{"row": None, "passed": False,
                 "reason": f"missing report file {golden['source']}"}]
    rows = _read_csv(src)
    results = []
    for entry in golden["rows"]:
        match = [r for r in rows
                 if int(r["N"]) == entry["N"] and int(r["M"]) == entry["M"]
                 and r["method"] == entry["method"]]
        if not match:
            results.append({"row": entry, "passed": False,
                            "reason": "cell missing from report"})
            continue
        measured = float(match[0][entry.get("column", golden["column"])])
        expected = float(entry["expected"])
        tol = float(entry["tolerance"])
        if entry["kind"] == "factor":
            ok = (expected != 0 and measured > 0
                  and 1.0 / tol <= measured / expected <= tol)
        else:
            ok = abs(measured - expected) <= tol
        results.append({"row": entry, "passed": bool(ok),
                        "measured": measured,
                        "reason": "" if ok else
                        f"measured {measured:.3e} vs expected {expected:.3e} "
                        f"({entry['kind']} tol {tol})"})
    return results


def emit_plotdata(report_dir) -> list[Path]:
    """Long-format (series, x, y) CSVs derived from a report directory."""
    report = Path(report_dir)
    outputs = []

    interp = report / "interp_errors.csv"
    err_rows, leb_rows = [], []
    if interp.exists():
        for r in _read_csv(interp):
            series = f"{r['method']}-N{r['N']}"
            err_rows.append([series, r["M"], r["eps_max"]])
            if r["lebesgue"]:
                leb_rows.append([series, r["M"], r["lebesgue"]])
    summary = report / "summary.csv"
    if summary.exists():
        for r in _read_csv(summary):
            series = f"{r['method']}-N{r['N']}"
            err_rows.append([series + "-output", r["M"], r["eps_s_NM_bar"]])
            err_rows.append([series + "-field", r["M"], r["eps_u_NM_bar"]])
    outputs.append(_write_csv(report / "plot_error_vs_M.csv",
                              ["series", "x", "y"], err_rows))
    outputs.append(_write_csv(report / "plot_lebesgue_vs_M.csv",
                              ["series", "x", "y"], leb_rows))

    points = report / "points.csv"
    scatter = []
    if points.exists():
        for r in _read_csv(points):
            scatter.append([f"{r['method']}-N{r['N']}", r["order"],
                            r["x1"], r["x2"]])
    outputs.append(_write_csv(report / "plot_points.csv",
                              ["series", "order", "x1", "x2"], scatter))
    return outputs
