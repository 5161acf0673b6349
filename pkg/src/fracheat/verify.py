"""Executable property checks on fields and trajectories.

Every check returns a CheckReport.  A check whose hypotheses are not met by the
supplied data raises HypothesisViolation instead of reporting a failure.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np
from scipy.linalg import eigh, solve

from .assembly import load_vector, region_l2_squared, region_quadrature
from .kernel import FracParams
from .mesh import Field, Mesh
from .solver import (
    ProblemData,
    TimeGrid,
    Trajectory,
    clear_operator_cache,
    solve_auxiliary_robin,
    solve_dirichlet,
    solve_robin,
    solve_robin_direct,
    write_trajectory_csv,
)

__all__ = [
    "CheckReport",
    "HypothesisViolation",
    "split_signs",
    "check_positive_part",
    "check_comparison",
    "check_linf_dirichlet",
    "check_linf_robin",
    "check_linf_auxiliary",
    "check_energy",
    "check_transform_equivalence",
    "check_uniqueness",
    "write_reports",
    "parse_report_line",
    "REGISTRY",
]

ALGEBRAIC_TOL = 1e-9
QUADRATURE_TOL = 1e-6


class HypothesisViolation(ValueError):
    """The data do not satisfy the hypotheses of the property being checked."""


@dataclass(frozen=True)
class CheckReport:
    name: str
    worst_violation: float
    tolerance: float
    location: tuple[int, int] = (-1, -1)
    context: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "worst_violation", float(self.worst_violation))
        object.__setattr__(self, "tolerance", float(self.tolerance))
        object.__setattr__(self, "location", tuple(int(v) for v in self.location))
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        object.__setattr__(self, "passed", bool(self.worst_violation <= self.tolerance))

    def line(self) -> str:
        ctx = self.context.replace("|", "/").replace("\n", " ")
        step, node = self.location
        return (f"{self.name}|{self.passed}|{self.worst_violation!r}|{self.tolerance!r}"
                f"|{step}|{node}|{ctx}")


def parse_report_line(line: str) -> dict:
    name, passed, worst, tol, step, node, ctx = line.rstrip("\n").split("|", 6)
    return dict(name=name, passed=passed == "True", worst_violation=float(worst),
                tolerance=float(tol), step=int(step), node=int(node), context=ctx)


def write_reports(reports: Iterable[CheckReport], path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.line() + "\n")


def _ctx(**kw) -> str:
    return " ".join(f"{k}={v}" for k, v in kw.items())


def _values(phi) -> np.ndarray:
    return np.asarray(phi.values if isinstance(phi, Field) else phi, dtype=float)


def _argmax2(arr: np.ndarray) -> tuple[float, tuple[int, int]]:
    k, i = np.unravel_index(int(np.argmax(arr)), arr.shape)
    return float(arr[k, i]), (int(k), int(i))


# ---- sign splitting and the positive-part inequality --------------------------------

def split_signs(phi):
    """(phi+, phi-) with phi = phi+ - phi-; returns Fields for a Field input."""
    v = _values(phi)
    plus = np.maximum(v, 0.0)
    minus = np.maximum(-v, 0.0)
    if isinstance(phi, Field):
        return Field(plus, phi.kind, phi.mesh), Field(minus, phi.kind, phi.mesh)
    return plus, minus


def offdiagonal_report(A: np.ndarray) -> dict:
    off = A - np.diag(np.diag(A))
    return dict(max_offdiag=float(off.max()), positive_offdiag=int(np.count_nonzero(off > 0)))


def check_positive_part(phi, A: np.ndarray, tol: float = 1e-10) -> CheckReport:
    """-phi^T A phi^- >= (phi^-)^T A (phi^-), i.e. (phi^+)^T A phi^- <= 0.

    phi may be a full-node Field; its values on the dofs of A are used.  Passes when
    the deficit is at most tol * |phi|^2.  The context records whether A has positive
    off-diagonal entries (nonpositive ones make the inequality hold for every phi).
    """
    A = np.asarray(A, dtype=float)
    v = _values(phi)
    if isinstance(phi, Field) and v.size != A.shape[0]:
        v = v[phi.mesh.dofs.unknowns(phi.kind)]
    if v.size != A.shape[0]:
        raise ValueError(f"field of size {v.size} does not match matrix of size {A.shape[0]}")
    _, minus = split_signs(v)
    lhs = -(v @ A @ minus)
    rhs = minus @ A @ minus
    deficit = rhs - lhs
    scale = float(v @ v)
    od = offdiagonal_report(A)
    return CheckReport("positive-part", float(deficit), tol * max(scale, np.finfo(float).tiny),
                       (0, int(np.argmax(minus)) if minus.any() else -1),
                       _ctx(lhs=repr(float(lhs)), rhs=repr(float(rhs)), **od))


# ---- data sampling for hypothesis re-verification ------------------------------------

def _sample_points(mesh: Mesh, region: str) -> np.ndarray:
    _, _, X, _ = region_quadrature(mesh, region)
    if region == "interior":
        a, b = mesh.omega
        nodes = mesh.nodes[(mesh.nodes >= a) & (mesh.nodes <= b)]
    else:
        nodes = mesh.nodes[mesh.collar_nodes]
    return np.concatenate([X.ravel(), nodes])


def _sample(fn: Callable, mesh: Mesh, region: str, times) -> np.ndarray:
    X = _sample_points(mesh, region)
    return np.stack([np.asarray(fn(X, t), dtype=float) * np.ones_like(X) for t in times])


def _sample_initial(fn: Callable, mesh: Mesh) -> np.ndarray:
    X = _sample_points(mesh, "interior")
    return np.asarray(fn(X), dtype=float) * np.ones_like(X)


def _is_robin(traj: Trajectory) -> bool:
    return traj.kind != "dirichlet"


def _data_scale(*data: ProblemData, mesh: Mesh, grid: TimeGrid, robin: bool) -> float:
    m = 0.0
    for d in data:
        m = max(m, np.abs(_sample_initial(d.rho0, mesh)).max(),
                np.abs(_sample(d.f, mesh, "interior", grid.times)).max())
        if robin:
            m = max(m, np.abs(_sample(d.g, mesh, "exterior", grid.times)).max())
    return max(1.0, float(m))


# ---- comparison ----------------------------------------------------------------------

def check_comparison(lo: Trajectory, hi: Trajectory, tol: float = ALGEBRAIC_TOL) -> CheckReport:
    """max over steps and nodes of (lo - hi), given ordered data."""
    if lo.kind != hi.kind:
        raise ValueError(f"trajectory kinds differ: {lo.kind} vs {hi.kind}")
    if lo.mesh is not hi.mesh and not np.array_equal(lo.mesh.nodes, hi.mesh.nodes):
        raise ValueError("trajectories live on different meshes")
    if lo.grid != hi.grid:
        raise ValueError("trajectories use different time grids")
    mesh, grid = lo.mesh, lo.grid
    times = grid.times
    robin = _is_robin(lo)
    if np.any(_sample_initial(lo.data.rho0, mesh) > _sample_initial(hi.data.rho0, mesh)):
        raise HypothesisViolation("initial data are not ordered (rho0_lo > rho0_hi somewhere)")
    if np.any(_sample(lo.data.f, mesh, "interior", times) > _sample(hi.data.f, mesh, "interior", times)):
        raise HypothesisViolation("sources are not ordered (f_lo > f_hi somewhere)")
    if robin and np.any(_sample(lo.data.g, mesh, "exterior", times)
                        > _sample(hi.data.g, mesh, "exterior", times)):
        raise HypothesisViolation("exterior data are not ordered (g_lo > g_hi somewhere)")
    diff = lo.values - hi.values
    worst, loc = _argmax2(diff)
    scale = _data_scale(lo.data, hi.data, mesh=mesh, grid=grid, robin=robin)
    return CheckReport(f"comparison-{lo.kind}", worst, tol * scale, loc,
                       _ctx(kind=lo.kind, n_nodes=mesh.n_nodes, dt=grid.dt, scale=scale,
                            data=f"{lo.data.label}<={hi.data.label}"))


# ---- sup-norm bounds -------------------------------------------------------------------

def _sup_norms(data: ProblemData, need: Iterable[str]) -> Mapping[str, float]:
    if data.sup_norms is None:
        raise HypothesisViolation("sup_norms are required for sup-norm bounds")
    missing = [k for k in need if k not in data.sup_norms]
    if missing:
        raise HypothesisViolation(f"sup_norms missing {missing}")
    bad = {k: v for k, v in data.sup_norms.items() if not (np.isfinite(v) and v >= 0)}
    if bad:
        raise HypothesisViolation(f"sup_norms must be finite and nonnegative: {bad}")
    return data.sup_norms


def _assert_bounded(samples: np.ndarray, bound: float, what: str):
    m = float(np.abs(samples).max()) if samples.size else 0.0
    if m > bound * (1 + 1e-12) + 1e-15:
        raise HypothesisViolation(f"|{what}| reaches {m!r} on samples, above the asserted {bound!r}")


def check_linf_dirichlet(traj: Trajectory, data: Optional[ProblemData] = None,
                         tol: float = ALGEBRAIC_TOL, reflect: bool = False) -> CheckReport:
    """rho <= |f|_inf + |rho0|_inf under f <= 0.

    With reflect=True the check is applied to -rho, whose data are (-f, -rho0); its
    hypothesis is then f >= 0.  Running both sides gives the absolute-value bound.
    """
    if traj.kind != "dirichlet":
        raise ValueError("check_linf_dirichlet needs a dirichlet trajectory")
    data = data or traj.data
    mesh, grid = traj.mesh, traj.grid
    sign = -1.0 if reflect else 1.0
    norms = _sup_norms(data, ("source", "initial"))
    fs = sign * _sample(data.f, mesh, "interior", grid.times)
    if np.any(fs > 0):
        raise HypothesisViolation(("-f" if reflect else "f") + " <= 0 fails on quadrature samples")
    _assert_bounded(fs, norms["source"], "f")
    _assert_bounded(_sample_initial(data.rho0, mesh), norms["initial"], "rho0")
    bound = norms["source"] + norms["initial"]
    worst, loc = _argmax2(sign * traj.values - bound)
    scale = max(1.0, bound)
    return CheckReport("linf-dirichlet" + ("-reflected" if reflect else ""), worst, tol * scale,
                       loc, _ctx(bound=repr(bound), measured_max=repr(float((sign * traj.values).max())),
                                 initial_sup=repr(norms["initial"]), dt=grid.dt, data=data.label))


def check_linf_auxiliary(traj: Trajectory, data: Optional[ProblemData] = None,
                         tol: float = ALGEBRAIC_TOL, absolute: bool = False) -> CheckReport:
    """z <= |rho0|_inf + |zeta|_inf + |eta|_inf for the auxiliary system."""
    if traj.kind != "auxiliary_robin":
        raise ValueError("check_linf_auxiliary needs an auxiliary_robin trajectory")
    data = data or traj.data
    mesh, grid = traj.mesh, traj.grid
    norms = _sup_norms(data, ("source", "exterior", "initial"))
    K = _aux_constant(data, mesh, grid, norms, transformed=True)
    vals = np.abs(traj.values) if absolute else traj.values
    worst, loc = _argmax2(vals - K)
    return CheckReport("linf-auxiliary" + ("-abs" if absolute else ""), worst, tol * max(1.0, K),
                       loc, _ctx(K=repr(K), measured_max=repr(float(vals.max())), dt=grid.dt,
                                 data=data.label))


def _aux_constant(data, mesh, grid, norms, transformed: bool) -> float:
    """K = |rho0| + |zeta| + |eta|; sup_norms describe the untransformed f, g, and
    |e^{-t} f| <= |f| so they also bound zeta, eta."""
    _assert_bounded(_sample(data.f, mesh, "interior", grid.times), norms["source"], "f")
    _assert_bounded(_sample(data.g, mesh, "exterior", grid.times), norms["exterior"], "g")
    _assert_bounded(_sample_initial(data.rho0, mesh), norms["initial"], "rho0")
    return norms["initial"] + norms["source"] + norms["exterior"]


def check_linf_robin(traj: Trajectory, data: Optional[ProblemData] = None,
                     tol: float = ALGEBRAIC_TOL, absolute: bool = False) -> CheckReport:
    """rho <= e^T (|rho0| + |f| + |g|); also z <= K on the auxiliary trajectory."""
    if traj.kind != "robin":
        raise ValueError("check_linf_robin needs a robin trajectory")
    data = data or traj.data
    mesh, grid = traj.mesh, traj.grid
    norms = _sup_norms(data, ("source", "exterior", "initial"))
    K = _aux_constant(data, mesh, grid, norms, transformed=False)
    bound = math.exp(grid.horizon) * K
    vals = np.abs(traj.values) if absolute else traj.values
    worst, loc = _argmax2(vals - bound)
    scale = max(1.0, bound)
    ctx = dict(bound=repr(bound), K=repr(K), measured_max=repr(float(vals.max())), dt=grid.dt,
               data=data.label)
    if traj.auxiliary is not None:
        aux = check_linf_auxiliary(traj.auxiliary, traj.auxiliary.data, tol, absolute)
        ctx["aux_worst"] = repr(aux.worst_violation)
        rel_aux = aux.worst_violation / max(1.0, K)
        if rel_aux * scale > worst:
            worst, loc = rel_aux * scale, aux.location
    return CheckReport("linf-robin" + ("-abs" if absolute else ""), worst, tol * scale, loc,
                       _ctx(**ctx))


# ---- energy --------------------------------------------------------------------------

def _quad(M, v):
    return float(v @ M @ v)


def check_energy(traj: Trajectory, data: Optional[ProblemData] = None,
                 tol: float = 1e-10) -> CheckReport:
    """Per-step and telescoped energy inequalities for the trajectory's own operators.

    auxiliary (and robin through its auxiliary trajectory):
        |z'|_M^2 + dt(|z'|_A^2 + |z'|_M^2 + |z'|_Me^2) <= |z|_M^2 + dt(|zeta|^2 + |eta|^2)
    dirichlet:
        |r'|_M^2 + dt |r'|_A^2 <= |r|_M^2 + dt |b|_{A^-1}^2
    The telescoped sums give the sup-in-time and time-integrated bounds; for the
    Dirichlet case they are stated with the L2 norm of f when the discrete spectrum
    of (A, M) lies above 1 (which makes the L2 norm dominate the dual one), and with
    the dual norm otherwise; the context says which.
    """
    if traj.kind == "robin":
        if traj.auxiliary is None:
            raise ValueError("robin trajectory carries no auxiliary trajectory")
        rep = check_energy(traj.auxiliary, traj.auxiliary.data, tol)
        return CheckReport("energy-robin", rep.worst_violation, rep.tolerance, rep.location,
                           rep.context)
    if traj.kind not in ("dirichlet", "auxiliary_robin"):
        raise ValueError(f"no energy estimate for kind {traj.kind}")
    data = data or traj.data
    mesh, grid, sys_ = traj.mesh, traj.grid, traj.system
    u, dt = sys_.unknowns, grid.dt
    M, A = sys_.mass, sys_.stiffness
    Z = traj.values[:, u]
    n = grid.n_steps
    lhs = np.empty(n)
    rhs = np.empty(n)
    data_terms = np.empty(n)
    data_l2 = np.empty(n)
    energy_A = np.empty(n)
    if traj.kind == "dirichlet":
        for k in range(n):
            t1 = grid.times[k + 1]
            b = load_vector(data.f, mesh, "interior", t1)[u]
            data_terms[k] = float(b @ solve(A, b, assume_a="pos"))
            data_l2[k] = region_l2_squared(data.f, mesh, "interior", t1)
            energy_A[k] = _quad(A, Z[k + 1])
            lhs[k] = _quad(M, Z[k + 1]) + dt * energy_A[k]
            rhs[k] = _quad(M, Z[k]) + dt * data_terms[k]
        lam_min = float(eigh(A, M, eigvals_only=True, subset_by_index=[0, 0])[0])
        use_l2 = lam_min >= 1.0
        global_data = data_l2 if use_l2 else data_terms
        norm_name = "L2" if use_l2 else "dual"
        extra = dict(lambda_min=repr(lam_min))
    else:
        Me, r = sys_.mass_ext, sys_.reaction
        for k in range(n):
            t1 = grid.times[k + 1]
            data_l2[k] = (region_l2_squared(data.f, mesh, "interior", t1)
                          + region_l2_squared(data.g, mesh, "exterior", t1))
            z1 = Z[k + 1]
            energy_A[k] = _quad(A, z1) + r * _quad(M, z1) + _quad(Me, z1)
            lhs[k] = _quad(M, z1) + dt * energy_A[k]
            rhs[k] = _quad(M, Z[k]) + dt * data_l2[k]
        global_data = data_l2
        norm_name = "L2"
        extra = {}

    e0 = _quad(M, Z[0])
    total = float(e0 + dt * global_data.sum())
    scale = float(max(1.0, total, float(rhs.max(initial=0.0))))
    step_def = (lhs - rhs) / scale
    # telescoped: sup_k |z^k|^2 and |z^n|^2 + dt sum |z^k|_A^2 against the data total
    mass_k = np.array([_quad(M, z) for z in Z])
    partial = e0 + dt * np.concatenate([[0.0], np.cumsum(global_data)])
    sup_def = (mass_k - partial) / scale
    integ_def = (mass_k[-1] + dt * energy_A.sum() - total) / scale
    cands = [(float(step_def.max(initial=-np.inf)), (int(np.argmax(step_def)) + 1 if n else 0, -1)),
             (float(sup_def.max()), (int(np.argmax(sup_def)), -1)),
             (float(integ_def), (n, -1))]
    worst, loc = max(cands, key=lambda c: c[0])
    return CheckReport(f"energy-{traj.kind}", worst * scale, tol * scale, loc,
                       _ctx(step_worst=repr(cands[0][0] * scale), sup_worst=repr(cands[1][0] * scale),
                            integrated_worst=repr(cands[2][0] * scale), data_norm=norm_name,
                            data_total=repr(total), dt=dt, **extra))


# ---- transform equivalence -----------------------------------------------------------

def check_transform_equivalence(data: ProblemData, mesh: Mesh, grid: TimeGrid,
                                params: FracParams, tol_order: float = 0.2,
                                levels: int = 2) -> CheckReport:
    """Direct Robin stepping vs e^t z: the discrepancy must shrink like dt.

    Runs ``levels`` grids dt, dt/2, ...; passes when every halving divides the max-norm
    discrepancy by at least 2 (1 - tol_order).
    """
    if levels < 2:
        raise ValueError("need at least two time grids")
    gaps = []
    g = grid
    for _ in range(levels):
        a = solve_robin(data, mesh, g, params).values
        b = solve_robin_direct(data, mesh, g, params).values
        gaps.append(float(np.abs(a - b).max()))
        g = g.refined()
    scale = _data_scale(data, mesh=mesh, grid=grid, robin=True)
    ratios = []
    worst = 0.0
    for k in range(levels - 1):
        if gaps[k] <= 1e-14 * scale:
            ratios.append(float("inf"))
            continue
        ratio = gaps[k] / gaps[k + 1] if gaps[k + 1] > 0 else float("inf")
        ratios.append(ratio)
        worst = max(worst, 1.0 - ratio / 2.0)
    return CheckReport("transform-equivalence", worst, tol_order, (-1, -1),
                       _ctx(discrepancies=",".join(repr(x) for x in gaps),
                            ratios=",".join(repr(r) for r in ratios), dt=grid.dt,
                            data=data.label))


# ---- uniqueness and determinism ------------------------------------------------------

def _solver(kind: str):
    return {"dirichlet": solve_dirichlet, "auxiliary_robin": solve_auxiliary_robin,
            "robin": solve_robin, "robin_direct": solve_robin_direct}[kind]


def _csv_bytes(traj: Trajectory) -> bytes:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue().encode()


def check_uniqueness(kind: str, mesh: Mesh, grid: TimeGrid, params: FracParams,
                     data: Optional[ProblemData] = None, tol: float = 1e-12) -> CheckReport:
    """Zero data give the zero trajectory; a nonzero solve repeated from scratch is
    bit-identical (operators are reassembled in between)."""
    solve_fn = _solver(kind)
    zero = solve_fn(ProblemData(), mesh, grid, params)
    zmax, loc = _argmax2(np.abs(zero.values))
    if data is None:
        bump = lambda x: np.maximum(0.0, 1.0 - (2.0 * (np.asarray(x) - sum(mesh.omega) / 2)
                                               / (mesh.omega[1] - mesh.omega[0])) ** 2)
        src = lambda x, t: np.cos(np.asarray(x)) * (1.0 + t)
        ext = (lambda x, t: 0.5 + 0.0 * np.asarray(x)) if kind != "dirichlet" else None
        data = ProblemData(src, bump, ext, label="bump")
    clear_operator_cache()
    first = _csv_bytes(solve_fn(data, mesh, grid, params))
    clear_operator_cache()
    second = _csv_bytes(solve_fn(data, mesh, grid, params))
    identical = first == second
    worst = zmax if identical else float("inf")
    return CheckReport(f"uniqueness-{kind}", worst, tol, loc if zmax > 0 else (-1, -1),
                       _ctx(zero_max=repr(zmax), bit_identical=identical, dt=grid.dt))


REGISTRY: dict[str, Callable[..., CheckReport]] = {
    "positive-part": check_positive_part,
    "comparison": check_comparison,
    "positivity": check_comparison,
    "linf-dirichlet": check_linf_dirichlet,
    "linf-robin": check_linf_robin,
    "linf-auxiliary": check_linf_auxiliary,
    "energy": check_energy,
    "transform-equivalence": check_transform_equivalence,
    "uniqueness": check_uniqueness,
}
