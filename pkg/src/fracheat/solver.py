"""Implicit Euler for the Dirichlet, auxiliary Robin and Robin problems.

All three steppers use the monotone operators of the assembly module together with
row-sum lumped masses, so every step matrix is a symmetric M-matrix: its inverse is
entrywise nonnegative, which is what makes positivity, comparison and the sup-norm
bounds hold step by step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .assembly import Operators, build_operators, load_vector, lump
from .kernel import FracParams
from .mesh import INTERIOR, Field, Mesh, nodal_interpolate

__all__ = [
    "TimeGrid",
    "ProblemData",
    "Trajectory",
    "StepSystem",
    "SolverError",
    "solve_dirichlet",
    "solve_auxiliary_robin",
    "solve_robin",
    "solve_robin_direct",
    "step_implicit_euler",
    "operators_for",
    "write_trajectory_csv",
    "clear_operator_cache",
]

Kind = Literal["dirichlet", "auxiliary_robin", "robin", "robin_direct"]
SpaceTime = Callable[[np.ndarray, float], np.ndarray]

RESIDUAL_TOL = 1e-12


class SolverError(RuntimeError):
    """Linear solver breakdown or non-finite state."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    dt: float
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (self.horizon > 0 and self.dt > 0):
            raise ValueError(f"horizon and dt must be positive, got {self.horizon}, {self.dt}")
        n = round(self.horizon / self.dt)
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise ValueError(f"horizon {self.horizon} is not an integer multiple of dt {self.dt}")
        object.__setattr__(self, "n_steps", int(n))

    @classmethod
    def from_steps(cls, horizon: float, n_steps: int) -> "TimeGrid":
        return cls(horizon, horizon / n_steps)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.dt / factor)


def _zero(x, t=0.0):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ProblemData:
    """f(x, t), g(x, t) and rho_0(x).  Missing functions mean zero."""

    source: Optional[SpaceTime] = None
    initial: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exterior_datum: Optional[SpaceTime] = None
    sup_norms: Optional[Mapping[str, float]] = None
    label: str = ""

    @property
    def f(self) -> SpaceTime:
        return self.source or _zero

    @property
    def g(self) -> SpaceTime:
        return self.exterior_datum or _zero

    @property
    def rho0(self) -> Callable:
        return self.initial or _zero

    def transformed(self) -> "ProblemData":
        """zeta = e^{-t} f, eta = e^{-t} g."""
        f, g = self.f, self.g
        zeta = lambda x, t: math.exp(-t) * np.asarray(f(x, t), dtype=float)
        eta = lambda x, t: math.exp(-t) * np.asarray(g(x, t), dtype=float)
        return ProblemData(zeta, self.initial, eta, self.sup_norms, self.label + ":transformed")


@dataclass(frozen=True, eq=False)
class StepSystem:
    """Lumped masses and monotone stiffness over the unknowns of one problem kind."""

    unknowns: np.ndarray
    mass: np.ndarray         # lumped interior mass (diagonal), unknowns x unknowns
    mass_ext: np.ndarray     # lumped exterior mass (zero for Dirichlet)
    stiffness: np.ndarray
    reaction: float          # coefficient of the zeroth-order interior mass term


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    fields: tuple[Field, ...]
    kind: Kind
    system: StepSystem
    data: ProblemData
    residuals: tuple[float, ...] = ()
    auxiliary: Optional["Trajectory"] = None

    @property
    def mesh(self) -> Mesh:
        return self.fields[0].mesh

    @property
    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


_CACHE: dict = {}


def operators_for(mesh: Mesh, params: FracParams, kind: str) -> Operators:
    """Assembled operators, memoized on the mesh and order (meshes are immutable)."""
    key = (id(mesh), params.order, kind)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is mesh:
        return hit[1]
    ops = build_operators(mesh, params, "dirichlet" if kind == "dirichlet" else "robin")
    if len(_CACHE) > 32:
        _CACHE.clear()
    _CACHE[key] = (mesh, ops)
    return ops


def _system(mesh: Mesh, params: FracParams, kind: Kind) -> StepSystem:
    ops = operators_for(mesh, params, kind)
    if kind == "dirichlet":
        u = mesh.dofs.interior_dofs
        M = lump(ops.mass_interior)[np.ix_(u, u)]
        return StepSystem(u, M, np.zeros_like(M), ops.monotone_stiffness, 0.0)
    u = np.arange(mesh.n_nodes)
    reaction = 1.0 if kind == "auxiliary_robin" else 0.0
    return StepSystem(u, lump(ops.mass_interior), lump(ops.mass_exterior),
                      ops.monotone_stiffness, reaction)


def step_implicit_euler(state, system_matrix, rhs) -> tuple[np.ndarray, float]:
    """Solve system_matrix @ x = rhs; returns (x, relative residual).

    system_matrix is either a dense SPD array or a ``cho_factor`` result paired with
    the dense matrix as ``(factor, matrix)``.  ``state`` is accepted for symmetry with
    the time loop and is not used by the solve itself.
    """
    if isinstance(system_matrix, tuple):
        factor, S = system_matrix
    else:
        S = np.asarray(system_matrix, dtype=float)
        try:
            factor = cho_factor(S)
        except LinAlgError as exc:
            raise SolverError(f"step matrix is not positive definite: {exc}") from exc
    rhs = np.asarray(rhs, dtype=float)
    x = cho_solve(factor, rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    r = S @ x - rhs
    denom = np.linalg.norm(S, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf)
    res = float(np.linalg.norm(r, np.inf) / denom) if denom > 0 else 0.0
    if res > RESIDUAL_TOL:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}")
    return x, res


def _factor(S):
    try:
        return cho_factor(S), S
    except LinAlgError as exc:
        raise SolverError(f"step matrix is not positive definite: {exc}") from exc


def _check_finite(v, what):
    if not np.all(np.isfinite(v)):
        raise SolverError(f"non-finite {what}")


def _robin_loads(mesh, src, ext, t):
    b = load_vector(src, mesh, "interior", t) + load_vector(ext, mesh, "exterior", t)
    _check_finite(b, f"data at t={t}")
    return b


def solve_dirichlet(data: ProblemData, mesh: Mesh, grid: TimeGrid,
                    params: FracParams) -> Trajectory:
    """(M/dt + A) rho^{k+1} = M rho^k / dt + b(f, t_{k+1}) on interior dofs."""
    if data.exterior_datum is not None:
        raise ValueError("dirichlet problem takes no exterior datum")
    sys_ = _system(mesh, params, "dirichlet")
    u, dt = sys_.unknowns, grid.dt
    S = sys_.mass / dt + sys_.stiffness
    fac = _factor(S)
    rho = nodal_interpolate(data.rho0, mesh, "dirichlet").values
    fields = [Field(rho, "dirichlet", mesh)]
    residuals = []
    for k in range(grid.n_steps):
        t1 = grid.times[k + 1]
        b = load_vector(data.f, mesh, "interior", t1)[u]
        _check_finite(b, f"data at t={t1}")
        x, res = step_implicit_euler(rho[u], fac, sys_.mass @ rho[u] / dt + b)
        rho = np.zeros(mesh.n_nodes)
        rho[u] = x
        fields.append(Field(rho, "dirichlet", mesh))
        residuals.append(res)
    return Trajectory(grid, tuple(fields), "dirichlet", sys_, data, tuple(residuals))


def _initial_robin(data: ProblemData, mesh: Mesh, sys_: StepSystem, ext: SpaceTime) -> np.ndarray:
    """rho_0 on Omega; collar values from the algebraic exterior equation at t = 0."""
    z = nodal_interpolate(data.rho0, mesh, "robin").values.copy()
    inner = mesh.dofs.interior_dofs
    outer = mesh.dofs.exterior_dofs
    A = sys_.stiffness
    K = A[np.ix_(outer, outer)] + sys_.mass_ext[np.ix_(outer, outer)]
    rhs = load_vector(ext, mesh, "exterior", 0.0)[outer] - A[np.ix_(outer, inner)] @ z[inner]
    z[outer], _ = step_implicit_euler(None, _factor(K), rhs)
    return z


def _robin_loop(data: ProblemData, mesh: Mesh, grid: TimeGrid, params: FracParams,
                kind: Kind, src: SpaceTime, ext: SpaceTime):
    if not mesh.has_collar:
        raise ValueError("robin problems need an exterior collar (n_exterior >= 1)")
    sys_ = _system(mesh, params, kind)
    dt = grid.dt
    M, Me, A = sys_.mass, sys_.mass_ext, sys_.stiffness
    S = M / dt + A + sys_.reaction * M + Me
    fac = _factor(S)
    z = _initial_robin(data, mesh, sys_, ext)
    fields = [Field(z, "robin", mesh)]
    residuals = []
    for k in range(grid.n_steps):
        t1 = grid.times[k + 1]
        rhs = M @ z / dt + _robin_loads(mesh, src, ext, t1)
        z, res = step_implicit_euler(z, fac, rhs)
        fields.append(Field(z, "robin", mesh))
        residuals.append(res)
    return sys_, fields, residuals


def solve_auxiliary_robin(data_transformed: ProblemData, mesh: Mesh, grid: TimeGrid,
                          params: FracParams) -> Trajectory:
    """z_t + (-Delta)^s z + z = zeta in Omega, N_s z + z = eta on the collar.

    Interior rows carry the time derivative; rows of collar-only nodes are algebraic.
    """
    d = data_transformed
    sys_, fields, res = _robin_loop(d, mesh, grid, params, "auxiliary_robin", d.f, d.g)
    return Trajectory(grid, tuple(fields), "auxiliary_robin", sys_, d, tuple(res))


def solve_robin(data: ProblemData, mesh: Mesh, grid: TimeGrid,
                params: FracParams) -> Trajectory:
    """rho = e^t z with z the auxiliary solution for zeta = e^{-t} f, eta = e^{-t} g."""
    aux = solve_auxiliary_robin(data.transformed(), mesh, grid, params)
    fields = tuple(Field(math.exp(t) * f.values, "robin", mesh)
                   for t, f in zip(grid.times, aux.fields))
    return Trajectory(grid, fields, "robin", aux.system, data, aux.residuals, auxiliary=aux)


def solve_robin_direct(data: ProblemData, mesh: Mesh, grid: TimeGrid,
                       params: FracParams) -> Trajectory:
    """Implicit Euler on rho_t + (-Delta)^s rho = f, N_s rho + rho = g without substitution."""
    sys_, fields, res = _robin_loop(data, mesh, grid, params, "robin_direct", data.f, data.g)
    return Trajectory(grid, tuple(fields), "robin_direct", sys_, data, tuple(res))


def write_trajectory_csv(traj: Trajectory, target) -> None:
    """Columns t,x,value,region; one row per (step, node); repr keeps full precision.

    ``target`` is a path or an open text stream.
    """
    if hasattr(target, "write"):
        _write_csv(traj, target)
        return
    with open(target, "w", newline="") as fh:
        _write_csv(traj, fh)


def _write_csv(traj: Trajectory, fh) -> None:
    mesh = traj.mesh
    region = ["interior" if tag == INTERIOR else "exterior" for tag in mesh.tags]
    xs = [repr(float(x)) for x in mesh.nodes]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "value", "region"])
    for t, f in zip(traj.grid.times, traj.fields):
        ts = repr(float(t))
        for i, v in enumerate(f.values):
            w.writerow([ts, xs[i], repr(float(v)), region[i]])


def clear_operator_cache() -> None:
    _CACHE.clear()
