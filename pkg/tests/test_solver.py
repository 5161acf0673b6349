import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.assembly import load_vector
from fracheat.kernel import FracParams
from fracheat.mesh import build_mesh
from fracheat.solver import (ProblemData, SolverError, TimeGrid, _system, solve_auxiliary_robin,
                             solve_dirichlet, solve_robin, solve_robin_direct, step_implicit_euler,
                             write_trajectory_csv)

P = FracParams(0.5)
MD = build_mesh((-1, 1), 16)
MR = build_mesh((-1, 1), 16, 2.0, 16)
GRID = TimeGrid(0.5, 1 / 16)


def bump(amp=1.0, c=0.0, w=0.6):
    return lambda x, t=0.0: amp * np.maximum(0.0, 1 - ((np.asarray(x) - c) / w) ** 2)


def const(c):
    return lambda x, t=0.0: np.full_like(np.asarray(x, dtype=float), c)


def l2(traj, k):
    M = traj.system.mass
    v = traj.fields[k].values[traj.system.unknowns]
    return float(v @ M @ v)


def test_time_grid():
    g = TimeGrid(1.0, 1 / 64)
    assert g.n_steps == 64 and g.times[-1] == pytest.approx(1.0)
    assert TimeGrid.from_steps(2.0, 10).dt == pytest.approx(0.2)
    assert g.refined().n_steps == 128
    for args in ((1.0, 0.3), (0.0, 0.1), (1.0, -0.1)):
        with pytest.raises(ValueError):
            TimeGrid(*args)


@pytest.mark.parametrize("solver,mesh", [(solve_dirichlet, MD), (solve_auxiliary_robin, MR),
                                         (solve_robin, MR), (solve_robin_direct, MR)])
def test_zero_data_zero_trajectory(solver, mesh):
    traj = solver(ProblemData(), mesh, GRID, P)
    assert len(traj.fields) == GRID.n_steps + 1
    assert not np.any(traj.values)


def test_dirichlet_decay():
    traj = solve_dirichlet(ProblemData(initial=bump()), MD, GRID, P)
    norms = [l2(traj, k) for k in range(GRID.n_steps + 1)]
    assert np.all(np.diff(norms) <= 0)
    assert np.all(traj.values[:, [0, -1]] == 0)


def test_auxiliary_decay_is_strict():
    traj = solve_auxiliary_robin(ProblemData(initial=bump()), MR, GRID, P)
    inner = MR.dofs.interior_dofs
    M = traj.system.mass[np.ix_(inner, inner)]
    norms = [f.values[inner] @ M @ f.values[inner] for f in traj.fields]
    assert np.all(np.diff(norms) < 0)


def test_dirichlet_steady_state():
    grid = TimeGrid(30.0, 0.5)
    traj = solve_dirichlet(ProblemData(source=const(1.0)), MD, grid, P)
    sys_ = traj.system
    b = load_vector(const(1.0), MD, "interior")[sys_.unknowns]
    steady = np.linalg.solve(sys_.stiffness, b)
    assert np.abs(traj.fields[-1].values[sys_.unknowns] - steady).max() < 1e-6
    # torsion function of (-1, 1) at s = 1/2 is sqrt(1 - x^2), maximum 1
    assert 0.9 < steady.max() < 1.05


def test_auxiliary_unit_data_stays_in_unit_interval():
    data = ProblemData(const(1.0), const(1.0), const(1.0))
    traj = solve_auxiliary_robin(data, MR, GRID, P)
    assert traj.values.min() >= -1e-12 and traj.values.max() <= 1 + 1e-12
    half = solve_auxiliary_robin(data, MR, GRID.refined(), P)
    assert np.abs(half.values[::2] - traj.values).max() < 1e-3


def test_robin_is_scaled_auxiliary():
    data = ProblemData(bump(), bump(0.5), const(0.25))
    traj = solve_robin(data, MR, GRID, P)
    for t, f, z in zip(GRID.times, traj.fields, traj.auxiliary.fields):
        assert np.array_equal(f.values, math.exp(t) * z.values)


def test_robin_single_step_consistency():
    data = ProblemData(bump(), bump(0.5), const(0.25))
    sys_ = _system(MR, P, "robin_direct")
    inner = MR.dofs.interior_dofs
    errs = []
    for dt in (1e-3, 5e-4):
        traj = solve_robin_direct(data, MR, TimeGrid(dt, dt), P)
        r0, r1 = traj.fields[0].values, traj.fields[1].values
        b = load_vector(data.f, MR, "interior", dt)
        rate = (b - sys_.stiffness @ r0)[inner] / np.diag(sys_.mass)[inner]
        errs.append(np.abs(r1[inner] - (r0[inner] + dt * rate)).max())
    assert errs[0] / errs[1] > 3.0


def test_robin_initial_state_solves_exterior_equation():
    data = ProblemData(bump(), bump(0.5), const(0.25))
    traj = solve_robin_direct(data, MR, GRID, P)
    sys_ = traj.system
    ex = MR.dofs.exterior_dofs
    z = traj.fields[0].values
    res = (sys_.stiffness @ z + sys_.mass_ext @ z - load_vector(data.g, MR, "exterior", 0.0))[ex]
    assert np.abs(res).max() < 1e-12
    assert np.allclose(z[MR.dofs.interior_dofs], bump(0.5)(MR.nodes[MR.dofs.interior_dofs]))


def test_step_kernel():
    rng = np.random.default_rng(0)
    state = rng.standard_normal(5)
    x, res = step_implicit_euler(state, np.eye(5), state)
    assert np.array_equal(x, state) and res == 0.0
    Q = rng.standard_normal((20, 20))
    S = Q @ Q.T + 20 * np.eye(20)
    x, _ = step_implicit_euler(None, S, np.zeros(20))
    assert not np.any(x)
    rhs = rng.standard_normal(20)
    x, res = step_implicit_euler(None, S, rhs)
    assert res <= 1e-12
    assert np.linalg.norm(S @ x - rhs) <= 1e-12 * np.linalg.norm(S) * np.linalg.norm(x)
    with pytest.raises(SolverError):
        step_implicit_euler(None, -np.eye(3), np.ones(3))


def test_solver_errors():
    with pytest.raises(ValueError):
        solve_dirichlet(ProblemData(exterior_datum=const(1.0)), MD, GRID, P)
    with pytest.raises(ValueError):
        solve_robin(ProblemData(), MD, GRID, P)
    with pytest.raises(ValueError, match="non-finite"):
        solve_dirichlet(ProblemData(source=lambda x, t: np.full_like(x, np.inf)), MD, GRID, P)


def test_bit_identical_reruns():
    data = ProblemData(bump(), bump(0.5), const(0.25))
    a = solve_robin(data, MR, GRID, P)
    b = solve_robin(data, MR, GRID, P)
    assert np.array_equal(a.values, b.values)


def test_csv_output():
    data = ProblemData(source=bump())
    traj = solve_dirichlet(data, MD, GRID, P)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x,value,region"
    assert len(lines) == 1 + (GRID.n_steps + 1) * MD.n_nodes
    rows = np.array([[float(v) for v in ln.split(",")[:3]] for ln in lines[1:]])
    assert np.array_equal(rows[:, 2].reshape(GRID.n_steps + 1, -1), traj.values)
    regions = {ln.rsplit(",", 1)[1] for ln in lines[1:]}
    assert regions == {"interior", "exterior"}


amp = st.floats(0.0, 2.0)
centre = st.floats(-0.8, 0.8)
width = st.floats(0.1, 1.0)


@given(amp, centre, width, amp, centre, width, st.floats(0.0, 1.0))
def test_dirichlet_comparison_property(a1, c1, w1, a2, c2, w2, extra):
    lo = ProblemData(bump(a1, c1, w1), bump(a2, c2, w2))
    hi = ProblemData(lambda x, t: bump(a1, c1, w1)(x) + extra, lambda x: bump(a2, c2, w2)(x) + extra)
    tl = solve_dirichlet(lo, MD, GRID, P)
    th = solve_dirichlet(hi, MD, GRID, P)
    assert (tl.values - th.values).max() <= 1e-12
    assert tl.values.min() >= -1e-12


@given(amp, centre, width, amp, st.floats(0.0, 1.0))
def test_robin_positivity_property(a1, c1, w1, a2, g):
    data = ProblemData(bump(a1, c1, w1), bump(a2, c1, w1), const(g))
    traj = solve_robin(data, MR, GRID, P)
    assert traj.values.min() >= -1e-12 * max(1.0, np.abs(traj.values).max())
