"""Command line entry point: ``fracheat {solve,verify,convergence} --config run.ini``.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or data that violate a
check's hypotheses, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import __version__
from ._backend import BACKEND
from .assembly import dump_matrix
from .config import ConfigError, DataSet, RunConfig, load_config, manifest_text
from .kernel import ConvergenceError, FracParams
from .mesh import build_mesh
from .solver import (
    ProblemData,
    SolverError,
    TimeGrid,
    operators_for,
    solve_auxiliary_robin,
    solve_dirichlet,
    solve_robin,
    write_trajectory_csv,
)
from .verify import (
    CheckReport,
    HypothesisViolation,
    check_comparison,
    check_energy,
    check_linf_auxiliary,
    check_linf_dirichlet,
    check_linf_robin,
    check_positive_part,
    check_transform_equivalence,
    check_uniqueness,
    write_reports,
)

log = logging.getLogger("fracheat")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
OUTPUT_ENV = "FRACHEAT_OUTPUT_DIR"


def problem_data(cfg: RunConfig, ds: DataSet, label: str) -> ProblemData:
    robin = cfg.problem != "dirichlet"
    norms = {"source": ds.source.sup(cfg.interior_interval),
             "initial": ds.initial.sup(cfg.interior_interval)}
    if robin:
        norms["exterior"] = ds.exterior.sup(cfg.collar_intervals)
    return ProblemData(ds.source, ds.initial, ds.exterior if robin else None, norms, label)


def build(cfg: RunConfig, refine: int = 1):
    mesh = build_mesh(cfg.omega, cfg.n_interior * refine, cfg.truncation_radius,
                      cfg.n_exterior * refine)
    grid = TimeGrid(cfg.horizon, cfg.dt / refine)
    return mesh, grid, FracParams(cfg.order)


def solve_kind(kind: str, data: ProblemData, mesh, grid, params):
    fn = {"dirichlet": solve_dirichlet, "robin": solve_robin,
          "auxiliary": solve_auxiliary_robin}[kind]
    return fn(data, mesh, grid, params)


def output_dir(cfg: RunConfig) -> Path:
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg: RunConfig, out: Path, command: str):
    extra = {"command": command, "version": __version__, "backend": BACKEND}
    (out / "manifest.ini").write_text(manifest_text(cfg, extra))


def _dump(cfg: RunConfig, mesh, params, out: Path):
    ops = operators_for(mesh, params, "dirichlet" if cfg.problem == "dirichlet" else "robin")
    dump_matrix(out / "nodes.txt", mesh.nodes[None, :])
    dump_matrix(out / "stiffness.txt", ops.stiffness)
    dump_matrix(out / "monotone_stiffness.txt", ops.monotone_stiffness)
    dump_matrix(out / "mass_interior.txt", ops.mass_interior)
    if ops.mass_exterior is not None:
        dump_matrix(out / "mass_exterior.txt", ops.mass_exterior)
        dump_matrix(out / "flux.txt", ops.flux)


def run_solve(cfg: RunConfig, dump_matrices: bool = False) -> int:
    out = output_dir(cfg)
    mesh, grid, params = build(cfg)
    traj = solve_kind(cfg.problem, problem_data(cfg, cfg.data, "data"), mesh, grid, params)
    write_trajectory_csv(traj, out / "trajectory.csv")
    _write_manifest(cfg, out, "solve")
    if dump_matrices:
        _dump(cfg, mesh, params, out)
    log.info("wrote %d steps x %d nodes to %s", grid.n_steps + 1, mesh.n_nodes, out)
    return EXIT_OK


# ---- checks driven by a configuration ------------------------------------------------

def _worst(name: str, reports: list[CheckReport]) -> CheckReport:
    """Fold several reports into one, keeping the largest violation relative to tolerance."""
    r = max(reports, key=lambda r: r.worst_violation / r.tolerance)
    ctx = f"runs={len(reports)} " + r.context
    return CheckReport(name, r.worst_violation, r.tolerance, r.location, ctx)


def _check_positive_part(cfg, mesh, grid, params, traj):
    kind = "dirichlet" if cfg.problem == "dirichlet" else "robin"
    A = operators_for(mesh, params, kind).stiffness
    rng = np.random.default_rng(cfg.seed)
    reps = [check_positive_part(rng.standard_normal(A.shape[0]), A) for _ in range(cfg.samples)]
    return _worst("positive-part", reps)


def _comparison(cfg, lo_ds, hi_ds, name):
    reps = []
    for refine in (1, 2):
        mesh, grid, params = build(cfg, refine)
        lo = solve_kind(cfg.problem, problem_data(cfg, lo_ds, "lo"), mesh, grid, params)
        hi = solve_kind(cfg.problem, problem_data(cfg, hi_ds, "hi"), mesh, grid, params)
        reps.append(check_comparison(lo, hi))
    return _worst(name, reps)


def _check_comparison(cfg, mesh, grid, params, traj):
    if cfg.data_hi is None:
        raise HypothesisViolation("the comparison check needs a [data_hi] section")
    return _comparison(cfg, cfg.data, cfg.data_hi, "comparison")


def _check_positivity(cfg, mesh, grid, params, traj):
    return _comparison(cfg, DataSet(), cfg.data, "positivity")


def _check_linf_dirichlet(cfg, mesh, grid, params, traj):
    if cfg.problem != "dirichlet":
        raise HypothesisViolation("linf-dirichlet applies to dirichlet problems")
    lo, hi = cfg.data.source.sign_bounds(cfg.interior_interval)
    reps = []
    if hi <= 0:
        reps.append(check_linf_dirichlet(traj))
    if lo >= 0:
        reps.append(check_linf_dirichlet(traj, reflect=True))
    if not reps:
        raise HypothesisViolation("linf-dirichlet needs a source of one sign")
    return _worst("linf-dirichlet", reps)


def _check_linf_robin(cfg, mesh, grid, params, traj):
    if cfg.problem == "robin":
        return check_linf_robin(traj, absolute=True)
    if cfg.problem == "auxiliary":
        return check_linf_auxiliary(traj, absolute=True)
    raise HypothesisViolation("linf-robin applies to robin or auxiliary problems")


def _check_linf_auxiliary(cfg, mesh, grid, params, traj):
    if cfg.problem == "robin":
        return check_linf_auxiliary(traj.auxiliary, absolute=True)
    if cfg.problem == "auxiliary":
        return check_linf_auxiliary(traj, absolute=True)
    raise HypothesisViolation("linf-auxiliary applies to robin or auxiliary problems")


def _check_energy(cfg, mesh, grid, params, traj):
    return check_energy(traj)


def _check_transform(cfg, mesh, grid, params, traj):
    if cfg.problem != "robin":
        raise HypothesisViolation("transform-equivalence applies to robin problems")
    return check_transform_equivalence(traj.data, mesh, grid, params, levels=3)


def _check_uniqueness(cfg, mesh, grid, params, traj):
    kind = {"auxiliary": "auxiliary_robin"}.get(cfg.problem, cfg.problem)
    return check_uniqueness(kind, mesh, grid, params, traj.data)


RUNNERS = {
    "positive-part": _check_positive_part,
    "comparison": _check_comparison,
    "positivity": _check_positivity,
    "linf-dirichlet": _check_linf_dirichlet,
    "linf-robin": _check_linf_robin,
    "linf-auxiliary": _check_linf_auxiliary,
    "energy": _check_energy,
    "transform-equivalence": _check_transform,
    "uniqueness": _check_uniqueness,
}


def run_verify(cfg: RunConfig, dump_matrices: bool = False) -> int:
    if not cfg.checks:
        raise ConfigError("[checks] names", "no checks requested")
    out = output_dir(cfg)
    mesh, grid, params = build(cfg)
    traj = solve_kind(cfg.problem, problem_data(cfg, cfg.data, "data"), mesh, grid, params)
    write_trajectory_csv(traj, out / "trajectory.csv")
    _write_manifest(cfg, out, "verify")
    if dump_matrices:
        _dump(cfg, mesh, params, out)
    reports = [RUNNERS[name](cfg, mesh, grid, params, traj) for name in cfg.checks]
    write_reports(reports, out / "report.txt")
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def convergence_table(cfg: RunConfig, levels: int) -> list[dict]:
    """Successive max differences on the coarse space-time nodes under (h, dt) halving."""
    data = problem_data(cfg, cfg.data, "data")
    runs = []
    for lvl in range(levels):
        mesh, grid, params = build(cfg, 2**lvl)
        runs.append((mesh, grid, solve_kind(cfg.problem, data, mesh, grid, params).values))
    coarse_mesh, _, _ = runs[0]
    rows = []
    for lvl in range(levels - 1):
        (m0, g0, v0), (m1, g1, v1) = runs[lvl], runs[lvl + 1]
        idx = np.searchsorted(m1.nodes, coarse_mesh.nodes)
        idx0 = np.searchsorted(m0.nodes, coarse_mesh.nodes)
        if not (np.allclose(m1.nodes[idx], coarse_mesh.nodes) and np.allclose(m0.nodes[idx0], coarse_mesh.nodes)):
            raise SolverError("refined meshes are not nested")
        # level lvl has 2^lvl steps per coarse step
        a = v0[:: 2**lvl][:, idx0]
        b = v1[:: 2 ** (lvl + 1)][:, idx]
        rows.append(dict(level=lvl, n_interior=m0.n_interior, dt=g0.dt,
                         difference=float(np.abs(a - b).max())))
    for k in range(1, len(rows)):
        d0, d1 = rows[k - 1]["difference"], rows[k]["difference"]
        rows[k]["order"] = math.log2(d0 / d1) if d0 > 0 and d1 > 0 else float("nan")
    if rows:
        rows[0]["order"] = float("nan")
    return rows


def run_convergence(cfg: RunConfig, levels: int) -> int:
    if levels < 2:
        raise ConfigError("--levels", f"must be >= 2, got {levels}")
    out = output_dir(cfg)
    rows = convergence_table(cfg, levels)
    with open(out / "convergence.csv", "w") as fh:
        fh.write("level,n_interior,dt,difference,order\n")
        for r in rows:
            fh.write(f"{r['level']},{r['n_interior']},{r['dt']!r},{r['difference']!r},{r['order']!r}\n")
            print(f"level {r['level']}: n={r['n_interior']} dt={r['dt']:.6g} "
                  f"diff={r['difference']:.6e} order={r['order']:.3f}")
    _write_manifest(cfg, out, f"convergence --levels {levels}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracheat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracheat {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "convergence"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--dump-matrices", action="store_true",
                        help="write dense operator matrices as plain text")
        if name == "convergence":
            sp.add_argument("--levels", type=int, default=3)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            return run_solve(cfg, args.dump_matrices)
        if args.command == "verify":
            return run_verify(cfg, args.dump_matrices)
        return run_convergence(cfg, args.levels)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, LinAlgError, ConvergenceError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
