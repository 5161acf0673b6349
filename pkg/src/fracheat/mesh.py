"""Uniform 1D meshes of Omega = (a, b) with an optional truncated exterior collar."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

__all__ = ["Mesh", "DofMap", "Field", "build_mesh", "nodal_interpolate",
           "INTERIOR", "BOUNDARY", "FAR_EXTERIOR"]

INTERIOR = "interior"
BOUNDARY = "boundary-adjacent-exterior"
FAR_EXTERIOR = "far-exterior"

FieldKind = Literal["dirichlet", "robin"]


@dataclass(frozen=True, eq=False)
class Mesh:
    omega: tuple[float, float]
    n_interior: int
    truncation_radius: float
    n_exterior: int
    nodes: np.ndarray
    elements: np.ndarray          # (n_elements, 2) node indices
    element_in_omega: np.ndarray  # bool per element

    @property
    def h(self) -> float:
        a, b = self.omega
        return (b - a) / self.n_interior

    @property
    def h_exterior(self) -> float:
        return self.truncation_radius / self.n_exterior if self.n_exterior else float("nan")

    @property
    def has_collar(self) -> bool:
        return self.n_exterior > 0

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def box(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @cached_property
    def element_sizes(self) -> np.ndarray:
        return self.nodes[self.elements[:, 1]] - self.nodes[self.elements[:, 0]]

    @cached_property
    def tags(self) -> tuple[str, ...]:
        a, b = self.omega
        out = []
        for x in self.nodes:
            if a < x < b:
                out.append(INTERIOR)
            elif x == a or x == b:
                out.append(BOUNDARY)
            else:
                out.append(FAR_EXTERIOR)
        return tuple(out)

    @cached_property
    def omega_nodes(self) -> np.ndarray:
        """Indices of nodes in the closed interval [a, b]."""
        a, b = self.omega
        return np.flatnonzero((self.nodes >= a) & (self.nodes <= b))

    @cached_property
    def collar_nodes(self) -> np.ndarray:
        """Indices of nodes in the closed collar, including a, b and the box ends."""
        a, b = self.omega
        return np.flatnonzero((self.nodes <= a) | (self.nodes >= b))

    @cached_property
    def dofs(self) -> "DofMap":
        tags = np.array(self.tags)
        inner = np.flatnonzero(tags == INTERIOR)
        outer = np.flatnonzero(tags != INTERIOR) if self.has_collar else np.empty(0, dtype=int)
        return DofMap(inner, outer)


@dataclass(frozen=True)
class DofMap:
    interior_dofs: np.ndarray
    exterior_dofs: np.ndarray

    def unknowns(self, kind: FieldKind) -> np.ndarray:
        if kind == "dirichlet":
            return self.interior_dofs
        return np.sort(np.concatenate([self.interior_dofs, self.exterior_dofs]))


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    kind: FieldKind
    mesh: Mesh

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has shape {v.shape}, mesh has {self.mesh.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.kind == "dirichlet" and np.any(v[_outside(self.mesh)] != 0.0):
            raise ValueError("dirichlet field must vanish outside Omega")
        object.__setattr__(self, "values", v)

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.mesh.dofs.interior_dofs]


def _outside(mesh: Mesh) -> np.ndarray:
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[mesh.dofs.interior_dofs] = False
    return mask


def build_mesh(omega: tuple[float, float], n_interior: int,
               truncation_radius: float = 1.0, n_exterior: int = 0) -> Mesh:
    a, b = map(float, omega)
    if not b > a:
        raise ValueError(f"degenerate interval omega={omega}")
    if int(n_interior) != n_interior or n_interior < 2:
        raise ValueError(f"n_interior must be an integer >= 2, got {n_interior}")
    if int(n_exterior) != n_exterior or n_exterior < 0:
        raise ValueError(f"n_exterior must be a nonnegative integer, got {n_exterior}")
    if n_exterior > 0 and not truncation_radius > 0:
        raise ValueError(f"truncation_radius must be positive, got {truncation_radius}")
    n_interior, n_exterior = int(n_interior), int(n_exterior)
    R = float(truncation_radius)

    inner = np.linspace(a, b, n_interior + 1)
    if n_exterior:
        left = np.linspace(a - R, a, n_exterior + 1)[:-1]
        right = np.linspace(b, b + R, n_exterior + 1)[1:]
        nodes = np.concatenate([left, inner, right])
    else:
        nodes = inner
    n_el = nodes.size - 1
    elements = np.stack([np.arange(n_el), np.arange(1, n_el + 1)], axis=1)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    in_omega = (mids > a) & (mids < b)
    return Mesh((a, b), n_interior, R, n_exterior, nodes, elements, in_omega)


def nodal_interpolate(f: Callable, mesh: Mesh, kind: FieldKind) -> Field:
    """Nodal interpolant of f; dirichlet fields are zeroed off the open interval."""
    vals = np.empty(mesh.n_nodes)
    try:
        vals[:] = np.asarray(f(mesh.nodes), dtype=float) * np.ones(mesh.n_nodes)
    except Exception:
        for i, x in enumerate(mesh.nodes):
            try:
                vals[i] = float(f(x))
            except Exception as exc:
                raise ValueError(f"evaluation failed at node x={x!r}: {exc}") from exc
    if kind == "dirichlet":
        vals[_outside(mesh)] = 0.0
    return Field(vals, kind, mesh)
