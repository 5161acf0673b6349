"""Dense assembly of the nonlocal operators on P1 hat functions.

Matrices are indexed by the full node list of the mesh unless stated otherwise.
All element-pair integrals of the Gagliardo form are one of three kinds:

* identical elements: u(x) - u(y) = slope * (x - y), integrated in closed form;
* elements sharing a node: inner integral in closed form, outer by graded Gauss;
* separated elements: tensor Gauss (the compiled hot loop).

Couplings between Omega and the collar that are not symmetric Gagliardo terms
(the flux and the pointwise operator applied on Omega) are kept in difference form
int phi_i(x) int (phi_j(x) - phi_j(y)) k dy dx so that no divergent pieces are split
off at the shared nodes a and b.  Power-law tail weights are integrated against hat
products with Gauss-Jacobi rules.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb
from typing import Callable, Literal

import numpy as np

from . import _backend
from .kernel import FracParams
from .mesh import Mesh
from .quadrature import gauss_jacobi_left, gauss_legendre, graded_rule

__all__ = [
    "Operators",
    "build_operators",
    "assemble_dirichlet_stiffness",
    "assemble_robin_stiffness",
    "assemble_flux",
    "assemble_mass",
    "assemble_interior_operator",
    "assemble_truncation_tail",
    "monotone_dirichlet_stiffness",
    "monotone_robin_stiffness",
    "load_vector",
    "region_l2_squared",
    "region_quadrature",
    "lump",
    "dump_matrix",
]

Region = Literal["interior", "exterior"]

NEAR_POINTS = 16
FAR_POINTS = 8
GRAM_POINTS = 12
ADJ_DEPTH = 30
CROSS_DEPTH = 40


def _pow_int(u0, u1, e):
    """int_{u0}^{u1} u^e du for 0 < u0 <= u1, stable as e -> -1."""
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    lr = np.log(u1 / u0)
    if abs(e + 1.0) < 1e-14:
        return lr
    return u0 ** (e + 1.0) * np.expm1((e + 1.0) * lr) / (e + 1.0)


@lru_cache(maxsize=256)
def adjacent_moments(h_left: float, h_right: float, s: float) -> tuple[float, float, float]:
    """J_mn = int_0^{h_left} int_0^{h_right} p^m q^n (p + q)^{-1-2s} dq dp for (m, n) in
    (2, 0), (1, 1), (0, 2).

    p is the distance from the shared node into the left element, q into the right.
    """
    p, w = graded_rule(0.0, h_left, left=True, npts=16, depth=ADJ_DEPTH)
    e = -1.0 - 2.0 * s
    inner = [_pow_int(p, p + h_right, e + k) for k in range(3)]

    def G(n):
        return sum(comb(n, k) * (-p) ** (n - k) * inner[k] for k in range(n + 1))

    J20 = float(np.dot(w, p**2 * G(0)))
    J11 = float(np.dot(w, p * G(1)))
    J02 = float(np.dot(w, G(2)))
    return J20, J11, J02


def self_coefficient(h: float, s: float) -> float:
    """int_K int_K |x - y|^{1-2s} dx dy for an element of length h."""
    return 2.0 * h ** (3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))


def lump(M: np.ndarray) -> np.ndarray:
    """Row-sum lumped (diagonal) version of M."""
    return np.diag(M.sum(axis=1))


class _Assembler:
    """Caches the ingredients shared by the public assembly functions."""

    def __init__(self, mesh: Mesh, params: FracParams, backend: str | None = None):
        if params.dim != 1:
            raise NotImplementedError("assembly is one-dimensional")
        self.mesh = mesh
        self.params = params
        self.s = params.order
        self.C = params.c_ns
        self.backend = backend
        self.omega_el = np.flatnonzero(mesh.element_in_omega)
        self.collar_el = np.flatnonzero(~mesh.element_in_omega)

    # ---- Gagliardo element-pair sums -------------------------------------------
    def pair_sum(self, elems_a, elems_b=None) -> np.ndarray:
        """sum over ordered pairs of int int (u(x)-u(y))(w(x)-w(y)) |x-y|^{-1-2s}.

        With one element set, all ordered pairs within it; with two, ordered pairs
        with one element from each set (both orders).
        """
        mesh, s = self.mesh, self.s
        nodes, el = mesh.nodes, mesh.elements
        n = mesh.n_nodes
        A = np.zeros((n, n))
        if elems_b is None:
            ka, kb = np.triu_indices(len(elems_a))
            K, L = np.asarray(elems_a)[ka], np.asarray(elems_a)[kb]
        else:
            K = np.repeat(np.asarray(elems_a), len(elems_b))
            L = np.tile(np.asarray(elems_b), len(elems_a))
        same = K == L
        touch = ~same & ((el[K, 1] == el[L, 0]) | (el[K, 0] == el[L, 1]))
        far = ~same & ~touch

        for k in K[same]:
            h = mesh.element_sizes[k]
            c = self_coefficient(h, s) / h**2
            i, j = el[k]
            A[i, i] += c
            A[j, j] += c
            A[i, j] -= c
            A[j, i] -= c

        for k, l in zip(K[touch], L[touch]):
            left, right = (k, l) if el[k, 1] == el[l, 0] else (l, k)
            hl, hr = mesh.element_sizes[left], mesh.element_sizes[right]
            J20, J11, J02 = adjacent_moments(float(hl), float(hr), s)
            gK = np.array([-1.0 / hl, 1.0 / hl, 0.0])
            gL = np.array([0.0, -1.0 / hr, 1.0 / hr])
            loc = (J20 * np.outer(gK, gK) + J11 * (np.outer(gK, gL) + np.outer(gL, gK))
                   + J02 * np.outer(gL, gL))
            idx = np.array([el[left, 0], el[left, 1], el[right, 1]])
            A[np.ix_(idx, idx)] += 2.0 * loc

        kf, lf = K[far], L[far]
        if kf.size:
            hk = mesh.element_sizes[kf]
            hl = mesh.element_sizes[lf]
            gap = np.maximum(nodes[el[lf, 0]] - nodes[el[kf, 1]], nodes[el[kf, 0]] - nodes[el[lf, 1]])
            near = gap < 2.0 * np.maximum(hk, hl)
            for mask, npts in ((near, NEAR_POINTS), (~near, FAR_POINTS)):
                if not mask.any():
                    continue
                xi, wi = gauss_legendre(npts, 0.0, 1.0)
                _backend.far_pairs(A, nodes, el, kf[mask], lf[mask], np.full(mask.sum(), 2.0),
                                   xi, wi, 1.0 + 2.0 * s, backend=self.backend)
        return A

    @cached_property
    def omega_pairs(self) -> np.ndarray:
        return self.pair_sum(self.omega_el)

    @cached_property
    def omega_collar_pairs(self) -> np.ndarray:
        return self.pair_sum(self.omega_el, self.collar_el)

    # ---- weighted Gram matrices --------------------------------------------------
    def gram(self, elems, terms) -> np.ndarray:
        """sum_e int_e N_a N_b w(x) dx with w(x) = sum coef * |x - c|^{-2s}.

        For s >= 1/2 the weight is not integrable against N_c^2 at a node c carrying
        a singular term; that single entry is set to +inf (it never enters a finite
        form).  All other entries stay exact.
        """
        mesh, s = self.mesh, self.s
        n = mesh.n_nodes
        G = np.zeros((n, n))
        strong = s >= 0.5
        beta = 1.0 - 2.0 * s if strong else -2.0 * s
        for e in elems:
            i, j = mesh.elements[e]
            x0, x1 = mesh.nodes[i], mesh.nodes[j]
            h = x1 - x0
            loc = np.zeros((2, 2))
            for coef, c in terms:
                if c == x0 or c == x1:
                    d, w = gauss_jacobi_left(GRAM_POINTS, beta, 0.0, h)
                    x = x0 + d if c == x0 else x1 - d
                    wt = w / d if strong else w
                    t = (x - x0) / h
                    N = np.stack([1.0 - t, t])
                    blk = coef * (N * wt) @ N.T
                    if strong:
                        k = 0 if c == x0 else 1
                        blk[k, k] = np.inf
                    loc += blk
                else:
                    x, w = gauss_legendre(GRAM_POINTS, x0, x1)
                    t = (x - x0) / h
                    N = np.stack([1.0 - t, t])
                    loc += coef * (N * (w * np.abs(x - c) ** (-2.0 * s))) @ N.T
            G[np.ix_([i, j], [i, j])] += loc
        return G

    def _kappa_terms(self, which: str):
        a, b = self.mesh.omega
        R = self.mesh.truncation_radius
        k = 1.0 / (2.0 * self.s)
        if which == "exterior":      # x in Omega, y in R \ Omega
            return [(k, a), (k, b)]
        if which == "beyond":        # x in Omega, y outside the box
            return [(k, a - R), (k, b + R)]
        raise ValueError(which)

    @cached_property
    def gram_exterior(self) -> np.ndarray:
        return self.gram(self.omega_el, self._kappa_terms("exterior"))

    @cached_property
    def gram_beyond(self) -> np.ndarray:
        return self.gram(self.omega_el, self._kappa_terms("beyond"))

    # ---- cross moments -------------------------------------------------------------
    def cross(self, outer, inner, difference: bool = False) -> np.ndarray:
        """Moments of the kernel between two disjoint element sets.

        difference=False:
            B[i, j] = int_outer phi_i(x) int_inner phi_j(y) k(x, y) dy dx
            (entries pairing a shared node with itself diverge for s >= 1/2 and are
            set to zero; they cancel in every form built from B).
        difference=True:
            D[i, j] = int_outer phi_i(x) int_inner (phi_j(x) - phi_j(y)) k(x, y) dy dx,
            with the near-cancellation at shared nodes done in closed form.

        Inner integrals are closed form; the outer one is Gauss, graded toward nodes
        shared with the inner set.
        """
        mesh, s = self.mesh, self.s
        nodes, el = mesh.nodes, mesh.elements
        inner = np.asarray(inner)
        in0, in1 = el[inner, 0], el[inner, 1]
        y0, y1 = nodes[in0], nodes[in1]
        hy = y1 - y0
        inner_nodes = set(el[inner].ravel().tolist())
        sp = 1.0 - 2.0 * s if s > 0.5 else None
        B = np.zeros((mesh.n_nodes, mesh.n_nodes))
        e = -1.0 - 2.0 * s
        for o in outer:
            i, j = el[o]
            x0, x1 = nodes[i], nodes[j]
            ho = x1 - x0
            dl, dr, w = _offset_rule(ho, i in inner_nodes, j in inner_nodes, sp)
            # exact distances to the inner elements, built from the local offsets
            below = (y0 >= x1)[None, :]
            dn = np.where(below, (y0 - x1)[None, :] + dr[:, None], (x0 - y1)[None, :] + dl[:, None])
            df = dn + hy[None, :]
            m0 = _pow_int(dn, df, e)
            m1 = np.where(below, 1.0, -1.0) * _pow_int(dn, df, e + 1.0)
            I1 = (np.where(below, -dn, df) * m0 + m1) / hy
            I0 = m0 - I1
            N = np.stack([dr / ho, dl / ho])   # (2, q)
            Nw = N * w

            if not difference:
                for a_loc, gi in enumerate((i, j)):
                    np.add.at(B[gi], in0, Nw[a_loc] @ I0)
                    np.add.at(B[gi], in1, Nw[a_loc] @ I1)
                for gi in (i, j):
                    if gi in inner_nodes:
                        B[gi, gi] = 0.0
                continue

            V0, V1 = -I0, -I1
            own = []  # (outer local index, hat values, mass not handled analytically)
            M = m0.sum(axis=1)
            for gi, dist, near in ((i, dr, dl), (j, dl, dr)):
                # phi_gi(x) = dist / ho; near is the distance from x to gi itself
                Mg = M
                if gi in inner_nodes:
                    for col, Vc, Iother in ((in0 == gi, V0, I1), (in1 == gi, V1, I0)):
                        if col.any():
                            Vc[:, col] = (-near / ho)[:, None] * m0[:, col] + Iother[:, col]
                            Mg = Mg - m0[:, col].sum(axis=1)
                own.append((gi, dist / ho, Mg))
            for a_loc, gi in enumerate((i, j)):
                np.add.at(B[gi], in0, Nw[a_loc] @ V0)
                np.add.at(B[gi], in1, Nw[a_loc] @ V1)
                for gj, phi, Mg in own:
                    B[gi, gj] += Nw[a_loc] @ (phi * Mg)
        return B

    @cached_property
    def cross_omega_collar(self) -> np.ndarray:
        return self.cross(self.omega_el, self.collar_el)

    @cached_property
    def diff_omega_collar(self) -> np.ndarray:
        return self.cross(self.omega_el, self.collar_el, difference=True)

    @cached_property
    def diff_collar_omega(self) -> np.ndarray:
        return self.cross(self.collar_el, self.omega_el, difference=True)


def _offset_rule(h: float, left: bool, right: bool, singular_power):
    """Rule on an element of length h as exact offsets from both ends.

    Returns (dl, dr, w) with dl the distance to the left node and dr to the right
    one.  Graded ends get their offsets straight from a rule anchored at that end, so
    points closer than one ulp of the absolute coordinate stay distinct.
    """
    kw = dict(left=True, npts=16, depth=CROSS_DEPTH, singular_power=singular_power)
    if left and right:
        d, w = graded_rule(0.0, 0.5 * h, **kw)
        return np.concatenate([d, h - d]), np.concatenate([h - d, d]), np.concatenate([w, w])
    if left or right:
        d, w = graded_rule(0.0, h, **kw)
        return (d, h - d, w) if left else (h - d, d, w)
    d, w = gauss_legendre(16, 0.0, h)
    return d, h - d, w


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _require_collar(mesh: Mesh, what: str):
    if not mesh.has_collar:
        raise ValueError(f"{what} needs an exterior collar (n_exterior >= 1)")


def assemble_dirichlet_stiffness(mesh: Mesh, params: FracParams, *, backend=None,
                                 _asm: _Assembler | None = None) -> np.ndarray:
    """Gagliardo form of hats extended by zero, over the interior dofs."""
    if mesh.n_interior < 2:
        raise ValueError("need at least 2 interior elements")
    asm = _asm or _Assembler(mesh, params, backend)
    full = 0.5 * asm.C * asm.omega_pairs + asm.C * asm.gram_exterior
    idx = mesh.dofs.interior_dofs
    return _sym(full[np.ix_(idx, idx)])


def assemble_robin_stiffness(mesh: Mesh, params: FracParams, *, backend=None,
                             _asm: _Assembler | None = None) -> np.ndarray:
    """Form over the box minus (collar x collar), over all nodes."""
    _require_collar(mesh, "robin stiffness")
    asm = _asm or _Assembler(mesh, params, backend)
    return _sym(0.5 * asm.C * (asm.omega_pairs + asm.omega_collar_pairs))


def assemble_flux(mesh: Mesh, params: FracParams, *, backend=None,
                  _asm: _Assembler | None = None) -> np.ndarray:
    """Rows over exterior dofs: (F rho)_k = int_collar psi_k N_s rho dx."""
    _require_collar(mesh, "flux")
    asm = _asm or _Assembler(mesh, params, backend)
    F = asm.C * asm.diff_collar_omega
    return F[mesh.dofs.exterior_dofs]


def assemble_interior_operator(mesh: Mesh, params: FracParams, *, include_tail: bool = True,
                               backend=None, _asm: _Assembler | None = None) -> np.ndarray:
    """L[i, j] = int_Omega phi_i (-Delta)^s phi_j dx, rows over Omega nodes are meaningful.

    Fields are taken to vanish beyond the box (a - R, b + R).  With include_tail=False
    the coupling to the region beyond the box is dropped, which is the operator whose
    integration-by-parts partner is the box-truncated Robin form.
    """
    _require_collar(mesh, "interior operator")
    asm = _asm or _Assembler(mesh, params, backend)
    L = 0.5 * asm.C * asm.omega_pairs + asm.C * asm.diff_omega_collar
    if include_tail:
        L = L + asm.C * asm.gram_beyond
    return L


def assemble_truncation_tail(mesh: Mesh, params: FracParams, *, backend=None,
                             _asm: _Assembler | None = None) -> np.ndarray:
    """int_Omega phi_i phi_j kappa(x) dx, kappa the kernel mass beyond the box.

    This is exactly the term the box-truncated Robin form drops; it is O(R^{-2s}).
    """
    asm = _asm or _Assembler(mesh, params, backend)
    return asm.C * asm.gram_beyond


def monotone_dirichlet_stiffness(mesh: Mesh, params: FracParams, *, backend=None,
                                 _asm: _Assembler | None = None) -> np.ndarray:
    """Dirichlet stiffness with the exterior-tail weight lumped onto the diagonal."""
    asm = _asm or _Assembler(mesh, params, backend)
    full = 0.5 * asm.C * asm.omega_pairs + asm.C * np.diag(asm.gram_exterior.sum(axis=1))
    idx = mesh.dofs.interior_dofs
    return _sym(full[np.ix_(idx, idx)])


def monotone_robin_stiffness(mesh: Mesh, params: FracParams, *, backend=None,
                             _asm: _Assembler | None = None) -> np.ndarray:
    """Robin stiffness whose Omega x collar part is the graph form sum B_ij (r_i - r_j)^2."""
    _require_collar(mesh, "robin stiffness")
    asm = _asm or _Assembler(mesh, params, backend)
    B = asm.cross_omega_collar
    graph = np.diag(B.sum(axis=1)) + np.diag(B.sum(axis=0)) - B - B.T
    return _sym(0.5 * asm.C * asm.omega_pairs + asm.C * graph)


def assemble_mass(mesh: Mesh, region: Region) -> np.ndarray:
    """Consistent P1 mass matrix over the elements of one region (full node indexing)."""
    elems = _region_elements(mesh, region)
    M = np.zeros((mesh.n_nodes, mesh.n_nodes))
    ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for e in elems:
        idx = mesh.elements[e]
        M[np.ix_(idx, idx)] += mesh.element_sizes[e] * ref
    return M


def _region_elements(mesh: Mesh, region: Region) -> np.ndarray:
    if region == "interior":
        return np.flatnonzero(mesh.element_in_omega)
    if region == "exterior":
        _require_collar(mesh, f"{region} region")
        return np.flatnonzero(~mesh.element_in_omega)
    raise ValueError(f"unknown region {region!r}")


def region_quadrature(mesh: Mesh, region: Region):
    """4-point Gauss nodes and weights per element of a region, shapes (n_el, 4)."""
    elems = _region_elements(mesh, region)
    xi, wi = gauss_legendre(4, 0.0, 1.0)
    x0 = mesh.nodes[mesh.elements[elems, 0]]
    h = mesh.element_sizes[elems]
    X = x0[:, None] + h[:, None] * xi[None, :]
    return elems, xi, X, wi[None, :] * h[:, None]


def _evaluate(f: Callable, X: np.ndarray, t: float) -> np.ndarray:
    vals = np.asarray(f(X, t), dtype=float) * np.ones_like(X)
    if not np.all(np.isfinite(vals)):
        bad = X[~np.isfinite(vals)][0]
        raise ValueError(f"non-finite data at x={bad!r}, t={t!r}")
    return vals


def region_l2_squared(f: Callable, mesh: Mesh, region: Region, t: float = 0.0) -> float:
    """int_region f(x, t)^2 dx with the same rule as load_vector."""
    _, _, X, W = region_quadrature(mesh, region)
    return float(np.sum(W * _evaluate(f, X, t) ** 2))


def load_vector(f: Callable, mesh: Mesh, region: Region, t: float = 0.0) -> np.ndarray:
    """b_i = int_region f(x, t) phi_i(x) dx with 4-point Gauss per element."""
    elems, xi, X, W = region_quadrature(mesh, region)
    W = _evaluate(f, X, t) * W
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.elements[elems, 0], W @ (1.0 - xi))
    np.add.at(b, mesh.elements[elems, 1], W @ xi)
    return b


@dataclass(frozen=True, eq=False)
class Operators:
    mesh: Mesh
    params: FracParams
    kind: Literal["dirichlet", "robin"]
    mass_interior: np.ndarray
    mass_exterior: np.ndarray | None
    stiffness: np.ndarray
    monotone_stiffness: np.ndarray
    flux: np.ndarray | None

    @property
    def unknowns(self) -> np.ndarray:
        return self.mesh.dofs.unknowns(self.kind)


def build_operators(mesh: Mesh, params: FracParams, kind: Literal["dirichlet", "robin"],
                    *, backend=None) -> Operators:
    asm = _Assembler(mesh, params, backend)
    if kind == "dirichlet":
        return Operators(mesh, params, kind, assemble_mass(mesh, "interior"), None,
                         assemble_dirichlet_stiffness(mesh, params, _asm=asm),
                         monotone_dirichlet_stiffness(mesh, params, _asm=asm), None)
    if kind == "robin":
        return Operators(mesh, params, kind, assemble_mass(mesh, "interior"),
                         assemble_mass(mesh, "exterior"),
                         assemble_robin_stiffness(mesh, params, _asm=asm),
                         monotone_robin_stiffness(mesh, params, _asm=asm),
                         assemble_flux(mesh, params, _asm=asm))
    raise ValueError(f"unknown kind {kind!r}")


def dump_matrix(path, A: np.ndarray) -> None:
    """Plain-text dense dump: one row per line, full-precision scientific notation."""
    np.savetxt(path, np.atleast_2d(A), fmt="%.17e")
