"""Nodal Lagrange bases, tetrahedral quadrature and local element matrices.

Vector shape functions are scalar shapes times unit vectors; local vector
unknowns are ordered node-major, ``3 * i + c``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

REFERENCE_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
REFERENCE_VOLUME = 1.0 / 6.0
MAX_QUADRATURE_DEGREE = 10


@functools.lru_cache(maxsize=None)
def barycentric_lattice(order: int) -> np.ndarray:
    """Multi-indices ``alpha`` with ``sum(alpha) == order``, shape ``(nloc, 4)``.

    Vertices come first, then the remaining points in lexicographic order.
    """
    pts = [a for a in itertools.product(range(order + 1), repeat=4) if sum(a) == order]
    pts.sort(key=lambda a: (-max(a), tuple(-x for x in a)))
    arr = np.array(pts, dtype=np.int64)
    arr.flags.writeable = False
    return arr


def monomial_exponents(order: int) -> list[tuple[int, int, int]]:
    return [
        (a, b, c)
        for total in range(order + 1)
        for a in range(total, -1, -1)
        for b in range(total - a, -1, -1)
        for c in [total - a - b]
    ]


class NodalBasis:
    """Equispaced Lagrange basis of a given order on the reference tet."""

    def __init__(self, order: int):
        if order not in (1, 2, 3):
            raise ValueError(f"unsupported Lagrange order {order}")
        self.order = order
        self.multi_index = barycentric_lattice(order)
        self.nodes = self.multi_index[:, 1:] / order  # reference coordinates
        self.exponents = np.array(monomial_exponents(order))
        vander = self._monomials(self.nodes)
        # coefficients[m, i]: shape i = sum_m coefficients[m, i] * monomial m
        self.coefficients = np.linalg.solve(vander, np.eye(len(self.nodes)))

    @property
    def ndof(self) -> int:
        return len(self.nodes)

    def _monomials(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.prod(x[:, None, :] ** self.exponents[None], axis=-1)

    def _monomial_gradients(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        grads = np.empty((len(x), len(self.exponents), 3))
        for d in range(3):
            e = self.exponents.copy()
            coef = e[:, d].astype(float)
            e[:, d] = np.maximum(e[:, d] - 1, 0)
            grads[:, :, d] = coef[None] * np.prod(x[:, None, :] ** e[None], axis=-1)
        return grads

    def values(self, x: np.ndarray) -> np.ndarray:
        """Shape values at reference points, ``(npts, ndof)``."""
        return self._monomials(x) @ self.coefficients

    def gradients(self, x: np.ndarray) -> np.ndarray:
        """Reference gradients, ``(npts, ndof, 3)``."""
        return np.einsum("qmd,mi->qid", self._monomial_gradients(x), self.coefficients)


@functools.lru_cache(maxsize=None)
def nodal_basis(order: int) -> NodalBasis:
    return NodalBasis(order)


@dataclass(frozen=True)
class QuadratureRule:
    barycentric: np.ndarray  # (npts, 4)
    weights: np.ndarray  # sum to 1/6
    degree: int

    @property
    def points(self) -> np.ndarray:
        """Reference (x, y, z) coordinates."""
        return self.barycentric[:, 1:]


def _conical_product(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # Duffy collapse x = u, y = v(1-u), z = w(1-u)(1-v); Jacobian (1-u)^2 (1-v)
    m = (degree + 2) // 2
    tu, wu = roots_jacobi(m, 2.0, 0.0)
    tv, wv = roots_jacobi(m, 1.0, 0.0)
    tw, ww = roots_jacobi(m, 0.0, 0.0)
    u, v, w = (tu + 1) / 2, (tv + 1) / 2, (tw + 1) / 2
    wu, wv, ww = wu / 8, wv / 4, ww / 2
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    weights = np.einsum("i,j,k->ijk", wu, wv, ww).ravel()
    x = U.ravel()
    y = (V * (1 - U)).ravel()
    z = (W * (1 - U) * (1 - V)).ravel()
    return np.column_stack([x, y, z]), weights


@functools.lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """Rule on the reference tet integrating total degree ``degree`` exactly."""
    if not 1 <= degree <= MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree must be in [1, {MAX_QUADRATURE_DEGREE}], got {degree}")
    if degree == 1:
        xyz = np.full((1, 3), 0.25)
        weights = np.array([REFERENCE_VOLUME])
    elif degree == 2:
        a, b = (5 + 3 * math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20
        bary = np.full((4, 4), b) + np.eye(4) * (a - b)
        xyz = bary[:, 1:]
        weights = np.full(4, REFERENCE_VOLUME / 4)
    else:
        xyz, weights = _conical_product(degree)
    bary = np.column_stack([1 - xyz.sum(axis=1), xyz])
    for arr in (bary, weights):
        arr.flags.writeable = False
    return QuadratureRule(barycentric=bary, weights=weights, degree=degree)


def simplex_monomial_integral(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the reference tet."""
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


@dataclass(frozen=True)
class ElementGeometry:
    """Affine map ``x = x0 + J xi`` of one tet (or a batch, leading axis)."""

    jacobian: np.ndarray
    det: np.ndarray
    inv_transpose: np.ndarray

    @classmethod
    def from_vertices(cls, xyz: np.ndarray) -> "ElementGeometry":
        xyz = np.asarray(xyz, dtype=float)
        jac = np.swapaxes(xyz[..., 1:, :] - xyz[..., :1, :], -1, -2)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise ValueError("degenerate or inverted tetrahedron")
        return cls(jacobian=jac, det=det, inv_transpose=np.swapaxes(np.linalg.inv(jac), -1, -2))

    @property
    def volume(self):
        return self.det / 6.0

    def map(self, ref_points: np.ndarray, x0: np.ndarray) -> np.ndarray:
        return x0[..., None, :] + np.einsum("...ab,qb->...qa", self.jacobian, ref_points)


# ---------------------------------------------------------------------------
# Reference tensors; physical local matrices are contractions with J^{-1}.


@functools.lru_cache(maxsize=None)
def reference_tensors(order: int, degree: int, trial_order: int | None = None) -> dict:
    """Reference integrals for one order (and a coupled scalar order).

    mass[i, j]          = int phi_i phi_j
    stiff[i, j, a, b]   = int d_a phi_i d_b phi_j
    coupling[i, j, a]   = int phi_i d_a psi_j   (psi of ``trial_order``)
    """
    quad = quadrature(degree)
    w = quad.weights
    basis = nodal_basis(order)
    val = basis.values(quad.points)
    grad = basis.gradients(quad.points)
    out = {
        "mass": np.einsum("q,qi,qj->ij", w, val, val),
        "stiff": np.einsum("q,qia,qjb->ijab", w, grad, grad),
    }
    if trial_order is not None:
        tgrad = nodal_basis(trial_order).gradients(quad.points)
        out["coupling"] = np.einsum("q,qi,qja->ija", w, val, tgrad)
    for arr in out.values():
        arr.flags.writeable = False
    return out


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _physical_stiff(geom: ElementGeometry, ref_stiff: np.ndarray) -> np.ndarray:
    """int d_a phi_i d_b phi_j on the physical element(s): (..., i, j, a, b)."""
    jinv = np.swapaxes(geom.inv_transpose, -1, -2)  # J^{-1}, (..., a', a)
    return np.einsum("...,...pa,...qb,ijpq->...ijab", geom.det, jinv, jinv, ref_stiff)


def local_scalar_stiffness(geom: ElementGeometry, basis: NodalBasis, degree: int | None = None) -> np.ndarray:
    degree = degree or 2 * basis.order
    ref = reference_tensors(basis.order, degree)["stiff"]
    # trace over a == b only needs C = J^{-1} J^{-T}
    jinv = np.swapaxes(geom.inv_transpose, -1, -2)
    metric = np.einsum("...pa,...qa->...pq", jinv, jinv)
    return _sym(np.einsum("...,...pq,ijpq->...ij", geom.det, metric, ref))


def local_vector_mass(geom: ElementGeometry, basis: NodalBasis, degree: int | None = None) -> np.ndarray:
    degree = degree or 2 * basis.order
    ref = reference_tensors(basis.order, degree)["mass"]
    scalar = geom.det[..., None, None] * ref
    n = basis.ndof
    out = np.zeros(scalar.shape[:-2] + (n, 3, n, 3))
    for c in range(3):
        out[..., :, c, :, c] = scalar
    return _sym(out.reshape(scalar.shape[:-2] + (3 * n, 3 * n)))


def local_curl_curl(geom: ElementGeometry, basis: NodalBasis, degree: int | None = None) -> np.ndarray:
    """((i,c),(j,d)) -> int curl(phi_i e_c) . curl(phi_j e_d).

    Uses curl(phi e_c) = grad(phi) x e_c, so the entry is
    ``delta_cd * int grad phi_i . grad phi_j - int d_d phi_i d_c phi_j``.
    """
    degree = degree or 2 * basis.order
    d = _physical_stiff(geom, reference_tensors(basis.order, degree)["stiff"])
    lap = np.einsum("...ijaa->...ij", d)
    n = basis.ndof
    eye = np.eye(3)
    out = np.einsum("...ij,cd->...icjd", lap, eye) - np.einsum("...ijdc->...icjd", d)
    return _sym(out.reshape(out.shape[:-4] + (3 * n, 3 * n)))


def local_grad_coupling(
    geom: ElementGeometry, basis_r: NodalBasis, basis_r1: NodalBasis, degree: int | None = None
) -> np.ndarray:
    """((i,c), j) -> int phi_i d_c psi_j, shape ``(..., 3 ndof_r, ndof_{r+1})``."""
    degree = degree or 2 * basis_r1.order
    ref = reference_tensors(basis_r.order, degree, basis_r1.order)["coupling"]
    jinv = np.swapaxes(geom.inv_transpose, -1, -2)
    out = np.einsum("...,...ac,ija->...icj", geom.det, jinv, ref)
    return out.reshape(out.shape[:-3] + (3 * basis_r.ndof, basis_r1.ndof))


def local_scalar_mass(geom: ElementGeometry, basis: NodalBasis, degree: int | None = None) -> np.ndarray:
    degree = degree or 2 * basis.order
    ref = reference_tensors(basis.order, degree)["mass"]
    return geom.det[..., None, None] * ref
