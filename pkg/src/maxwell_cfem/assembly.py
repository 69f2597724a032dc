"""Global sparse blocks and the symmetric pencil (S, T).

With x = (u, p) and xi_h = u_h + grad p_h,

    x^T T x = ||xi_h||^2,        x^T S x = ||curl u_h||^2 + ||xi_h||^2,

and the discrete eigenproblem is T x = mu S x with mu = 1 / (lambda + 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from . import elements as el
from .mesh import TetMesh
from .spaces import DofLayout


class AssemblyError(RuntimeError):
    pass


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sps.csr_matrix:
    """Sum element matrices into CSR, dropping constrained (-1) rows/cols.

    COO entries are laid out element-ascending, local row-major; duplicate
    summation keeps that order, so repeated runs are bitwise identical.
    """
    E, nr, nc = local.shape
    R = np.broadcast_to(rows[:, :, None], (E, nr, nc)).ravel()
    C = np.broadcast_to(cols[:, None, :], (E, nr, nc)).ravel()
    V = local.ravel()
    keep = (R >= 0) & (C >= 0)
    mat = sps.coo_matrix((V[keep], (R[keep], C[keep])), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def symmetrize(mat: sps.spmatrix) -> sps.csr_matrix:
    # x + y == y + x in IEEE arithmetic, so the result is bitwise symmetric
    out = ((mat + mat.T) * 0.5).tocsr()
    out.sort_indices()
    return out


@dataclass(frozen=True)
class BlockSystem:
    A: sps.csr_matrix  # curl-curl, n_u x n_u
    Mv: sps.csr_matrix  # vector mass
    G: sps.csr_matrix  # (phi_i e_c, grad psi_j), n_u x n_p
    K: sps.csr_matrix  # scalar stiffness
    S: sps.csr_matrix
    T: sps.csr_matrix
    quad_degree: int

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.K.shape[0]

    @property
    def dim(self) -> int:
        return self.n_u + self.n_p

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.n_u], x[self.n_u:]


def element_geometry(mesh: TetMesh) -> el.ElementGeometry:
    return el.ElementGeometry.from_vertices(mesh.vertices[mesh.tets])


def local_matrices(mesh: TetMesh, layout: DofLayout, quad_degree: int) -> dict[str, np.ndarray]:
    """Batched local matrices of the four bilinear forms, one per element."""
    geom = element_geometry(mesh)
    vb = el.nodal_basis(layout.vector_order)
    sb = el.nodal_basis(layout.scalar_order)
    return {
        "A": el.local_curl_curl(geom, vb, quad_degree),
        "Mv": el.local_vector_mass(geom, vb, quad_degree),
        "G": el.local_grad_coupling(geom, vb, sb, quad_degree),
        "K": el.local_scalar_stiffness(geom, sb, quad_degree),
    }


def assemble(mesh: TetMesh, layout: DofLayout, quad_degree: int | None = None) -> BlockSystem:
    r = layout.r
    quad_degree = quad_degree or 2 * (r + 1)
    if quad_degree < 2 * (r + 1):
        raise ValueError(f"quadrature degree {quad_degree} < 2(r+1) = {2 * (r + 1)} under-integrates")
    if layout.vector.cell_nodes.shape[0] != mesh.num_tets:
        raise AssemblyError("layout was built on a different mesh")

    loc = local_matrices(mesh, layout, quad_degree)
    vd, sd = layout.cell_vector_dofs, layout.cell_scalar_dofs
    n_u, n_p = layout.n_u, layout.n_p

    A = symmetrize(_scatter(loc["A"], vd, vd, (n_u, n_u)))
    Mv = symmetrize(_scatter(loc["Mv"], vd, vd, (n_u, n_u)))
    K = symmetrize(_scatter(loc["K"], sd, sd, (n_p, n_p)))
    G = _scatter(loc["G"], vd, sd, (n_u, n_p))

    T = sps.bmat([[Mv, G], [G.T, K]], format="csr")
    S = sps.bmat([[A + Mv, G], [G.T, K]], format="csr")
    for m in (S, T):
        m.sort_indices()
    return BlockSystem(A=A, Mv=Mv, G=G, K=K, S=S, T=T, quad_degree=quad_degree)


def residual_constraint(block: BlockSystem, u: np.ndarray, p: np.ndarray, eps: float = 1e-300) -> float:
    """Relative size of G^T u + K p; zero iff u_h + grad p_h is orthogonal to
    every discrete gradient.

    Normalized by the magnitude of the summed terms, ``|G^T||u| + |K||p|``,
    so modes with G^T u = 0 and p = 0 give 0 rather than 0/0.
    """
    gu = block.G.T @ u
    kp = block.K @ p
    scale = np.linalg.norm(abs(block.G.T) @ np.abs(u)) + np.linalg.norm(abs(block.K) @ np.abs(p))
    return float(np.linalg.norm(gu + kp) / (scale + eps))


def mixed_residuals(block: BlockSystem, lam: float, u: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    """Relative residuals of both rows of the discrete mixed problem.

    Row 1: A u - lam (Mv u + G p); row 2: G^T u + K p.
    """
    au = block.A @ u
    rhs = block.Mv @ u + block.G @ p
    r1 = np.linalg.norm(au - lam * rhs) / max(np.linalg.norm(au) + abs(lam) * np.linalg.norm(rhs), 1e-300)
    return float(r1), residual_constraint(block, u, p)


def export_matrix_market(block: BlockSystem, directory, prefix: str = "") -> list:
    """Write S, T and the four blocks as Matrix Market coordinate files."""
    from pathlib import Path

    import scipy.io

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("S", "T", "A", "Mv", "G", "K"):
        mat = getattr(block, name)
        path = directory / f"{prefix}{name}.mtx"
        symmetry = "general" if name == "G" else "symmetric"
        scipy.io.mmwrite(str(path), mat, symmetry=symmetry, precision=17)
        written.append(path)
    return written


def read_matrix_market(path) -> sps.csr_matrix:
    import scipy.io

    return sps.csr_matrix(scipy.io.mmread(str(path)))
