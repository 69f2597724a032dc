"""Global numbering of the scalar space (order r+1, zero trace) and the
vector space (order r, zero tangential trace or fully clamped)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .elements import barycentric_lattice
from .mesh import NodeClass, TetMesh, classify_lattice_points, node_lattice

SUPPORTED_ORDERS = (1, 2)


class BoundaryMode(enum.Enum):
    TANGENTIAL_ZERO = "tangential"  # v x n = 0
    FULL_ZERO = "full"  # v = 0, the H^1_0 comparison space

    @classmethod
    def parse(cls, name) -> "BoundaryMode":
        if isinstance(name, cls):
            return name
        for mode in cls:
            if mode.value == str(name).lower():
                return mode
        raise ValueError(f"unknown boundary mode {name!r}")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class NodalSpace:
    """Unique Lagrange nodes of one order plus the element -> node map."""

    order: int
    points: np.ndarray  # integer lattice positions, units 1/(n*order)
    classes: np.ndarray
    cell_nodes: np.ndarray  # (ntets, nloc)
    resolution: int  # n * order

    @property
    def coordinates(self) -> np.ndarray:
        return self.points / float(self.resolution)

    @property
    def num_nodes(self) -> int:
        return len(self.points)


def nodal_space(mesh: TetMesh, order: int) -> NodalSpace:
    pts = node_lattice(mesh, order, barycentric_lattice(order))
    uniq, inverse = np.unique(pts.reshape(-1, 3), axis=0, return_inverse=True)
    classes = classify_lattice_points(mesh.domain, mesh.n * order, uniq)
    return NodalSpace(
        order=order,
        points=uniq,
        classes=classes,
        cell_nodes=inverse.reshape(pts.shape[:2]).astype(np.int64),
        resolution=mesh.n * order,
    )


def vector_free_mask(classes: np.ndarray, mode: BoundaryMode) -> np.ndarray:
    """(nnodes, 3) boolean: which components of each node are unknowns."""
    free = np.zeros((len(classes), 3), dtype=bool)
    free[classes == NodeClass.INTERIOR] = True
    if mode is BoundaryMode.TANGENTIAL_ZERO:
        for axis in range(3):
            free[classes == NodeClass.FACE_X + axis, axis] = True
    return free


def _enumerate(mask: np.ndarray) -> np.ndarray:
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    return index


@dataclass(frozen=True)
class DofLayout:
    r: int
    mode: BoundaryMode
    scalar: NodalSpace  # order r + 1
    vector: NodalSpace  # order r
    scalar_index: np.ndarray  # (nnodes_s,), -1 if constrained
    vector_index: np.ndarray  # (nnodes_v, 3), -1 if constrained

    @property
    def scalar_order(self) -> int:
        return self.r + 1

    @property
    def vector_order(self) -> int:
        return self.r

    @property
    def n_p(self) -> int:
        return int((self.scalar_index >= 0).sum())

    @property
    def n_u(self) -> int:
        return int((self.vector_index >= 0).sum())

    @property
    def total_nodes_dofs(self) -> int:
        """Unknown count before boundary elimination (3 per vector node + 1 per scalar node)."""
        return 3 * self.vector.num_nodes + self.scalar.num_nodes

    @property
    def cell_scalar_dofs(self) -> np.ndarray:
        return self.scalar_index[self.scalar.cell_nodes]

    @property
    def cell_vector_dofs(self) -> np.ndarray:
        """(ntets, 3 * nloc) global vector indices, node-major; -1 = constrained."""
        idx = self.vector_index[self.vector.cell_nodes]  # (E, nloc, 3)
        return idx.reshape(idx.shape[0], -1)


def build_layout(mesh: TetMesh, r: int, mode: BoundaryMode | str = BoundaryMode.TANGENTIAL_ZERO) -> DofLayout:
    if r not in SUPPORTED_ORDERS:
        raise ValueError(f"vector order r must be one of {SUPPORTED_ORDERS}, got {r}")
    mode = BoundaryMode.parse(mode)
    scalar = nodal_space(mesh, r + 1)
    vector = nodal_space(mesh, r)
    scalar_index = _enumerate(scalar.classes == NodeClass.INTERIOR)
    vector_index = _enumerate(vector_free_mask(vector.classes, mode))
    layout = DofLayout(
        r=r, mode=mode, scalar=scalar, vector=vector,
        scalar_index=scalar_index, vector_index=vector_index,
    )
    if layout.n_u == 0 or layout.n_p == 0:
        raise LayoutError(
            f"{mesh.domain.value} n={mesh.n}, r={r}, {mode.value}: "
            f"n_u={layout.n_u}, n_p={layout.n_p}; mesh too coarse for this space pair"
        )
    return layout


def interpolate_vector(layout: DofLayout, mesh: TetMesh, field) -> np.ndarray:
    """Nodal interpolant coefficients of ``field``; constrained entries dropped.

    ``field`` maps an ``(npts, 3)`` coordinate array to ``(npts, 3)`` values.
    """
    values = np.asarray(field(layout.vector.coordinates), dtype=float).reshape(-1, 3)
    out = np.zeros(layout.n_u)
    free = layout.vector_index >= 0
    out[layout.vector_index[free]] = values[free]
    return out


def interpolate_scalar(layout: DofLayout, mesh: TetMesh, func) -> np.ndarray:
    values = np.asarray(func(layout.scalar.coordinates), dtype=float).reshape(-1)
    out = np.zeros(layout.n_p)
    free = layout.scalar_index >= 0
    out[layout.scalar_index[free]] = values[free]
    return out


def expand_vector(layout: DofLayout, u: np.ndarray) -> np.ndarray:
    """Free coefficients -> full (nnodes_v, 3) nodal values (zeros where constrained)."""
    full = np.zeros(layout.vector_index.shape)
    free = layout.vector_index >= 0
    full[free] = u[layout.vector_index[free]]
    return full


def expand_scalar(layout: DofLayout, p: np.ndarray) -> np.ndarray:
    full = np.zeros(layout.scalar.num_nodes)
    free = layout.scalar_index >= 0
    full[free] = p[layout.scalar_index[free]]
    return full


def dof_coordinates(layout: DofLayout) -> np.ndarray:
    """Coordinates of the pencil unknowns: vector dofs first, then scalar."""
    vfree = layout.vector_index >= 0
    vc = np.zeros((layout.n_u, 3))
    node_of = np.broadcast_to(np.arange(layout.vector.num_nodes)[:, None], vfree.shape)
    vc[layout.vector_index[vfree]] = layout.vector.coordinates[node_of[vfree]]
    sfree = layout.scalar_index >= 0
    sc = np.zeros((layout.n_p, 3))
    sc[layout.scalar_index[sfree]] = layout.scalar.coordinates[sfree]
    return np.vstack([vc, sc])
