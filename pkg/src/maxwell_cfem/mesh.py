"""Structured Kuhn tetrahedral meshes of the three benchmark polyhedra.

All domains are unions of axis-aligned unit boxes with integer corners, so
vertices and higher-order Lagrange nodes live on an integer lattice.  Every
boundary query works on those integer indices.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np


class DomainKind(enum.Enum):
    UNIT_CUBE = "cube"
    THICK_L = "thick-l"
    FICHERA = "fichera"

    @classmethod
    def parse(cls, name: str | "DomainKind") -> "DomainKind":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        aliases = {"unitcube": "cube", "unit-cube": "cube", "thickl": "thick-l", "l": "thick-l"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown domain {name!r}")

    @property
    def boxes(self) -> tuple[tuple[int, int, int], ...]:
        """Lower corners of the unit boxes making up the domain."""
        if self is DomainKind.UNIT_CUBE:
            return ((0, 0, 0),)
        if self is DomainKind.THICK_L:
            return ((-1, -1, 0), (0, -1, 0), (-1, 0, 0))
        return tuple(
            c for c in itertools.product((-1, 0), repeat=3) if c != (0, 0, 0)
        )

    @property
    def volume(self) -> float:
        return float(len(self.boxes))


# Kuhn (Freudenthal) split of the unit cube along the (0,0,0)->(1,1,1) diagonal.
# One tet per axis permutation: 0 -> e_a -> e_a + e_b -> (1,1,1).
def _kuhn_tets() -> np.ndarray:
    tets = []
    for perm in itertools.permutations(range(3)):
        p = np.zeros(3, dtype=np.int64)
        verts = [p.copy()]
        for axis in perm:
            p[axis] = 1
            verts.append(p.copy())
        verts = np.array(verts)
        if np.linalg.det((verts[1:] - verts[0]).astype(float)) < 0:
            verts[[2, 3]] = verts[[3, 2]]
        tets.append(verts)
    return np.array(tets)  # (6, 4, 3)


KUHN_TETS = _kuhn_tets()


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    FACE_X = 1
    FACE_Y = 2
    FACE_Z = 3
    EDGE_OR_CORNER = 4

    @property
    def face_axis(self) -> int | None:
        if NodeClass.FACE_X <= self <= NodeClass.FACE_Z:
            return int(self) - 1
        return None


@dataclass(frozen=True)
class TetMesh:
    """Structured tetrahedral mesh.

    ``lattice_index`` holds vertex positions in units of ``1/n``;
    ``vertices`` is exactly ``lattice_index / n``.
    """

    domain: DomainKind
    n: int
    lattice_index: np.ndarray
    tets: np.ndarray
    vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", self.lattice_index / float(self.n))
        for arr in (self.lattice_index, self.tets, self.vertices):
            arr.flags.writeable = False

    @property
    def h(self) -> float:
        """Cells per unit edge is ``n``; the mesh size h is 1/n."""
        return 1.0 / self.n

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    @property
    def num_vertices(self) -> int:
        return len(self.lattice_index)

    def signed_volumes(self) -> np.ndarray:
        x = self.vertices[self.tets]
        return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0


def generate(domain: DomainKind | str, n: int) -> TetMesh:
    """Kuhn-split every one of the ``n**3`` sub-cubes of each unit box."""
    domain = DomainKind.parse(domain)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision n must be a positive integer, got {n!r}")
    n = int(n)

    r = np.arange(n)
    cell = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    corners = np.concatenate([cell + n * np.array(b) for b in domain.boxes])
    # (ncells, 6, 4, 3) integer vertex positions
    tet_lattice = corners[:, None, None, :] + KUHN_TETS[None]
    flat = tet_lattice.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    tets = inverse.reshape(-1, 4).astype(np.int64)
    return TetMesh(domain=domain, n=n, lattice_index=uniq.astype(np.int64), tets=tets)


def refine(mesh: TetMesh) -> TetMesh:
    return generate(mesh.domain, 2 * mesh.n)


def node_lattice(mesh: TetMesh, order: int, local_multi_index: np.ndarray) -> np.ndarray:
    """Integer positions (units ``1/(n*order)``) of every local Lagrange node.

    ``local_multi_index`` is the ``(nloc, 4)`` barycentric lattice of the
    element; returns ``(ntets, nloc, 3)``.
    """
    v = mesh.lattice_index[mesh.tets]  # (E, 4, 3)
    return np.einsum("la,ead->eld", local_multi_index, v)


def classify_lattice_points(domain: DomainKind, resolution: int, points: np.ndarray) -> np.ndarray:
    """Classify integer points on the lattice of spacing ``1/resolution``.

    Each point is surrounded by 8 octant cells; which of them lie inside
    the domain decides the class.  A half-space pattern along axis ``a`` is
    ``Face(a)``; anything short of all eight is an edge or corner.
    """
    points = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    boxes = np.array(domain.boxes, dtype=np.int64)
    signs = np.array(list(itertools.product((-1, 1), repeat=3)), dtype=np.int64)  # (8, 3)

    # box containing the octant sample point (2p + s) / (2 resolution)
    probe = 2 * points[:, None, :] + signs[None]
    box_of = np.floor_divide(probe, 2 * resolution)  # (P, 8, 3)
    inside = (box_of[:, :, None, :] == boxes[None, None]).all(-1).any(-1)  # (P, 8)

    if not inside.any(axis=1).all():
        raise ValueError("lattice point outside the closed domain")

    cls = np.full(len(points), int(NodeClass.EDGE_OR_CORNER), dtype=np.int8)
    cls[inside.all(axis=1)] = int(NodeClass.INTERIOR)
    for axis in range(3):
        plus = signs[:, axis] > 0
        half_plus = (inside == plus[None]).all(axis=1)
        half_minus = (inside == ~plus[None]).all(axis=1)
        cls[half_plus | half_minus] = int(NodeClass.FACE_X) + axis
    return cls


SUPPORTED_NODAL_ORDERS = (1, 2, 3)


def classify_nodes(mesh: TetMesh, nodal_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Unique Lagrange nodes of the given order and their classes.

    Returns ``(points, classes)`` where ``points`` are integer positions in
    units of ``1/(n*nodal_order)``, sorted lexicographically.
    """
    if nodal_order not in SUPPORTED_NODAL_ORDERS:
        raise ValueError(f"unsupported nodal order {nodal_order}")
    from .elements import barycentric_lattice

    pts = node_lattice(mesh, nodal_order, barycentric_lattice(nodal_order))
    uniq = np.unique(pts.reshape(-1, 3), axis=0)
    return uniq, classify_lattice_points(mesh.domain, mesh.n * nodal_order, uniq)


def interior_faces_ok(mesh: TetMesh) -> bool:
    """True when every face is shared by at most two tets and boundary faces
    lie on the domain boundary."""
    faces = np.sort(mesh.tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]], axis=-1).reshape(-1, 3)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    if counts.max() > 2:
        return False
    # a boundary face's centroid must be a boundary point; test on the 3n lattice
    bnd = uniq[counts == 1]
    centroid3 = mesh.lattice_index[bnd].sum(axis=1)
    cls = classify_lattice_points(mesh.domain, 3 * mesh.n, centroid3)
    return bool((cls != NodeClass.INTERIOR).all())


def write_vtk(mesh: TetMesh, path, point_data: dict | None = None, cell_data: dict | None = None) -> None:
    """Legacy ASCII VTK unstructured grid (cell type 10)."""
    pts = mesh.vertices
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{mesh.domain.value} n={mesh.n}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        fh.write(f"CELLS {mesh.num_tets} {5 * mesh.num_tets}\n")
        np.savetxt(fh, np.column_stack([np.full(mesh.num_tets, 4), mesh.tets]), fmt="%d")
        fh.write(f"CELL_TYPES {mesh.num_tets}\n")
        np.savetxt(fh, np.full(mesh.num_tets, 10), fmt="%d")
        for header, count, data in (("POINT_DATA", len(pts), point_data), ("CELL_DATA", mesh.num_tets, cell_data)):
            if not data:
                continue
            fh.write(f"{header} {count}\n")
            for name, values in data.items():
                values = np.asarray(values, dtype=float)
                if values.ndim == 2 and values.shape[1] == 3:
                    fh.write(f"VECTORS {name} double\n")
                else:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, values, fmt="%.17g")
