"""Meshes, boundary classification and the geometric/embedding constants.

The boundary is split into a clamped part Gamma0 and a feedback part Gamma1
by the sign of m(x).nu(x) with m(x) = x - x0.  The constants computed here
(R, tau0, Poincare constant M, trace constant N) feed the admissibility
check of the certified decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from . import _fem
from .errors import InadmissiblePartitionError, InvalidArgumentError, NumericalFailureError

GAMMA0 = "Gamma0"
GAMMA1 = "Gamma1"

EIGEN_RESIDUAL_TOL = 1e-10
EIGEN_MAX_ITER = 100_000


@dataclass(frozen=True)
class BoundaryFace:
    face_id: int
    nodes: tuple
    normal: np.ndarray
    centroid: np.ndarray
    measure: float
    quad_points: np.ndarray   # (q, dim)
    quad_weights: np.ndarray  # (q,)


@dataclass(frozen=True)
class Mesh:
    """Discretized domain: nodes, elements and boundary faces.

    1D: elements are index pairs; boundary faces are the two endpoints.
    2D: axis-aligned bilinear rectangles; boundary faces are edges.
    """

    dimension: int
    nodes: np.ndarray     # (N, dim)
    elements: np.ndarray  # (E, 2) or (E, 4)
    faces: tuple

    def __post_init__(self):
        for f in self.faces:
            if abs(np.linalg.norm(f.normal) - 1.0) > 1e-12:
                raise InvalidArgumentError(f"face {f.face_id} normal is not unit")
        corners = self.nodes[self.elements]
        vol = np.prod(corners.max(axis=1) - corners.min(axis=1), axis=1)
        if np.any(vol <= 0):
            raise InvalidArgumentError("mesh has non-positive element volumes")
        keys = {tuple(sorted(f.nodes)) for f in self.faces}
        if len(keys) != len(self.faces):
            raise InvalidArgumentError("boundary faces do not tile the boundary exactly once")

    @property
    def boundary_measure(self):
        return sum(f.measure for f in self.faces)


@dataclass(frozen=True)
class BoundaryPartition:
    """Per-face Gamma0/Gamma1 tags and cached m.nu values."""

    mesh: Mesh
    x0: np.ndarray
    tags: tuple                 # per face, GAMMA0 or GAMMA1
    m_dot_nu: tuple             # per face, array over its quadrature points
    m_dot_nu_centroid: np.ndarray

    def faces_with_tag(self, tag):
        return [f for f, t in zip(self.mesh.faces, self.tags) if t == tag]

    @property
    def gamma0_faces(self):
        return self.faces_with_tag(GAMMA0)

    @property
    def gamma1_faces(self):
        return self.faces_with_tag(GAMMA1)

    def gamma0_nodes(self):
        ids = sorted({i for f in self.gamma0_faces for i in f.nodes})
        return np.asarray(ids, dtype=int)

    def sum_nu_bound(self):
        """max over Gamma1 quadrature points of |sum_i nu_i|."""
        return max(abs(float(f.normal.sum())) for f in self.gamma1_faces)


@dataclass(frozen=True)
class GeometricConstants:
    R: float
    tau0: float
    M: float
    N: float
    mu0: float

    def __post_init__(self):
        for name in ("R", "tau0", "M", "N", "mu0"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be positive")


def build_interval_mesh(length, node_count):
    """Uniform 1D mesh on [0, length] with nu = -1 at 0 and +1 at length."""
    if length <= 0:
        raise InvalidArgumentError("length must be positive")
    if node_count < 3:
        raise InvalidArgumentError("node_count must be at least 3")
    xs = np.linspace(0.0, float(length), node_count)[:, None]
    elems = np.stack([np.arange(node_count - 1), np.arange(1, node_count)], axis=1)
    faces = []
    for fid, (node, nrm) in enumerate(((0, -1.0), (node_count - 1, 1.0))):
        p = xs[node]
        faces.append(
            BoundaryFace(
                face_id=fid,
                nodes=(node,),
                normal=np.array([nrm]),
                centroid=p.copy(),
                measure=1.0,
                quad_points=p[None, :].copy(),
                quad_weights=np.array([1.0]),
            )
        )
    return Mesh(1, xs, elems, tuple(faces))


def build_rect_mesh(lx, ly, nx, ny):
    """Structured bilinear grid on [0, lx] x [0, ly] with nx x ny cells."""
    if lx <= 0 or ly <= 0:
        raise InvalidArgumentError("side lengths must be positive")
    if nx < 2 or ny < 2:
        raise InvalidArgumentError("cell counts must be at least 2")
    xs = np.linspace(0.0, float(lx), nx + 1)
    ys = np.linspace(0.0, float(ly), ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return i * (ny + 1) + j

    elems = []
    for i in range(nx):
        for j in range(ny):
            elems.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    elems = np.asarray(elems, dtype=int)

    g, gw = _fem.gauss_rule(2)
    faces = []
    fid = 0

    def add_edge(a, b, normal):
        nonlocal fid
        pa, pb = nodes[a], nodes[b]
        h = float(np.linalg.norm(pb - pa))
        qp = pa[None, :] + g[:, None] * (pb - pa)[None, :]
        faces.append(
            BoundaryFace(
                face_id=fid,
                nodes=(a, b),
                normal=np.asarray(normal, dtype=float),
                centroid=0.5 * (pa + pb),
                measure=h,
                quad_points=qp,
                quad_weights=gw * h,
            )
        )
        fid += 1

    for i in range(nx):  # bottom, top
        add_edge(nid(i, 0), nid(i + 1, 0), (0.0, -1.0))
    for j in range(ny):  # right
        add_edge(nid(nx, j), nid(nx, j + 1), (1.0, 0.0))
    for i in range(nx):  # top
        add_edge(nid(i, ny), nid(i + 1, ny), (0.0, 1.0))
    for j in range(ny):  # left
        add_edge(nid(0, j), nid(0, j + 1), (-1.0, 0.0))
    return Mesh(2, nodes, elems, tuple(faces))


def translate(mesh, shift):
    """Shift the whole mesh by a constant vector."""
    shift = np.asarray(shift, dtype=float)
    faces = tuple(
        BoundaryFace(
            f.face_id, f.nodes, f.normal, f.centroid + shift, f.measure,
            f.quad_points + shift[None, :], f.quad_weights,
        )
        for f in mesh.faces
    )
    return Mesh(mesh.dimension, mesh.nodes + shift[None, :], mesh.elements, faces)


def classify_boundary(mesh, x0):
    """Tag every face Gamma0/Gamma1 by the sign of m.nu at its centroid.

    m.nu <= 0 goes to Gamma0.  Faces of the meshes built here carry a
    constant m.nu (axis-aligned geometry), so no face straddles the sign
    change.  Raises if either part ends up empty.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (mesh.dimension,) or not np.all(np.isfinite(x0)):
        raise InvalidArgumentError("x0 must be a finite point of the ambient space")
    tags, per_face, centroid_vals = [], [], []
    for f in mesh.faces:
        c = float(np.dot(f.centroid - x0, f.normal))
        tags.append(GAMMA1 if c > 0 else GAMMA0)
        per_face.append((f.quad_points - x0[None, :]) @ f.normal)
        centroid_vals.append(c)
    tags = tuple(tags)
    if GAMMA0 not in tags or GAMMA1 not in tags:
        raise InadmissiblePartitionError(
            "boundary partition needs both a clamped and a feedback part; "
            f"got only {tags[0]} for x0={x0.tolist()}"
        )
    return BoundaryPartition(mesh, x0, tags, tuple(per_face), np.asarray(centroid_vals))


def geometric_constants(mesh, partition):
    """R = max_nodes |x - x0|, tau0 = min over Gamma1 quad points of m.nu."""
    R = float(np.max(np.linalg.norm(mesh.nodes - partition.x0[None, :], axis=1)))
    g1 = [mn for mn, t in zip(partition.m_dot_nu, partition.tags) if t == GAMMA1]
    tau0 = float(min(np.min(v) for v in g1))
    return {"R": R, "tau0": tau0}


def _generalized_rayleigh(A, B, x):
    return float(x @ (A @ x)) / float(x @ (B @ x))


def _relative_residual(A, B, lam, x):
    # backward-error style: residual relative to the operator scales, which
    # keeps the criterion meaningful when A x itself is tiny
    num = np.linalg.norm(A @ x - lam * (B @ x))
    den = (abs(A).sum(axis=1).max() + abs(lam) * abs(B).sum(axis=1).max()) * np.linalg.norm(x)
    return num / den


def _inverse_iteration_smallest(A, B, tol=EIGEN_RESIDUAL_TOL, max_iter=EIGEN_MAX_ITER):
    """Smallest eigenvalue of A x = lam B x (A, B spd) by inverse iteration."""
    lu = splu(A.tocsc())
    x = np.ones(A.shape[0])
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = lu.solve(B @ x)
        y /= np.linalg.norm(y)
        lam = _generalized_rayleigh(A, B, y)
        x = y
        if _relative_residual(A, B, lam, x) <= tol:
            return lam, x
    raise NumericalFailureError("inverse iteration did not converge")


def _power_iteration_largest(A, B, tol=EIGEN_RESIDUAL_TOL, max_iter=EIGEN_MAX_ITER):
    """Largest eigenvalue of A x = mu B x (B spd, A psd) via B^-1 A powers."""
    lu = splu(B.tocsc())
    x = np.ones(B.shape[0])
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = lu.solve(A @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise NumericalFailureError("power iteration hit the null space")
        y /= ny
        mu = _generalized_rayleigh(A, B, y)
        x = y
        if _relative_residual(A, B, mu, x) <= tol:
            return mu, x
    raise NumericalFailureError("power iteration did not converge")


def embedding_constants(mesh, partition, tol=EIGEN_RESIDUAL_TOL, max_iter=EIGEN_MAX_ITER):
    """Discrete Poincare constant M and Gamma1 trace constant N.

    M = 1/sqrt(lambda_min) of the stiffness form against the domain mass
    form on the subspace vanishing on Gamma0; N = sqrt(mu_max) of the
    Gamma1 boundary mass form against the stiffness form.
    """
    mats = _fem.domain_matrices(mesh)
    fixed = partition.gamma0_nodes()
    free = np.setdiff1d(np.arange(len(mesh.nodes)), fixed)
    K = mats["stiffness"][np.ix_(free, free)].tocsr()
    Mm = mats["mass"][np.ix_(free, free)].tocsr()
    B = _fem.boundary_mass(mesh, partition.gamma1_faces)[np.ix_(free, free)].tocsr()
    lam, _ = _inverse_iteration_smallest(K, Mm, tol=tol, max_iter=max_iter)
    mu, _ = _power_iteration_largest(B, K, tol=tol, max_iter=max_iter)
    return {"M": 1.0 / math.sqrt(lam), "N": math.sqrt(mu)}


# ---------------------------------------------------------------------------
# plain-text mesh exchange and partition report

MESH_FORMAT_HEADER = "# beamstab mesh v1"


def save_mesh(mesh, path):
    """Plain-text listing: header, dim, nodes, elements, faces+normals."""
    with open(path, "w") as fh:
        fh.write(MESH_FORMAT_HEADER + "\n")
        fh.write(f"dim {mesh.dimension}\n")
        fh.write(f"nodes {len(mesh.nodes)}\n")
        for p in mesh.nodes:
            fh.write(" ".join(f"{c:.17g}" for c in p) + "\n")
        fh.write(f"elements {len(mesh.elements)} {mesh.elements.shape[1]}\n")
        for e in mesh.elements:
            fh.write(" ".join(str(i) for i in e) + "\n")
        fh.write(f"faces {len(mesh.faces)}\n")
        for f in mesh.faces:
            ids = " ".join(str(i) for i in f.nodes)
            nrm = " ".join(f"{c:.17g}" for c in f.normal)
            fh.write(f"{ids} | {nrm}\n")


def load_mesh(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MESH_FORMAT_HEADER:
        raise InvalidArgumentError(f"{path}: not a beamstab mesh file")
    k = 1
    dim = int(lines[k].split()[1]); k += 1
    nn = int(lines[k].split()[1]); k += 1
    nodes = np.array([[float(c) for c in lines[k + i].split()] for i in range(nn)])
    k += nn
    ne, nloc = (int(v) for v in lines[k].split()[1:]); k += 1
    elems = np.array([[int(c) for c in lines[k + i].split()] for i in range(ne)], dtype=int)
    k += ne
    nf = int(lines[k].split()[1]); k += 1
    g, gw = _fem.gauss_rule(2)
    faces = []
    for fid in range(nf):
        ids_part, nrm_part = lines[k + fid].split("|")
        ids = tuple(int(c) for c in ids_part.split())
        normal = np.array([float(c) for c in nrm_part.split()])
        if dim == 1:
            p = nodes[ids[0]]
            faces.append(BoundaryFace(fid, ids, normal, p.copy(), 1.0,
                                      p[None, :].copy(), np.array([1.0])))
        else:
            pa, pb = nodes[ids[0]], nodes[ids[1]]
            h = float(np.linalg.norm(pb - pa))
            qp = pa[None, :] + g[:, None] * (pb - pa)[None, :]
            faces.append(BoundaryFace(fid, ids, normal, 0.5 * (pa + pb), h, qp, gw * h))
    return Mesh(dim, nodes, elems, tuple(faces))


def partition_report_csv(partition, path):
    """CSV report: face id, centroid, m.nu at centroid, tag."""
    dim = partition.mesh.dimension
    cols = ["face_id"] + [f"centroid_{c}" for c in "xy"[:dim]] + ["m_dot_nu", "tag"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for f, tag, mn in zip(partition.mesh.faces, partition.tags, partition.m_dot_nu_centroid):
            cen = ",".join(f"{c:.17g}" for c in f.centroid)
            fh.write(f"{f.face_id},{cen},{mn:.17g},{tag}\n")
