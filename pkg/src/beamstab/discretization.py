"""Galerkin semi-discretization of the coupled boundary-damped system.

Weak form on the subspace vanishing on Gamma0:

  (u'', phi) + mu(t) ((u, phi)) + mu(t) int_G1 (m.nu) p1(u') phi
            + alpha1 (sum_i dv/dx_i, phi) = 0
  (v'', psi) + ((v, psi)) + int_G1 (m.nu) p2(v') psi + int_G1 sigma u psi
            - alpha2 (sum_i du/dx_i, psi) = 0

The boundary nonlinearity is collocated at the Gamma1 quadrature points of
the velocity trace, which preserves the sign structure
(m.nu) p(s) s >= b (m.nu) s^2 exactly at quadrature level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _fem
from .errors import InvalidArgumentError
from .geometry import GAMMA1

log = logging.getLogger(__name__)


@dataclass
class SemiDiscreteSystem:
    """Assembled operators over all nodes plus the free-dof bookkeeping.

    Treat as immutable after assembly; all fields are plain data safe to
    share between runs.
    """

    mesh: object
    partition: object
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    coupling: sp.csr_matrix      # C[k, j] = (sum_i d phi_j / dx_i, phi_k)
    multiplier: sp.csr_matrix    # X[k, j] = (phi_k, m . grad phi_j)
    boundary_sum_nu: sp.csr_matrix  # int_Gamma (sum_i nu_i) phi_j phi_k
    trace: sp.csr_matrix         # Gamma1 quadrature-point traces
    trace_weights: np.ndarray
    trace_m_dot_nu: np.ndarray
    trace_points: np.ndarray
    sigma_values: np.ndarray     # per Gamma1 quadrature point
    sigma_op: sp.csr_matrix
    alpha1: float
    alpha2: float
    schedule: object
    law1: object
    law2: object
    free: np.ndarray             # unconstrained node indices
    fixed: np.ndarray

    def __post_init__(self):
        self._mass_ff_lu = splu(self.mass[np.ix_(self.free, self.free)].tocsc())

    @property
    def n_nodes(self):
        return len(self.mesh.nodes)

    @property
    def alpha_ratio(self):
        """alpha1/alpha2 energy weight; 0 for the fully decoupled case."""
        return self.alpha1 / self.alpha2 if self.alpha2 != 0.0 else 0.0

    def solve_mass(self, load_full):
        """Solve mass * a = load on the free dofs, scatter to a full vector."""
        a = np.zeros(self.n_nodes)
        a[self.free] = self._mass_ff_lu.solve(load_full[self.free])
        return a

    def boundary_load(self, law, velocity_full, extra_weight=1.0):
        """trace' * diag(w * m.nu) p(trace velocity); a full load vector."""
        s = self.trace @ velocity_full
        return extra_weight * (self.trace.T @ (self.trace_weights * self.trace_m_dot_nu * law(s)))

    def boundary_quadratic(self, velocity_full):
        """sum_q w_q (m.nu)_q s_q^2 over the Gamma1 quadrature points."""
        s = self.trace @ velocity_full
        return float(np.sum(self.trace_weights * self.trace_m_dot_nu * s * s))

    def boundary_dissipation_raw(self, law, velocity_full):
        """sum_q w_q (m.nu)_q p(s_q) s_q (no mu or alpha weights)."""
        s = self.trace @ velocity_full
        return float(np.sum(self.trace_weights * self.trace_m_dot_nu * np.asarray(law(s)) * s))


@dataclass
class SimState:
    """Nodal state (full-length vectors; Gamma0 entries are pinned to 0)."""

    t: float
    u: np.ndarray
    v: np.ndarray
    du: np.ndarray
    dv: np.ndarray

    def copy(self):
        return SimState(self.t, self.u.copy(), self.v.copy(), self.du.copy(), self.dv.copy())


def assemble(mesh, partition, alpha1, alpha2, schedule, law1, law2, sigma=None):
    """Build every operator of the semi-discrete system.

    sigma: per-Gamma1-quadrature-point values; None selects the canonical
    alpha2 * (sum of normal components).
    """
    mats = _fem.domain_matrices(mesh, x0=partition.x0)
    g1 = partition.gamma1_faces
    if not g1:
        raise InvalidArgumentError("partition has no feedback boundary")
    T, w, pts, face_index = _fem.trace_structure(mesh, g1)

    mn = []
    for f, tag, vals in zip(mesh.faces, partition.tags, partition.m_dot_nu):
        if tag == GAMMA1:
            mn.append(vals)
    mn = np.concatenate(mn)

    if sigma is None:
        sigma_vals = np.concatenate(
            [np.full(len(f.quad_weights), alpha2 * float(f.normal.sum())) for f in g1])
    else:
        sigma_vals = np.broadcast_to(np.asarray(sigma, dtype=float), (len(w),)).copy()
    sigma_op = (T.T @ sp.diags(w * sigma_vals) @ T).tocsr()

    sum_nu = np.array([float(f.normal.sum()) for f in mesh.faces])
    bsn = _fem.boundary_mass(mesh, mesh.faces, density=sum_nu)

    fixed = partition.gamma0_nodes()
    free = np.setdiff1d(np.arange(len(mesh.nodes)), fixed)

    return SemiDiscreteSystem(
        mesh=mesh, partition=partition,
        mass=mats["mass"], stiffness=mats["stiffness"], coupling=mats["coupling"],
        multiplier=mats["multiplier"], boundary_sum_nu=bsn,
        trace=T, trace_weights=w, trace_m_dot_nu=mn, trace_points=pts,
        sigma_values=sigma_vals, sigma_op=sigma_op,
        alpha1=float(alpha1), alpha2=float(alpha2),
        schedule=schedule, law1=law1, law2=law2,
        free=free, fixed=fixed,
    )


def interpolate(system, fld):
    """Nodal interpolation of an analytic field, zeroed on Gamma0."""
    vals = np.asarray(fld.value(system.mesh.nodes), dtype=float)
    out = vals.copy()
    out[system.fixed] = 0.0
    return out


def compatibility_residuals(system, u0, v0, u1, v1):
    """Residuals of the initial normal-derivative relations on Gamma1.

    r_u(q) = du0/dnu + (m.nu) p1(u1),  r_v(q) = dv0/dnu + (m.nu) p2(v1) + sigma u0
    evaluated at every Gamma1 quadrature point from the analytic fields.
    """
    pts = system.trace_points
    normals = []
    for f in system.partition.gamma1_faces:
        normals.append(np.repeat(f.normal[None, :], len(f.quad_weights), axis=0))
    normals = np.concatenate(normals, axis=0)
    mn = system.trace_m_dot_nu

    def normal_derivative(fld):
        if fld.grad is None:
            raise InvalidArgumentError(f"field '{fld.name}' has no gradient callable")
        return np.einsum("qd,qd->q", np.asarray(fld.grad(pts), dtype=float), normals)

    r_u = normal_derivative(u0) + mn * np.asarray(system.law1(np.asarray(u1.value(pts))))
    r_v = (normal_derivative(v0) + mn * np.asarray(system.law2(np.asarray(v1.value(pts))))
           + system.sigma_values * np.asarray(u0.value(pts)))
    return r_u, r_v


def project_initial_data(system, u0, v0, u1, v1):
    """Interpolate the four analytic fields and report compatibility residuals.

    Nodal interpolation puts the discrete data in the discrete space by
    construction; the residuals quantify how far the data are from the
    initial normal-derivative relations.  Nonzero residuals are logged,
    never raised.
    """
    state = SimState(
        0.0,
        interpolate(system, u0), interpolate(system, v0),
        interpolate(system, u1), interpolate(system, v1),
    )
    r_u, r_v = compatibility_residuals(system, u0, v0, u1, v1)
    norm = float(np.sqrt(np.sum(system.trace_weights * (r_u ** 2 + r_v ** 2))))
    if norm > 1e-10:
        log.warning("initial data violate the compatibility relations "
                    "(weighted residual norm %.3e); run proceeds", norm)
    return state, {"residual_u": r_u, "residual_v": r_v, "norm": norm}


def rhs(system, state, t=None):
    """Accelerations (d2u, d2v) of the semi-discrete system at the given state."""
    t = state.t if t is None else t
    mu = float(system.schedule.mu(t))
    a1, a2 = system.alpha1, system.alpha2
    load_u = -(mu * (system.stiffness @ state.u)
               + a1 * (system.coupling @ state.v)
               + mu * system.boundary_load(system.law1, state.du))
    load_v = -((system.stiffness @ state.v)
               - a2 * (system.coupling @ state.u)
               + system.boundary_load(system.law2, state.dv)
               + system.sigma_op @ state.u)
    return system.solve_mass(load_u), system.solve_mass(load_v)


def export_operator(matrix, path):
    """Coordinate-format text dump (row, col, value), row-major order."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# coo {matrix.shape[0]} {matrix.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
