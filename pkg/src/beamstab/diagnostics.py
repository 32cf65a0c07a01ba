"""Energy functionals, identity monitors and decay-rate fitting.

Everything here is a pure function of (system, state) or of a recorded
trace.  The trace recorder is the single observer the integrator installs;
it evaluates every functional at every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fem
from .admissibility import decay_envelope
from .discretization import rhs
from .errors import FitUndefinedError, InvalidArgumentError


def energy(system, state, t=None):
    """E = 1/2 [ |u'|^2 + (a1/a2)|v'|^2 + mu ||u||^2 + (a1/a2)||v||^2 ]."""
    t = state.t if t is None else t
    mu = float(system.schedule.mu(t))
    ratio = system.alpha_ratio
    Mm, K = system.mass, system.stiffness
    return 0.5 * (
        state.du @ (Mm @ state.du)
        + ratio * (state.dv @ (Mm @ state.dv))
        + mu * (state.u @ (K @ state.u))
        + ratio * (state.v @ (K @ state.v))
    )


def functional_F(system, state):
    """F = alpha1 (sum_i dv/dx_i, u)."""
    return system.alpha1 * float(state.u @ (system.coupling @ state.v))


def functional_G(system, state, x0=None):
    """G = (n-1)(u',u) + (n-1)(v',v) + 2(u', m.grad u) + 2(v', m.grad v)."""
    if x0 is None or np.allclose(x0, system.partition.x0):
        X = system.multiplier
    else:
        X = _fem.domain_matrices(system.mesh, x0=np.asarray(x0, dtype=float))["multiplier"]
    n = system.mesh.dimension
    Mm = system.mass
    first = (n - 1) * (state.du @ (Mm @ state.u) + state.dv @ (Mm @ state.v))
    second = 2.0 * (state.du @ (X @ state.u) + state.dv @ (X @ state.v))
    return float(first + second)


def lyapunov(system, state, eps):
    return energy(system, state) + functional_F(system, state) + eps * functional_G(system, state)


def f_bound_coefficient(alpha1, alpha2, n, M, mu0):
    """Coefficient in |F| <= 2 sqrt(alpha1 alpha2 n / mu0) M E."""
    return 2.0 * math.sqrt(alpha1 * alpha2 * n / mu0) * M


def sandwich_check(E, F, G, eps1, A, alpha1, alpha2, n, M, mu0):
    """Slacks of the energy-equivalence and functional bounds (all >= 0 ok)."""
    L = E + F + eps1 * G
    return {
        "slack_sandwich_lo": L - 0.5 * E,
        "slack_sandwich_hi": 1.5 * E - L,
        "slack_F": f_bound_coefficient(alpha1, alpha2, n, M, mu0) * E - abs(F),
        "slack_G": A * E - abs(G),
    }


def boundary_dissipation(system, state, t=None):
    """D_u = mu int_G1 (m.nu) p1(u')u', D_v = (a1/a2) int_G1 (m.nu) p2(v')v'."""
    t = state.t if t is None else t
    mu = float(system.schedule.mu(t))
    ratio = system.alpha_ratio
    return {
        "D_u": mu * system.boundary_dissipation_raw(system.law1, state.du),
        "D_v": ratio * system.boundary_dissipation_raw(system.law2, state.dv),
    }


def higher_energy(system, state, t=None):
    """E* = 1/2|u''|^2 + 1/2|v''|^2 + (mu/2)||u'||^2 + 1/2||v'||^2."""
    t = state.t if t is None else t
    mu = float(system.schedule.mu(t))
    d2u, d2v = rhs(system, state, t)
    Mm, K = system.mass, system.stiffness
    return 0.5 * (
        d2u @ (Mm @ d2u) + d2v @ (Mm @ d2v)
        + mu * (state.du @ (K @ state.du)) + state.dv @ (K @ state.dv)
    )


def _quadrature_norms(mesh, fld):
    """(L2 norm of laplacian, L2 norm of gradient) of an analytic field."""
    pts, w, _, _ = _fem.element_quadrature(mesh, npts=4)
    flat = pts.reshape(-1, mesh.dimension)
    lap = np.asarray(fld.laplacian(flat), dtype=float).reshape(w.shape)
    grd = np.asarray(fld.grad(flat), dtype=float).reshape(w.shape + (mesh.dimension,))
    lap_norm = math.sqrt(float(np.sum(w * lap ** 2)))
    grad_norm = math.sqrt(float(np.sum(w[..., None] * grd ** 2)))
    return lap_norm, grad_norm


def higher_energy_initial_bound(system, u0, v0, u1, v1):
    """Closed-form cap on the initial second-order energy from the data norms."""
    mesh = system.mesh
    n = mesh.dimension
    mu0v = system.schedule.mu_at_0
    lap_u0, _ = _quadrature_norms(mesh, u0)
    lap_v0, _ = _quadrature_norms(mesh, v0)
    _, grad_v0 = _quadrature_norms(mesh, v0)
    _, grad_u0 = _quadrature_norms(mesh, u0)
    _, grad_u1 = _quadrature_norms(mesh, u1)
    _, grad_v1 = _quadrature_norms(mesh, v1)
    a1 = mu0v * lap_u0 + abs(system.alpha1) * math.sqrt(n) * grad_v0
    a2 = mu0v * lap_v0 + abs(system.alpha2) * math.sqrt(n) * grad_u0
    a3 = 0.5 * a1 ** 2 + 0.5 * a2 ** 2 + 0.5 * mu0v * grad_u1 ** 2 + 0.5 * grad_v1 ** 2 + 1.0
    return {"a1": a1, "a2": a2, "bound": a3}


def rellich_check(mesh, fld, x0):
    """Multiplier identity on a manufactured field.

    The interior pairings use the mesh interpolant's gradient (exact
    elementwise quadrature); the boundary traces use the analytic gradient.
    Reports both the printed single-pairing form and the standard form with
    the factor 2, plus their defects; the defects vanish at second order
    under refinement when the identity holds.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = mesh.dimension
    nodal = np.asarray(fld.value(mesh.nodes), dtype=float)

    pts, w, _, grad = _fem.element_quadrature(mesh, npts=4)
    conn = mesh.elements
    uh_grad = np.einsum("eqjd,ej->eqd", grad, nodal[conn])  # (E, q, dim)
    m = pts - x0[None, None, :]
    flat = pts.reshape(-1, n)
    lap = np.asarray(fld.laplacian(flat), dtype=float).reshape(w.shape)
    pair = float(np.sum(w * lap * np.einsum("eqd,eqd->eq", m, uh_grad)))
    grad_sq = float(np.sum(w * np.einsum("eqd,eqd->eq", uh_grad, uh_grad)))

    bdry_mn_gradsq = 0.0
    bdry_flux = 0.0
    for f in mesh.faces:
        g = np.asarray(fld.grad(f.quad_points), dtype=float)
        mface = f.quad_points - x0[None, :]
        mn = mface @ f.normal
        dnu = g @ f.normal
        mgrad = np.einsum("qd,qd->q", mface, g)
        bdry_mn_gradsq += float(np.sum(f.quad_weights * mn * np.einsum("qd,qd->q", g, g)))
        bdry_flux += float(np.sum(f.quad_weights * dnu * mgrad))

    right = (n - 2) * grad_sq - bdry_mn_gradsq + 2.0 * bdry_flux
    return {
        "lhs_printed": pair,
        "lhs_standard": 2.0 * pair,
        "rhs": right,
        "mismatch_printed": pair - right,
        "mismatch_standard": 2.0 * pair - right,
    }


# ---------------------------------------------------------------------------
# trace recording

TRACE_COLUMNS = (
    "t", "E", "F", "G", "lyapunov", "D_u", "D_v", "E_star", "envelope",
    "slack_sandwich_lo", "slack_sandwich_hi", "slack_G", "slack_F",
)


@dataclass
class EnergyTrace:
    t: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    lyapunov: np.ndarray
    D_u: np.ndarray
    D_v: np.ndarray
    E_star: np.ndarray
    stiff_u: np.ndarray         # <u, K u> per sample
    mu_prime_term: np.ndarray   # mu'(t)/2 <u, K u>
    bdry_u_sq: np.ndarray       # int_G1 (m.nu)(u')^2
    bdry_v_sq: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.t) and np.any(np.diff(self.t) <= 0):
            raise InvalidArgumentError("trace times must be strictly increasing")
        if np.any(self.E < -1e-14):
            raise InvalidArgumentError("trace contains negative energy")

    def __len__(self):
        return len(self.t)

    @property
    def E0(self):
        return float(self.E[0])

    def envelope(self):
        eta = self.metadata.get("eta")
        if eta is None or not np.isfinite(eta):
            return np.full_like(self.t, np.nan)
        return decay_envelope(self.E0, eta, self.t)

    def slacks(self):
        md = self.metadata
        needed = ("eps1", "A", "alpha1", "alpha2", "n", "M", "mu0")
        if any(md.get(k) is None for k in needed):
            nanv = np.full_like(self.t, np.nan)
            return {k: nanv for k in
                    ("slack_sandwich_lo", "slack_sandwich_hi", "slack_G", "slack_F")}
        L = self.E + self.F + md["eps1"] * self.G
        coef = f_bound_coefficient(md["alpha1"], md["alpha2"], md["n"], md["M"], md["mu0"])
        return {
            "slack_sandwich_lo": L - 0.5 * self.E,
            "slack_sandwich_hi": 1.5 * self.E - L,
            "slack_G": md["A"] * self.E - np.abs(self.G),
            "slack_F": coef * self.E - np.abs(self.F),
        }

    def write_csv(self, path):
        env = self.envelope()
        sl = self.slacks()
        cols = [self.t, self.E, self.F, self.G, self.lyapunov, self.D_u, self.D_v,
                self.E_star, env, sl["slack_sandwich_lo"], sl["slack_sandwich_hi"],
                sl["slack_G"], sl["slack_F"]]
        with open(path, "w") as fh:
            h = self.metadata.get("config_hash")
            if h:
                fh.write(f"# config {h}\n")
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def write_svg(self, path):
        """Line plot of log10 E and log10 envelope against t."""
        width, height, pad = 720, 420, 50
        t = self.t
        env = self.envelope()
        floor = 1e-300
        series = [("E", np.log10(np.maximum(self.E, floor)), "#1f77b4")]
        if np.all(np.isfinite(env)):
            series.append(("envelope", np.log10(np.maximum(env, floor)), "#d62728"))
        ys = np.concatenate([s[1] for s in series])
        ymin, ymax = float(ys.min()), float(ys.max())
        if ymax - ymin < 1e-12:
            ymax = ymin + 1.0
        tmin, tmax = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

        def sx(x):
            return pad + (x - tmin) / (tmax - tmin) * (width - 2 * pad)

        def sy(y):
            return height - pad - (y - ymin) / (ymax - ymin) * (height - 2 * pad)

        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
                 f'<rect width="{width}" height="{height}" fill="white"/>',
                 f'<text x="{width // 2}" y="20" text-anchor="middle">log10 energy vs t</text>']
        for name, yv, color in series:
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, yv))
            parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
            parts.append(f'<text x="{width - pad}" y="{sy(yv[-1]):.2f}" fill="{color}" '
                         f'text-anchor="end">{name}</text>')
        parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")


class TraceRecorder:
    """Observer evaluating every diagnostic at each accepted step."""

    def __init__(self, system, certificate=None, metadata=None):
        self.system = system
        self._rows = []
        md = dict(metadata or {})
        if certificate is not None:
            md.setdefault("eta", certificate.eta)
            md.setdefault("eps1", certificate.eps1_max)
            md.setdefault("eps2", certificate.eps2_max)
            md.setdefault("A", certificate.A)
            md.setdefault("M", certificate.M)
            md.setdefault("mu0", certificate.mu0)
            md.setdefault("alpha1", certificate.alpha1)
            md.setdefault("alpha2", certificate.alpha2)
            md.setdefault("n", certificate.n)
        self.metadata = md

    def __call__(self, system, state):
        t = state.t
        E = energy(system, state)
        F = functional_F(system, state)
        G = functional_G(system, state)
        eps1 = self.metadata.get("eps1")
        lyap = E + F + eps1 * G if eps1 is not None else np.nan
        diss = boundary_dissipation(system, state)
        stiff_u = float(state.u @ (system.stiffness @ state.u))
        mupr = float(system.schedule.mu_prime(t)) / 2.0 * stiff_u
        self._rows.append((
            t, E, F, G, lyap, diss["D_u"], diss["D_v"],
            higher_energy(system, state), stiff_u, mupr,
            system.boundary_quadratic(state.du), system.boundary_quadratic(state.dv),
        ))

    def trace(self):
        arr = np.asarray(self._rows, dtype=float).reshape(len(self._rows), 12)
        return EnergyTrace(*(arr[:, i] for i in range(12)), metadata=dict(self.metadata))


# ---------------------------------------------------------------------------
# trace post-processing

def energy_balance_residuals(trace):
    """Per-interval defect of d(E+F)/dt = mu'/2||u||^2 - D_u - D_v.

    The right side is averaged between the two endpoint samples, so for the
    midpoint integrator the defect shrinks at first order or better.
    """
    if len(trace) < 2:
        return np.array([])
    dt = np.diff(trace.t)
    lhs = np.diff(trace.E + trace.F) / dt
    source = trace.mu_prime_term - trace.D_u - trace.D_v
    rhs_mid = 0.5 * (source[1:] + source[:-1])
    return lhs - rhs_mid


def observed_orders(values, ratio=2.0):
    """log-ratio convergence orders of successive refinement errors."""
    v = np.asarray(values, dtype=float)
    return np.log(v[:-1] / v[1:]) / math.log(ratio)


def lyapunov_decay_defects(trace, eps2):
    """max over intervals of [L2(t+dt) - L2(t)]/dt + eps2 E(t), L2 = E+F+eps2 G."""
    L = trace.E + trace.F + eps2 * trace.G
    dt = np.diff(trace.t)
    return np.diff(L) / dt + eps2 * trace.E[:-1]


def g_slope_defects(trace, S1, S2):
    """Finite-difference dG/dt against -E + S1 int(m.nu)(u')^2 + S2 int(m.nu)(v')^2."""
    dt = np.diff(trace.t)
    lhs = np.diff(trace.G) / dt
    bound = -trace.E + S1 * trace.bdry_u_sq + S2 * trace.bdry_v_sq
    bound_mid = 0.5 * (bound[1:] + bound[:-1])
    return lhs - bound_mid


@dataclass(frozen=True)
class FitResult:
    rate: float
    intercept: float
    r_squared: float


def fit_decay_rate(trace, window=None):
    """Least-squares line through (t, ln E); rate is minus the slope.

    Default window [0.2 T, T] skips the initial transient.
    """
    if window is None:
        T = trace.t[-1]
        window = (0.2 * T, T)
    ta, tb = window
    mask = (trace.t >= ta) & (trace.t <= tb)
    if mask.sum() < 2:
        raise FitUndefinedError("window contains fewer than two samples")
    E = trace.E[mask]
    if np.any(E <= 0):
        raise FitUndefinedError("window contains non-positive energy samples")
    t = trace.t[mask]
    y = np.log(E)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(rate=-float(slope), intercept=float(intercept), r_squared=r2)
