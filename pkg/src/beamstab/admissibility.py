"""Explicit decay-certificate arithmetic.

Computes the closed-form constants A, P1, P2, S1, S2 from the geometric and
embedding constants, checks the smallness conditions on the coupling
parameters (alpha1, alpha2) and, when they hold, produces the certified
exponential rate eta and the energy envelope 3 E(0) exp(-(2/3) eta t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GAMMA1


@dataclass(frozen=True)
class CoefficientSchedule:
    """Time-dependent wave-speed coefficient with a certified lower bound."""

    label: str
    mu: object        # t -> mu(t)
    mu_prime: object  # t -> mu'(t)
    mu0: float        # lower bound over the run horizon
    mu_at_0: float
    nonincreasing: bool

    def __post_init__(self):
        if self.mu0 <= 0:
            raise InvalidArgumentError("mu lower bound must be positive")


def constant_schedule(c=1.0):
    if c <= 0:
        raise InvalidArgumentError("constant coefficient must be positive")
    return CoefficientSchedule(
        f"constant({c:g})", lambda t: c + 0.0 * np.asarray(t, dtype=float),
        lambda t: 0.0 * np.asarray(t, dtype=float), c, c, True)


def decaying_schedule(c0=1.0, lam=0.0, horizon=1.0):
    """mu(t) = c0 exp(-lam t); the lower bound is taken at the run horizon."""
    if c0 <= 0 or lam < 0 or horizon <= 0:
        raise InvalidArgumentError("need c0 > 0, lam >= 0, horizon > 0")
    return CoefficientSchedule(
        f"decaying(c0={c0:g},lam={lam:g})",
        lambda t: c0 * np.exp(-lam * np.asarray(t, dtype=float)),
        lambda t: -lam * c0 * np.exp(-lam * np.asarray(t, dtype=float)),
        c0 * math.exp(-lam * horizon), c0, True)


def _require_positive(**kwargs):
    for name, val in kwargs.items():
        if not (val > 0):
            raise InvalidArgumentError(f"{name} must be positive, got {val!r}")


def compute_A(n, M, R, mu0, alpha_ratio):
    """Bound constant for the multiplier functional: |G| <= A E."""
    _require_positive(n=n, M=M, R=R, mu0=mu0, alpha_ratio=alpha_ratio)
    if n not in (1, 2):
        raise InvalidArgumentError("spatial dimension must be 1 or 2")
    root = math.sqrt(mu0)
    return (2 * (n - 1) * M / root + 2 * (n - 1) * M * alpha_ratio
            + 4 * R / root + 4 * R * alpha_ratio)


def compute_P1(n, M, R, mu0):
    _require_positive(n=n, M=M, R=R, mu0=mu0)
    return 4 * (n - 1) ** 2 * n * M ** 2 / mu0 + 16 * R ** 2 * n / mu0


def compute_P2(n, N, tau0, mu0, R, sum_nu_bound):
    _require_positive(n=n, N=N, tau0=tau0, mu0=mu0, R=R, sum_nu_bound=sum_nu_bound)
    return (4 * (n - 1) ** 2 * sum_nu_bound ** 2 * N ** 4 / mu0
            + 2 * N ** 2 / (tau0 * mu0) * sum_nu_bound ** 2
            + 16 * R ** 2 * n / mu0)


def compute_S(n, R, N, L1, L2, mu_at_0):
    """Boundary-velocity weights in the dG/dt bound (literal formulas)."""
    _require_positive(n=n, R=R, N=N, L1=L1, L2=L2, mu_at_0=mu_at_0)
    S1 = 4 * (n - 1) ** 2 * mu_at_0 * R * L1 ** 2 * N ** 2 + mu_at_0 * R ** 2 * L2 ** 2 + 1
    S2 = 4 * (n - 1) ** 2 * R * L2 ** 2 * N ** 2 + 2 * R ** 2 * L2 ** 2 + 1
    return {"S1": S1, "S2": S2}


def check_admissibility(alpha1, alpha2, n, M, P1, P2, mu0):
    """Both smallness conditions with their slacks (non-strict inequalities)."""
    _require_positive(alpha1=alpha1, alpha2=alpha2, n=n, M=M, P1=P1, P2=P2, mu0=mu0)
    product_slack = mu0 / (64 * n * M ** 2) - alpha1 * alpha2
    quadratic_slack = 7.0 / 8.0 - (P1 * alpha1 ** 2 + P2 * alpha2 ** 2)
    return {
        "admissible": product_slack >= 0 and quadratic_slack >= 0,
        "product_slack": product_slack,
        "quadratic_slack": quadratic_slack,
    }


def epsilon_eta(A, S1, S2, b1, b2, alpha_ratio, mu0):
    """Largest admissible eps1, eps2 and the certified rate eta = min."""
    _require_positive(A=A, S1=S1, S2=S2, b1=b1, b2=b2, alpha_ratio=alpha_ratio, mu0=mu0)
    eps1_max = 1.0 / (4.0 * A)
    eps2_max = min(mu0 * b1 / S1, alpha_ratio * b2 / S2)
    return {"eps1_max": eps1_max, "eps2_max": eps2_max, "eta": min(eps1_max, eps2_max)}


def decay_envelope(E0, eta, t):
    """Certified envelope 3 E0 exp(-(2/3) eta t)."""
    if E0 < 0:
        raise InvalidArgumentError("initial energy must be nonnegative")
    if eta <= 0:
        raise InvalidArgumentError("rate must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("time must be nonnegative")
    out = 3.0 * E0 * np.exp(-(2.0 / 3.0) * eta * t)
    return out if out.ndim else float(out)


def sigma_from_mesh(partition, alpha2):
    """Boundary weight sigma = alpha2 * (sum of normal components) on Gamma1.

    Returns per-quad-point values concatenated over Gamma1 faces, its sup
    norm, and a positivity flag; configurations with sigma <= 0 somewhere
    are flagged rather than rejected.
    """
    vals = []
    for f, tag in zip(partition.mesh.faces, partition.tags):
        if tag != GAMMA1:
            continue
        vals.append(np.full(len(f.quad_weights), alpha2 * float(f.normal.sum())))
    values = np.concatenate(vals)
    return {
        "values": values,
        "sup": float(np.max(np.abs(values))),
        "positive": bool(np.all(values > 0)),
    }


@dataclass(frozen=True)
class HypothesisReport:
    """Everything the decay certificate depends on, plus the verdict."""

    n: int
    M: float
    N: float
    R: float
    tau0: float
    mu0: float
    mu_at_0: float
    b1: float
    b2: float
    L1: float
    L2: float
    alpha1: float
    alpha2: float
    sum_nu_bound: float
    sigma_sup: float
    sigma_positive: bool
    A: float
    P1: float
    P2: float
    S1: float
    S2: float
    product_slack: float
    quadratic_slack: float
    admissible: bool
    eps1_max: float = float("nan")
    eps2_max: float = float("nan")
    eta: float = float("nan")

    _FIELDS = (
        "n", "M", "N", "R", "tau0", "mu0", "mu_at_0", "b1", "b2", "L1", "L2",
        "alpha1", "alpha2", "sum_nu_bound", "sigma_sup", "sigma_positive",
        "A", "P1", "P2", "S1", "S2", "product_slack", "quadratic_slack",
        "admissible", "eps1_max", "eps2_max", "eta",
    )

    def as_text(self):
        width = max(len(f) for f in self._FIELDS)
        lines = []
        for f in self._FIELDS:
            v = getattr(self, f)
            if isinstance(v, bool):
                s = str(v).lower()
            elif isinstance(v, float):
                s = f"{v:.17g}"
            else:
                s = str(v)
            lines.append(f"{f.ljust(width)}  {s}")
        return "\n".join(lines)

    def as_csv(self):
        header = ",".join(self._FIELDS)
        vals = []
        for f in self._FIELDS:
            v = getattr(self, f)
            if isinstance(v, bool):
                vals.append(str(v).lower())
            elif isinstance(v, float):
                vals.append(f"{v:.17g}")
            else:
                vals.append(str(v))
        return header + "\n" + ",".join(vals) + "\n"


def build_report(n, M, N, R, tau0, schedule, law1, law2, alpha1, alpha2, partition):
    """Assemble the full admissibility report for a concrete configuration."""
    if law1.b <= 0 or law2.b <= 0:
        raise InvalidArgumentError(
            "decay certification needs strongly monotone laws (b > 0)")
    sigma = sigma_from_mesh(partition, alpha2)
    A = compute_A(n, M, R, schedule.mu0, alpha1 / alpha2)
    P1 = compute_P1(n, M, R, schedule.mu0)
    P2 = compute_P2(n, N, tau0, schedule.mu0, R, partition.sum_nu_bound())
    S = compute_S(n, R, N, law1.L, law2.L, schedule.mu_at_0)
    adm = check_admissibility(alpha1, alpha2, n, M, P1, P2, schedule.mu0)
    extra = {}
    if adm["admissible"]:
        extra = epsilon_eta(A, S["S1"], S["S2"], law1.b, law2.b,
                            alpha1 / alpha2, schedule.mu0)
    return HypothesisReport(
        n=n, M=M, N=N, R=R, tau0=tau0, mu0=schedule.mu0, mu_at_0=schedule.mu_at_0,
        b1=law1.b, b2=law2.b, L1=law1.L, L2=law2.L,
        alpha1=alpha1, alpha2=alpha2,
        sum_nu_bound=partition.sum_nu_bound(),
        sigma_sup=sigma["sup"], sigma_positive=sigma["positive"],
        A=A, P1=P1, P2=P2, S1=S["S1"], S2=S["S2"],
        product_slack=adm["product_slack"], quadratic_slack=adm["quadratic_slack"],
        admissible=adm["admissible"], **extra,
    )
