"""Monotone boundary feedback laws and their Lipschitz approximants.

A law is a scalar continuous function p with p(0) = 0, strong monotonicity
constant b ([p(s)-p(r)](s-r) >= b (s-r)^2) and linear growth constant L
(|p(s)| <= L |s|).  The boundary forcing at a feedback-boundary point is
h(x, s) = [m(x).nu(x)] p(s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GAMMA1


@dataclass(frozen=True)
class FeedbackLaw:
    label: str
    p: object            # vectorized scalar map
    slope: object        # derivative (used by the Newton solver)
    b: float             # strong-monotonicity constant
    L: float             # linear growth constant

    def __post_init__(self):
        if self.b < 0 or self.L < self.b:
            raise InvalidArgumentError("need 0 <= b <= L")
        if abs(float(self.p(0.0))) > 0.0:
            raise InvalidArgumentError("law must vanish at 0")

    def __call__(self, s):
        return self.p(s)


@dataclass(frozen=True)
class LipschitzLaw:
    """Piecewise-linear law: breakpoints, values and segment slopes.

    Beyond the breakpoint range the terminal segment slopes continue, which
    keeps the global Lipschitz constant finite and the monotonicity constant
    intact (a constant extension would lose it).
    """

    label: str
    breakpoints: np.ndarray
    values: np.ndarray
    level: int
    b: float

    @property
    def slopes(self):
        return np.diff(self.values) / np.diff(self.breakpoints)

    @property
    def lipschitz(self):
        return float(np.max(self.slopes))

    @property
    def L(self):
        return self.lipschitz

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        x, y = self.breakpoints, self.values
        idx = np.clip(np.searchsorted(x, s, side="right") - 1, 0, len(x) - 2)
        sl = self.slopes
        out = y[idx] + sl[idx] * (s - x[idx])
        return out if out.ndim else float(out)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        # right-slope at kinks
        idx = np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1,
                      0, len(self.breakpoints) - 2)
        out = self.slopes[idx]
        return out if out.ndim else float(out)


def identity_law(k=1.0):
    if k <= 0:
        raise InvalidArgumentError("gain must be positive")
    return FeedbackLaw(f"identity(k={k:g})", lambda s: k * np.asarray(s, dtype=float),
                       lambda s: k * np.ones_like(np.asarray(s, dtype=float)), k, k)


def saturating_law(b=1.0, L=2.0):
    """p(s) = b s + (L - b) tanh s: slope ranges over [b, L]."""
    if b <= 0 or L < b:
        raise InvalidArgumentError("need 0 < b <= L")
    c = L - b
    return FeedbackLaw(
        f"saturating(b={b:g},L={L:g})",
        lambda s: b * np.asarray(s, dtype=float) + c * np.tanh(s),
        lambda s: b + c / np.cosh(np.asarray(s, dtype=float)) ** 2,
        b, L,
    )


def hardening_law(b=1.0, L=2.0, knee=1.0):
    """Piecewise-linear: slope b inside [-knee, knee], slope L outside."""
    if b <= 0 or L < b or knee <= 0:
        raise InvalidArgumentError("need 0 < b <= L and knee > 0")

    def p(s):
        s = np.asarray(s, dtype=float)
        core = np.clip(s, -knee, knee)
        return b * core + L * (s - core)

    def slope(s):
        s = np.asarray(s, dtype=float)
        return np.where(np.abs(s) < knee, b, L)

    return FeedbackLaw(f"hardening(b={b:g},L={L:g},knee={knee:g})", p, slope, b, L)


def zero_law():
    """Undamped boundary (b = 0); for conservative diagnostics only."""
    z = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    return FeedbackLaw("zero", z, z, 0.0, 0.0)


CATALOG = {
    "identity": identity_law,
    "saturating": saturating_law,
    "hardening": hardening_law,
    "zero": zero_law,
}


def evaluate_h(law, face_m_dot_nu, s, tag=GAMMA1):
    """h(x, s) = (m.nu at the face point) * p(s); feedback acts on Gamma1 only."""
    if tag != GAMMA1:
        raise InvalidArgumentError("feedback is only defined on Gamma1 faces")
    return face_m_dot_nu * law(s)


def strauss_approximate(law, level):
    """Piecewise-linear interpolant of p on the grid {k/level : |k/level| <= level}.

    All segment slopes are difference quotients of a b-strongly-monotone
    function, hence >= b; the interpolant is globally Lipschitz with
    constant max slope and converges to p uniformly on bounded sets as the
    level grows.
    """
    level = int(level)
    if level < 1:
        raise InvalidArgumentError("level must be >= 1")
    k = np.arange(-level * level, level * level + 1)
    x = k / level
    y = np.asarray(law(x), dtype=float)
    return LipschitzLaw(f"{law.label}|l={level}", x, y, level, law.b)


@dataclass(frozen=True)
class LawReport:
    label: str
    claimed_b: float
    claimed_L: float
    monotonicity_margin: float  # min over pairs of quotient - b
    growth_margin: float        # min over samples of L|s| - |p(s)|
    monotone_ok: bool
    growth_ok: bool

    @property
    def passed(self):
        return self.monotone_ok and self.growth_ok


def verify_law(law, half_range, samples):
    """Scan sample pairs for strong monotonicity and points for linear growth.

    Violations are reported through the margins, never raised.
    """
    if half_range <= 0:
        raise InvalidArgumentError("range bound must be positive")
    if samples < 2:
        raise InvalidArgumentError("need at least two samples")
    s = np.linspace(-half_range, half_range, samples)
    p = np.asarray(law(s), dtype=float)
    ds = s[:, None] - s[None, :]
    dp = p[:, None] - p[None, :]
    mask = np.abs(ds) > 0
    quotients = np.where(mask, dp * ds, np.inf) / np.where(mask, ds * ds, 1.0)
    mono_margin = float(np.min(quotients[mask]) - law.b)
    nz = np.abs(s) > 0
    growth_margin = float(np.min(law.L * np.abs(s[nz]) - np.abs(p[nz])))
    return LawReport(law.label, law.b, law.L, mono_margin, growth_margin,
                     mono_margin >= -1e-12, growth_margin >= -1e-12)


def export_law_csv(law, path):
    """LipschitzLaw table as (breakpoint, value) CSV."""
    with open(path, "w") as fh:
        fh.write("breakpoint,value\n")
        for x, y in zip(law.breakpoints, law.values):
            fh.write(f"{x:.17g},{y:.17g}\n")


def law_from_spec(name, params):
    """Build a catalog law from a config name + parameter dict."""
    if name not in CATALOG:
        raise InvalidArgumentError(f"unknown feedback law '{name}'")
    return CATALOG[name](**params)
