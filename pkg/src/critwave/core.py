"""Problem description, damping coefficient and closed-form exponents.

Everything here is a pure function of its inputs.  The damped wave problem is

    u_tt - Δu + c(t, x) u_t = |u|^p,   u(0) = ε u0,  u_t(0) = ε u1,

with c(t, x) = a0 <x>^(-alpha) (1+t)^(-beta) and radial, compactly supported
data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.special import gamma as gamma_fn

PROFILE_SHAPES = ("bump", "cosine", "plateau", "zero")


def surface_area(dim: int) -> float:
    """Area of the unit sphere in R^dim (2 for dim = 1: the two endpoints)."""
    return 2.0 * math.pi ** (dim / 2.0) / gamma_fn(dim / 2.0)


def smoothstep5(s):
    """Quintic smoothstep on [0, 1], clamped outside; C2 at both ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def smoothstep5_derivs(s):
    """Return (h, h', h'') of the clamped quintic smoothstep."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    sc = np.clip(s, 0.0, 1.0)
    h = sc**3 * (10.0 - 15.0 * sc + 6.0 * sc * sc)
    dh = np.where(inside, 30.0 * sc**2 * (1.0 - sc) ** 2, 0.0)
    d2h = np.where(inside, 60.0 * sc * (1.0 - sc) * (1.0 - 2.0 * sc), 0.0)
    return h, dh, d2h


@dataclass(frozen=True)
class Profile:
    """Radial initial-data profile: amplitude * shape(r / radius), zero for r >= radius."""

    shape: str = "bump"
    amplitude: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.shape not in PROFILE_SHAPES:
            raise ValueError(f"unknown profile shape {self.shape!r}")
        if not self.radius > 0:
            raise ValueError("profile radius must be positive")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        x = np.abs(r) / self.radius
        out = np.zeros_like(x)
        if self.shape == "zero" or self.amplitude == 0.0:
            return out
        m = x < 1.0
        xm = x[m]
        if self.shape == "bump":
            out[m] = np.exp(1.0 - 1.0 / (1.0 - xm * xm))
        elif self.shape == "cosine":
            out[m] = 0.5 * (1.0 + np.cos(math.pi * xm))
        else:  # plateau: flat to 1/2, quintic fall-off to 1
            out[m] = 1.0 - smoothstep5(2.0 * xm - 1.0)
        return self.amplitude * out

    @property
    def is_zero(self) -> bool:
        return self.shape == "zero" or self.amplitude == 0.0


@dataclass(frozen=True)
class DampingSpec:
    a0: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not self.beta > -1:
            raise ValueError(f"beta must exceed -1, got {self.beta}")

    @property
    def beta_plus(self) -> float:
        return max(self.beta, 0.0)

    def a(self, r):
        """Spatial factor a(x) = a0 <x>^(-alpha)."""
        r = np.asarray(r, dtype=float)
        return self.a0 * (1.0 + r * r) ** (-self.alpha / 2.0)

    def b(self, t):
        """Temporal factor (1+t)^(-beta)."""
        return (1.0 + np.asarray(t, dtype=float)) ** (-self.beta)

    def B_time(self, t):
        """(1+t)^(1+beta)/(1+beta), the primitive of 1/b plus 1/(1+beta)."""
        return (1.0 + np.asarray(t, dtype=float)) ** (1.0 + self.beta) / (1.0 + self.beta)


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    p: float
    epsilon: float
    u0: Profile = field(default_factory=Profile)
    u1: Profile = field(default_factory=lambda: Profile("zero", 0.0, 1.0))
    R0: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        for name, prof in (("u0", self.u0), ("u1", self.u1)):
            if not prof.is_zero and prof.radius > self.R0 * (1 + 1e-12):
                raise ValueError(f"{name} support radius {prof.radius} exceeds R0={self.R0}")
        if self.dim >= 3 and self.p > self.dim / (self.dim - 2):
            warnings.warn(
                f"p={self.p} exceeds the local-existence bound N/(N-2)={self.dim / (self.dim - 2):g}",
                stacklevel=2,
            )


def damping_coefficient(spec: DampingSpec, t, r):
    """c(t, r) = a0 (1+r^2)^(-alpha/2) (1+t)^(-beta)."""
    return spec.a(r) * spec.b(t)


def critical_exponent(dim: int, alpha: float) -> float:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if alpha >= dim:
        raise ValueError(f"alpha={alpha} must be below dim={dim}")
    return 1.0 + 2.0 / (dim - alpha)


def lifespan_exponent(spec: DampingSpec, prob: ProblemSpec) -> tuple[str, float]:
    """Classify p against p_c and return the lifespan exponent.

    Subcritical: T(ε) <~ ε^(-kappa).  Critical: T(ε) <~ exp(C ε^(-(p-1))).
    """
    N, alpha, beta, p = prob.dim, spec.alpha, spec.beta, prob.p
    pc = critical_exponent(N, alpha)
    if not p > 1:
        raise ValueError("p must exceed 1")
    if math.isclose(p, pc, rel_tol=1e-12, abs_tol=1e-14):
        return "critical", p - 1.0
    if p > pc:
        raise ValueError(f"p={p} exceeds p_c={pc}: no lifespan upper bound applies")
    gap = 1.0 / (p - 1.0) - (N - alpha) / 2.0
    kappa = (2.0 - alpha) / (2.0 * (1.0 + beta)) / gap
    return "subcritical", kappa


def radial_integral(values, r, dim: int) -> float:
    """∫_{R^N} f dx for radial f sampled on r, by composite Simpson with ω_N r^(N-1)."""
    r = np.asarray(r, dtype=float)
    return surface_area(dim) * float(simpson(np.asarray(values) * r ** (dim - 1), x=r))


def initial_mass_functional(spec: DampingSpec, prob: ProblemSpec, n_nodes: int = 4097) -> float:
    """∫ (u1 + (a(x) - beta) u0) dx over R^N, unscaled by ε."""
    r = np.linspace(0.0, prob.R0, n_nodes)
    integrand = prob.u1(r) + (spec.a(r) - spec.beta) * prob.u0(r)
    return radial_integral(integrand, r, prob.dim)
