"""Numerical checkers for the interpolation inequalities behind the energy method.

All norms are radial integrals ω_N ∫ f(r) r^(N-1) dr evaluated by composite
Simpson on a uniform grid spanning each entry's support.  Constants are never
computed sharply; the checkers return ratios whose corpus suprema are the
quantities of interest.

ckn_ratio is returned in squared form,

    ‖u‖² / (‖∇u‖^(2 - 2^(1-k)) ‖|x|^(2^k - 1) u‖^(2^(1-k))),

so that k = 1 coincides with gamma_step_ratio at gamma = 0 and the chain
R_k = R_{k-1} * S_{2^k - 2}^(2^(1-k)) holds entry by entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from critwave.core import smoothstep5_derivs, surface_area

N_NODES = 4097  # 4096 Simpson panels
KINDS = ("bump", "plateau", "oscillatory", "gaussian")


def _bump(x):
    """exp(1 - 1/(1-x^2)) on |x| < 1 with its first derivative."""
    x = np.asarray(x, dtype=float)
    v = np.zeros_like(x)
    dv = np.zeros_like(x)
    m = np.abs(x) < 1.0
    xm = x[m]
    g = 1.0 - xm * xm
    v[m] = np.exp(1.0 - 1.0 / g)
    dv[m] = v[m] * (-2.0 * xm / (g * g))
    return v, dv


def _plateau(z):
    """1 on [0, 1/2], quintic fall-off to 0 at 1, for z >= 0."""
    h, dh, _ = smoothstep5_derivs(2.0 * np.asarray(z, dtype=float) - 1.0)
    return 1.0 - h, -2.0 * dh


@dataclass(frozen=True)
class CorpusEntry:
    """A compactly supported radial profile u(r) = amp * shape(scale * r)."""

    kind: str
    amp: float
    width: float
    shift: float = 0.0
    freq: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corpus kind {self.kind!r}")

    @property
    def support(self) -> float:
        if self.kind == "plateau":
            return (self.shift + self.width) / self.scale
        return self.width / self.scale

    def _shape(self, s):
        w = self.width
        if self.kind == "bump":
            v, dv = _bump(s / w)
            return v, dv / w
        if self.kind == "oscillatory":
            v, dv = _bump(s / w)
            sn, cs = np.sin(self.freq * s), np.cos(self.freq * s)
            return sn * v, self.freq * cs * v + sn * dv / w
        if self.kind == "plateau":
            d = s - self.shift
            v, dv = _plateau(np.abs(d) / w)
            return v, np.sign(d) * dv / w
        # gaussian, smoothly truncated on [w - 1, w]
        g = np.exp(-0.5 * s * s)
        h, dh, _ = smoothstep5_derivs(s - (w - 1.0))
        return g * (1.0 - h), -s * g * (1.0 - h) - g * dh

    def values(self, r) -> np.ndarray:
        return self.amp * self._shape(self.scale * np.asarray(r, dtype=float))[0]

    def deriv(self, r) -> np.ndarray:
        return self.amp * self.scale * self._shape(self.scale * np.asarray(r, dtype=float))[1]

    def dilate(self, lam: float) -> "CorpusEntry":
        """u_lam(x) = u(lam x)."""
        return CorpusEntry(self.kind, self.amp, self.width, self.shift, self.freq, self.scale * lam)

    def scaled(self, c: float) -> "CorpusEntry":
        return CorpusEntry(self.kind, self.amp * c, self.width, self.shift, self.freq, self.scale)


def truncated_gaussian(cut: float = 8.0) -> CorpusEntry:
    """e^(-r^2/2), switched off smoothly between cut-1 and cut."""
    return CorpusEntry("gaussian", 1.0, cut)


class RadialNorms:
    """Radial quadrature of one entry in dimension ``dim``."""

    def __init__(self, entry: CorpusEntry, dim: int, n_nodes: int = N_NODES):
        self.entry = entry
        self.dim = dim
        self.r = np.linspace(0.0, entry.support, n_nodes)
        self.u = entry.values(self.r)
        self.du = entry.deriv(self.r)
        self.omega = surface_area(dim)

    def integral(self, f) -> float:
        return self.omega * float(simpson(f * self.r ** (self.dim - 1), x=self.r))

    def lp(self, q: float) -> float:
        return self.integral(np.abs(self.u) ** q) ** (1.0 / q)

    def l2(self) -> float:
        return math.sqrt(self.integral(self.u**2))

    def grad(self) -> float:
        return math.sqrt(self.integral(self.du**2))

    def moment(self, gamma: float) -> float:
        """‖|x|^gamma u‖_2."""
        return math.sqrt(self.integral(self.r ** (2 * gamma) * self.u**2))


def _nonzero(*vals):
    if not all(v > 0 for v in vals):
        raise ValueError("corpus entry has a vanishing norm")


def gn_theta(p: float, dim: int) -> float:
    return dim * (p - 1.0) / (2.0 * (p + 1.0))


def gn_ratio(u: CorpusEntry, p: float, dim: int) -> float:
    """‖u‖_{p+1} / (‖∇u‖^θ ‖u‖^(1-θ)), θ = N(p-1)/(2(p+1))."""
    if p < 1 or (dim >= 3 and p > (dim + 2) / (dim - 2)):
        raise ValueError(f"p={p} outside the admissible range for N={dim}")
    q = RadialNorms(u, dim)
    th = gn_theta(p, dim)
    l2, g = q.l2(), q.grad()
    _nonzero(l2, g)
    return q.lp(p + 1.0) / (g**th * l2 ** (1.0 - th))


def ckn_ratio(u: CorpusEntry, k: int, dim: int) -> float:
    """‖u‖² / (‖∇u‖^(2-2^(1-k)) ‖|x|^(2^k-1) u‖^(2^(1-k)))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = RadialNorms(u, dim)
    l2, g, m = q.l2(), q.grad(), q.moment(2**k - 1)
    _nonzero(l2, g, m)
    e = 2.0 ** (1 - k)
    return l2**2 / (g ** (2.0 - e) * m**e)


def gamma_step_ratio(u: CorpusEntry, gamma: float, dim: int) -> float:
    """‖|x|^(γ/2) u‖² / (‖∇u‖ ‖|x|^(γ+1) u‖)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    q = RadialNorms(u, dim)
    num, g, m = q.moment(gamma / 2.0), q.grad(), q.moment(gamma + 1.0)
    _nonzero(num, g, m)
    return num**2 / (g * m)


def ibp_residual(u: CorpusEntry, gamma: float, dim: int) -> float:
    """Relative gap in ∫ div(|x|^γ x) u² = -2 ∫ |x|^γ (x·∇u) u."""
    q = RadialNorms(u, dim)
    lhs = (dim + gamma) * q.integral(q.r**gamma * q.u**2)
    rhs = -2.0 * q.integral(q.r ** (gamma + 1) * q.u * q.du)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def chain_gap(u: CorpusEntry, k: int, dim: int) -> float:
    """Relative gap between R_k and R_{k-1} * S_{2^k-2}^(2^(1-k)); zero up to round-off."""
    if k < 2:
        raise ValueError("the chain starts at k = 2")
    lhs = ckn_ratio(u, k, dim)
    rhs = ckn_ratio(u, k - 1, dim) * gamma_step_ratio(u, 2.0**k - 2.0, dim) ** (2.0 ** (1 - k))
    return abs(lhs - rhs) / rhs


@dataclass
class TestFunctionCorpus:
    """Seeded family of bumps, shifted plateaus and oscillatory bumps."""

    dim: int
    entries: list = field(default_factory=list)
    seed: int = 0

    __test__ = False  # not a pytest class

    @classmethod
    def generate(cls, dim: int, size: int = 100, seed: int = 0) -> "TestFunctionCorpus":
        rng = np.random.default_rng([seed, dim])
        out = []
        for i in range(size):
            amp = float(rng.uniform(0.2, 5.0))
            kind = ("bump", "plateau", "oscillatory")[i % 3]
            if kind == "bump":
                out.append(CorpusEntry(kind, amp, float(rng.uniform(0.5, 4.0))))
            elif kind == "plateau":
                out.append(CorpusEntry(kind, amp, float(rng.uniform(0.5, 3.0)),
                                       shift=float(rng.uniform(0.0, 2.0))))
            else:
                out.append(CorpusEntry(kind, amp, float(rng.uniform(1.0, 4.0)),
                                       freq=float(rng.uniform(1.0, 12.0))))
        return cls(dim, out, seed)

    def __len__(self):
        return len(self.entries)

    def ckn_sup(self, k: int) -> float:
        return max(ckn_ratio(u, k, self.dim) for u in self.entries)

    def gamma_sup(self, gamma: float) -> float:
        return max(gamma_step_ratio(u, gamma, self.dim) for u in self.entries)

    def gn_sup(self, p: float) -> float:
        return max(gn_ratio(u, p, self.dim) for u in self.entries)


# -- weighted forms --------------------------------------------------------------------


def _weighted_norms(u: CorpusEntry, weight, t: float, p: float, dim: int):
    q = RadialNorms(u, dim)
    if q.r[-1] > weight.r_max:
        raise ValueError("entry support exceeds the weight's tabulated range")
    psi = weight.psi(t, q.r)
    a = weight.spec.a(q.r)
    lhs = q.integral(np.exp(2.0 * psi) * np.abs(q.u) ** (p + 1.0)) ** (1.0 / (p + 1.0))
    z = math.sqrt(q.integral(np.exp(2.0 * psi) * a * q.u**2))
    y = math.sqrt(q.integral(np.exp(2.0 * psi) * q.du**2))
    return lhs, y, z


def weighted_interpolation_check(u: CorpusEntry, weight, t: float, p: float, k: int) -> tuple[float, float]:
    """(LHS, RHS-shape) of the weighted Gagliardo-Nirenberg estimate.

    LHS = ‖e^(2ψ/(p+1)) u‖_{p+1}; the shape is
    ((1+t)^(-1/2) Z + Y)^(θ + (1-2^-k)(1-θ)) ((1+t)^((2^k-1+α/2)/(2-α)) Z)^((1-θ)/2^k)
    with Z = ‖e^ψ √a u‖ and Y = ‖e^ψ ∇u‖.  The constant is left to the caller.
    """
    al, dim = weight.spec.alpha, weight.dim
    if 2**k - 1 < -al / 2.0:
        raise ValueError(f"k={k} too small: need 2^k - 1 >= {-al / 2}")
    if u.amp == 0.0:
        return 0.0, 0.0
    th = gn_theta(p, dim)
    lhs, y, z = _weighted_norms(u, weight, t, p, dim)
    e = 2.0 ** (-k)
    first = ((1.0 + t) ** -0.5 * z + y) ** (th + (1.0 - e) * (1.0 - th))
    second = ((1.0 + t) ** ((2**k - 1 + al / 2.0) / (2.0 - al)) * z) ** ((1.0 - th) * e)
    return lhs, first * second


def weighted_ratio_profile(u: CorpusEntry, weight, times, p: float, k: int) -> np.ndarray:
    """LHS / RHS-shape at each t; boundedness in t is the checked property."""
    out = []
    for t in times:
        lhs, rhs = weighted_interpolation_check(u, weight, float(t), p, k)
        out.append(lhs / rhs if rhs > 0 else 0.0)
    return np.array(out)


def pointwise_grad_bound(weight, p: float, times, radii) -> float:
    """max over nodes of |∇ψ| e^(2ψ/(p+1)) (1+t)^(1/2) / (e^ψ √a)."""
    T, R = np.meshgrid(np.asarray(times, float), np.asarray(radii, float), indexing="ij")
    psi = weight.psi(T, R)
    q = np.abs(weight.psi_r(T, R)) * np.exp((2.0 / (p + 1.0) - 1.0) * psi)
    q *= np.sqrt((1.0 + T) / weight.spec.a(R))
    return float(q.max())


def corpus_constant(corpus: TestFunctionCorpus, weight, t: float, p: float, k: int,
                    limit: Optional[float] = None) -> float:
    """Empirical constant: max LHS/RHS-shape over entries supported within ``limit``."""
    limit = weight.r_max if limit is None else limit
    best = 0.0
    for u in corpus.entries:
        if u.support <= limit:
            lhs, rhs = weighted_interpolation_check(u, weight, t, p, k)
            if rhs > 0:
                best = max(best, lhs / rhs)
    return best
