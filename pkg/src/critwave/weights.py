"""Exponential-weight generator psi(t, x) with a Newton-potential correction.

    psi(t, r) = mu / (1+t) * B(r),   B(r) = <r>^(2-alpha) + A0 - v(r),

where v solves the radial Poisson problem Δv = f with
f(r) = alpha (2-alpha) <r>^(-2-alpha) eta_{R_delta}(r).  With this sign the
Laplacian of psi has the closed form

    Δpsi = mu/(1+t) [ (N-alpha)(2-alpha) <r>^(-alpha)
                      + alpha (2-alpha) <r>^(-2-alpha) (1 - eta(r)) ].

Calibration picks R_delta, then A0, by doubling until the two pointwise
inequalities used by the weighted energy method hold on a tensor grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from critwave.core import DampingSpec, smoothstep5_derivs

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


class CalibrationFailed(RuntimeError):
    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst or {}


def cutoff(r, R_delta):
    """1 on r <= R_delta, 0 on r >= 2 R_delta, quintic smoothstep between."""
    h, _, _ = smoothstep5_derivs((np.asarray(r, dtype=float) - R_delta) / R_delta)
    return 1.0 - h


def cutoff_derivs(r, R_delta):
    """(eta, eta', eta'') in r."""
    h, dh, d2h = smoothstep5_derivs((np.asarray(r, dtype=float) - R_delta) / R_delta)
    return 1.0 - h, -dh / R_delta, -d2h / R_delta**2


def correction_source(alpha: float, R_delta: float) -> Callable:
    def f(r):
        r = np.asarray(r, dtype=float)
        return alpha * (2.0 - alpha) * (1.0 + r * r) ** (-1.0 - alpha / 2.0) * cutoff(r, R_delta)

    return f


def _gl_on(a, b):
    """Gauss-Legendre nodes and weights mapped onto each [a_i, b_i]; shapes (n, 10)."""
    a = np.asarray(a, dtype=float)[:, None]
    b = np.asarray(b, dtype=float)[:, None]
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


@dataclass
class CorrectionTable:
    """Radial solution v of Δv = f for a source supported in [0, support].

    Inside the support v is a C1 cubic Hermite interpolant of exact nodal
    values and slopes; outside it is the closed-form exterior solution.
    """

    dim: int
    support: float
    r_max: float
    nodes: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    source: Callable = field(repr=False)
    g_inf: float = 0.0  # r^(N-1) v'(r) for r beyond the support

    def __post_init__(self):
        d2v = self.source(self.nodes) - self._curv_term(self.nodes, self.dv)
        self._v = CubicHermiteSpline(self.nodes, self.v, self.dv)
        self._dv = CubicHermiteSpline(self.nodes, self.dv, d2v)

    def _curv_term(self, r, dv):
        # (N-1) v'/r, with the r -> 0 limit (N-1) v''(0) = (N-1) f(0)/N
        out = np.empty_like(dv)
        pos = r > 0
        out[pos] = (self.dim - 1) * dv[pos] / r[pos]
        out[~pos] = (self.dim - 1) * self.source(np.zeros(1))[0] / self.dim
        return out

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"radius outside tabulated range [0, {self.r_max}]")
        return r

    def value(self, r):
        r = self._check(r)
        out = np.empty_like(r)
        inner = r <= self.support
        out[inner] = self._v(r[inner])
        ro = r[~inner]
        N, g = self.dim, self.g_inf
        if N == 1:
            out[~inner] = self.v[-1] + g * (ro - self.support)
        elif N == 2:
            out[~inner] = g * np.log(ro)
        else:
            out[~inner] = -g * ro ** (2 - N) / (N - 2)
        return out

    def slope(self, r):
        r = self._check(r)
        out = np.empty_like(r)
        inner = r <= self.support
        out[inner] = self._dv(r[inner])
        out[~inner] = self.g_inf * r[~inner] ** (1 - self.dim)
        return out


def radial_poisson(source: Callable, dim: int, support: float, r_max: float,
                   n_cells: int = 8192) -> CorrectionTable:
    """Tabulate the radial solution of Δv = source, normalised like the
    fundamental-solution convolution: v(0) = ∫ s f(s) ds for N = 1,
    v ~ g log r for N = 2, v -> 0 at infinity for N >= 3."""
    if r_max <= support:
        raise ValueError(f"r_max={r_max} must exceed the source support {support}")
    N = dim
    nodes = np.linspace(0.0, support, n_cells + 1)
    a, b = nodes[:-1], nodes[1:]

    # G(r) = ∫_0^r f(s) s^(N-1) ds at the nodes
    s, w = _gl_on(a, b)
    G = np.concatenate([[0.0], np.cumsum(np.sum(w * source(s) * s ** (N - 1), axis=1))])

    # v' at the Gauss points of every cell, each needing its own partial integral
    sub_s, sub_w = _gl_on(np.repeat(a, _GL_X.size), s.ravel())
    partial = np.sum(sub_w * source(sub_s) * sub_s ** (N - 1), axis=1).reshape(s.shape)
    dv_gauss = (G[:-1, None] + partial) * s ** (1 - N)
    v = np.concatenate([[0.0], np.cumsum(np.sum(w * dv_gauss, axis=1))])

    dv = np.zeros_like(nodes)
    dv[1:] = G[1:] * nodes[1:] ** (1 - N)
    g_inf = float(G[-1])
    if N == 1:
        v += float(np.sum(w * s * source(s)))
    elif N == 2:
        v += g_inf * math.log(support) - v[-1]
    else:
        v += -g_inf * support ** (2 - N) / (N - 2) - v[-1]
    return CorrectionTable(dim=N, support=support, r_max=r_max, nodes=nodes, v=v, dv=dv,
                           source=source, g_inf=g_inf)


def newton_correction(dim: int, alpha: float, R_delta: float, r_max: float,
                      n_cells: int = 8192) -> CorrectionTable:
    if alpha >= 0:
        raise ValueError("the correction is defined for alpha < 0")
    if r_max <= 2 * R_delta:
        raise ValueError(f"r_max={r_max} does not cover the cutoff support 2*R_delta={2 * R_delta}")
    return radial_poisson(correction_source(alpha, R_delta), dim, 2.0 * R_delta, r_max, n_cells)


def laplacian_residual(table: CorrectionTable, stride: int = 1) -> float:
    """max |Δ_h v - f| / max |f| over interior table nodes (3-point radial stencil)."""
    r = table.nodes[::stride]
    v = table.value(r)
    h = r[1] - r[0]
    rj = r[1:-1]
    lap = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2 + (table.dim - 1) / rj * (v[2:] - v[:-2]) / (2 * h)
    f = table.source(rj)
    scale = np.max(np.abs(table.source(table.nodes)))
    if scale == 0:
        return float(np.max(np.abs(lap)))
    return float(np.max(np.abs(lap - f)) / scale)


@dataclass(frozen=True)
class DeltaLadder:
    delta: float
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    nu: float
    C6: float
    t0: float


def delta_ladder(dim: int, alpha: float, a0: float, delta0: float) -> DeltaLadder:
    """Constants of the weighted energy argument for given delta0.

    delta3 is taken as large as allowed and nu at its upper bound; t0 is the
    smallest value meeting every lower bound (the a(x) bounds are taken at
    x = 0, where a is smallest for alpha < 0).
    """
    N = dim
    rate = (N - alpha) / (2.0 - alpha)
    if not 0 < delta0 < rate:
        raise ValueError(f"delta0={delta0} must lie in (0, {rate})")
    d = (2.0 - alpha) / (2.0 * (N - alpha)) * delta0
    d1 = 2.0 * d / 3.0
    d2 = (N - alpha) / (2.0 * (2.0 - alpha)) * d
    d3 = 1.0 - (2.0 + d1) / (2.0 + d)
    d4 = d1 - d / 2.0 - d * d1 / 4.0
    d5 = d4 / (4.0 + d4)
    d6 = d2 / 2.0
    k1 = rate + 1.0 - delta0
    nu = d5 / (2.0 * k1)
    C6 = (rate - delta0) ** 2 / (4.0 * d6)
    q = nu * a0 / 16.0
    t0 = max(
        1.0,
        8.0 * k1 / a0,
        (1.0 + math.sqrt(1.0 + 4.0 * q * C6)) / (2.0 * q),
        16.0 / (d * nu * a0),
        2.0 / (nu * a0),
    )
    return DeltaLadder(d, d1, d2, d3, d4, d5, d6, nu, C6, t0)


@dataclass(frozen=True)
class WeightParams:
    delta: float
    mu: float
    A0: float
    R_delta: float
    delta0: float
    ladder: DeltaLadder


def make_params(spec: DampingSpec, dim: int, delta0: float, A0: float, R_delta: float) -> WeightParams:
    ladder = delta_ladder(dim, spec.alpha, spec.a0, delta0)
    mu = spec.a0 / ((2.0 - spec.alpha) ** 2 * (2.0 + ladder.delta))
    return WeightParams(ladder.delta, mu, A0, R_delta, delta0, ladder)


@dataclass
class WeightFunction:
    params: WeightParams
    spec: DampingSpec
    dim: int
    table: CorrectionTable

    @property
    def r_max(self) -> float:
        return self.table.r_max

    def extended(self, r_max: float) -> "WeightFunction":
        """Same weight with the evaluation range widened (the exterior is closed-form)."""
        if r_max <= self.table.r_max:
            return self
        return replace(self, table=replace(self.table, r_max=r_max))

    def bracket(self, r):
        r = np.asarray(r, dtype=float)
        return (1.0 + r * r) ** (1.0 - self.spec.alpha / 2.0) + self.params.A0 - self.table.value(r)

    def bracket_r(self, r):
        r = np.asarray(r, dtype=float)
        al = self.spec.alpha
        return (2.0 - al) * r * (1.0 + r * r) ** (-al / 2.0) - self.table.slope(r)

    def psi(self, t, r):
        return self.params.mu * self.bracket(r) / (1.0 + np.asarray(t, dtype=float))

    def psi_t(self, t, r):
        return -self.psi(t, r) / (1.0 + np.asarray(t, dtype=float))

    def psi_r(self, t, r):
        return self.params.mu * self.bracket_r(r) / (1.0 + np.asarray(t, dtype=float))

    def lap_psi(self, t, r):
        r = np.asarray(r, dtype=float)
        al, N = self.spec.alpha, self.dim
        jx = 1.0 + r * r
        eta = cutoff(r, self.params.R_delta)
        body = (N - al) * (2 - al) * jx ** (-al / 2) + al * (2 - al) * jx ** (-1 - al / 2) * (1 - eta)
        return self.params.mu * body / (1.0 + np.asarray(t, dtype=float))

    def psi_beta(self, beta, t, r):
        if beta <= -1:
            raise ValueError("beta must exceed -1")
        t = np.asarray(t, dtype=float)
        return self.params.mu * self.bracket(r) * (1.0 + beta) / (1.0 + t) ** (1.0 + beta)

    def psi_beta_t(self, beta, t, r):
        return -(1.0 + beta) / (1.0 + np.asarray(t, dtype=float)) * self.psi_beta(beta, t, r)

    def psi_beta_r(self, beta, t, r):
        t = np.asarray(t, dtype=float)
        return self.params.mu * self.bracket_r(r) * (1.0 + beta) / (1.0 + t) ** (1.0 + beta)

    def lap_psi_beta(self, beta, t, r):
        t = np.asarray(t, dtype=float)
        return (1.0 + beta) * (1.0 + t) ** (-beta) * self.lap_psi(t, r)

    def margins(self, t, r):
        """Margins of -psi_t a >= (2+d1)|∇psi|^2 and Δpsi >= (rate/2 - d2) a/(1+t)."""
        lad, al, N = self.params.ladder, self.spec.alpha, self.dim
        a = self.spec.a(r)
        m24 = -self.psi_t(t, r) * a - (2.0 + lad.d1) * self.psi_r(t, r) ** 2
        m25 = self.lap_psi(t, r) - ((N - al) / (2 * (2 - al)) - lad.d2) * a / (1.0 + np.asarray(t))
        return m24, m25

    def margins_beta(self, beta, t, r):
        """Time-dependent analogues with c(t,x) in place of a(x)."""
        lad, al, N = self.params.ladder, self.spec.alpha, self.dim
        t = np.asarray(t, dtype=float)
        c = self.spec.a(r) * (1.0 + t) ** (-beta)
        m24 = -c * self.psi_beta_t(beta, t, r) - (2.0 + lad.d1) * self.psi_beta_r(beta, t, r) ** 2
        rate = (N - al) * (1 + beta) / (2 * (2 - al))
        m25 = self.lap_psi_beta(beta, t, r) - (rate - (1 + beta) * lad.d2) * c / (1.0 + t)
        return m24, m25


@dataclass(frozen=True)
class VerificationGrid:
    r_max: float = 100.0
    t_max: float = 100.0
    n_r: int = 512
    n_t: int = 64
    r_min: float = 1e-3

    def radii(self):
        return np.concatenate([[0.0], np.geomspace(self.r_min, self.r_max, self.n_r - 1)])

    def times(self):
        return np.linspace(0.0, self.t_max, self.n_t)

    def mesh(self):
        return np.meshgrid(self.times(), self.radii(), indexing="ij")


def default_delta0(dim: int, alpha: float, p: float | None = None) -> float:
    """Half of the admissible upper bound for delta0 (given p, if supplied)."""
    bound = (dim - alpha) / (2.0 - alpha)
    if p is not None:
        bound = min(bound, 2.0 / (2.0 - alpha) * (dim - alpha - 2.0 / (p - 1.0)))
    if bound <= 0:
        raise ValueError("no admissible delta0: p is not supercritical")
    return 0.5 * bound


def calibrate(spec: DampingSpec, dim: int, delta0: float,
              grid: VerificationGrid | None = None, max_doublings: int = 40,
              n_cells: int = 8192) -> WeightFunction:
    """Double R_delta, then A0, until both margins are >= 0 on the grid."""
    if spec.alpha >= 0:
        raise ValueError("calibration requires alpha < 0")
    grid = grid or VerificationGrid()
    T, Rr = grid.mesh()
    R_delta = 2.0 * max(1.0, abs(spec.alpha))
    A0 = 1.0
    weight = None
    for _ in range(max_doublings + 1):
        if 2 * R_delta < grid.r_max:
            params = make_params(spec, dim, delta0, A0, R_delta)
            weight = WeightFunction(params, spec, dim,
                                    newton_correction(dim, spec.alpha, R_delta, grid.r_max, n_cells))
            m25 = weight.margins(T, Rr)[1]
            if m25.min() >= 0:
                break
        R_delta *= 2.0
    else:
        raise CalibrationFailed("Δpsi margin still negative after R_delta doublings",
                                _worst(T, Rr, m25) if weight else {})
    if weight is None or 2 * R_delta >= grid.r_max:
        raise CalibrationFailed("R_delta outgrew the verification grid")

    for _ in range(max_doublings + 1):
        m24 = weight.margins(T, Rr)[0]
        if m24.min() >= 0 and weight.bracket(grid.radii()).min() > 0:
            return weight
        A0 *= 2.0
        weight = replace(weight, params=replace(weight.params, A0=A0))
    raise CalibrationFailed("gradient margin still negative after A0 doublings", _worst(T, Rr, m24))


def _worst(T, R, m):
    i = np.unravel_index(np.argmin(m), m.shape)
    return {"t": float(T[i]), "r": float(R[i]), "margin": float(m[i])}
