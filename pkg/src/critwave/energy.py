"""Weighted energy functionals along solver trajectories.

For a state (u^{n-1}, u^n) the tracker evaluates

    E_w = ∫ e^{2ψ} (u_t² + |∇u|²),   V_w = ∫ e^{2ψ} a u²,   F_w = ∫ e^{2ψ} |F(u)|,

with F(u) = |u|^p u / (p+1).  e^{2ψ} grows like exp(c r^(2-α)/(1+t)), so the
sums are accumulated in log space and restricted to the light cone
r <= R0 + t + halo, outside of which the exact solution vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from critwave.core import DampingSpec, surface_area
from critwave.solver import RadialGrid, StateSnapshot

CONVENTIONS = ("printed", "consistent")
ENERGY_COLUMNS = ("E_w", "V_w", "M_beta")


def _log_integral(log_w, dens):
    """log Σ exp(log_w) * dens for nonnegative dens (-inf if all zero)."""
    if not np.any(dens > 0):
        return -math.inf
    return float(logsumexp(log_w, b=dens))


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def log_weighted_energies(state: StateSnapshot, weight, spec: DampingSpec, grid: RadialGrid,
                          p: float, beta: float = 0.0, cone: Optional[float] = None):
    """(log E_w, log V_w, log F_w); cone limits the radial range."""
    r = grid.r
    m = grid.n_r
    if cone is not None:
        m = min(grid.n_r, int(math.floor(cone / grid.dr)) + 1)
    r = r[:m]
    if r[-1] > weight.r_max * (1 + 1e-12):
        raise ValueError(f"state radius {r[-1]} exceeds the weight range {weight.r_max}")
    u = state.u_curr[:m]
    ut = (state.u_curr[:m] - state.u_prev[:m]) / state.dt
    ur = np.gradient(state.u_curr, grid.dr)[:m]
    ur[0] = 0.0
    vol = surface_area(grid.dim) * grid.volumes()[:m]
    psi = weight.psi(state.t, r) if beta == 0 else weight.psi_beta(beta, state.t, r)
    lw = 2.0 * psi
    a = spec.a(r)
    F = np.abs(u) ** (p + 1.0) / (p + 1.0)
    return (_log_integral(lw, vol * (ut**2 + ur**2)),
            _log_integral(lw, vol * a * u**2),
            _log_integral(lw, vol * F))


def weighted_energies(state: StateSnapshot, weight, spec: DampingSpec, grid: RadialGrid,
                      p: float, beta: float = 0.0, cone: Optional[float] = None):
    """(E_w, V_w, F_w); inf if a value exceeds the float range."""
    return tuple(_exp(x) for x in log_weighted_energies(state, weight, spec, grid, p, beta, cone))


@dataclass
class EnergyTracker:
    """Observer recording weighted energies at every solver record time."""

    weight: object
    spec: DampingSpec
    grid: RadialGrid
    p: float
    R0: float = 1.0
    beta: float = 0.0
    halo: int = 8
    t0: Optional[float] = None
    delta0: Optional[float] = None
    times: list = field(default_factory=list)
    log_E: list = field(default_factory=list)
    log_V: list = field(default_factory=list)
    log_F: list = field(default_factory=list)

    def __post_init__(self):
        if self.t0 is None:
            self.t0 = self.weight.params.ladder.t0
        if self.delta0 is None:
            self.delta0 = self.weight.params.delta0
        self.weight = self.weight.extended(self.grid.r_max)

    def __call__(self, state: StateSnapshot):
        cone = self.R0 + state.t + self.halo * self.grid.dr
        lE, lV, lF = log_weighted_energies(state, self.weight, self.spec, self.grid, self.p,
                                           self.beta, cone)
        self.times.append(float(state.t))
        self.log_E.append(lE)
        self.log_V.append(lV)
        self.log_F.append(lF)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def series(self, name: str) -> np.ndarray:
        logs = {"E_w": self.log_E, "V_w": self.log_V, "F_w": self.log_F}[name]
        return np.exp(np.minimum(np.array(logs), 709.0))


def m_exponents(dim: int, alpha: float, beta: float, delta0: float,
                convention: str = "printed") -> tuple[float, float]:
    """Powers of (shift + τ) multiplying E_w and V_w inside M.

    At beta = 0 both conventions give ((N-α)/(2-α) + 1 - δ0, (N-α)/(2-α) - δ0).
    For beta != 0, "printed" uses the rate (N-α)(1+β)/(2(2-α)); "consistent"
    uses (N-α)(1+β)/(2-α), which reduces to the beta = 0 rate.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    base = (dim - alpha) / (2.0 - alpha)
    if beta == 0:
        rate = base
    elif convention == "printed":
        rate = base * (1.0 + beta) / 2.0
    else:
        rate = base * (1.0 + beta)
    return rate + beta + 1.0 - delta0, rate - delta0


def m_of_t(tracker: EnergyTracker, beta: Optional[float] = None, shift: Optional[float] = None,
           convention: str = "printed") -> np.ndarray:
    """Running supremum M(t) over the tracker's records.

    ``shift`` replaces t0 in (t0 + τ); pass 1 to use (1 + τ) powers.
    """
    if not tracker.times:
        raise ValueError("tracker has no records")
    beta = tracker.beta if beta is None else beta
    shift = tracker.t0 if shift is None else shift
    kE, kV = m_exponents(tracker.dim, tracker.spec.alpha, beta, tracker.delta0, convention)
    s = np.log(shift + np.array(tracker.times))
    terms = np.logaddexp(kE * s + np.array(tracker.log_E), kV * s + np.array(tracker.log_V))
    return np.exp(np.minimum(np.maximum.accumulate(terms), 709.0))


def m_summands(tracker: EnergyTracker, shift: float = 1.0, convention: str = "printed"):
    """The two weighted summands of M separately, before the supremum."""
    kE, kV = m_exponents(tracker.dim, tracker.spec.alpha, tracker.beta, tracker.delta0, convention)
    s = np.log(shift + np.array(tracker.times))
    return np.exp(kE * s + np.array(tracker.log_E)), np.exp(kV * s + np.array(tracker.log_V))


def fit_decay_rate(series, window: float = 0.5) -> float:
    """Least-squares slope of log(value) against log(1+t) over the trailing window.

    ``series`` is a (t, value) sequence or a pair of arrays; ``window`` is the
    trailing fraction of the time span used.
    """
    t, v = _as_arrays(series)
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    start = t[-1] - window * (t[-1] - t[0])
    sel = t >= start - 1e-12 * max(1.0, abs(t[-1]))
    if sel.sum() < 8:
        raise ValueError(f"need at least 8 points in the window, got {int(sel.sum())}")
    if np.any(v[sel] <= 0):
        raise ValueError("values in the fit window must be positive")
    slope, _ = np.polyfit(np.log1p(t[sel]), np.log(v[sel]), 1)
    return float(slope)


def _as_arrays(series):
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 2 and arr.shape[0] != 2:
        return arr[:, 0], arr[:, 1]
    if arr.ndim == 2 and arr.shape[0] == 2:
        return arr[0], arr[1]
    raise ValueError("series must be (t, value) pairs")


def energy_columns(tracker: EnergyTracker, convention: str = "printed") -> dict:
    """Columns appended to the run CSV."""
    return {"E_w": tracker.series("E_w"), "V_w": tracker.series("V_w"),
            "M_beta": m_of_t(tracker, convention=convention)}
