"""Test-function functionals and the lifespan ε-sweep.

The probe cutoff is ψ_R = η(s)^(2p') with s = (r^(2-α) + t²)/R² when β = 1 and
s = (r^(2-α) + t)/R when β = 0; η is 1 on s <= 1/2 and falls to 0 at s = 1
with a quintic smoothstep.  Space-time integrals are tensor Simpson rules
over snapshots recorded by the solver.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from critwave.core import (
    DampingSpec,
    ProblemSpec,
    critical_exponent,
    initial_mass_functional,
    lifespan_exponent,
    smoothstep5_derivs,
    surface_area,
)
from critwave.solver import Controls, Lifespan, RadialGrid, SimOutcome, run


def eta(s):
    """1 on s <= 1/2, quintic decrease on (1/2, 1), 0 on s >= 1."""
    return 1.0 - smoothstep5_derivs(2.0 * np.asarray(s, dtype=float) - 1.0)[0]


def eta_derivs(s):
    h, dh, d2h = smoothstep5_derivs(2.0 * np.asarray(s, dtype=float) - 1.0)
    return 1.0 - h, -2.0 * dh, -4.0 * d2h


def eta_star(s):
    s = np.asarray(s, dtype=float)
    return np.where(s > 0.5, eta(s), 0.0)


@dataclass(frozen=True)
class TestFunctionProbe:
    R: float
    p: float
    alpha: float
    beta: float
    dim: int = 1

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.beta not in (0.0, 1.0):
            raise ValueError("probes are defined for beta = 0 and beta = 1")
        if not self.p > 1:
            raise ValueError("p must exceed 1")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q(self) -> float:
        return 2.0 * self.p_prime

    @property
    def t_extent(self) -> float:
        """ψ_R vanishes for t >= R in both variants."""
        return self.R

    @property
    def r_extent(self) -> float:
        k = 2.0 if self.beta == 1 else 1.0
        return self.R ** (k / (2.0 - self.alpha))

    def arg(self, t, r):
        t, r = np.asarray(t, dtype=float), np.asarray(r, dtype=float)
        x = r ** (2.0 - self.alpha)
        if self.beta == 1:
            return (x + t * t) / self.R**2
        return (x + t) / self.R

    def _arg_derivs(self, t, r):
        """(s_t, s_tt, s_r, s_rr)."""
        t, r = np.asarray(t, dtype=float), np.asarray(r, dtype=float)
        al = self.alpha
        scale = self.R**2 if self.beta == 1 else self.R
        if self.beta == 1:
            st, stt = 2.0 * t / scale, np.full_like(t, 2.0 / scale)
        else:
            st, stt = np.full_like(t, 1.0 / scale), np.zeros_like(t)
        sr = (2.0 - al) * r ** (1.0 - al) / scale
        srr = (2.0 - al) * (1.0 - al) * r ** (-al) / scale
        return np.broadcast_arrays(st, stt, sr, srr)

    def psi(self, t, r):
        return eta(self.arg(t, r)) ** self.q

    def psi_star(self, t, r):
        return eta_star(self.arg(t, r)) ** self.q

    def Psi(self, t, r):
        """(1+t) ψ_R in the beta = 1 variant, ψ_R itself when beta = 0."""
        w = self.psi(t, r)
        return (1.0 + np.asarray(t, dtype=float)) * w if self.beta == 1 else w

    def time_factor(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 + t if self.beta == 1 else np.ones_like(t)

    def derivatives(self, t, r):
        """(∂_t ψ_R, ∂_t² ψ_R, Δψ_R) by the chain rule through η."""
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        e, de, d2e = eta_derivs(self.arg(t, r))
        st, stt, sr, srr = self._arg_derivs(t, r)
        q = self.q
        e1 = np.where(e > 0, e ** (q - 1.0), 0.0)
        e2 = np.where(e > 0, e ** (q - 2.0), 0.0)
        pt = q * e1 * de * st
        ptt = q * (q - 1.0) * e2 * de**2 * st**2 + q * e1 * (d2e * st**2 + de * stt)
        prr = q * (q - 1.0) * e2 * de**2 * sr**2 + q * e1 * (d2e * sr**2 + de * srr)
        # (N-1) ψ_r / r, written without the division (s_r / r is regular)
        sr_over_r = (2.0 - self.alpha) * r ** (-self.alpha) / (self.R**2 if self.beta == 1 else self.R)
        lap = prr + (self.dim - 1.0) * q * e1 * de * sr_over_r
        return pt, ptt, lap


def derivative_constants(probe: TestFunctionProbe, n_t: int = 401, n_r: int = 401) -> dict:
    """Grid maxima of the normalised derivative quotients on supp ψ_R*.

    beta = 1: |∂_t ψ| R² / ((1+t) ψ*^(1-1/(2p'))), |∂_t² ψ| R² / ψ*^(1/p),
    |Δψ| R² / (<x>^(-α) ψ*^(1/p)).  beta = 0 uses R, R², R in place of R².
    """
    t = np.linspace(0.0, probe.t_extent, n_t)
    r = np.linspace(0.0, probe.r_extent, n_r)
    T, Rr = np.meshgrid(t, r, indexing="ij")
    pt, ptt, lap = probe.derivatives(T, Rr)
    star = probe.psi_star(T, Rr)
    on = star > 0
    R = probe.R
    st, stt, sl = (R**2, R**2, R**2) if probe.beta == 1 else (R, R**2, R)
    jx = (1.0 + Rr * Rr) ** (-probe.alpha / 2.0)
    tf = probe.time_factor(T)
    c_t = np.abs(pt[on]) * st / (tf[on] * star[on] ** (1.0 - 1.0 / probe.q))
    c_tt = np.abs(ptt[on]) * stt / star[on] ** (1.0 / probe.p)
    c_lap = np.abs(lap[on]) * sl / (jx[on] * star[on] ** (1.0 / probe.p))
    return {"dt": float(c_t.max()), "dtt": float(c_tt.max()), "lap": float(c_lap.max())}


# -- space-time record -----------------------------------------------------------------


class InsufficientCoverage(ValueError):
    pass


@dataclass
class SpacetimeRecord:
    """Snapshots u(t_i, r_j) of one run, for space-time quadrature."""

    t: np.ndarray
    r: np.ndarray
    u: np.ndarray
    dim: int
    t_end: float

    @classmethod
    def from_outcome(cls, outcome: SimOutcome, dim: int) -> "SpacetimeRecord":
        if not outcome.snapshots:
            raise InsufficientCoverage("run recorded no snapshots")
        t = np.array([s[0] for s in outcome.snapshots])
        u = np.vstack([s[1] for s in outcome.snapshots])
        return cls(t, outcome.snapshot_r, u, dim, float(t[-1]))

    def integral(self, weight: Callable, p: float, t_max: Optional[float] = None) -> float:
        """∬ |u|^p weight(t, r) dx dt over t <= t_max."""
        sel = self.t <= (self.t_end if t_max is None else t_max) + 1e-12
        t, u = self.t[sel], self.u[sel]
        if t.size < 3:
            return 0.0
        T, Rr = np.meshgrid(t, self.r, indexing="ij")
        dens = np.abs(u) ** p * weight(T, Rr) * self.r ** (self.dim - 1)
        inner = surface_area(self.dim) * simpson(dens, x=self.r, axis=1)
        return float(simpson(inner, x=t))

    def covers(self, probe: TestFunctionProbe) -> bool:
        return self.t_end >= probe.t_extent - 1e-9 and self.r[-1] >= probe.r_extent


def _check_cover(rec: SpacetimeRecord, probe: TestFunctionProbe):
    if not rec.covers(probe):
        raise InsufficientCoverage(
            f"record spans t <= {rec.t_end:g}, r <= {rec.r[-1]:g}; probe R={probe.R:g} needs "
            f"t <= {probe.t_extent:g}, r <= {probe.r_extent:g}")


def probe_rpower(probe: TestFunctionProbe) -> float:
    """Exponent of R in the right-hand side of the probe inequality."""
    gap = 1.0 / (probe.p - 1.0) - (probe.dim - probe.alpha) / 2.0
    k = 4.0 if probe.beta == 1 else 2.0
    return -k / (2.0 - probe.alpha) * gap / probe.p_prime


@dataclass(frozen=True)
class ProbeResult:
    R: float
    lhs: float
    nonlinear: float
    nonlinear_star: float
    rhs_shape: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_shape if self.rhs_shape > 0 else math.nan


def probe_inequality(rec: SpacetimeRecord, probe: TestFunctionProbe, prob: ProblemSpec,
                     spec: DampingSpec) -> ProbeResult:
    """LHS and the R-power times (nonlinear ψ* term)^(1/p); the constant is measured."""
    if prob.epsilon == 0.0 and not np.any(rec.u):
        return ProbeResult(probe.R, 0.0, 0.0, 0.0, 0.0)
    _check_cover(rec, probe)
    mass = prob.epsilon * initial_mass_functional(replace(spec, beta=probe.beta), prob)
    tf = probe.time_factor
    nl = rec.integral(lambda T, R: tf(T) * probe.psi(T, R), prob.p, probe.t_extent)
    nls = rec.integral(lambda T, R: tf(T) * probe.psi_star(T, R), prob.p, probe.t_extent)
    shape = probe.R ** probe_rpower(probe) * nls ** (1.0 / prob.p)
    return ProbeResult(probe.R, mass + nl, nl, nls, shape)


def y_functional(rec: SpacetimeRecord, p: float, alpha: float, beta: float, rho: float,
                 n_per_octave: int = 16, dim: Optional[int] = None) -> float:
    """Y(ρ) = ∫_1^ρ (∬ |u|^p (1+t) ψ_R*) R^(-1) dR by Simpson in log R."""
    dim = rec.dim if dim is None else dim
    if not math.isclose(p, critical_exponent(dim, alpha), rel_tol=1e-12):
        raise ValueError("Y is defined at the critical exponent only")
    if rho <= 1.0:
        return 0.0
    n = max(3, 2 * int(math.ceil(n_per_octave * math.log2(rho) / 2)) + 1)
    logR = np.linspace(0.0, math.log(rho), n)
    vals = []
    for R in np.exp(logR):
        pr = TestFunctionProbe(float(R), p, alpha, beta, dim)
        _check_cover(rec, pr)
        tf = pr.time_factor
        vals.append(rec.integral(lambda T, X, pr=pr, tf=tf: tf(T) * pr.psi_star(T, X), p, pr.t_extent))
    return float(simpson(np.array(vals), x=logR))


def y_domination(rec: SpacetimeRecord, p: float, alpha: float, beta: float, rho: float,
                 dim: Optional[int] = None) -> tuple[float, float]:
    """(Y(ρ), log 2 ∬ |u|^p (1+t) ψ_ρ)."""
    dim = rec.dim if dim is None else dim
    pr = TestFunctionProbe(rho, p, alpha, beta, dim)
    y = y_functional(rec, p, alpha, beta, rho, dim=dim)
    bound = math.log(2.0) * rec.integral(lambda T, X: pr.time_factor(T) * pr.psi(T, X), p, pr.t_extent)
    return y, bound


def probe_controls(t_max: float, r_extent: float, dr: float, cfl: float = 0.5,
                   snapshots_per_unit: int = 128, **kw) -> Controls:
    """Controls recording snapshots out to r_extent at the given time density."""
    every = max(1, int(round(1.0 / (cfl * dr * snapshots_per_unit))))
    return Controls(t_max=t_max, cfl=cfl, snapshot_every=every, snapshot_rmax=r_extent, **kw)


# -- lifespan sweep --------------------------------------------------------------------


@dataclass
class SweepPoint:
    eps: float
    status: str
    T: Optional[float]
    T_lo: Optional[float]
    T_hi: Optional[float]
    used: bool = False

    def as_dict(self):
        return {"eps": self.eps, "status": self.status, "T": self.T,
                "T_lo": self.T_lo, "T_hi": self.T_hi, "used": self.used}


@dataclass
class SweepResult:
    regime: str
    points: list
    fitted_slope: float
    target_slope: float
    excluded: list = field(default_factory=list)

    @property
    def rel_err(self) -> float:
        return abs(self.fitted_slope - self.target_slope) / abs(self.target_slope)

    @property
    def eps(self):
        return np.array([pt.eps for pt in self.points])

    @property
    def T(self):
        return np.array([np.nan if pt.T is None else pt.T for pt in self.points])

    def to_dict(self) -> dict:
        return {"regime": self.regime, "points": [pt.as_dict() for pt in self.points],
                "fitted_slope": self.fitted_slope, "target_slope": self.target_slope,
                "rel_err": self.rel_err, "excluded": self.excluded}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_lifespan_slope(eps, T, regime: str) -> float:
    """Slope of log T (subcritical) or log log T (critical) against log ε."""
    eps, T = np.asarray(eps, float), np.asarray(T, float)
    if eps.size < 2:
        raise ValueError("need at least two points to fit")
    if regime == "subcritical":
        y = np.log(T)
    elif regime == "critical":
        if np.any(T <= 1.0):
            raise ValueError("log log T needs T > 1")
        y = np.log(np.log(T))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return float(np.polyfit(np.log(eps), y, 1)[0])


def thread_count(n_jobs: int) -> int:
    cap = os.environ.get("CRITWAVE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, n_jobs))


def synthetic_runner(law: Callable[[float], float]) -> Callable:
    """Runner returning a Blowup outcome with T = law(ε); for harness tests."""
    def runner(spec, prob, grid, controls):
        T = float(law(prob.epsilon))
        return SimOutcome("Blowup", Lifespan(T, T, T, T), [], T, 0, 0.0)
    return runner


def lifespan_sweep(spec: DampingSpec, prob: ProblemSpec, eps_list: Sequence[float],
                   grid: RadialGrid, controls: Controls, runner: Optional[Callable] = None,
                   threads: Optional[int] = None) -> SweepResult:
    """Run the solver at each ε and fit the lifespan exponent.

    Runs execute concurrently; results are kept in the order of eps_list.
    Non-blow-up points are reported and left out of the fit, as is the largest
    ε when at least five points remain without it.
    """
    regime, expo = lifespan_exponent(spec, prob)
    if initial_mass_functional(spec, prob) <= 0:
        raise ValueError("initial mass functional is not positive; the blow-up hypothesis fails")
    eps_list = [float(e) for e in eps_list]
    if len(set(eps_list)) != len(eps_list) or any(e <= 0 for e in eps_list):
        raise ValueError("eps_list must hold distinct positive values")
    runner = runner or run

    def one(eps):
        return runner(spec, replace(prob, epsilon=eps), grid, controls)

    n = threads if threads is not None else thread_count(len(eps_list))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(one, eps_list))
    else:
        outcomes = [one(e) for e in eps_list]

    points = []
    for eps, out in zip(eps_list, outcomes):
        ls = out.lifespan if out.status == "Blowup" else None
        points.append(SweepPoint(eps, out.status, ls.T if ls else None,
                                 ls.lo if ls else None, ls.hi if ls else None))
    good = [pt for pt in points if pt.T is not None]
    excluded = [pt.eps for pt in points if pt.T is None]
    if len(good) - 1 >= 5:
        top = max(good, key=lambda pt: pt.eps)
        good = [pt for pt in good if pt is not top]
        excluded.append(top.eps)
    for pt in good:
        pt.used = True
    slope = math.nan
    if len(good) >= 2:
        slope = fit_lifespan_slope([pt.eps for pt in good], [pt.T for pt in good], regime)
    return SweepResult(regime, points, slope, -expo, sorted(excluded, reverse=True))


def t_nonincreasing(result: SweepResult) -> bool:
    """Lifespans of blown-up points never increase with ε."""
    pts = sorted((pt for pt in result.points if pt.T is not None), key=lambda pt: pt.eps)
    T = [pt.T for pt in pts]
    return all(b <= a * (1 + 1e-12) for a, b in zip(T, T[1:]))
