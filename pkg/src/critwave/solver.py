"""Radial explicit finite-difference integrator with semi-implicit damping.

The scheme, at node r_j = j*dr and time t_n = n*dt, is

    (u^{n+1} - 2u^n + u^{n-1})/dt^2 + c_j^n (u^{n+1} - u^{n-1})/(2dt)
        = Δ_h u^n + |u^n|^p

solved pointwise for u^{n+1}.  Δ_h is the conservative radial Laplacian

    Δ_h u_j = [A_{j+1/2}(u_{j+1}-u_j) - A_{j-1/2}(u_j-u_{j-1})] / (dr V_j),

A_{j+1/2} = r_{j+1/2}^(N-1), V_j the radial cell volume.  At the origin it
reduces to 2N(u_1-u_0)/dr^2, i.e. N u_rr(0) with an even extension.  This
form is self-adjoint in the V-weighted inner product, which makes the
discrete energy identity hold to round-off.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from critwave.core import DampingSpec, ProblemSpec, surface_area


class NonFinite(FloatingPointError):
    pass


class CFLViolation(ValueError):
    pass


STATUSES = ("Decayed", "Blowup", "HorizonReached")
TIME_SERIES_COLUMNS = ("t", "sup_u", "l2_u", "energy", "weighted_energy", "support_radius")


@njit(cache=True, nogil=True)
def _leapfrog(u_prev, u_curr, u_next, a, b, dt, dr, A, inv_dV, p, nonlin, src, use_src, j_end):
    dt2 = dt * dt
    top = 0.0
    finite = True
    for j in range(j_end + 1):
        uj = u_curr[j]
        flux_r = A[j] * (u_curr[j + 1] - uj)
        flux_l = A[j - 1] * (uj - u_curr[j - 1]) if j > 0 else 0.0
        lap = (flux_r - flux_l) * inv_dV[j]
        force = lap
        if nonlin and uj != 0.0:
            au = abs(uj)
            if p == 2.0:
                force += au * au
            elif p == 3.0:
                force += au * au * au
            elif p == 1.5:
                force += au * math.sqrt(au)
            else:
                force += au ** p
        if use_src:
            force += src[j]
        half = 0.5 * a[j] * b * dt
        un = (2.0 * uj - (1.0 - half) * u_prev[j] + dt2 * force) / (1.0 + half)
        u_next[j] = un
        m = abs(un)
        if not (m < 1e300):
            finite = False
        if m > top:
            top = m
    return top, finite


@dataclass(frozen=True)
class RadialGrid:
    dim: int
    dr: float
    n_r: int

    def __post_init__(self):
        if self.n_r < 4 or not self.dr > 0:
            raise ValueError("grid needs dr > 0 and at least 4 nodes")

    @property
    def r_max(self) -> float:
        return self.dr * (self.n_r - 1)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n_r) * self.dr

    @classmethod
    def covering(cls, dim: int, dr: float, R0: float, t_max: float, halo: int = 8) -> "RadialGrid":
        """Smallest grid keeping the light cone R0 + t_max plus a halo interior."""
        n = int(math.ceil((R0 + t_max) / dr)) + halo + 1
        return cls(dim, dr, n)

    def volumes(self) -> np.ndarray:
        """Radial cell volumes V_j (without the ω_N factor)."""
        r, h, N = self.r, self.dr, self.dim
        lo = np.maximum(r - h / 2, 0.0)
        return ((r + h / 2) ** N - lo**N) / N

    def face_areas(self) -> np.ndarray:
        """A_{j+1/2} = r_{j+1/2}^(N-1), j = 0..n_r-2."""
        return ((np.arange(self.n_r - 1) + 0.5) * self.dr) ** (self.dim - 1)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        A, V = self.face_areas(), self.volumes()
        flux = A * np.diff(u)
        out = np.zeros_like(u)
        out[:-1] += flux
        out[1:] -= flux
        return out / (self.dr * V)


@dataclass
class StateSnapshot:
    t: float
    u_prev: np.ndarray
    u_curr: np.ndarray
    dt: float

    @property
    def velocity(self) -> np.ndarray:
        return (self.u_curr - self.u_prev) / self.dt


@dataclass
class Controls:
    t_max: float = 10.0
    blowup_threshold: float = 1e6
    record_every: int = 16
    cfl: float = 0.5
    linear: bool = False
    damping: bool = True  # test-only switch: False sets c = 0
    snapshot_every: int = 0
    snapshot_rmax: Optional[float] = None
    energy_check: bool = False
    support_tol: float = 1e-10
    forcing: Optional[Callable] = field(default=None, repr=False)  # (t, r) -> source array


@dataclass(frozen=True)
class Lifespan:
    T: float
    lo: float
    hi: float
    t_cross: float


@dataclass
class TimeRecord:
    t: float
    sup_u: float
    l2_u: float
    energy: float
    weighted_energy: float
    support_radius: float
    leak: float = 0.0

    def row(self):
        return tuple(getattr(self, k) for k in TIME_SERIES_COLUMNS)


@dataclass
class SimOutcome:
    status: str
    lifespan: Optional[Lifespan]
    records: list
    t_end: float
    steps: int
    dt: float
    snapshots: list = field(default_factory=list)  # (t, u[:m]) pairs
    snapshot_r: Optional[np.ndarray] = None
    energy_residual: dict = field(default_factory=dict)
    max_leak: float = 0.0
    last_state: Optional[StateSnapshot] = None

    @property
    def times(self):
        return np.array([rec.t for rec in self.records])

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records])


class _Geometry:
    """Per-run constant arrays shared by the stepping kernel and diagnostics."""

    def __init__(self, spec: DampingSpec, grid: RadialGrid, controls: Controls):
        self.grid = grid
        self.r = grid.r
        self.V = grid.volumes()
        self.A = grid.face_areas()
        self.inv_dV = 1.0 / (grid.dr * self.V)
        self.omega = surface_area(grid.dim)
        self.a = spec.a(self.r) if controls.damping else np.zeros(grid.n_r)
        self.spec = spec

    def b(self, t):
        return float((1.0 + t) ** (-self.spec.beta))


def check_cfl(dt: float, dr: float):
    if dt > 0.9 * dr * (1 + 1e-12):
        raise CFLViolation(f"dt/dr = {dt / dr:.3g} exceeds 0.9")


def initial_state(spec: DampingSpec, prob: ProblemSpec, grid: RadialGrid, controls: Controls,
                  data: Optional[tuple] = None) -> StateSnapshot:
    """Second-order Taylor start: u^1 = u^0 + dt u1 + dt^2/2 (Δ_h u^0 - c u1 + |u^0|^p + F)."""
    dt = controls.cfl * grid.dr
    check_cfl(dt, grid.dr)
    r = grid.r
    if data is None:
        u0 = prob.epsilon * prob.u0(r)
        u1 = prob.epsilon * prob.u1(r)
    else:
        u0, u1 = (np.array(x, dtype=float) for x in data)
    u0[-1] = 0.0
    u1[-1] = 0.0
    a = spec.a(r) if controls.damping else np.zeros_like(r)
    acc = grid.laplacian(u0) - a * u1
    if not controls.linear:
        acc += np.abs(u0) ** prob.p
    if controls.forcing is not None:
        acc += controls.forcing(0.0, r)
    ucur = u0 + dt * u1 + 0.5 * dt * dt * acc
    ucur[-1] = 0.0
    return StateSnapshot(dt, u0, ucur, dt)


def step(state: StateSnapshot, spec: DampingSpec, prob: ProblemSpec, grid: RadialGrid,
         controls: Optional[Controls] = None) -> StateSnapshot:
    """Advance one time step over the whole grid."""
    controls = controls or Controls()
    check_cfl(state.dt, grid.dr)
    geo = _Geometry(spec, grid, controls)
    u_next = np.zeros(grid.n_r)
    src = _source(controls, state.t, geo.r)
    top, finite = _leapfrog(state.u_prev, state.u_curr, u_next, geo.a, geo.b(state.t), state.dt,
                            grid.dr, geo.A, geo.inv_dV, float(prob.p), not controls.linear,
                            src, controls.forcing is not None, grid.n_r - 2)
    if not finite:
        raise NonFinite(f"non-finite or overflowing values at t={state.t + state.dt:g}")
    return StateSnapshot(state.t + state.dt, state.u_curr, u_next, state.dt)


_EMPTY = np.zeros(1)


def _source(controls, t, r):
    if controls.forcing is None:
        return _EMPTY
    return np.ascontiguousarray(controls.forcing(t, r), dtype=float)


def support_radius(state: StateSnapshot, tol: float, r: Optional[np.ndarray] = None,
                   dr: Optional[float] = None) -> float:
    """Largest r_j with |u_j| > tol (0 if none)."""
    idx = np.flatnonzero(np.abs(state.u_curr) > tol)
    if idx.size == 0:
        return 0.0
    if r is not None:
        return float(r[idx[-1]])
    return float(idx[-1] * (dr if dr is not None else 1.0))


def discrete_energy(u_new, u_old, dt, geo: _Geometry, j_end=None) -> float:
    """E^{n+1/2} = ½ Σ ω V ((u^{n+1}-u^n)/dt)^2 + ½ Σ ω A/dr (Δu^{n+1})(Δu^n)."""
    m = geo.grid.n_r if j_end is None else min(j_end + 2, geo.grid.n_r)
    un, uo = u_new[:m], u_old[:m]
    kin = np.sum(geo.V[:m] * ((un - uo) / dt) ** 2)
    pot = np.sum(geo.A[: m - 1] * np.diff(un) * np.diff(uo)) / geo.grid.dr
    return 0.5 * geo.omega * (kin + pot)


def _norms(u, geo, m):
    l2 = math.sqrt(geo.omega * float(np.sum(geo.V[:m] * u[:m] ** 2)))
    wl2 = geo.omega * float(np.sum(geo.V[:m] * geo.a[:m] * u[:m] ** 2))
    return l2, wl2


def _fit_blowup(samples, p, t_cross):
    """Fit sup|u| ~ C (T - t)^(-2/(p-1)) via the line sup^(-(p-1)/2) = k (T - t)."""
    ts = np.array([s[0] for s in samples])
    ys = np.array([s[1] for s in samples]) ** (-(p - 1.0) / 2.0)
    if ts.size >= 3:
        slope, icpt = np.polyfit(ts, ys, 1)
        if slope < 0:
            T = -icpt / slope
            return Lifespan(T, min(T, t_cross), max(T, t_cross), t_cross)
    return Lifespan(t_cross, t_cross, t_cross, t_cross)


def run(spec: DampingSpec, prob: ProblemSpec, grid: RadialGrid, controls: Controls,
        observers: Sequence[Callable] = (), data: Optional[tuple] = None) -> SimOutcome:
    """Integrate until blow-up or t_max.

    ``observers`` are called with the StateSnapshot at t = 0 and at every
    record time; energy trackers hook in this way.
    """
    geo = _Geometry(spec, grid, controls)
    state = initial_state(spec, prob, grid, controls, data)
    dt = state.dt
    n_r = grid.n_r
    r = geo.r
    p = float(prob.p)
    nonlin = not controls.linear
    use_src = controls.forcing is not None
    n_steps = int(math.ceil(controls.t_max / dt - 1e-9))

    nz = np.flatnonzero((state.u_prev != 0) | (state.u_curr != 0))
    j_front = int(nz[-1]) + 2 if nz.size else 1
    u_prev, u_curr = state.u_prev.copy(), state.u_curr.copy()
    u_next = np.zeros(n_r)

    snap_m = n_r
    if controls.snapshot_rmax is not None:
        snap_m = min(n_r, int(math.ceil(controls.snapshot_rmax / grid.dr)) + 2)
    out = SimOutcome("HorizonReached", None, [], 0.0, 0, dt)
    if controls.snapshot_every:
        out.snapshot_r = r[:snap_m].copy()

    R_support = prob.R0

    def record(t, up, uc, jm):
        m = min(jm + 2, n_r)
        l2, wl2 = _norms(uc, geo, m)
        E = discrete_energy(uc, up, dt, geo, jm)
        snap = StateSnapshot(t, up, uc, dt)
        rad = support_radius(snap, controls.support_tol, r)
        cone = R_support + t + 4 * grid.dr
        outside = r[:m] > cone
        leak = math.sqrt(geo.omega * float(np.sum(geo.V[:m][outside] * uc[:m][outside] ** 2)))
        leak = leak / l2 if l2 > 0 else 0.0
        out.max_leak = max(out.max_leak, leak)
        out.records.append(TimeRecord(t, float(np.max(np.abs(uc[:m]))), l2, E, wl2, rad, leak))
        for obs in observers:
            obs(snap)

    # t = 0 record uses the Taylor start for the velocity
    record(0.0, u_prev - (u_curr - u_prev), u_prev, j_front)
    if controls.snapshot_every:
        out.snapshots.append((0.0, u_prev[:snap_m].copy()))

    e_prev = discrete_energy(u_curr, u_prev, dt, geo, j_front) if controls.energy_check else 0.0
    e_first = e_prev
    e_c_prev = None
    res_d = res_c = 0.0

    history: deque = deque(maxlen=256)
    sup0 = float(np.max(np.abs(u_prev)))
    threshold = controls.blowup_threshold
    lifespan = None
    status = None
    t = dt
    n = 1
    history.append((0.0, sup0))
    while n < n_steps:
        j_end = min(n_r - 2, j_front + n + 1)
        src = _source(controls, t, r) if use_src else _EMPTY
        top, finite = _leapfrog(u_prev, u_curr, u_next, geo.a, geo.b(t), dt, grid.dr,
                                geo.A, geo.inv_dV, p, nonlin, src, use_src, j_end)
        if not finite:
            status = "Blowup"
            t_cross = t
            lifespan = _fit_blowup([h for h in history if h[1] > 0], p, t_cross)
            break
        t_new = (n + 1) * dt
        if controls.energy_check:
            e_new = discrete_energy(u_next, u_curr, dt, geo, j_end)
            v_mid = (u_next - u_prev) / (2 * dt)
            diss = dt * geo.omega * float(np.sum(geo.V * geo.a * geo.b(t) * v_mid**2))
            res_d = max(res_d, abs(e_new - e_prev + diss))
            e_prev = e_new
            # centred-in-time variant: O(dt^2)-consistent, not exact
            kin_c = np.sum(geo.V * v_mid**2)
            pot_c = np.sum(geo.A * np.diff(u_curr) ** 2) / grid.dr
            e_c = 0.5 * geo.omega * (kin_c + pot_c)
            if e_c_prev is not None:
                vf = (u_curr - u_prev) / dt
                diss_c = dt * geo.omega * float(np.sum(geo.V * geo.a * geo.b(t - dt) * vf**2))
                res_c = max(res_c, abs(e_c - e_c_prev + diss_c))
            e_c_prev = e_c
        u_prev, u_curr, u_next = u_curr, u_next, u_prev
        history.append((t_new, top))
        t = t_new
        n += 1
        if top >= threshold:
            status = "Blowup"
            floor = math.sqrt(threshold)
            tail = [h for h in history if h[1] >= floor][-64:]
            if len(tail) < 3:
                tail = list(history)[-3:]
            lifespan = _fit_blowup(tail, p, t)
            break
        if n % controls.record_every == 0:
            record(t, u_prev, u_curr, j_end)
        if controls.snapshot_every and n % controls.snapshot_every == 0:
            out.snapshots.append((t, u_curr[:snap_m].copy()))

    if status is None:
        if out.records[-1].t < t - 1e-12:
            record(t, u_prev, u_curr, min(n_r - 2, j_front + n))
        status = _classify(out.records, sup0, controls.t_max)
    out.status = status
    out.lifespan = lifespan
    out.t_end = t
    out.steps = n
    out.last_state = StateSnapshot(t, u_prev.copy(), u_curr.copy(), dt)
    if controls.energy_check:
        scale = e_first if e_first > 0 else 1.0
        out.energy_residual = {"discrete": res_d / scale, "centered": res_c / scale, "E0": e_first}
    return out


def _classify(records, sup0, t_max):
    sups = np.array([rec.sup_u for rec in records])
    ts = np.array([rec.t for rec in records])
    if sup0 == 0.0 and np.all(sups == 0.0):
        return "Decayed"
    tail = sups[ts >= 0.8 * t_max]
    if sups[-1] < sup0 and tail.size >= 2 and np.all(np.diff(tail) <= 0):
        return "Decayed"
    return "HorizonReached"


def energy_identity_residual(outcome: SimOutcome, form: str = "discrete") -> float:
    """Max over steps of |E^{n+1} - E^n + dt ∫ c u_t^2| / E^0 for a linear run."""
    if not outcome.energy_residual:
        raise ValueError("run was not made in linear mode with energy_check enabled")
    return outcome.energy_residual[form]


def linear_controls(**kw) -> Controls:
    kw.setdefault("linear", True)
    kw.setdefault("energy_check", True)
    return Controls(**kw)
