import numpy as np
import pytest

from critwave.core import DampingSpec, Profile, ProblemSpec
from critwave.energy import (
    EnergyTracker,
    energy_columns,
    fit_decay_rate,
    log_weighted_energies,
    m_exponents,
    m_of_t,
    m_summands,
    weighted_energies,
)
from critwave.solver import Controls, RadialGrid, StateSnapshot, run
from critwave.weights import calibrate

SPEC = DampingSpec(1.0, -1.0, 0.0)


@pytest.fixture(scope="module")
def weight():
    return calibrate(SPEC, 1, 1.0 / 3.0)


@pytest.fixture(scope="module")
def supercritical(weight):
    """N=1, alpha=-1, p=3 > p_c = 2, small data, t_max = 200."""
    prob = ProblemSpec(1, 3.0, 0.01, Profile("bump", 8.0, 1.0))
    grid = RadialGrid.covering(1, 1 / 128, 1.0, 200.0)
    tracker = EnergyTracker(weight, SPEC, grid, prob.p)
    out = run(SPEC, prob, grid, Controls(t_max=200.0, record_every=128), observers=[tracker])
    return out, tracker


def test_exponents_beta0_conventions_agree():
    a = m_exponents(1, -1.0, 0.0, 0.25, "printed")
    b = m_exponents(1, -1.0, 0.0, 0.25, "consistent")
    assert a == b
    assert a[0] == pytest.approx(2.0 / 3.0 + 1 - 0.25)
    assert a[1] == pytest.approx(2.0 / 3.0 - 0.25)


def test_exponents_beta_switch():
    kp = m_exponents(3, -1.0, 1.0, 0.1, "printed")
    kc = m_exponents(3, -1.0, 1.0, 0.1, "consistent")
    rate_p, rate_c = 4 / 3 * 2 / 2, 4 / 3 * 2
    assert kp == pytest.approx((rate_p + 2 - 0.1, rate_p - 0.1))
    assert kc == pytest.approx((rate_c + 2 - 0.1, rate_c - 0.1))
    with pytest.raises(ValueError):
        m_exponents(3, -1.0, 1.0, 0.1, "other")


def test_synthetic_m_constant(weight):
    grid = RadialGrid(1, 0.1, 11)
    tr = EnergyTracker(weight, SPEC, grid, 2.0)
    kE, kV = m_exponents(1, -1.0, 0.0, tr.delta0)
    t = np.linspace(0, 50, 101)
    tr.times = list(t)
    tr.log_E = list(-kE * np.log1p(t))
    tr.log_V = list(-kV * np.log1p(t))
    M = m_of_t(tr, shift=1.0)
    assert np.allclose(M, 2.0, rtol=1e-13)
    E, V = m_summands(tr, shift=1.0)
    assert np.allclose(E, 1.0, rtol=1e-13) and np.allclose(V, 1.0, rtol=1e-13)


def test_m_running_sup(weight):
    grid = RadialGrid(1, 0.1, 11)
    tr = EnergyTracker(weight, SPEC, grid, 2.0)
    rng = np.random.default_rng(1)
    tr.times = list(np.arange(40.0))
    tr.log_E = list(rng.normal(size=40))
    tr.log_V = list(rng.normal(size=40))
    assert np.all(np.diff(m_of_t(tr)) >= 0)
    with pytest.raises(ValueError):
        m_of_t(EnergyTracker(weight, SPEC, grid, 2.0))


def test_fit_decay_rate_exact():
    t = np.linspace(0, 100, 200)
    assert fit_decay_rate((t, 3.0 * (1 + t) ** -1.3)) == pytest.approx(-1.3, abs=1e-12)
    assert fit_decay_rate(np.column_stack([t, (1 + t) ** 0.5]), window=1.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        fit_decay_rate((t[:10], np.ones(10)), window=0.5)
    with pytest.raises(ValueError):
        fit_decay_rate((t, -np.ones_like(t)))


def test_weighted_energies_zero_and_finite(weight):
    grid = RadialGrid(1, 1 / 16, 200)
    z = np.zeros(grid.n_r)
    assert weighted_energies(StateSnapshot(1.0, z, z, 0.01), weight.extended(grid.r_max), SPEC, grid, 2.0) \
        == (0.0, 0.0, 0.0)
    u = np.exp(-grid.r**2)
    lE, lV, lF = log_weighted_energies(StateSnapshot(1.0, 0.99 * u, u, 0.01),
                                       weight.extended(grid.r_max), SPEC, grid, 2.0)
    assert all(np.isfinite([lE, lV, lF]))


def test_supercritical_decays_and_m_bounded(supercritical):
    out, tracker = supercritical
    assert out.status == "Decayed"
    M = m_of_t(tracker)
    t = np.array(tracker.times)
    assert np.all(np.diff(M) >= 0)
    assert M[-1] / M[0] <= 2.0
    assert M[-1] / M[np.searchsorted(t, 1.0)] <= 2.0


def test_energy_decay_rate_near_linear_target(supercritical):
    out, _ = supercritical
    rate = fit_decay_rate((out.times[1:], out.column("energy")[1:]))
    target = -((1 + 1) / (2 + 1) + 1)
    assert abs(rate / target - 1) < 0.1


def test_supercritical_summands_band(supercritical):
    # both (1+t)-weighted summands within a factor-4 band over t in [1, t_max]
    _, tracker = supercritical
    t = np.array(tracker.times)
    E, V = m_summands(tracker, shift=1.0)
    sel = t >= 1.0
    spread = {name: float(s.max() / s.min()) for name, s in (("E_w", E[sel]), ("V_w", V[sel]))}
    assert max(spread.values()) <= 4.0, f"summand spread over [1, t_max]: {spread}"


def test_energy_columns(supercritical):
    out, tracker = supercritical
    cols = energy_columns(tracker)
    assert set(cols) == {"E_w", "V_w", "M_beta"}
    assert all(len(v) == len(out.records) for v in cols.values())
