import math
import time

import numpy as np
import pytest

from critwave.blowup import (
    InsufficientCoverage,
    SpacetimeRecord,
    SweepPoint,
    SweepResult,
    TestFunctionProbe,
    derivative_constants,
    eta,
    eta_star,
    fit_lifespan_slope,
    lifespan_sweep,
    probe_inequality,
    probe_rpower,
    synthetic_runner,
    t_nonincreasing,
    thread_count,
    y_domination,
    y_functional,
)
from critwave.core import DampingSpec, Profile, ProblemSpec
from critwave.solver import Controls, Lifespan, RadialGrid, SimOutcome

SUB = DampingSpec(1.0, -1.0, 0.0)
CRIT = DampingSpec(1.0, -1.0, 1.0)
EPS = [0.2 * 2.0**-j for j in range(6)]


def sub_prob():
    return ProblemSpec(1, 1.5, 0.1, Profile("bump", 8.0, 1.0))


def grid():
    return RadialGrid(1, 0.1, 20)


def test_eta_shape():
    s = np.linspace(0, 1.5, 301)
    e = eta(s)
    assert np.all(e[s <= 0.5] == 1.0) and np.all(e[s >= 1.0] == 0.0)
    assert np.all(np.diff(e) <= 1e-15)
    assert np.all(eta_star(s) <= e) and np.all(eta_star(s)[s <= 0.5] == 0.0)


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_probe_support_and_star(beta):
    pr = TestFunctionProbe(4.0, 1.5, -1.0, beta, dim=2)
    T, R = np.meshgrid(np.linspace(0, 6, 61), np.linspace(0, 4, 81), indexing="ij")
    assert np.all(pr.psi_star(T, R) <= pr.psi(T, R))
    assert np.all(pr.psi(T[T >= pr.t_extent], R[T >= pr.t_extent]) == 0.0)
    assert np.all(pr.psi(T[R >= pr.r_extent], R[R >= pr.r_extent]) == 0.0)
    with pytest.raises(ValueError):
        TestFunctionProbe(4.0, 1.5, -1.0, 0.5)


@pytest.mark.parametrize("beta,dim", [(0.0, 1), (1.0, 3)])
def test_probe_derivatives_against_fd(beta, dim):
    pr = TestFunctionProbe(3.0, 2.0, -1.0, beta, dim=dim)
    t = np.linspace(0.2, 2.5, 9)[:, None]
    r = np.linspace(0.3, 1.9, 11)[None, :]
    h = 1e-4
    pt, ptt, lap = pr.derivatives(t, r)
    fd_t = (pr.psi(t + h, r) - pr.psi(t - h, r)) / (2 * h)
    fd_tt = (pr.psi(t + h, r) - 2 * pr.psi(t, r) + pr.psi(t - h, r)) / h**2
    pp, pm, p0 = pr.psi(t, r + h), pr.psi(t, r - h), pr.psi(t, r)
    fd_lap = (pp - 2 * p0 + pm) / h**2 + (dim - 1) / r * (pp - pm) / (2 * h)
    assert np.max(np.abs(fd_t - pt)) < 1e-6
    assert np.max(np.abs(fd_tt - ptt)) < 1e-4
    assert np.max(np.abs(fd_lap - lap)) < 1e-4


def test_probe_rpower():
    # p=1.5, N=1, alpha=-1: 1/(p-1) - (N-alpha)/2 = 1, p' = 3
    assert probe_rpower(TestFunctionProbe(2.0, 1.5, -1.0, 0.0)) == pytest.approx(-2 / 9)
    assert probe_rpower(TestFunctionProbe(2.0, 1.5, -1.0, 1.0)) == pytest.approx(-4 / 9)


def test_derivative_constants_finite():
    for beta in (0.0, 1.0):
        c = derivative_constants(TestFunctionProbe(2.0, 1.5, -1.0, beta))
        assert all(0 < v < np.inf for v in c.values())


def test_synthetic_subcritical_slope_exact():
    res = lifespan_sweep(SUB, sub_prob(), EPS, grid(), Controls(), runner=synthetic_runner(lambda e: e**-1.5))
    assert abs(res.fitted_slope - res.target_slope) < 1e-10
    assert res.target_slope == pytest.approx(-1.5)
    assert res.excluded == [0.2]
    assert t_nonincreasing(res)


def test_synthetic_critical_slope_exact():
    prob = ProblemSpec(1, 2.0, 0.1, Profile("bump", 1.0, 1.0))
    eps = [0.7 * 2.0 ** (-j / 4) for j in range(5)]
    res = lifespan_sweep(CRIT, prob, eps, grid(), Controls(),
                         runner=synthetic_runner(lambda e: math.exp(e**-0.5)))
    assert res.regime == "critical"
    assert abs(res.fitted_slope + 0.5) < 1e-10
    assert res.excluded == []


def test_sweep_excludes_non_blowup():
    def runner(spec, prob, g, c):
        if prob.epsilon < 0.02:
            return SimOutcome("HorizonReached", None, [], 200.0, 0, 0.0)
        T = prob.epsilon**-1.5
        return SimOutcome("Blowup", Lifespan(T, T, T, T), [], T, 0, 0.0)

    res = lifespan_sweep(SUB, sub_prob(), EPS, grid(), Controls(), runner=runner)
    assert res.excluded == [0.0125, 0.00625]
    assert [pt.used for pt in res.points] == [True, True, True, True, False, False]
    assert res.fitted_slope == pytest.approx(-1.5, abs=1e-10)
    assert "points" in res.to_dict() and res.to_json().startswith("{")


def test_sweep_gates():
    neg = ProblemSpec(1, 1.5, 0.1, Profile("bump", -1.0, 1.0))
    with pytest.raises(ValueError):
        lifespan_sweep(SUB, neg, EPS, grid(), Controls(), runner=synthetic_runner(lambda e: 1 / e))
    with pytest.raises(ValueError):
        lifespan_sweep(SUB, ProblemSpec(1, 3.0, 0.1, Profile("bump", 1.0, 1.0)), EPS, grid(), Controls())
    with pytest.raises(ValueError):
        lifespan_sweep(SUB, sub_prob(), [0.1, 0.1], grid(), Controls())


def test_sweep_thread_order():
    def runner(spec, prob, g, c):
        time.sleep(0.02 * prob.epsilon / 0.2)
        T = 1.0 / prob.epsilon
        return SimOutcome("Blowup", Lifespan(T, T, T, T), [], T, 0, 0.0)

    res = lifespan_sweep(SUB, sub_prob(), EPS, grid(), Controls(), runner=runner, threads=4)
    assert list(res.eps) == EPS
    assert np.allclose(res.T, 1.0 / np.array(EPS))


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CRITWAVE_THREADS", "1")
    assert thread_count(6) == 1
    monkeypatch.delenv("CRITWAVE_THREADS")
    assert 1 <= thread_count(6) <= 6


def test_t_nonincreasing_detects_violation():
    pts = [SweepPoint(0.2, "Blowup", 5.0, 5.0, 5.0), SweepPoint(0.1, "Blowup", 4.0, 4.0, 4.0)]
    assert not t_nonincreasing(SweepResult("subcritical", pts, -1.0, -1.5))


def test_fit_slope_errors():
    with pytest.raises(ValueError):
        fit_lifespan_slope([0.1], [2.0], "subcritical")
    with pytest.raises(ValueError):
        fit_lifespan_slope([0.1, 0.2], [0.5, 2.0], "critical")
    with pytest.raises(ValueError):
        fit_lifespan_slope([0.1, 0.2], [3.0, 2.0], "other")


def uniform_record(t_end, r_end, dim=1):
    t = np.linspace(0, t_end, 257)
    r = np.linspace(0, r_end, 257)
    return SpacetimeRecord(t, r, np.ones((t.size, r.size)), dim, t_end)


def test_y_functional_monotone_and_dominated():
    p = 2.0
    rec = uniform_record(8.0, 8.0 ** (2 / 3) + 0.1)
    assert y_functional(rec, p, -1.0, 1.0, 1.0) == 0.0
    ys = [y_functional(rec, p, -1.0, 1.0, rho) for rho in (1.5, 2.0, 4.0, 8.0)]
    assert np.all(np.diff(ys) > 0)
    y, bound = y_domination(rec, p, -1.0, 1.0, 4.0)
    assert 0 < y <= bound
    with pytest.raises(ValueError):
        y_functional(rec, 1.5, -1.0, 1.0, 2.0)


def test_insufficient_coverage():
    rec = uniform_record(2.0, 1.0)
    with pytest.raises(InsufficientCoverage):
        y_functional(rec, 2.0, -1.0, 1.0, 4.0)
    prob = sub_prob()
    with pytest.raises(InsufficientCoverage):
        probe_inequality(rec, TestFunctionProbe(4.0, 1.5, -1.0, 0.0), prob, SUB)


def test_probe_zero_data():
    rec = SpacetimeRecord(np.linspace(0, 1, 5), np.linspace(0, 1, 5), np.zeros((5, 5)), 1, 1.0)
    prob = ProblemSpec(1, 1.5, 0.0, Profile("bump", 1.0, 1.0))
    res = probe_inequality(rec, TestFunctionProbe(8.0, 1.5, -1.0, 0.0), prob, SUB)
    assert res.lhs == 0.0 and math.isnan(res.ratio)
