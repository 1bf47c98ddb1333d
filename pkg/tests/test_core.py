import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critwave.core import (
    DampingSpec,
    Profile,
    ProblemSpec,
    critical_exponent,
    damping_coefficient,
    initial_mass_functional,
    lifespan_exponent,
    radial_integral,
    smoothstep5,
    surface_area,
)

# Values from adaptive scipy.integrate.quad of the radial integrand (tol 1e-14),
# u0 = 1.3 * bump, u1 = 0.7 * cosine, both of radius 1.
MASS_ORACLE = {
    (2, 1.5, -1.0, 0.5): 2.599642267245645,
    (3, 1.0, -2.0, 0.0): 2.655815719060855,
    (1, 2.0, -0.5, 1.0): 2.3804026802326845,
}


def test_damping_coefficient_examples():
    assert damping_coefficient(DampingSpec(1.0, -3.0, 2.0), 0.0, 0.0) == 1.0
    assert damping_coefficient(DampingSpec(2.0, -2.0, 1.0), 1.0, math.sqrt(3.0)) == pytest.approx(4.0, rel=1e-15)
    assert damping_coefficient(DampingSpec(1.0, -1.0, 0.0), 17.0, 0.0) == 1.0


def test_damping_spec_validation():
    with pytest.raises(ValueError):
        DampingSpec(0.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        DampingSpec(1.0, -1.0, -1.0)
    assert DampingSpec(1.0, -1.0, -0.5).beta_plus == 0.0
    assert DampingSpec(1.0, -1.0, 0.7).beta_plus == 0.7


def test_b_time():
    spec = DampingSpec(1.0, -1.0, 1.0)
    assert spec.B_time(0.0) == pytest.approx(0.5)
    assert spec.B_time(3.0) == pytest.approx(8.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, -0.01), st.floats(0, 2), st.floats(0, 50), st.floats(0, 50), st.floats(0, 5))
def test_damping_monotone(alpha, beta, t, r, dr):
    spec = DampingSpec(1.3, alpha, beta)
    assert damping_coefficient(spec, t, r + dr) >= damping_coefficient(spec, t, r)
    assert damping_coefficient(spec, t + dr, r) <= damping_coefficient(spec, t, r)


def test_critical_exponent_examples():
    assert critical_exponent(1, 0.0) == 3.0
    assert critical_exponent(3, -1.0) == 1.5
    assert critical_exponent(2, 0.0) == 2.0
    with pytest.raises(ValueError):
        critical_exponent(2, 2.0)


def test_critical_exponent_monotone():
    alphas = np.linspace(-3, 0.5, 15)
    for N in range(1, 5):
        vals = [critical_exponent(N, a) for a in alphas]
        assert np.all(np.diff(vals) > 0)
    for a in alphas:
        vals = [critical_exponent(N, a) for N in range(1, 6)]
        assert np.all(np.diff(vals) < 0)


def test_lifespan_exponent_examples():
    reg, k = lifespan_exponent(DampingSpec(1.0, -1.0, 0.0), ProblemSpec(1, 1.5, 0.1))
    assert reg == "subcritical" and k == pytest.approx(1.5, rel=1e-15)
    assert lifespan_exponent(DampingSpec(1.0, -1.0, 1.0), ProblemSpec(1, 2.0, 0.1)) == ("critical", 1.0)
    assert lifespan_exponent(DampingSpec(1.0, 0.0, 0.0), ProblemSpec(2, 2.0, 0.1)) == ("critical", 1.0)
    with pytest.raises(ValueError):
        lifespan_exponent(DampingSpec(1.0, -1.0, 0.0), ProblemSpec(1, 3.0, 0.1))


def test_kappa_diverges_at_pc():
    spec = DampingSpec(1.0, -1.0, 0.0)
    pc = critical_exponent(2, -1.0)
    ks = [lifespan_exponent(spec, ProblemSpec(2, pc * (1 - 10.0**-k), 0.1))[1] for k in range(1, 8)]
    assert np.all(np.diff(ks) > 0)


def test_profiles_vanish_outside_support():
    r = np.linspace(0, 3, 301)
    for shape in ("bump", "cosine", "plateau"):
        v = Profile(shape, 2.0, 1.5)(r)
        assert np.all(v[r >= 1.5] == 0.0)
        assert np.all(v[r < 1.4] > 0.0)
    assert Profile("bump", 1.0, 1.0)(0.0) == pytest.approx(1.0)
    assert smoothstep5(0.5) == pytest.approx(0.5)


def test_problem_spec_checks():
    with pytest.raises(ValueError):
        ProblemSpec(1, 1.0, 0.1)
    with pytest.raises(ValueError):
        ProblemSpec(1, 2.0, 0.1, Profile("bump", 1.0, 2.0), R0=1.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        ProblemSpec(3, 4.0, 0.1)
    assert any("local-existence" in str(x.message) for x in w)


def test_mass_functional_u1_only():
    # u1 with unit integral in N = 1: a cosine of radius 1 integrates to 1 over (-1, 1)
    prob = ProblemSpec(1, 2.0, 1.0, Profile("zero", 0.0, 1.0), Profile("cosine", 1.0, 1.0))
    assert initial_mass_functional(DampingSpec(1.0, -1.0, 0.0), prob) == pytest.approx(1.0, rel=1e-12)


def test_mass_functional_positive():
    prob = ProblemSpec(2, 2.0, 1.0, Profile("plateau", 0.3, 1.0))
    assert initial_mass_functional(DampingSpec(0.2, -1.0, 0.0), prob) > 0


@pytest.mark.parametrize("key,value", MASS_ORACLE.items())
def test_mass_functional_oracle(key, value):
    N, a0, alpha, beta = key
    prob = ProblemSpec(N, 1.5, 1.0, Profile("bump", 1.3, 1.0), Profile("cosine", 0.7, 1.0))
    got = initial_mass_functional(DampingSpec(a0, alpha, beta), prob)
    assert abs(got / value - 1) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 3), st.floats(-2, 2), st.integers(1, 3))
def test_mass_functional_linear(c, amp, u1amp, N):
    spec = DampingSpec(1.0, -1.0, 0.0)
    base = ProblemSpec(N, 1.5, 1.0, Profile("bump", amp, 1.0), Profile("cosine", u1amp, 1.0))
    scaled = ProblemSpec(N, 1.5, 1.0, Profile("bump", c * amp, 1.0), Profile("cosine", c * u1amp, 1.0))
    f0, f1 = initial_mass_functional(spec, base), initial_mass_functional(spec, scaled)
    assert f1 == pytest.approx(c * f0, rel=1e-12, abs=1e-12)


def test_radial_integral_ball_volume():
    r = np.linspace(0, 1, 1001)
    for N in (1, 2, 3):
        vol = radial_integral(np.ones_like(r), r, N)
        assert vol == pytest.approx(surface_area(N) / N, rel=1e-10)
