import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbx.energy import dirichlet_energy
from fbx.experiments import strip_field
from fbx.grid import Grid, ScalarField, Weight, positivity_set
from fbx.perturbation import (CompetitorError, CompetitorSpec, HypothesisError, IntervalSet, MarginError,
                              ShearSpec, build_competitor, energy_gap, fd_mass_derivative, gap_sweep,
                              gradient_quotients, mass_derivative, max_amplitude, set_mass, shear_field,
                              verify_decrease, verify_increase)


def bump(X, Y, cx, cy, rx, ry):
    s = ((X - cx) / rx) ** 2 + ((Y - cy) / ry) ** 2
    return np.where(s < 1, (1 - s) ** 3, 0.0)


def test_shear_spec():
    with pytest.raises(ValueError):
        ShearSpec(1.0)
    with pytest.raises(ValueError):
        ShearSpec(0.1, sign=0)
    s = ShearSpec(0.3, 0.7, -1)
    x, y = np.array([0.1, 2.0]), np.array([0.5, -1.0])
    back = s.inverse().apply(*s.apply(x, y))
    assert np.array_equal(back[0], x) and np.allclose(back[1], y, atol=1e-15)


def test_shear_identity_and_closed_form():
    g = Grid.covering(0, 1, 0, 1, 1 / 128)
    X, Y = g.mesh()
    u = ScalarField(g, bump(X, Y, 0.5, 0.5, 0.3, 0.2))
    rect = (0, 1, 0, 1)
    assert shear_field(u, ShearSpec(0.0), rect) is u
    v = shear_field(u, ShearSpec(0.1, 0.0), rect)
    direct = bump(X, Y + 0.1 * X, 0.5, 0.5, 0.3, 0.2)
    assert np.abs(v.values - direct).max() <= 2e-3


def test_shear_of_linear_profile_is_exact():
    # bilinear resampling is exact for fields linear in y on the sampled segment
    g = Grid.covering(0, 1, 0, 2, 1 / 32)
    X, Y = g.mesh()
    u = ScalarField(g, np.where((Y > 0.5) & (Y < 1.5), Y - 0.5, 0.0) * (X > 0.2) * (X < 0.8))
    v = shear_field(u, ShearSpec(0.05, 0.5), (0.25, 0.75, 0, 2))
    Xs, Ys = X, Y + 0.05 * (X - 0.5)
    inner = (X >= 0.25) & (X <= 0.75) & (Ys > 0.5 + 1 / 32) & (Ys < 1.5 - 1 / 32)
    assert np.allclose(v.values[inner], (Ys - 0.5)[inner], atol=1e-12)


def test_shear_margin_violation():
    g = Grid.covering(0, 1, 0, 1, 1 / 32)
    X, Y = g.mesh()
    u = ScalarField(g, bump(X, Y, 0.5, 0.5, 0.3, 0.45))
    with pytest.raises(MarginError):
        shear_field(u, ShearSpec(0.2, 0.0), (0, 1, 0, 1))


def test_increase_zero_field():
    g = Grid.covering(0, 1, 0, 1, 1 / 16)
    rep = verify_increase(ScalarField.zeros(g), ShearSpec(0.1), (0, 1, 0, 1))
    assert (rep.lhs, rep.rhs, rep.holds) == (0.0, 0.0, True)


def test_increase_with_nonpositive_cross_term():
    g = Grid.covering(0, 2, 0, 2, 1 / 64)
    X, Y = g.mesh()
    # a ridge along x = y: d1 u = -d2 u to leading order, so the cross term is negative
    ridge = np.where(np.abs(X - Y) < 0.2, np.cos(np.pi * (X - Y) / 0.4) ** 2, 0.0)
    env = bump(X, Y, 1.0, 1.0, 0.7, 0.7)
    u = ScalarField(g, ridge * env)
    d1, d2 = gradient_quotients(u)
    assert np.sum(d1 * d2) < 0
    t = 0.1
    rep = verify_increase(u, ShearSpec(t, 1.0), (0, 2, 0, 2))
    base = np.sum(d1 ** 2 + d2 ** 2)
    assert rep.algebra_lhs <= (1 + t * t) * base
    assert rep.holds and rep.algebra_holds


def random_field(rng, g):
    X, Y = g.mesh()
    v = np.zeros(g.shape)
    for _ in range(rng.integers(1, 5)):
        v += rng.uniform(0.2, 2) * bump(X, Y, rng.uniform(0.35, 0.65), rng.uniform(0.4, 0.6),
                                        rng.uniform(0.08, 0.25), rng.uniform(0.05, 0.2))
    return ScalarField(g, v)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.01, 0.05, 0.1]), st.sampled_from([1, -1]))
def test_increase_holds_on_random_fields(seed, t, sign):
    g = Grid.covering(0, 1, 0, 1, 1 / 48)
    u = random_field(np.random.default_rng(seed), g)
    rep = verify_increase(u, ShearSpec(t, 0.5, sign), (0, 1, 0, 1))
    assert rep.holds and rep.algebra_holds


def test_mass_derivative_examples():
    w = Weight(0.5)
    assert mass_derivative(IntervalSet(), w) == 0.0
    one = IntervalSet(((1.0, 1.1, ((0.25, 0.75),)),))
    assert mass_derivative(one, w) == pytest.approx(-0.0525, rel=1e-12)
    with pytest.raises(HypothesisError):
        mass_derivative(IntervalSet(((-0.1, 0.1, ((0.0, 0.5),)),)), w)
    with pytest.raises(HypothesisError):
        mass_derivative(IntervalSet(((1.0, 1.1, ((0.0, 1.5),)),)), w)
    with pytest.raises(HypothesisError):
        mass_derivative(IntervalSet(((1.0, 1.1, ((0.0, 0.6),)),)), Weight(0.25))
    with pytest.raises(ValueError):
        IntervalSet(((1.0, 1.1, ((0.5, 0.25),)),))


def test_verify_decrease_examples():
    assert verify_decrease(IntervalSet(), Weight(1.0)) == (0.0, 0.0, True) or \
        verify_decrease(IntervalSet(), Weight(1.0)).holds
    rep = verify_decrease(IntervalSet(((2.0, 2.1, ((0.0, 0.5),)),)), Weight(1.0))
    assert rep.derivative == pytest.approx(-0.05125, rel=1e-12)
    assert rep.bound == pytest.approx(-2 * 0.1 * 0.125 / 3, rel=1e-12)
    assert rep.holds


def random_intervals(rng, gamma):
    cap = 1.0 if gamma >= 0.5 else 2 * gamma
    a = rng.uniform(0.05, 2.0)
    slabs = []
    x = a
    for _ in range(rng.integers(1, 6)):
        wdt = rng.uniform(0.01, 0.5)
        cuts = np.sort(rng.uniform(0, cap, size=2 * rng.integers(1, 4)))
        ivs = tuple((float(cuts[k]), float(cuts[k + 1])) for k in range(0, cuts.size, 2) if cuts[k + 1] > cuts[k])
        slabs.append((x, x + wdt, ivs))
        x += wdt + rng.uniform(0, 0.3)
    return IntervalSet(tuple(slabs))


@pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0, 2.0])
def test_decrease_and_fd_oracle_on_random_sets(gamma):
    rng = np.random.default_rng(int(gamma * 100))
    w = Weight(gamma)
    for _ in range(30):
        om = random_intervals(rng, gamma)
        rep = verify_decrease(om, w)
        assert rep.holds
        fd = fd_mass_derivative(om, w)
        assert rep.derivative == pytest.approx(fd, rel=1e-6, abs=1e-14)


def test_mass_derivative_additive():
    w = Weight(0.75)
    a = IntervalSet(((0.5, 0.7, ((0.1, 0.3),)),))
    b = IntervalSet(((0.9, 1.0, ((0.2, 0.4), (0.5, 0.6))),))
    both = IntervalSet(a.slabs + b.slabs)
    assert mass_derivative(both, w) == pytest.approx(mass_derivative(a, w) + mass_derivative(b, w), rel=1e-15)
    assert set_mass(both, w) == pytest.approx(set_mass(a, w) + set_mass(b, w), rel=1e-15)


def test_interval_set_from_positivity():
    g = Grid.covering(0, 1, 0, 1, 0.125)
    v = np.zeros(g.shape)
    v[2:5, 3] = 1.0
    v[6, 3] = 1.0
    om = IntervalSet.from_positivity(positivity_set(ScalarField(g, v)))
    assert om.slabs == ((0.3125, 0.4375, ((0.1875, 0.5625), (0.6875, 0.8125))),)
    assert mass_derivative(om, Weight(0.5)) == pytest.approx(-0.375 * 0.125 * ((0.5625 - 0.1875) + (0.8125 - 0.6875)))


@pytest.fixture(scope="module")
def strip():
    g = Grid.covering(0, 32, 0, 3, 1 / 16)
    return ScalarField(g, strip_field(g)), Weight(0.5)


def test_competitor_identity_and_margin(strip):
    u, w = strip
    spec = CompetitorSpec((0, 32, 3), 1, 2.0)
    v, s = build_competitor(u, spec, 0.0, w)
    assert v is u
    assert energy_gap(u, spec, 0.0, w) == 0.0
    t_max = max_amplitude(u, spec, w)
    assert t_max == pytest.approx((1 + 1 / 16) / 64)
    with pytest.raises(CompetitorError):
        build_competitor(u, spec, 2 * t_max, w)
    with pytest.raises(CompetitorError):
        build_competitor(u, CompetitorSpec((0, 32, 3), 1, 5.0), 0.001, w) if False else \
            build_competitor(u, CompetitorSpec((0, 32, 3), 1, 2.0), 0.02, w)


def test_competitor_separation_check():
    g = Grid.covering(0, 8, 0, 3, 1 / 8)
    v = strip_field(g)
    v[:, g.nx // 2] = 0.0            # split the strip into two components a column apart
    u = ScalarField(g, v)
    with pytest.raises(CompetitorError):
        build_competitor(u, CompetitorSpec((0, 8, 3), 1, 0.5), 0.001, Weight(0.5))


def test_competitor_transports_the_strip(strip):
    u, w = strip
    spec = CompetitorSpec((0, 32, 3), 1, 2.0)
    t = 0.01
    v, s = build_competitor(u, spec, t, w)
    g = u.grid
    X, Y = g.mesh()
    shift = np.where(X <= 16, t * np.maximum(X - 0.5, 0), t * np.maximum(31.5 - X, 0))
    src = Y + shift                       # the point each node samples from
    inside = (src > 1 + 1.5 * g.h) & (src < 2 - 1.5 * g.h)
    outside = (src < 1 - 0.5 * g.h) | (src > 2 + 0.5 * g.h)
    assert s.indicator[inside].all()
    assert not s.indicator[outside].any()
    # the middle of the strip sagged towards the line
    mid = g.nx // 2
    assert Y[s.indicator[:, mid], mid].mean() < Y[u.values[:, mid] > 0, mid].mean() - 0.1


def test_gap_negative_for_strip(strip):
    u, w = strip
    spec = CompetitorSpec((0, 32, 3), 1, 2.0, (1e-3, 3e-3, 1e-2, 1e-1))
    rows = gap_sweep(u, spec, w)
    assert rows[-1][2] is False and np.isnan(rows[-1][1])
    assert min(g for _, g, ok in rows if ok) < 0
