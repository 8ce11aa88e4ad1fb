"""Tests for velocity models, collision and streaming."""

from fractions import Fraction

import numpy as np
import pytest

from carleman_lbm.errors import InvalidParameterError
from carleman_lbm.lattice_model import (
    FluidState,
    LatticeGeometry,
    collide,
    equilibrium,
    moments,
    stream,
    streaming_source,
    velocity_model,
)


def test_weights_match_the_velocity_tables():
    d1 = velocity_model(1)
    assert d1.weights == (Fraction(2, 3), Fraction(1, 6), Fraction(1, 6))

    d2 = velocity_model(2)
    assert d2.Q == 9
    assert d2.weights[0] == Fraction(4, 9)
    assert d2.weights[-1] == Fraction(1, 36)

    d3 = velocity_model(3)
    assert d3.Q == 27
    assert d3.weights[-1] == Fraction(1, 216)
    for model in (d1, d2, d3):
        assert sum(model.weights) == 1


def test_velocity_ordering_is_canonical(d2q9):
    assert d2q9.velocities[:5] == ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
    assert d2q9.velocities[5:] == ((1, 1), (1, -1), (-1, 1), (-1, -1))
    assert d2q9.name == "D2Q9"


def test_opposite_is_an_involution():
    for D in (1, 2, 3):
        model = velocity_model(D)
        opp = model.opposite
        assert np.array_equal(opp[opp], np.arange(model.Q))
        assert np.array_equal(model.e[opp], -model.e)


def test_gram_matrix(d1q3):
    assert np.array_equal(d1q3.gram, np.array([[0, 0, 0], [0, 1, -1], [0, -1, 1]]))


def test_unsupported_dimension():
    with pytest.raises(InvalidParameterError):
        velocity_model(4)


def test_wall_mask_must_match_shape():
    with pytest.raises(ValueError):
        LatticeGeometry(shape=(4, 4), walls=np.zeros((4, 3), dtype=bool))


def test_fluid_state_rejects_non_finite():
    with pytest.raises(ValueError):
        FluidState(g=np.array([0.0, np.nan, 0.0]))


def test_equilibrium_reproduces_its_moments(d2q9, rng):
    drho = rng.normal(scale=0.01, size=5)
    u = rng.normal(scale=0.05, size=(5, 2))
    state = FluidState(g=equilibrium(drho, u, d2q9))
    got_rho, got_u = moments(state, d2q9)
    np.testing.assert_allclose(got_rho, drho, atol=1e-15)
    np.testing.assert_allclose(got_u, u, atol=1e-15)


def test_collision_fixed_point_at_equilibrium(d2q9, rng):
    g = equilibrium(rng.normal(scale=0.01, size=7), rng.normal(scale=0.05, size=(7, 2)), d2q9)
    out = collide(FluidState(g=g), d2q9, tau_bar_star=0.8)
    np.testing.assert_allclose(out.g, g, atol=1e-14)


def test_collision_conserves_mass_and_momentum(d2q9, rng):
    state = FluidState(g=rng.normal(scale=0.02, size=6 * 9))
    before = moments(state, d2q9)
    after = moments(collide(state, d2q9, tau_bar_star=0.55), d2q9)
    np.testing.assert_allclose(after[0], before[0], atol=1e-13)
    np.testing.assert_allclose(after[1], before[1], atol=1e-13)


def test_quadratic_form_equals_moment_collision(rng):
    for D in (1, 2):
        model = velocity_model(D)
        state = FluidState(g=rng.normal(scale=0.05, size=4 * model.Q))
        a = collide(state, model, 0.7, method="moments")
        b = collide(state, model, 0.7, method="quadratic")
        np.testing.assert_allclose(a.g, b.g, atol=1e-14)


def test_collision_rejects_unstable_relaxation(d1q3):
    state = FluidState(g=np.zeros(3))
    with pytest.raises(InvalidParameterError):
        collide(state, d1q3, 0.5)
    with pytest.raises(InvalidParameterError):
        collide(state, d1q3, 0.7, method="cubic")


def test_streaming_is_a_permutation(d2q9, channel):
    for geom in (channel, LatticeGeometry.periodic(3, 2)):
        src = streaming_source(d2q9, geom)
        assert np.array_equal(np.sort(src), np.arange(geom.N * 9))


def test_streaming_preserves_the_norm_exactly(d2q9, channel, rng):
    state = FluidState(g=rng.normal(size=channel.N * 9))
    out = stream(state, d2q9, channel)
    assert out.t_star == 1
    assert np.array_equal(np.sort(out.g), np.sort(state.g))


def test_periodic_step_conserves_totals(d1q3, ring8, rng):
    state = FluidState(g=rng.normal(scale=0.05, size=8 * 3))
    out = stream(collide(state, d1q3, 0.6), d1q3, ring8)
    rho0, u0 = moments(state, d1q3)
    rho1, u1 = moments(out, d1q3)
    assert rho1.sum() == pytest.approx(rho0.sum(), abs=1e-13)
    assert u1.sum() == pytest.approx(u0.sum(), abs=1e-13)


def test_bounce_back_reflects_at_walls(d1q3):
    walls = np.zeros(8, dtype=bool)
    walls[0] = True
    geom = LatticeGeometry(shape=(8,), walls=walls)
    g = np.arange(24, dtype=float)
    out = stream(FluidState(g=g), d1q3, geom).g
    # +x population at site 1 comes back from its own -x slot
    assert out[1 * 3 + 1] == g[1 * 3 + 2]
    # -x population at site 7 comes back from its own +x slot
    assert out[7 * 3 + 2] == g[7 * 3 + 1]
    # wall nodes keep their populations
    assert np.array_equal(out[:3], g[:3])
    # bulk populations move one site
    assert out[4 * 3 + 1] == g[3 * 3 + 1]


def test_model_must_match_lattice_dimension(d1q3):
    with pytest.raises(InvalidParameterError):
        streaming_source(d1q3, LatticeGeometry.periodic(3, 2))
