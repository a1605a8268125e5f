import numpy as np
import pytest

from ocontrol.augmented import discretize_lti
from ocontrol.linalg import spectral_radius
from ocontrol.plants import (
    CartPolePlant,
    CompanionFamily,
    LinearDragPlant,
    MsdPlant,
    cartpole_dynamics,
    obstacle_cost,
    obstacle_cost_derivatives,
    rk4_step,
)


def test_msd_continuous_matrix():
    plant = MsdPlant()
    np.testing.assert_allclose(plant.a_c(), [[0.0, 1.0], [-2.0, -1.0]])


def test_obstacle_cost_boundary_values():
    assert obstacle_cost(0.5) == pytest.approx(0.0, abs=1e-12)
    assert obstacle_cost(1.0) == 0.0
    assert obstacle_cost(0.0) == np.inf


def test_obstacle_cost_high_precision_value():
    """Cross-check one interior value against an arbitrary-precision evaluation."""
    import mpmath

    mpmath.mp.dps = 50
    d, d_zero = mpmath.mpf("0.25"), mpmath.mpf("0.5")
    s = mpmath.pi * (d - d_zero) / (2 * d_zero)
    expected = mpmath.mpf("0.01") * (mpmath.tan(s) / s - 1)
    assert obstacle_cost(0.25) == pytest.approx(float(expected), rel=1e-12)


def test_obstacle_cost_monotone_decreasing():
    grid = np.linspace(0.01, 0.499, 200)
    values = [obstacle_cost(d) for d in grid]
    assert all(values[i] > values[i + 1] for i in range(len(values) - 1))


def test_obstacle_cost_derivatives_match_finite_differences():
    for d in (0.05, 0.15, 0.3, 0.45):
        c1, c2 = obstacle_cost_derivatives(d)
        eps = 1e-7
        fd1 = (obstacle_cost(d + eps) - obstacle_cost(d - eps)) / (2 * eps)
        eps = 1e-5
        fd2 = (obstacle_cost(d + eps) - 2 * obstacle_cost(d) + obstacle_cost(d - eps)) / eps**2
        assert c1 == pytest.approx(fd1, rel=1e-6)
        assert c2 == pytest.approx(fd2, rel=1e-5)


def test_obstacle_cost_smooth_at_zero_cost_distance():
    c1, _ = obstacle_cost_derivatives(0.5 - 1e-9)
    assert abs(c1) < 1e-6


def test_cartpole_equilibria():
    up = cartpole_dynamics(np.array([0.0, 0.0, 0.0, 0.0]), 0.0)
    down = cartpole_dynamics(np.array([0.0, 0.0, np.pi, 0.0]), 0.0)
    np.testing.assert_allclose(up, (0.0, 0.0), atol=1e-12)
    np.testing.assert_allclose(down, (0.0, 0.0), atol=1e-12)


def test_cartpole_lagrangian_oracle():
    """Accelerations match an independent mass-matrix Lagrangian solve."""
    plant = CartPolePlant()
    mc, mp, el = plant.m_cart, plant.m_pole, plant.length
    dv, dw, g = plant.d_linear, plant.d_angular, plant.gravity
    rng = np.random.default_rng(11)
    states = [np.array([0.0, 0.0, np.pi / 2, 0.0])] + [rng.normal(size=4) for _ in range(20)]
    forces = [0.0] + list(rng.normal(size=20))
    for state, force in zip(states, forces):
        _, v, th, om = state
        mass = np.array(
            [[mc + mp, -mp * el * np.cos(th)], [-mp * el * np.cos(th), mp * el**2]]
        )
        rhs = np.array(
            [
                force - dv * v - mp * el * om**2 * np.sin(th),
                mp * g * el * np.sin(th) - dw * om,
            ]
        )
        expected = np.linalg.solve(mass, rhs)
        xdd, thdd = plant.accelerations(state, force)
        np.testing.assert_allclose([xdd, thdd], expected, atol=1e-10)


def test_cartpole_energy_conservation_without_damping():
    plant = CartPolePlant(d_linear=0.0, d_angular=0.0)
    state = np.array([0.0, 0.0, 2.0, 0.0])
    e0 = plant.energy(state)
    for _ in range(1000):
        state = rk4_step(plant, state, np.zeros(1), 0.01)
    drift = abs(plant.energy(state) - e0) / abs(e0)
    assert drift < 1e-4


def test_cartpole_linearization_stability_structure():
    plant = CartPolePlant()
    a_up, _ = _discrete_jacobians(plant, np.zeros(4))
    a_down, _ = _discrete_jacobians(plant, np.array([0.0, 0.0, np.pi, 0.0]))
    assert spectral_radius(a_up) > 1.0
    assert spectral_radius(a_down) <= 1.0 + 1e-12


def _discrete_jacobians(plant, x_eq):
    from ocontrol.augmented import linearize_step

    _, f_x, f_u = linearize_step(plant, x_eq, np.zeros(1))
    return f_x, f_u


def test_rk4_step_fixed_point():
    plant = MsdPlant()

    class _Zero:
        def dynamics(self, x, u):
            return np.zeros_like(x)

    state = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rk4_step(_Zero(), state, np.zeros(1), 0.1), state)


def test_rk4_step_exponential_decay():
    class _Decay:
        def dynamics(self, x, u):
            return -x

    out = rk4_step(_Decay(), np.array([1.0]), np.zeros(1), 0.1)
    # single classical step: fourth-order Taylor remainder is ~8.2e-8 at dt=0.1
    assert abs(out[0] - np.exp(-0.1)) < 1e-7
    assert abs(out[0] - np.exp(-0.1)) > 1e-9


def test_companion_family_structure():
    family = CompanionFamily()
    for order in range(1, 6):
        a, b = family.member(order)
        assert a.shape == (order, order)
        assert family.controllability_index(order) == order
        eigs = np.linalg.eigvals(a)
        np.testing.assert_allclose(sorted(eigs.real), sorted(family.poles[:order]), atol=1e-10)
        assert np.max(np.abs(eigs.imag)) < 1e-10


def test_companion_relative_degree():
    """The first state reacts to the input only after exactly n steps."""
    family = CompanionFamily()
    for order in range(1, 6):
        a, b = family.member(order)
        c = family.output_row(order)
        markov = [float((c @ np.linalg.matrix_power(a, k) @ b)[0, 0]) for k in range(order + 1)]
        assert all(abs(mk) < 1e-14 for mk in markov[: order - 1])
        assert abs(markov[order - 1]) > 1e-12


def test_lds_scenario_gradient_matches_finite_differences(rng):
    plant = LinearDragPlant(obstacles=((0.8, 0.7, 0.25), (2.3, 2.2, 0.25)))
    oracle = plant.sqp_oracle(np.zeros(6))
    eps = 1e-6
    checked = 0
    while checked < 30:
        chi = rng.normal(size=6) * 1.5
        if plant.min_distance(chi[:2])[0] <= 0.05:
            continue
        grad = oracle.gradient(chi)
        for j in range(6):
            cp, cm = chi.copy(), chi.copy()
            cp[j] += eps
            cm[j] -= eps
            fd = (oracle.value(cp) - oracle.value(cm)) / (2 * eps)
            assert grad[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)
        checked += 1


def test_lds_min_distance_tie_breaks_lowest_index():
    plant = LinearDragPlant(obstacles=((1.0, 0.0, 0.2), (-1.0, 0.0, 0.2)))
    _, idx = plant.min_distance(np.zeros(2))
    assert idx == 0


def test_lds_discrete_matches_closed_form():
    plant = LinearDragPlant()
    a, b = plant.discrete()
    a_ref, b_ref = discretize_lti(plant.a_c(), plant.b_c(), plant.dt)
    np.testing.assert_allclose(a, a_ref, atol=1e-14)
    np.testing.assert_allclose(b, b_ref, atol=1e-14)
