"""Case-study plants: mass-spring-damper, planar drag, cart-pole, companion family.

Each plant exposes continuous dynamics (for simulation and discretization)
and, where relevant, objective weights and oracle builders for the
measurement modes. The cart-pole additionally provides analytic Jacobians
for the EKF path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ocontrol.augmented import discretize_lti
from ocontrol.errors import NonFiniteError
from ocontrol.measurements import ObjectiveOracle


def rk4_step(plant, state: np.ndarray, control: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order step with the control held constant."""
    u = np.atleast_1d(control)

    def f(x):
        return plant.dynamics(x, u)

    x = np.asarray(state, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("integration produced non-finite state")
    return out


@dataclass(frozen=True)
class MsdPlant:
    """Mass-spring-damper m x'' + b x' + k x = F, state (x, x')."""

    mass: float = 1.0
    damping: float = 1.0
    stiffness: float = 2.0
    dt: float = 0.1

    @property
    def n(self) -> int:
        return 2

    @property
    def m(self) -> int:
        return 1

    def a_c(self) -> np.ndarray:
        return np.array([[0.0, 1.0], [-self.stiffness / self.mass, -self.damping / self.mass]])

    def b_c(self) -> np.ndarray:
        return np.array([[0.0], [1.0 / self.mass]])

    def discrete(self) -> tuple[np.ndarray, np.ndarray]:
        return discretize_lti(self.a_c(), self.b_c(), self.dt)

    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a_c() @ x + self.b_c() @ np.atleast_1d(u)


def default_msd_weights() -> dict:
    """State penalty diag(10, 1), control penalty 0.1, control-rate penalty 0.1."""
    return {
        "q": np.diag([10.0, 1.0]),
        "r": np.array([[0.1]]),
        "m_cross": np.zeros((2, 1)),
        "r_tilde": np.array([[0.1]]),
    }


def obstacle_cost(d: float, d_zero: float = 0.5, scale: float = 0.01) -> float:
    """Potential-field proximity cost: infinite at contact, zero beyond d_zero.

    For 0 < d < d_zero the cost is scale * (tan(s)/s - 1) with
    s = pi (d - d_zero) / (2 d_zero); it decreases monotonically, reaching
    zero with zero slope at d_zero, and the branch beyond d_zero is clamped
    to zero so the cost is continuously differentiable everywhere positive.
    """
    if d <= 0.0:
        return np.inf
    if d >= d_zero:
        return 0.0
    s = np.pi * (d - d_zero) / (2.0 * d_zero)
    return scale * (np.tan(s) / s - 1.0)


def obstacle_cost_derivatives(d: float, d_zero: float = 0.5, scale: float = 0.01) -> tuple[float, float]:
    """(dC/dd, d2C/dd2) of the proximity cost; zero beyond the zero-cost distance."""
    if d <= 0.0 or d >= d_zero:
        return 0.0, 0.0
    s = np.pi * (d - d_zero) / (2.0 * d_zero)
    ds = np.pi / (2.0 * d_zero)
    t = np.tan(s)
    c2 = 1.0 + t * t
    f1 = (s * c2 - t) / s**2
    f2 = 2.0 * (s * s * c2 * t - s * c2 + t) / s**3
    return scale * f1 * ds, scale * f2 * ds * ds


@dataclass(frozen=True)
class LinearDragPlant:
    """Planar point mass with linear drag; state (x, y, x', y'), controls (Fx, Fy).

    Carries the obstacle-avoidance scenario parameters: circular obstacles,
    the zero-cost distance, and the tracking/obstacle objective weights.
    """

    mass: float = 1.0
    damping: float = 1.0
    dt: float = 0.1
    obstacles: tuple[tuple[float, float, float], ...] = ()
    d_zero: float = 0.5
    w_obstacle: float = 20000.0
    w_chi: np.ndarray = field(default_factory=lambda: np.diag([100.0, 1.0, 0.1, 0.1]))

    @property
    def n(self) -> int:
        return 4

    @property
    def m(self) -> int:
        return 2

    def a_c(self) -> np.ndarray:
        b_over_m = self.damping / self.mass
        a = np.zeros((4, 4))
        a[0, 2] = 1.0
        a[1, 3] = 1.0
        a[2, 2] = -b_over_m
        a[3, 3] = -b_over_m
        return a

    def b_c(self) -> np.ndarray:
        b = np.zeros((4, 2))
        b[2, 0] = 1.0 / self.mass
        b[3, 1] = 1.0 / self.mass
        return b

    def discrete(self) -> tuple[np.ndarray, np.ndarray]:
        return discretize_lti(self.a_c(), self.b_c(), self.dt)

    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a_c() @ x + self.b_c() @ np.atleast_1d(u)

    def min_distance(self, pos: np.ndarray) -> tuple[float, int]:
        """Surface distance to the nearest obstacle; ties break to the lowest index."""
        if not self.obstacles:
            return np.inf, -1
        best, best_i = np.inf, -1
        for i, (cx, cy, radius) in enumerate(self.obstacles):
            d = float(np.hypot(pos[0] - cx, pos[1] - cy)) - radius
            if d < best:
                best, best_i = d, i
        return best, best_i

    def scenario_cost(self, chi: np.ndarray, chi_ref: np.ndarray) -> float:
        """Tracking-plus-obstacle stage cost 0.5 (||e||^2_W + W_o C(d))."""
        err = chi[:4] - chi_ref[:4]
        d, _ = self.min_distance(chi[:2])
        return 0.5 * (err @ self.w_chi @ err + self.w_obstacle * obstacle_cost(d, self.d_zero))

    def _obstacle_pos_derivs(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradient, Gauss-Newton Hessian, and exact Hessian of C(d(pos)).

        All in the two position coordinates. The exact Hessian carries the
        tangential curvature term C'(d)/|pos - center|, which is negative
        (repulsive) inside the zero-cost radius.
        """
        d, idx = self.min_distance(pos)
        if idx < 0 or d >= self.d_zero:
            zero = np.zeros((2, 2))
            return np.zeros(2), zero, zero
        cx, cy, radius = self.obstacles[idx]
        offset = np.array([pos[0] - cx, pos[1] - cy])
        dist_c = float(np.linalg.norm(offset))
        unit = offset / dist_c if dist_c > 0.0 else np.array([1.0, 0.0])
        c1, c2 = obstacle_cost_derivatives(d, self.d_zero)
        grad = c1 * unit
        gn_hess = c2 * np.outer(unit, unit)
        exact_hess = gn_hess + (c1 / dist_c) * (np.eye(2) - np.outer(unit, unit))
        return grad, gn_hess, exact_hess

    def sqp_oracle(self, chi_ref: np.ndarray) -> ObjectiveOracle:
        """Scalar-objective oracle for the SQP measurement mode.

        The Hessian is the Gauss-Newton form (tracking weights plus the
        obstacle curvature along the distance gradient), which is positive
        semidefinite by construction; the exact obstacle Hessian is indefinite
        tangentially near an obstacle and would violate the second-order
        condition the mode requires.
        """
        w = self.w_chi
        w_o = self.w_obstacle

        def value(chi: np.ndarray) -> float:
            return self.scenario_cost(chi, chi_ref)

        def gradient(chi: np.ndarray) -> np.ndarray:
            g = np.zeros(6)
            g[:4] = w @ (chi[:4] - chi_ref[:4])
            obs_grad, _, _ = self._obstacle_pos_derivs(chi[:2])
            g[:2] += 0.5 * w_o * obs_grad
            return g

        def hessian(chi: np.ndarray) -> np.ndarray:
            h = np.zeros((6, 6))
            h[:4, :4] = w
            _, gn_hess, _ = self._obstacle_pos_derivs(chi[:2])
            h[:2, :2] += 0.5 * w_o * gn_hess
            return h

        return ObjectiveOracle(value=value, gradient=gradient, hessian=hessian)

    def gradient_oracle(self, chi_ref: np.ndarray, alpha: float = 1.0) -> ObjectiveOracle:
        """Residual oracle for the gradient measurement mode.

        The residual stacks the four tracking errors with the two components
        of the obstacle-cost gradient; the covariance is alpha times the
        block inverse weights, so alpha acts as the step size.
        """
        w_inv = np.zeros((6, 6))
        w_inv[:4, :4] = np.linalg.inv(self.w_chi)
        w_inv[4:, 4:] = np.eye(2) / self.w_obstacle

        def residual(chi: np.ndarray) -> np.ndarray:
            obs_grad, _, _ = self._obstacle_pos_derivs(chi[:2])
            return np.concatenate([chi[:4] - chi_ref[:4], obs_grad])

        def jacobian(chi: np.ndarray) -> np.ndarray:
            jac = np.zeros((6, 6))
            jac[:4, :4] = np.eye(4)
            _, _, exact_hess = self._obstacle_pos_derivs(chi[:2])
            jac[4:, :2] = exact_hess
            return jac

        return ObjectiveOracle(residual=residual, jacobian=jacobian, alpha=alpha, weight_inv=w_inv)


@dataclass(frozen=True)
class CartPolePlant:
    """Cart with a massless rigid pole, point mass at the tip.

    State (x, v, theta, omega) with theta measured from the vertical;
    equilibria at theta = 0 (upright, unstable) and theta = pi (hanging,
    stable). Control is the horizontal force on the cart.
    """

    m_cart: float = 0.25
    m_pole: float = 0.2
    length: float = 0.45
    d_linear: float = 0.05
    d_angular: float = 0.015
    gravity: float = 9.81
    dt: float = 0.1
    w_state: np.ndarray = field(default_factory=lambda: np.diag([1000.0, 1.0, 300.0, 25.0]))
    w_force: float = 20.0

    @property
    def n(self) -> int:
        return 4

    @property
    def m(self) -> int:
        return 1

    def accelerations(self, state: np.ndarray, force: float) -> tuple[float, float]:
        """Cart and pole angular accelerations (x'', theta'')."""
        _, v, th, om = state
        mc, mp, el = self.m_cart, self.m_pole, self.length
        dv, dw, g = self.d_linear, self.d_angular, self.gravity
        sin, cos = np.sin(th), np.cos(th)
        den = mp * sin**2 + mc
        xdd = (el * force - dv * el * v - mp * el**2 * om**2 * sin - (dw * om - g * mp * el * sin) * cos) / (
            el * den
        )
        thdd = (
            (mp * el * force - dv * mp * el * v) * cos
            - dw * (mc + mp) * om
            + (-(mp**2) * el**2 * om**2 * cos + g * mp**2 * el + g * mc * mp * el) * sin
        ) / (mp * el**2 * den)
        return float(xdd), float(thdd)

    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        xdd, thdd = self.accelerations(x, float(np.atleast_1d(u)[0]))
        return np.array([x[1], xdd, x[3], thdd])

    def jac_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        _, v, th, om = x
        force = float(np.atleast_1d(u)[0])
        mc, mp, el = self.m_cart, self.m_pole, self.length
        dv, dw, g = self.d_linear, self.d_angular, self.gravity
        sin, cos = np.sin(th), np.cos(th)
        den = mc + mp * sin**2
        jac = np.zeros((4, 4))
        jac[0, 1] = 1.0
        jac[2, 3] = 1.0
        jac[1, 1] = -dv / den
        jac[1, 2] = (
            2.0 * mp * (-force * el + dv * el * v + el**2 * mp * om**2 * sin + (dw * om - g * el * mp * sin) * cos) * sin * cos
            + den * (dw * om * sin - 2.0 * g * el * mp * sin**2 + g * el * mp - el**2 * mp * om**2 * cos)
        ) / (el * den**2)
        jac[1, 3] = -(dw * cos + 2.0 * el**2 * mp * om * sin) / (el * den)
        jac[3, 1] = -dv * cos / (el * den)
        jac[3, 2] = (
            el * den * (el * mp * om**2 * sin**2 + (-force + dv * v) * sin + (g * mc + g * mp - el * mp * om**2 * cos) * cos)
            - 2.0 * (-dw * om * (mc + mp) + el * mp * (force - dv * v) * cos + el * mp * (g * mc + g * mp - el * mp * om**2 * cos) * sin) * sin * cos
        ) / (el**2 * den**2)
        jac[3, 3] = -(dw * mc + dw * mp + el**2 * mp**2 * om * np.sin(2.0 * th)) / (el**2 * mp * den)
        return jac

    def jac_u(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        th = x[2]
        den = self.m_cart + self.m_pole * np.sin(th) ** 2
        jac = np.zeros((4, 1))
        jac[1, 0] = 1.0 / den
        jac[3, 0] = np.cos(th) / (self.length * den)
        return jac

    def energy(self, state: np.ndarray) -> float:
        """Mechanical energy consistent with the model's angle convention."""
        _, v, th, om = state
        mc, mp, el, g = self.m_cart, self.m_pole, self.length, self.gravity
        return (
            0.5 * (mc + mp) * v**2
            - mp * el * v * om * np.cos(th)
            + 0.5 * mp * el**2 * om**2
            + mp * g * el * np.cos(th)
        )

    def gradient_oracle(self, chi_ref: np.ndarray, alpha: float = 1.0) -> ObjectiveOracle:
        """State-error residual weighted by the swing-up objective."""
        ref = np.asarray(chi_ref, dtype=float)
        w_inv = np.linalg.inv(self.w_state)
        h = np.hstack([np.eye(4), np.zeros((4, 1))])

        def residual(chi: np.ndarray) -> np.ndarray:
            return chi[:4] - ref[:4]

        def jacobian(chi: np.ndarray) -> np.ndarray:
            return h

        return ObjectiveOracle(residual=residual, jacobian=jacobian, alpha=alpha, weight_inv=w_inv)


def cartpole_dynamics(state: np.ndarray, force: float, plant: CartPolePlant | None = None) -> tuple[float, float]:
    """Accelerations (x'', theta'') of the cart-pole for the given force."""
    plant = plant or CartPolePlant()
    return plant.accelerations(np.asarray(state, dtype=float), force)


DEFAULT_POLE_SET = (-0.1, -0.2, -0.3, -0.4, -0.5)


@dataclass(frozen=True)
class CompanionFamily:
    """Discrete companion-form systems of order 1..5 with a fixed pole set.

    The order-n member uses the first n poles; its controllability index
    equals n, and its first state responds to the input only after n steps,
    which makes the family a clean probe for horizon-adaptation metrics.
    """

    poles: tuple[float, ...] = DEFAULT_POLE_SET

    def member(self, order: int) -> tuple[np.ndarray, np.ndarray]:
        if not 1 <= order <= len(self.poles):
            raise ValueError(f"order must be in [1, {len(self.poles)}]")
        coeffs = np.poly(self.poles[:order])  # [1, c_{n-1}, ..., c_0]
        a = np.zeros((order, order))
        if order > 1:
            a[:-1, 1:] = np.eye(order - 1)
        a[-1, :] = -coeffs[1:][::-1]
        b = np.zeros((order, 1))
        b[-1, 0] = 1.0
        return a, b

    def output_row(self, order: int) -> np.ndarray:
        """Position-only output: the first companion coordinate."""
        c = np.zeros((1, order))
        c[0, 0] = 1.0
        return c

    def controllability_index(self, order: int) -> int:
        a, b = self.member(order)
        blocks = [b]
        for _ in range(order - 1):
            blocks.append(a @ blocks[-1])
        gram = np.hstack(blocks)
        rank = np.linalg.matrix_rank(gram)
        if rank != order:
            raise ValueError("companion member lost controllability")
        return order
