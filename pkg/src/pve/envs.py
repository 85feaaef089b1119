"""2D physics for the three control tasks: pendulum, cart-pole, ball-in-cup.

States are generalized coordinates plus velocities. Integration is
semi-implicit Euler with substeps. Each task exposes:

  reset(rng)        -> EnvState with uniform start positions/velocities
  step(state, a)    -> next EnvState (action clipped to bounds)
  reward(state)     -> bounded shaped reward
  features(state)   -> ground-truth regression targets (cos/sin of angles,
                       positions, velocities) used only for evaluation

The pendulum torque limit is deliberately too weak for a single swing-up
(the energy a constant torque can inject over one monotonic swing is below
the potential gap to upright), so it must be pumped back and forth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["EnvState", "PendulumEnv", "CartPoleEnv", "BallInCupEnv",
           "make_env", "TASK_IDS", "TASK_NAMES"]

TASK_IDS = {"pendulum": 0, "cartpole": 1, "ballincup": 2}
TASK_NAMES = {v: k for k, v in TASK_IDS.items()}


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = (theta + np.pi) % (2.0 * np.pi) - np.pi
    if wrapped == -np.pi:
        wrapped = np.pi
    return float(wrapped)


@dataclass
class EnvState:
    """Generalized positions and velocities for one task instance."""
    q: np.ndarray
    qdot: np.ndarray

    def copy(self) -> "EnvState":
        return EnvState(self.q.copy(), self.qdot.copy())


class _BaseEnv:
    action_dim = 1
    dt = 0.05
    substeps = 2

    def __init__(self, **overrides):
        for key, value in overrides.items():
            if not hasattr(type(self), key):
                raise TypeError(f"{type(self).__name__} has no parameter {key!r}")
            setattr(self, key, value)
        self.nonfinite_resets = 0
        self._fallback_rng = np.random.default_rng(0)

    def clip_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape[0] != self.action_dim:
            raise ValueError(
                f"{type(self).__name__}: action dim {a.shape[0]} != {self.action_dim}"
            )
        return np.clip(a, -self.max_action, self.max_action)

    def step(self, state: EnvState, action, rng=None) -> EnvState:
        a = self.clip_action(action)
        h = self.dt / self.substeps
        q = state.q.astype(np.float64).copy()
        qd = state.qdot.astype(np.float64).copy()
        for _ in range(self.substeps):
            q, qd = self._substep(q, qd, a, h)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            self.nonfinite_resets += 1
            return self.reset(rng if rng is not None else self._fallback_rng)
        return self._finalize(q, qd)

    def _finalize(self, q, qd) -> EnvState:
        return EnvState(q, qd)


class PendulumEnv(_BaseEnv):
    """Torque-limited pendulum. q = [theta] with theta = 0 upright,
    theta = pi hanging down; positive theta counter-clockwise."""

    name = "pendulum"
    action_dim = 1

    mass = 1.0
    length = 0.5          # pivot to point mass
    gravity = 9.81
    damping = 0.05
    max_action = 2.0      # torque limit; well below m*g*l*2/pi
    max_start_speed = 4.0

    feature_names = ("cos_theta", "sin_theta", "theta_dot")
    feature_is_velocity = (False, False, True)

    def reset(self, rng: np.random.Generator) -> EnvState:
        theta = rng.uniform(-np.pi, np.pi)
        theta_dot = rng.uniform(-self.max_start_speed, self.max_start_speed)
        return EnvState(np.array([wrap_angle(theta)]), np.array([theta_dot]))

    def _substep(self, q, qd, a, h):
        inertia = self.mass * self.length ** 2
        torque = a[0] + self.mass * self.gravity * self.length * np.sin(q[0]) \
            - self.damping * qd[0]
        qd = qd + h * torque / inertia
        q = q + h * qd
        return q, qd

    def _finalize(self, q, qd):
        return EnvState(np.array([wrap_angle(q[0])]), qd)

    def reward(self, state: EnvState) -> float:
        return float((np.cos(state.q[0]) + 1.0) / 2.0)

    def energy(self, state: EnvState) -> float:
        """Kinetic + potential energy, zero at rest hanging down."""
        kin = 0.5 * self.mass * self.length ** 2 * state.qdot[0] ** 2
        pot = self.mass * self.gravity * self.length * (1.0 + np.cos(state.q[0]))
        return float(kin + pot)

    def features(self, state: EnvState) -> np.ndarray:
        th, thd = state.q[0], state.qdot[0]
        return np.array([np.cos(th), np.sin(th), thd], dtype=np.float32)


class CartPoleEnv(_BaseEnv):
    """Cart on a bounded track with a passive pole joint.
    q = [x, theta], theta = 0 pole upright."""

    name = "cartpole"
    action_dim = 1

    cart_mass = 1.0
    pole_mass = 0.1
    pole_com = 0.25       # pivot to pole center of mass; full length 0.5
    gravity = 9.81
    max_action = 10.0     # horizontal force on the cart
    track_limit = 0.8
    cart_damping = 0.1
    pole_damping = 0.01
    max_start_speed = 2.0

    feature_names = ("x_cart", "cos_theta", "sin_theta", "x_cart_dot", "theta_dot")
    feature_is_velocity = (False, False, False, True, True)

    def reset(self, rng: np.random.Generator) -> EnvState:
        x = rng.uniform(-0.9 * self.track_limit, 0.9 * self.track_limit)
        theta = rng.uniform(-np.pi, np.pi)
        xd = rng.uniform(-self.max_start_speed, self.max_start_speed)
        thd = rng.uniform(-2.0 * self.max_start_speed, 2.0 * self.max_start_speed)
        return EnvState(np.array([x, wrap_angle(theta)]), np.array([xd, thd]))

    def _substep(self, q, qd, a, h):
        mc, mp, l, g = self.cart_mass, self.pole_mass, self.pole_com, self.gravity
        x, th = q
        xd, thd = qd
        force = a[0] - self.cart_damping * xd
        sin, cos = np.sin(th), np.cos(th)
        total = mc + mp
        tmp = (force + mp * l * thd ** 2 * sin) / total
        th_acc = (g * sin - cos * tmp - self.pole_damping * thd / (mp * l)) / (
            l * (4.0 / 3.0 - mp * cos ** 2 / total))
        x_acc = tmp - mp * l * th_acc * cos / total
        xd = xd + h * x_acc
        thd = thd + h * th_acc
        x = x + h * xd
        th = th + h * thd
        # hard wall at the track ends
        if x > self.track_limit:
            x, xd = self.track_limit, 0.0
        elif x < -self.track_limit:
            x, xd = -self.track_limit, 0.0
        return np.array([x, th]), np.array([xd, thd])

    def _finalize(self, q, qd):
        return EnvState(np.array([q[0], wrap_angle(q[1])]), qd)

    def reward(self, state: EnvState) -> float:
        upright = (np.cos(state.q[1]) + 1.0) / 2.0
        margin = self.track_limit - abs(state.q[0])
        edge = np.clip(margin / (0.15 * self.track_limit), 0.0, 1.0)
        return float(upright * edge)

    def features(self, state: EnvState) -> np.ndarray:
        x, th = state.q
        xd, thd = state.qdot
        return np.array([x, np.cos(th), np.sin(th), xd, thd], dtype=np.float32)


class BallInCupEnv(_BaseEnv):
    """Planar cup driven by bounded force with strong damping; ball hangs from
    the cup on an inextensible string that only pulls when taut.
    q = [cup_x, cup_y, ball_x, ball_y]."""

    name = "ballincup"
    action_dim = 2

    cup_mass = 0.8
    ball_mass = 0.05
    gravity = 9.81
    string_length = 0.3
    max_action = 8.0
    cup_damping = 6.0      # strong damping: rapid direction changes, no drift
    ball_damping = 0.02
    cup_x_limit = 0.4
    cup_y_limit = 0.2
    catch_radius = 0.07    # ball-center to cup-mouth-center distance that counts
    max_start_speed = 1.0

    feature_names = ("cup_x", "cup_y", "ball_x", "ball_y",
                     "cup_x_dot", "cup_y_dot", "ball_x_dot", "ball_y_dot")
    feature_is_velocity = (False, False, False, False, True, True, True, True)

    def reset(self, rng: np.random.Generator) -> EnvState:
        cx = rng.uniform(-self.cup_x_limit, self.cup_x_limit)
        cy = rng.uniform(-self.cup_y_limit, self.cup_y_limit)
        phi = rng.uniform(-np.pi, np.pi)
        rad = self.string_length * np.sqrt(rng.uniform(0.25, 1.0))
        bx = cx + rad * np.sin(phi)
        by = cy - rad * np.cos(phi)
        cvel = rng.uniform(-self.max_start_speed, self.max_start_speed, size=2)
        bvel = rng.uniform(-2.0 * self.max_start_speed, 2.0 * self.max_start_speed, size=2)
        return EnvState(np.array([cx, cy, bx, by]),
                        np.array([cvel[0], cvel[1], bvel[0], bvel[1]]))

    def _substep(self, q, qd, a, h):
        cup = q[:2].copy()
        ball = q[2:].copy()
        cup_v = qd[:2].copy()
        ball_v = qd[2:].copy()

        cup_acc = (a - self.cup_damping * cup_v) / self.cup_mass
        cup_v = cup_v + h * cup_acc
        cup = cup + h * cup_v
        # cup confined to its region
        for i, lim in enumerate((self.cup_x_limit, self.cup_y_limit)):
            if cup[i] > lim:
                cup[i], cup_v[i] = lim, 0.0
            elif cup[i] < -lim:
                cup[i], cup_v[i] = -lim, 0.0

        ball_acc = np.array([0.0, -self.gravity]) - self.ball_damping * ball_v / self.ball_mass
        ball_v = ball_v + h * ball_acc
        ball = ball + h * ball_v

        # inextensible string from the cup anchor: project the ball back onto
        # the reachable disc and remove the separating radial velocity
        anchor = cup
        rel = ball - anchor
        dist = np.linalg.norm(rel)
        if dist > self.string_length:
            direction = rel / dist
            ball = anchor + direction * self.string_length
            rel_v = ball_v - cup_v
            radial = np.dot(rel_v, direction)
            if radial > 0.0:
                ball_v = ball_v - radial * direction

        return np.concatenate([cup, ball]), np.concatenate([cup_v, ball_v])

    def mouth_center(self, state: EnvState) -> np.ndarray:
        """Center of the cup opening (slightly above the cup anchor)."""
        return state.q[:2] + np.array([0.0, 0.06])

    def caught(self, state: EnvState) -> bool:
        return bool(np.linalg.norm(state.q[2:] - self.mouth_center(state))
                    < self.catch_radius)

    def reward(self, state: EnvState) -> float:
        if self.caught(state):
            return 1.0
        dist = np.linalg.norm(state.q[2:] - self.mouth_center(state))
        return float(-min(dist, 1.0))

    def features(self, state: EnvState) -> np.ndarray:
        return np.concatenate([state.q, state.qdot]).astype(np.float32)


_ENV_CLASSES = {"pendulum": PendulumEnv, "cartpole": CartPoleEnv,
                "ballincup": BallInCupEnv}


def make_env(task: str) -> _BaseEnv:
    if task not in _ENV_CLASSES:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(_ENV_CLASSES)}")
    return _ENV_CLASSES[task]()
