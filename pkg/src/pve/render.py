"""Anti-aliased rasterizer for the task scenes.

Scenes are lists of primitive shapes (disc, capsule, axis-aligned rectangle)
in world coordinates. Rasterization evaluates each shape's signed distance
on the pixel grid and composites with a one-pixel smooth edge, giving
sub-pixel position information at low resolutions.

Cameras: "static" covers the full reachable workspace; "moving" recenters
horizontally on the cart (cart-pole only; the other tasks have a fixed
workspace so both modes are identical there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvState, BallInCupEnv, CartPoleEnv, PendulumEnv

__all__ = ["render", "scene_shapes", "camera_window", "CAMERA_IDS", "CAMERA_NAMES"]

CAMERA_IDS = {"static": 0, "moving": 1}
CAMERA_NAMES = {v: k for k, v in CAMERA_IDS.items()}

BACKGROUND = np.array([0.08, 0.08, 0.10], dtype=np.float32)


@dataclass
class Shape:
    color: np.ndarray

    def sdf(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class Disc(Shape):
    center: np.ndarray
    radius: float

    def sdf(self, px, py):
        return np.hypot(px - self.center[0], py - self.center[1]) - self.radius


@dataclass
class Capsule(Shape):
    a: np.ndarray
    b: np.ndarray
    radius: float

    def sdf(self, px, py):
        ax, ay = self.a
        dx, dy = self.b[0] - ax, self.b[1] - ay
        seg_sq = dx * dx + dy * dy
        if seg_sq < 1e-12:
            return np.hypot(px - ax, py - ay) - self.radius
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / seg_sq, 0.0, 1.0)
        return np.hypot(px - (ax + t * dx), py - (ay + t * dy)) - self.radius


@dataclass
class Rect(Shape):
    center: np.ndarray
    half_w: float
    half_h: float

    def sdf(self, px, py):
        qx = np.abs(px - self.center[0]) - self.half_w
        qy = np.abs(py - self.center[1]) - self.half_h
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside


# per-object colors, kept distinct so tests can isolate silhouettes
POLE_COLOR = np.array([0.90, 0.35, 0.20], dtype=np.float32)
TIP_COLOR = np.array([0.95, 0.80, 0.25], dtype=np.float32)
PIVOT_COLOR = np.array([0.45, 0.45, 0.50], dtype=np.float32)
CART_COLOR = np.array([0.25, 0.55, 0.90], dtype=np.float32)
TRACK_COLOR = np.array([0.30, 0.30, 0.34], dtype=np.float32)
CUP_COLOR = np.array([0.25, 0.80, 0.45], dtype=np.float32)
BALL_COLOR = np.array([0.95, 0.30, 0.30], dtype=np.float32)
STRING_COLOR = np.array([0.55, 0.55, 0.58], dtype=np.float32)

# square view half-extents in world units
PENDULUM_VIEW = 0.75
CARTPOLE_STATIC_VIEW = 1.45   # track_limit + pole length + margin
CARTPOLE_MOVING_VIEW = 0.75
BALLINCUP_VIEW = 0.85


def camera_window(task: str, state: EnvState, camera: str):
    """Return (center_xy, half_extent) of the square world window."""
    if camera not in CAMERA_IDS:
        raise ValueError(f"unknown camera {camera!r}; expected static or moving")
    if task == "pendulum":
        return np.zeros(2), PENDULUM_VIEW
    if task == "cartpole":
        if camera == "moving":
            return np.array([state.q[0], 0.0]), CARTPOLE_MOVING_VIEW
        return np.zeros(2), CARTPOLE_STATIC_VIEW
    if task == "ballincup":
        return np.zeros(2), BALLINCUP_VIEW
    raise ValueError(f"unknown task {task!r}")


def scene_shapes(task: str, state: EnvState) -> list:
    """World-space shapes for a state, back to front."""
    if task == "pendulum":
        length = PendulumEnv.length
        th = state.q[0]
        tip = np.array([length * np.sin(th), length * np.cos(th)])
        return [
            Capsule(POLE_COLOR, np.zeros(2), tip, 0.045),
            Disc(TIP_COLOR, tip, 0.07),
            Disc(PIVOT_COLOR, np.zeros(2), 0.035),
        ]
    if task == "cartpole":
        x, th = state.q
        pole_len = 2.0 * CartPoleEnv.pole_com
        base = np.array([x, 0.0])
        tip = base + pole_len * np.array([np.sin(th), np.cos(th)])
        lim = CartPoleEnv.track_limit
        return [
            Rect(TRACK_COLOR, np.array([0.0, -0.10]), lim + 0.18, 0.02),
            Rect(CART_COLOR, base, 0.24, 0.105),
            Capsule(POLE_COLOR, base, tip, 0.05),
            Disc(TIP_COLOR, tip, 0.075),
        ]
    if task == "ballincup":
        cup = state.q[:2]
        ball = state.q[2:]
        wall_h, half_w, thick = 0.16, 0.09, 0.05
        return [
            Capsule(STRING_COLOR, cup, ball, 0.012),
            Rect(CUP_COLOR, cup + [0.0, -0.02], half_w + thick, thick),
            Rect(CUP_COLOR, cup + [-half_w - thick / 2, wall_h / 2 - 0.02],
                 thick / 2, wall_h / 2 + thick / 2),
            Rect(CUP_COLOR, cup + [half_w + thick / 2, wall_h / 2 - 0.02],
                 thick / 2, wall_h / 2 + thick / 2),
            Disc(BALL_COLOR, ball, 0.085),
        ]
    raise ValueError(f"unknown task {task!r}")


def _pixel_grid(height: int, width: int, center, half_extent: float):
    scale = 2.0 * half_extent / width
    xs = center[0] + (np.arange(width) + 0.5 - width / 2.0) * scale
    ys = center[1] - (np.arange(height) + 0.5 - height / 2.0) * scale
    px, py = np.meshgrid(xs, ys)
    return px, py, scale


def rasterize(shapes, height: int, width: int, center, half_extent: float) -> np.ndarray:
    px, py, scale = _pixel_grid(height, width, center, half_extent)
    img = np.broadcast_to(BACKGROUND, (height, width, 3)).astype(np.float32).copy()
    for shape in shapes:
        d = shape.sdf(px, py) / scale          # distance in pixels
        alpha = np.clip(0.5 - d, 0.0, 1.0).astype(np.float32)[..., None]
        img = img * (1.0 - alpha) + shape.color * alpha
    return np.clip(img, 0.0, 1.0)


def render(task: str, state: EnvState, camera: str = "static",
           height: int = 64, width: int = 64) -> np.ndarray:
    """Render a state to a float32 RGB image in [0, 1], shape (H, W, 3)."""
    center, half_extent = camera_window(task, state, camera)
    return rasterize(scene_shapes(task, state), height, width, center, half_extent)
