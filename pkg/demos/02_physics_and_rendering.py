"""
Simulated tasks and the software renderer
=========================================

Three 2D control tasks (pendulum, cartpole, ballincup) are integrated in
pure numpy and drawn by an anti-aliased rasterizer. This script rolls each
one forward under random torques and prints a few frames as ASCII art, so
the whole pipeline is visible without a display.
"""

import numpy as np

from pve.envs import make_env
from pve.render import render

RAMP = " .:-=+*#%@"      # dark to bright


def ascii_frame(img: np.ndarray) -> str:
    """Map a (H, W, 3) image in [0, 1] to characters by luminance."""
    lum = img @ np.array([0.299, 0.587, 0.114])
    idx = (lum * (len(RAMP) - 1)).round().astype(int)
    return "\n".join("".join(RAMP[i] for i in row) for row in idx[::2])


rng = np.random.default_rng(7)

for task in ("pendulum", "cartpole", "ballincup"):
    env = make_env(task)
    state = env.reset(rng)
    print(f"\n=== {task} ===")
    print("features:", dict(zip(env.feature_names,
                                env.features(state).round(2).tolist())))

    # Step with uniformly random actions, the same policy used to collect
    # training data, and show the scene every 8 steps.
    for t in range(17):
        action = rng.uniform(-env.max_action, env.max_action,
                             size=env.action_dim)
        state = env.step(state, action, rng)
        if t % 8 == 0:
            print(f"-- step {t} reward {env.reward(state):.2f}")
            print(ascii_frame(render(task, state, height=36, width=48)))

    # The cartpole scene can also be drawn by a camera that tracks the cart.
    if task == "cartpole":
        print("-- same state, moving camera")
        print(ascii_frame(render(task, state, camera="moving",
                                 height=36, width=48)))
