"""Neural fitted Q-iteration on top of a frozen encoder.

The agent never sees pixels directly: each decision encodes the last two
consecutive frames into [s_p; s_v] (10-D) and picks from a small discrete
action set. Episodes are a fixed number of environment steps with action
repeat. After each collection epoch the Q-network is refit twice on the
full replay with bootstrapped targets

    y = r + max_a' Q(s', a')   clipped to <= 0, no discounting,

where rewards are shifted to be non-positive (r - 1 per environment step),
so holding the goal state yields 0 and Q stays anchored. Terminal (episode
timeout) transitions use y = r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import build_encoder, combined_state
from .layers import Dense, Network, Sigmoid
from .optim import Adam
from .render import render
from .envs import make_env
from .tensor import Tensor, no_grad

__all__ = ["ACTION_SETS", "RLConfig", "Replay", "build_qnet", "q_values",
           "compute_targets", "nfq_epoch", "run_learning_curve", "LearningCurve"]

# discrete approximations of the continuous actuators
ACTION_SETS = {
    "pendulum": np.array([[-2.0], [0.0], [2.0]], dtype=np.float32),
    "cartpole": np.array([[-10.0], [0.0], [10.0]], dtype=np.float32),
    "ballincup": np.array([[fx, fy] for fx in (-8.0, 0.0, 8.0)
                           for fy in (-8.0, 0.0, 8.0)], dtype=np.float32),
}

ACTION_REPEAT = {"pendulum": 4, "cartpole": 4, "ballincup": 6}
RL_CAMERA = {"pendulum": "static", "cartpole": "moving", "ballincup": "static"}


@dataclass
class RLConfig:
    task: str = "pendulum"
    camera: str = "static"
    action_repeat: int = 4
    episodes_per_epoch: int = 30
    fitted_passes: int = 2
    episode_steps: int = 200
    eps_floor: float = 0.1
    eps_decay: float = 0.95
    regression_steps: int = 120
    regression_batch: int = 512
    q_lr: float = 1e-3
    alpha: float = 10.0          # velocity scale for random (untrained) encoders

    @staticmethod
    def for_task(task: str, **overrides) -> "RLConfig":
        cfg = RLConfig(task=task, camera=RL_CAMERA[task],
                       action_repeat=ACTION_REPEAT[task])
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise TypeError(f"RLConfig has no field {key!r}")
            setattr(cfg, key, value)
        return cfg

    @property
    def decisions_per_episode(self) -> int:
        return self.episode_steps // self.action_repeat


class Replay:
    """Growing store of encoded transitions (full history is kept)."""

    def __init__(self, state_dim: int = 10):
        self.states = np.empty((0, state_dim), dtype=np.float32)
        self.action_idx = np.empty(0, dtype=np.int64)
        self.rewards = np.empty(0, dtype=np.float32)
        self.next_states = np.empty((0, state_dim), dtype=np.float32)
        self.terminal = np.empty(0, dtype=bool)

    def __len__(self) -> int:
        return self.states.shape[0]

    def append(self, s, a, r, s2, term):
        self.states = np.concatenate([self.states, s])
        self.action_idx = np.concatenate([self.action_idx, a])
        self.rewards = np.concatenate([self.rewards, r])
        self.next_states = np.concatenate([self.next_states, s2])
        self.terminal = np.concatenate([self.terminal, term])


def build_qnet(rng: np.random.Generator, state_dim: int, n_actions: int) -> Network:
    d = state_dim + n_actions
    return Network([
        Dense(d, 250, rng, init="xavier", name="q1"), Sigmoid(),
        Dense(250, 250, rng, init="xavier", name="q2"), Sigmoid(),
        Dense(250, 1, rng, init="xavier", name="q_out"),
    ], name="qnet")


def _action_inputs(states: np.ndarray, n_actions: int) -> np.ndarray:
    """Tile states with every one-hot action: (N, D) -> (N * A, D + A)."""
    n, d = states.shape
    tiled = np.repeat(states, n_actions, axis=0)
    onehots = np.tile(np.eye(n_actions, dtype=np.float32), (n, 1))
    return np.concatenate([tiled, onehots], axis=1)


def q_values(qnet: Network, states: np.ndarray, n_actions: int,
             chunk: int = 16384) -> np.ndarray:
    """Q(s, a) for every state and discrete action, shape (N, A)."""
    inputs = _action_inputs(states.astype(np.float32), n_actions)
    out = np.empty(inputs.shape[0], dtype=np.float32)
    with no_grad():
        for start in range(0, inputs.shape[0], chunk):
            stop = min(start + chunk, inputs.shape[0])
            out[start:stop] = qnet.forward(Tensor(inputs[start:stop])).data[:, 0]
    return out.reshape(states.shape[0], n_actions)


def _greedy(qvals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Argmax per row with uniform tie-breaking."""
    best = qvals.max(axis=1, keepdims=True)
    choices = np.empty(qvals.shape[0], dtype=np.int64)
    for i in range(qvals.shape[0]):
        ties = np.flatnonzero(qvals[i] >= best[i])
        choices[i] = ties[rng.integers(len(ties))] if len(ties) > 1 else ties[0]
    return choices


def _encode_pairs(enc_net, alpha, prev_frames, frames):
    """Combined states from consecutive frame pairs, one per episode."""
    stacked = np.concatenate([prev_frames, frames]).astype(np.float32)
    with no_grad():
        pos = enc_net.forward(Tensor(stacked)).data
    n = frames.shape[0]
    p_prev, p = pos[:n], pos[n:]
    return combined_state(p, alpha * (p - p_prev))


def collect_episodes(env, enc_net, alpha: float, qnet: Network,
                     config: RLConfig, epsilon: float,
                     rng: np.random.Generator):
    """Run episodes_per_epoch episodes in lockstep; returns transitions and
    per-episode shifted returns."""
    E = config.episodes_per_epoch
    n_actions = ACTION_SETS[config.task].shape[0]
    actions = ACTION_SETS[config.task]
    h, w, _ = enc_net.input_shape

    env_states = [env.reset(rng) for _ in range(E)]

    def render_all():
        return np.stack([render(config.task, s, config.camera, h, w)
                         for s in env_states])

    frames = render_all()
    prev_frames = frames.copy()      # zero velocity at episode start

    decisions = config.decisions_per_episode
    S = np.empty((decisions + 1, E, 10), dtype=np.float32)
    A = np.empty((decisions, E), dtype=np.int64)
    R = np.zeros((decisions, E), dtype=np.float32)

    for d in range(decisions):
        S[d] = _encode_pairs(enc_net, alpha, prev_frames, frames)
        qvals = q_values(qnet, S[d], n_actions)
        acts = _greedy(qvals, rng)
        explore = rng.random(E) < epsilon
        random_acts = rng.integers(0, n_actions, size=E)
        acts = np.where(explore, random_acts, acts)
        A[d] = acts
        for k in range(config.action_repeat):
            if k == config.action_repeat - 1:
                prev_frames = render_all()
            for e in range(E):
                env_states[e] = env.step(env_states[e], actions[acts[e]], rng)
                R[d, e] += env.reward(env_states[e]) - 1.0
        frames = render_all()
    S[decisions] = _encode_pairs(enc_net, alpha, prev_frames, frames)

    term = np.zeros((decisions, E), dtype=bool)
    term[-1] = True
    transitions = (S[:-1].reshape(-1, 10), A.reshape(-1), R.reshape(-1),
                   S[1:].reshape(-1, 10), term.reshape(-1))
    returns = R.sum(axis=0)
    return transitions, returns


def compute_targets(qnet: Network, replay: Replay, n_actions: int) -> np.ndarray:
    """Bellman targets over the replay: y = min(r + max_a' Q(s', a'), 0).

    Transitions flagged terminal take y = r (no bootstrap). With the
    shifted rewards (r <= 0) the clamp anchors goal-region values at 0.
    """
    next_q = q_values(qnet, replay.next_states, n_actions).max(axis=1)
    targets = replay.rewards + next_q
    np.minimum(targets, 0.0, out=targets)
    return np.where(replay.terminal, replay.rewards, targets)


def fitted_pass(qnet: Network, replay: Replay, config: RLConfig,
                n_actions: int, rng: np.random.Generator) -> float:
    """One fitted-Q iteration: recompute targets on the full replay, then
    regress with Adam. Returns the mean regression loss of the pass."""
    if len(replay) == 0:
        raise ValueError("fitted pass needs a non-empty replay")
    targets = compute_targets(qnet, replay, n_actions)

    onehots = np.eye(n_actions, dtype=np.float32)[replay.action_idx]
    inputs = np.concatenate([replay.states, onehots], axis=1)
    adam = Adam(qnet.param_tensors(), lr=config.q_lr)
    n = len(replay)
    losses = []
    for _ in range(config.regression_steps):
        idx = rng.integers(0, n, size=min(config.regression_batch, n))
        pred = qnet.forward(Tensor(inputs[idx]))
        loss = (pred - Tensor(targets[idx, None])).square().mean()
        qnet.zero_grad()
        loss.backward()
        adam.step()
        losses.append(loss.item())
    return float(np.mean(losses))


def nfq_epoch(env, enc_net, alpha: float, qnet: Network, replay: Replay,
              config: RLConfig, epoch: int, rng: np.random.Generator):
    """Collect one epoch of episodes, refit the Q-net, return
    (per-episode returns, per-pass regression losses)."""
    epsilon = max(config.eps_floor, config.eps_decay ** epoch)
    transitions, returns = collect_episodes(env, enc_net, alpha, qnet,
                                            config, epsilon, rng)
    replay.append(*transitions)
    n_actions = ACTION_SETS[config.task].shape[0]
    pass_losses = [fitted_pass(qnet, replay, config, n_actions, rng)
                   for _ in range(config.fitted_passes)]
    return returns, pass_losses


@dataclass
class LearningCurve:
    returns: np.ndarray        # (n_trials, epochs) mean episode return
    pass_losses: np.ndarray    # (n_trials, epochs, fitted_passes)

    @property
    def mean(self) -> np.ndarray:
        return self.returns.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = self.returns.shape[0]
        if n < 2:
            return np.zeros(self.returns.shape[1])
        return self.returns.std(axis=0, ddof=1) / np.sqrt(n)

    @property
    def min(self) -> np.ndarray:
        return self.returns.min(axis=0)

    @property
    def max(self) -> np.ndarray:
        return self.returns.max(axis=0)


def run_learning_curve(task: str, encoder, config: RLConfig, epochs: int,
                       n_trials: int, base_seed: int = 0,
                       height: int = 64, width: int = 64,
                       log=None) -> LearningCurve:
    """Learning curves over seeded trials.

    ``encoder`` is a (net, alpha) pair for the trained arm, or None for the
    random-encoder baseline, which draws fresh untrained encoder weights per
    trial.
    """
    all_returns = np.empty((n_trials, epochs))
    all_losses = np.empty((n_trials, epochs, config.fitted_passes))
    for trial in range(n_trials):
        rng = np.random.default_rng([base_seed, trial])
        if encoder is None:
            enc_net = build_encoder(np.random.default_rng([base_seed, trial, 99]),
                                    height, width)
            alpha = config.alpha
        else:
            enc_net, alpha = encoder
        env = make_env(task)
        qnet = build_qnet(np.random.default_rng([base_seed, trial, 7]), 10,
                          ACTION_SETS[task].shape[0])
        replay = Replay()
        for epoch in range(epochs):
            returns, losses = nfq_epoch(env, enc_net, alpha, qnet, replay,
                                        config, epoch, rng)
            all_returns[trial, epoch] = float(np.mean(returns))
            all_losses[trial, epoch] = losses
            if log and (epoch + 1) % 10 == 0:
                log(f"trial {trial} epoch {epoch + 1}: "
                    f"mean return {all_returns[trial, epoch]:.2f}")
    return LearningCurve(all_returns, all_losses)
