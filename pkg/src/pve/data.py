"""Random-policy data collection and the binary trajectory dataset format.

A trajectory holds T+1 rendered observations, T actions, and T rewards
(reward of the state each action leads to). Observations are stored as
8-bit pixels; ground-truth simulator states ride along for evaluation only
and are never seen by the encoder.

File layout (little-endian):
  magic "PVED"
  header: 9 x u64 -- task id, camera mode, n_traj, traj_len (T),
          height, width, channels, action_dim, seed
  per trajectory: (T+1)*H*W*C u8 pixels, T*action_dim f32 actions, T f32 rewards
  optional section "PVES": u64 state_dim, then (T+1)*state_dim f32 true
          states per trajectory
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .envs import EnvState, make_env, TASK_IDS, TASK_NAMES
from .render import render, CAMERA_IDS, CAMERA_NAMES

__all__ = ["Trajectory", "Dataset", "collect", "save_dataset", "load_dataset"]

MAGIC = b"PVED"
STATE_TAG = b"PVES"


@dataclass
class Trajectory:
    observations: np.ndarray   # (T+1, H, W, C) uint8
    actions: np.ndarray        # (T, action_dim) float32
    rewards: np.ndarray        # (T,) float32
    states: np.ndarray | None = None   # (T+1, state_dim) float32, evaluation only

    def __post_init__(self):
        if self.observations.dtype != np.uint8:
            raise ValueError(
                f"observations must be uint8, got {self.observations.dtype}")
        T = self.actions.shape[0]
        if self.observations.shape[0] != T + 1:
            raise ValueError(
                f"trajectory needs T+1 observations for T actions, got "
                f"{self.observations.shape[0]} and {T}")
        if self.rewards.shape[0] != T:
            raise ValueError(f"rewards length {self.rewards.shape[0]} != {T}")

    @property
    def length(self) -> int:
        return self.actions.shape[0]


@dataclass
class Dataset:
    task: str
    camera: str
    seed: int
    trajectories: list[Trajectory] = field(default_factory=list)
    timestep: float = 0.05

    @property
    def n_traj(self) -> int:
        return len(self.trajectories)

    @property
    def traj_len(self) -> int:
        return self.trajectories[0].length

    @property
    def image_shape(self) -> tuple:
        return self.trajectories[0].observations.shape[1:]

    @property
    def action_dim(self) -> int:
        return self.trajectories[0].actions.shape[1]

    def normalized_observations(self) -> np.ndarray:
        """All observations as float32 in [0, 1], shape (n, T+1, H, W, C)."""
        obs = np.stack([t.observations for t in self.trajectories])
        return obs.astype(np.float32) / 255.0


def collect(task: str, n_traj: int, traj_len: int, seed: int,
            camera: str = "static", height: int = 64, width: int = 64,
            progress=None) -> Dataset:
    """Roll out uniformly random actions and render every visited state."""
    if camera not in CAMERA_IDS:
        raise ValueError(f"unknown camera {camera!r}")
    env = make_env(task)
    rng = np.random.default_rng(seed)
    dataset = Dataset(task=task, camera=camera, seed=seed, timestep=env.dt)
    for i in range(n_traj):
        state = env.reset(rng)
        obs = np.empty((traj_len + 1, height, width, 3), dtype=np.uint8)
        actions = np.empty((traj_len, env.action_dim), dtype=np.float32)
        rewards = np.empty(traj_len, dtype=np.float32)
        states = np.empty((traj_len + 1, 2 * state.q.shape[0]), dtype=np.float32)

        def snap(t, s):
            img = render(task, s, camera, height, width)
            obs[t] = np.round(img * 255.0).astype(np.uint8)
            states[t] = np.concatenate([s.q, s.qdot])

        snap(0, state)
        for t in range(traj_len):
            a = rng.uniform(-env.max_action, env.max_action, size=env.action_dim)
            state = env.step(state, a, rng)
            actions[t] = a
            rewards[t] = env.reward(state)
            snap(t + 1, state)
        dataset.trajectories.append(
            Trajectory(obs, actions, rewards, states))
        if progress is not None:
            progress(i + 1, n_traj)
    return dataset


def save_dataset(path, dataset: Dataset) -> None:
    first = dataset.trajectories[0]
    T = first.length
    h, w, c = first.observations.shape[1:]
    adim = first.actions.shape[1]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<9Q", TASK_IDS[dataset.task], CAMERA_IDS[dataset.camera],
                            dataset.n_traj, T, h, w, c, adim, dataset.seed))
        for traj in dataset.trajectories:
            f.write(traj.observations.tobytes())
            f.write(traj.actions.astype("<f4").tobytes())
            f.write(traj.rewards.astype("<f4").tobytes())
        if first.states is not None:
            f.write(STATE_TAG)
            sdim = first.states.shape[1]
            f.write(struct.pack("<Q", sdim))
            for traj in dataset.trajectories:
                f.write(traj.states.astype("<f4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        task_id, camera_id, n_traj, T, h, w, c, adim, seed = struct.unpack(
            "<9Q", f.read(72))
        if task_id not in TASK_NAMES:
            raise ValueError(f"{path}: unknown task id {task_id}")
        if camera_id not in CAMERA_NAMES:
            raise ValueError(f"{path}: unknown camera mode {camera_id}")
        dataset = Dataset(task=TASK_NAMES[task_id], camera=CAMERA_NAMES[camera_id],
                          seed=int(seed))
        obs_bytes = (T + 1) * h * w * c
        for _ in range(n_traj):
            obs = np.frombuffer(f.read(obs_bytes), dtype=np.uint8)
            obs = obs.reshape(T + 1, h, w, c).copy()
            actions = np.frombuffer(f.read(4 * T * adim), dtype="<f4")
            actions = actions.reshape(T, adim).astype(np.float32)
            rewards = np.frombuffer(f.read(4 * T), dtype="<f4").astype(np.float32)
            dataset.trajectories.append(Trajectory(obs, actions, rewards))
        tag = f.read(4)
        if tag == STATE_TAG:
            (sdim,) = struct.unpack("<Q", f.read(8))
            for traj in dataset.trajectories:
                states = np.frombuffer(f.read(4 * (T + 1) * sdim), dtype="<f4")
                traj.states = states.reshape(T + 1, sdim).astype(np.float32)
        elif tag:
            raise ValueError(f"{path}: unknown trailing section {tag!r}")
    return dataset
