"""Evaluation of learned state representations.

Three views on quality, none of which touch the encoder weights:
  - PCA of the 5-D position states (how many dimensions are actually used,
    and 2-D projections for plotting against reward)
  - regression probes from [s_p; s_v] to ground-truth physical features,
    reported as per-feature test MSE on standardized targets
  - embeddings tables joining encoded states with rewards and true features
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .encoder import combined_state, encode_frames
from .envs import make_env
from .layers import Dense, Network, ReLU
from .optim import Adam
from .tensor import Tensor

__all__ = ["pca", "effective_dim", "ProbeSpec", "probe", "Embedding",
           "embed_dataset"]


def pca(positions: np.ndarray):
    """Exact PCA of position states via eigendecomposition of the sample
    covariance. Returns (components, explained variance ratios, projected),
    components as rows, ratios sorted descending and summing to 1."""
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < x.shape[1] + 1:
        raise ValueError(f"need more samples than dimensions, got {x.shape}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    total = eigvals.sum()
    if total <= 0.0:
        raise ValueError("degenerate embedding: zero covariance, ratios undefined")
    components = eigvecs[:, order].T
    ratios = eigvals / total
    projected = centered @ components.T
    return components, ratios, projected


def effective_dim(ratios, threshold: float = 0.95) -> int:
    """Smallest k whose top-k explained variance reaches the threshold."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.size == 0 or not np.all(np.isfinite(r)) or np.any(r < -1e-9) \
            or not np.isclose(r.sum(), 1.0, atol=1e-6):
        raise ValueError(f"degenerate explained-variance ratios: {ratios}")
    cumulative = np.cumsum(r)
    return int(np.searchsorted(cumulative, threshold - 1e-12) + 1)


@dataclass
class ProbeSpec:
    hidden: tuple = (256, 256, 256)
    steps: int = 200
    lr: float = 1e-3
    batch: int = 256
    seed: int = 0


def probe(train_x: np.ndarray, train_y: np.ndarray,
          test_x: np.ndarray, test_y: np.ndarray,
          spec: ProbeSpec | None = None) -> np.ndarray:
    """Train a ReLU MLP regressor and return per-feature test MSE.

    Targets are standardized to zero mean / unit variance on the training
    split, so an MSE of 1.0 means no better than predicting the mean.
    Features whose training diverges are reported as NaN.
    """
    spec = spec or ProbeSpec()
    rng = np.random.default_rng(spec.seed)
    mu = train_y.mean(axis=0)
    sigma = train_y.std(axis=0)
    sigma = np.where(sigma > 1e-8, sigma, 1.0)
    ty = ((train_y - mu) / sigma).astype(np.float32)
    vy = ((test_y - mu) / sigma).astype(np.float32)
    tx = train_x.astype(np.float32)
    vx = test_x.astype(np.float32)

    layers = []
    d = tx.shape[1]
    for units in spec.hidden:
        layers += [Dense(d, units, rng, init="he", name=f"probe{len(layers)}"),
                   ReLU()]
        d = units
    layers.append(Dense(d, ty.shape[1], rng, init="xavier", name="probe_out"))
    net = Network(layers, name="probe")
    adam = Adam(net.param_tensors(), lr=spec.lr)

    n = tx.shape[0]
    for _ in range(spec.steps):
        idx = rng.integers(0, n, size=min(spec.batch, n))
        pred = net.forward(Tensor(tx[idx]))
        loss = (pred - Tensor(ty[idx])).square().mean()
        net.zero_grad()
        loss.backward()
        adam.step()

    from .tensor import no_grad
    with no_grad():
        pred = net.forward(Tensor(vx)).data
    if not np.all(np.isfinite(pred)):
        return np.full(ty.shape[1], np.nan, dtype=np.float64)
    return np.mean((pred - vy) ** 2, axis=0).astype(np.float64)


@dataclass
class Embedding:
    """Encoded states joined with rewards and true features, one row per
    (trajectory, t >= 1) pair; t = 0 has no velocity and is excluded."""
    traj_ids: np.ndarray      # (N,)
    ts: np.ndarray            # (N,)
    positions: np.ndarray     # (N, 5)
    velocities: np.ndarray    # (N, 5)
    rewards: np.ndarray       # (N,)
    features: np.ndarray | None  # (N, F) true features, None if dataset lacks states
    feature_names: tuple = ()
    feature_is_velocity: tuple = ()

    @property
    def states(self) -> np.ndarray:
        return combined_state(self.positions, self.velocities)


def embed_dataset(net, alpha: float, dataset: Dataset, chunk: int = 512) -> Embedding:
    """Encode every observation of a dataset and assemble the evaluation
    table. Velocities use the stored consecutive frames of each trajectory."""
    env = make_env(dataset.task)
    traj_ids, ts, pos_rows, vel_rows, rew_rows, feat_rows = [], [], [], [], [], []
    has_states = all(t.states is not None for t in dataset.trajectories)
    for i, traj in enumerate(dataset.trajectories):
        frames = traj.observations.astype(np.float32) / 255.0
        p = encode_frames(net, frames, chunk=chunk)       # (T+1, 5)
        v = alpha * np.diff(p, axis=0)                    # (T, 5), t = 1..T
        T = traj.length
        traj_ids.append(np.full(T, i))
        ts.append(np.arange(1, T + 1))
        pos_rows.append(p[1:])
        vel_rows.append(v)
        rew_rows.append(traj.rewards)
        if has_states:
            half = traj.states.shape[1] // 2
            feats = [env.features(_state_view(traj.states[t], half))
                     for t in range(1, T + 1)]
            feat_rows.append(np.stack(feats))
    return Embedding(
        traj_ids=np.concatenate(traj_ids),
        ts=np.concatenate(ts),
        positions=np.concatenate(pos_rows).astype(np.float32),
        velocities=np.concatenate(vel_rows).astype(np.float32),
        rewards=np.concatenate(rew_rows).astype(np.float32),
        features=np.concatenate(feat_rows).astype(np.float32) if has_states else None,
        feature_names=env.feature_names,
        feature_is_velocity=env.feature_is_velocity,
    )


def _state_view(row: np.ndarray, half: int):
    from .envs import EnvState
    return EnvState(row[:half].astype(np.float64), row[half:].astype(np.float64))
