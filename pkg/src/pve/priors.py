"""The five unsupervised loss functions over encoded state sequences.

Each loss is a mini-batch statistical average over a PriorBatch of encoded
position sequences with derived velocities/accelerations:

  variation      mean exp(-dist) over all same-time cross-sequence position
                 pairs; pushes encodings of different situations apart
  slowness       mean squared step distance of positions (computed from raw
                 positions so it does not depend on the velocity scale alpha)
  inertia        mean squared acceleration norm, plus the unsquared variant;
                 the pair is reported and weighted separately
  conservation   mean squared change of the velocity magnitude
  controlability exp(-Cov(a[t,i], s_a[t+1,i])) per action dimension i,
                 biased (1/N) covariance over all valid samples

All are differentiable through the autograd graph back to the encoder.
Covariances are computed in centered form so constant actions give an
exactly zero covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import accelerations, velocities
from .tensor import Tensor

__all__ = ["PriorBatch", "LossReport", "variation_loss", "slowness_loss",
           "inertia_losses", "conservation_loss", "controlability_loss"]

LOSS_NAMES = ("variation", "slowness", "inertia", "inertia_abs",
              "conservation", "controlability")


@dataclass
class PriorBatch:
    """Encoded sequences plus the actions taken between their steps.

    positions: (B, T, D) tensor; velocities (B, T-1, D) start at t=1;
    accelerations (B, T-2, D) start at t=2; actions (B, T-1, action_dim)
    numpy array where actions[b, j] leads from step j to j+1.
    """
    positions: Tensor
    velocities: Tensor
    accelerations: Tensor
    actions: np.ndarray | None = None

    @staticmethod
    def from_positions(positions: Tensor, alpha: float,
                       actions: np.ndarray | None = None) -> "PriorBatch":
        if positions.data.ndim != 3:
            raise ValueError(f"positions must be (B, T, D), got {positions.data.shape}")
        B, T, _ = positions.data.shape
        if actions is not None and actions.shape[:2] != (B, T - 1):
            raise ValueError(
                f"actions must be (B={B}, T-1={T - 1}, action_dim), got {actions.shape}")
        vel = velocities(positions, alpha)
        acc = accelerations(vel)
        return PriorBatch(positions, vel, acc, actions)

    @property
    def n_sequences(self) -> int:
        return self.positions.data.shape[0]

    @property
    def n_steps(self) -> int:
        return self.positions.data.shape[1]


@dataclass
class LossReport:
    variation: float
    slowness: float
    inertia: float
    inertia_abs: float
    conservation: float
    controlability: tuple
    total: float

    def as_row(self) -> dict:
        row = {name: getattr(self, name) for name in LOSS_NAMES[:-1]}
        for i, v in enumerate(self.controlability):
            row[f"controlability_{i}"] = v
        row["total"] = self.total
        return row


def variation_loss(batch: PriorBatch) -> Tensor:
    """Mean of exp(-||s_p^a - s_p^b||) over all same-t pairs of distinct
    sequences; 1.0 when everything collapses to a point, toward 0 when
    encodings spread out."""
    B = batch.n_sequences
    if B < 2:
        raise ValueError(f"variation loss needs at least 2 sequences, got {B}")
    ii, jj = np.triu_indices(B, k=1)
    pa = batch.positions.take_rows(ii)
    pb = batch.positions.take_rows(jj)
    dist = (pa - pb).norm(axis=-1)
    return (-dist).exp().mean()


def slowness_loss(batch: PriorBatch) -> Tensor:
    """Mean squared distance between consecutive positions (alpha-free)."""
    if batch.n_steps < 2:
        raise ValueError(f"slowness loss needs T >= 2, got T={batch.n_steps}")
    step = batch.positions.diff(axis=1)
    return step.square().sum(axis=-1).mean()


def inertia_losses(batch: PriorBatch) -> tuple[Tensor, Tensor]:
    """(mean ||s_a||^2, mean ||s_a||); the squared and absolute versions are
    combined with separate weights."""
    if batch.n_steps < 3:
        raise ValueError(f"inertia losses need T >= 3, got T={batch.n_steps}")
    acc = batch.accelerations
    return acc.square().sum(axis=-1).mean(), acc.norm(axis=-1).mean()


def conservation_loss(batch: PriorBatch) -> Tensor:
    """Mean of (||s_v[t]|| - ||s_v[t-1]||)^2 over consecutive velocities."""
    if batch.n_steps < 3:
        raise ValueError(f"conservation loss needs T >= 3, got T={batch.n_steps}")
    speed = batch.velocities.norm(axis=-1)
    return speed.diff(axis=1).square().mean()


def controlability_loss(batch: PriorBatch, i: int) -> Tensor:
    """exp(-Cov(a[t,i], s_a[t+1,i])): favors accelerations that respond to
    action dimension i in state dimension i."""
    if batch.actions is None:
        raise ValueError("controlability loss needs actions in the batch")
    D = batch.positions.data.shape[2]
    adim = batch.actions.shape[2]
    if not 0 <= i < min(adim, D):
        raise ValueError(
            f"controlability index {i} out of range for action_dim={adim}, "
            f"state_dim={D}")
    # acceleration entry j is s_a at time j+2, driven by the action at j+1
    a = batch.actions[:, 1:, i].astype(np.float32)
    if a.size < 2:
        raise ValueError("controlability loss needs at least 2 samples")
    sa = batch.accelerations[:, :, i]
    a_centered = a - a.mean()
    cov = ((sa - sa.mean()) * a_centered).mean()
    return (-cov).exp()
