"""Training loop: batching, weighted loss combination, and the two-phase
velocity-scale curriculum.

Training proceeds in three stages driven by the velocity scale alpha:
phase 1 holds alpha = 0 (only the position losses shape the encoder) until
the smoothed total loss converges, then alpha ramps linearly to alpha_max,
then phase 2 trains at full scale until convergence again. Tiny Gaussian
noise is added to encoded positions during training only, so norms are
never evaluated at exactly coincident states.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .encoder import build_encoder, encode, save_encoder
from .layers import Network
from .optim import Adam
from .priors import (LossReport, PriorBatch, conservation_loss, controlability_loss,
                     inertia_losses, slowness_loss, variation_loss)
from .tensor import Tensor

__all__ = ["LossWeights", "Curriculum", "TrainConfig", "Batch", "make_batches",
           "combine", "train", "gradient_magnitude_report", "TrainResult"]

# per-task weights: variation, slowness, inertia, inertia_abs, conservation,
# controlability (the first two dominate; ball-in-cup needs controlability
# to separate the ball from the cup it is attached to)
TASK_WEIGHTS = {
    "pendulum": (1.0, 1.0, 0.1, 0.1, 0.2, 0.0),
    "cartpole": (1.0, 1.0, 0.1, 0.1, 0.2, 0.0),
    "ballincup": (1.0, 1.0, 0.001, 0.02, 0.005, 0.5),
}


@dataclass
class LossWeights:
    variation: float = 1.0
    slowness: float = 1.0
    inertia: float = 0.1
    inertia_abs: float = 0.1
    conservation: float = 0.2
    controlability: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")

    @staticmethod
    def for_task(task: str) -> "LossWeights":
        if task not in TASK_WEIGHTS:
            raise ValueError(f"no default weights for task {task!r}")
        return LossWeights(*TASK_WEIGHTS[task])


@dataclass
class Curriculum:
    alpha_max: float = 10.0
    phase1_epochs: int = 100       # cap; convergence can end the phase early
    ramp_epochs: int = 50
    phase2_epochs: int = 100
    convergence_window: int = 10
    min_rel_improvement: float = 0.005

    def __post_init__(self):
        if min(self.phase1_epochs, self.ramp_epochs, self.phase2_epochs) < 0:
            raise ValueError("phase epoch counts must be >= 0")

    def alpha_in_ramp(self, ramp_epoch: int) -> float:
        """Alpha for the 1-based ramp epoch; hits alpha_max/2 at the midpoint
        and alpha_max on the last ramp epoch."""
        return self.alpha_max * ramp_epoch / self.ramp_epochs


@dataclass
class TrainConfig:
    sequences: int = 32
    steps: int = 10
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    noise_sigma: float = 1e-6
    checkpoint_every: int = 25
    weights: LossWeights = field(default_factory=LossWeights)
    curriculum: Curriculum = field(default_factory=Curriculum)

    def __post_init__(self):
        if self.sequences < 2:
            raise ValueError("batch needs at least 2 sequences for the variation loss")
        if self.steps < 3:
            raise ValueError("batch windows need at least 3 steps")


@dataclass
class Batch:
    traj_ids: np.ndarray
    offset: int
    frames: np.ndarray      # (B, steps, H, W, C) float32 in [0, 1]
    actions: np.ndarray     # (B, steps-1, action_dim) float32


def make_batches(dataset: Dataset, config: TrainConfig, epoch_seed):
    """Stream batches over a random trajectory permutation, each with a shared
    random window offset so same-time pairing across sequences is aligned."""
    B, steps = config.sequences, config.steps
    n = dataset.n_traj
    if n < B:
        raise ValueError(f"dataset has {n} trajectories, batch needs {B}")
    n_obs = dataset.traj_len + 1
    if n_obs < steps:
        raise ValueError(f"trajectories too short: {n_obs} observations < {steps}")
    rng = np.random.default_rng(epoch_seed)
    perm = rng.permutation(n)
    for k in range(n // B):
        ids = perm[k * B:(k + 1) * B]
        offset = int(rng.integers(0, n_obs - steps + 1))
        frames = np.stack([
            dataset.trajectories[i].observations[offset:offset + steps]
            for i in ids]).astype(np.float32) / 255.0
        actions = np.stack([
            dataset.trajectories[i].actions[offset:offset + steps - 1]
            for i in ids])
        yield Batch(ids, offset, frames, actions)


def compute_losses(batch: PriorBatch, weights: LossWeights) -> dict:
    """All loss terms as graph tensors; controlability per applicable dim."""
    out = {}
    out["variation"] = variation_loss(batch)
    out["slowness"] = slowness_loss(batch)
    out["inertia"], out["inertia_abs"] = inertia_losses(batch)
    out["conservation"] = conservation_loss(batch)
    if batch.actions is not None:
        n_dims = min(batch.actions.shape[2], batch.positions.data.shape[2])
        out["controlability"] = tuple(
            controlability_loss(batch, i) for i in range(n_dims))
    else:
        out["controlability"] = ()
    return out


def combine(components: dict, weights: LossWeights):
    """Weighted sum of loss components; controlability is summed over action
    dimensions. Works on graph tensors and plain floats alike."""
    def value(x):
        return x.item() if isinstance(x, Tensor) else float(x)

    for name, comp in components.items():
        terms = comp if isinstance(comp, tuple) else (comp,)
        for t in terms:
            if not np.isfinite(value(t)):
                raise ValueError(f"non-finite loss component {name!r}")

    total = None

    def add(term):
        nonlocal total
        total = term if total is None else total + term

    for name in ("variation", "slowness", "inertia", "inertia_abs", "conservation"):
        w = getattr(weights, name)
        if w != 0.0:
            add(components[name] * np.float32(w))
    if weights.controlability != 0.0:
        for term in components.get("controlability", ()):
            add(term * np.float32(weights.controlability))
    if total is None:
        return Tensor(np.float32(0.0))
    return total


def make_report(components: dict, total) -> LossReport:
    def value(x):
        return x.item() if isinstance(x, Tensor) else float(x)

    return LossReport(
        variation=value(components["variation"]),
        slowness=value(components["slowness"]),
        inertia=value(components["inertia"]),
        inertia_abs=value(components["inertia_abs"]),
        conservation=value(components["conservation"]),
        controlability=tuple(value(c) for c in components["controlability"]),
        total=value(total),
    )


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    alpha: float
    mean_total: float
    smoothed_total: float


@dataclass
class TrainResult:
    net: Network
    steps: list          # per-step (step, epoch, alpha, LossReport)
    epochs: list[EpochRecord]
    phase_boundaries: dict
    final_alpha: float
    aborted: bool = False


class _MetricsWriter:
    def __init__(self, path, n_ctrl: int):
        self.file = open(path, "w", newline="")
        cols = ["step", "epoch", "alpha", "variation", "slowness", "inertia",
                "inertia_abs", "conservation"]
        cols += [f"controlability_{i}" for i in range(n_ctrl)]
        cols += ["total"]
        self.writer = csv.DictWriter(self.file, fieldnames=cols, extrasaction="ignore")
        self.writer.writeheader()

    def write(self, step: int, epoch: int, alpha: float, report: LossReport):
        row = {"step": step, "epoch": epoch, "alpha": alpha}
        row.update(report.as_row())
        self.writer.writerow(row)

    def close(self):
        self.file.flush()
        self.file.close()


def train(dataset: Dataset, config: TrainConfig, net: Network | None = None,
          out_dir: str | None = None, log=print) -> TrainResult:
    """Run the full curriculum on a dataset of random-policy trajectories."""
    cur = config.curriculum
    if net is None:
        h, w, c = dataset.image_shape
        net = build_encoder(np.random.default_rng([config.seed, 1]), h, w, c)
    adam = Adam(net.param_tensors(), lr=config.lr, beta1=config.beta1,
                beta2=config.beta2, eps=config.eps)
    n_ctrl = min(dataset.action_dim, 5)
    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        writer = _MetricsWriter(os.path.join(out_dir, "metrics.csv"), n_ctrl)

    result = TrainResult(net, [], [], {}, 0.0)
    step = 0
    epoch = 0
    ema = None
    window: list[float] = []       # smoothed totals, one per epoch in phase
    nan_streak = 0
    snapshot = net.state_dict()    # last good parameters

    def checkpoint(tag: str, alpha: float):
        if out_dir is not None:
            save_encoder(os.path.join(out_dir, f"encoder_{tag}.pve1"),
                         net, alpha, adam)

    def run_epoch(alpha: float, phase: str) -> bool:
        """One pass over the data; returns False on divergence abort."""
        nonlocal step, epoch, ema, nan_streak, snapshot
        noise_rng = np.random.default_rng([config.seed, 2, epoch])
        totals = []
        for batch in make_batches(dataset, config, [config.seed, 3, epoch]):
            B, steps_w = batch.frames.shape[:2]
            flat = batch.frames.reshape(B * steps_w, *batch.frames.shape[2:])
            pos = encode(net, flat).reshape((B, steps_w, -1))
            noise = noise_rng.normal(0.0, config.noise_sigma,
                                     size=pos.data.shape).astype(np.float32)
            prior_batch = PriorBatch.from_positions(pos + noise, alpha,
                                                    batch.actions)
            components = compute_losses(prior_batch, config.weights)
            try:
                total = combine(components, config.weights)
            except ValueError:
                nan_streak += 1
                if log:
                    log(f"epoch {epoch} step {step}: non-finite loss, batch skipped")
                if nan_streak >= 3:
                    return False
                step += 1
                continue
            nan_streak = 0
            net.zero_grad()
            if total._parents:
                total.backward()
            adam.step()
            report = make_report(components, total)
            result.steps.append((step, epoch, alpha, report))
            if writer is not None:
                writer.write(step, epoch, alpha, report)
            totals.append(report.total)
            step += 1
        mean_total = float(np.mean(totals)) if totals else float("nan")
        ema = mean_total if ema is None else 0.9 * ema + 0.1 * mean_total
        window.append(ema)
        result.epochs.append(EpochRecord(epoch, phase, alpha, mean_total, ema))
        result.final_alpha = alpha
        snapshot = net.state_dict()
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint(f"epoch{epoch + 1:04d}", alpha)
        epoch += 1
        return True

    def converged() -> bool:
        k = cur.convergence_window
        if len(window) <= k:
            return False
        old, new = window[-k - 1], window[-1]
        if old == 0:
            return True
        return (old - new) / abs(old) < cur.min_rel_improvement

    def run_phase(name: str, cap: int, alpha_fn) -> bool:
        window.clear()
        for j in range(cap):
            alpha = alpha_fn(j)
            if not run_epoch(alpha, name):
                net.load_state_dict(snapshot)
                result.aborted = True
                if log:
                    log(f"aborting in {name}: loss diverged; restored last "
                        f"good parameters")
                checkpoint("aborted", alpha)
                return False
            if name != "ramp" and converged():
                break
        result.phase_boundaries[name] = epoch
        return True

    ok = run_phase("phase1", cur.phase1_epochs, lambda j: 0.0)
    if ok:
        checkpoint("phase1", 0.0)
        ok = run_phase("ramp", cur.ramp_epochs,
                       lambda j: cur.alpha_in_ramp(j + 1))
    if ok:
        checkpoint("ramp", cur.alpha_max)
        ok = run_phase("phase2", cur.phase2_epochs, lambda j: cur.alpha_max)
    if ok:
        result.final_alpha = cur.alpha_max
        checkpoint("final", cur.alpha_max)
    if writer is not None:
        writer.close()
    return result


def gradient_magnitude_report(dataset: Dataset, net: Network,
                              config: TrainConfig, alpha: float | None = None) -> dict:
    """Norm of each weighted prior's gradient over all encoder parameters,
    on one deterministic batch. The tuning target is that these norms sit
    within roughly one order of magnitude of each other."""
    if alpha is None:
        alpha = config.curriculum.alpha_max
    batch = next(make_batches(dataset, config, [config.seed, 3, 0]))
    B, steps_w = batch.frames.shape[:2]
    flat = batch.frames.reshape(B * steps_w, *batch.frames.shape[2:])
    pos = encode(net, flat).reshape((B, steps_w, -1))
    prior_batch = PriorBatch.from_positions(pos, alpha, batch.actions)
    components = compute_losses(prior_batch, config.weights)

    def grad_norm(term) -> float:
        net.zero_grad()
        if term._parents:
            term.backward()
        sq = 0.0
        for t in net.param_tensors():
            if t.grad is not None:
                sq += float(np.sum(np.square(t.grad, dtype=np.float64)))
        return float(np.sqrt(sq))

    report = {}
    for name in ("variation", "slowness", "inertia", "inertia_abs", "conservation"):
        w = getattr(config.weights, name)
        report[name] = grad_norm(components[name] * np.float32(w)) if w != 0.0 else 0.0
    w = config.weights.controlability
    if w != 0.0 and components["controlability"]:
        total = None
        for term in components["controlability"]:
            scaled = term * np.float32(w)
            total = scaled if total is None else total + scaled
        report["controlability"] = grad_norm(total)
    else:
        report["controlability"] = 0.0
    net.zero_grad()
    return report
