"""End-to-end acceptance suite.

Covers, in order: finite-difference gradient correctness of every layer and
prior loss; the pinned loss identities; the exact equivalence of training
with and without the velocity-based priors at alpha = 0; dimensionality of
learned pendulum and cart-pole embeddings on held-out data; probe error
bounds and orderings; Q-learning separation between trained encoders and a
random-encoder baseline; and determinism of the collect/train/eval pipeline.

Everything runs at a reduced 32x32 resolution. The expensive artifacts
(datasets, trained encoders, learning curves) are session-scoped fixtures;
the full suite is CPU-only and sized for a desktop machine.
"""

import time

import numpy as np
import pytest
from scipy import stats

from gradcheck import check_gradients, check_param_gradients
from pve.analysis import ProbeSpec, embed_dataset, pca, probe
from pve.data import collect
from pve.encoder import build_encoder, encode
from pve.layers import Conv2d, Dense, Flatten, Network, ReLU, Sigmoid
from pve.optim import Adam
from pve.priors import (PriorBatch, conservation_loss, controlability_loss,
                        inertia_losses, slowness_loss, variation_loss)
from pve.rl import RLConfig, run_learning_curve
from pve.tensor import Tensor
from pve.trainer import (Curriculum, LossWeights, TrainConfig, combine,
                         compute_losses, train)

H = W = 32

CURRICULUM = Curriculum(alpha_max=10.0, phase1_epochs=15, ramp_epochs=10,
                        phase2_epochs=15, convergence_window=5)

ALPHA = CURRICULUM.alpha_max

RL_TRIALS = 5
RL_EPOCHS = 100


def train_config(task: str, seed: int) -> TrainConfig:
    return TrainConfig(sequences=32, steps=10, seed=seed, lr=3e-4,
                       checkpoint_every=0, curriculum=CURRICULUM,
                       weights=LossWeights.for_task(task))


def fit_encoder(dataset, seed: int):
    result = train(dataset, train_config(dataset.task, seed), log=None)
    assert not result.aborted
    return result.net


def rl_config(task: str) -> RLConfig:
    """Desk-scale Q-learning run: fewer, shorter episodes per epoch and a
    lighter regression schedule than the full-size defaults.  The hotter
    Q-net learning rate compensates for the reduced fitting budget."""
    return RLConfig.for_task(task, episodes_per_epoch=8, episode_steps=150,
                             regression_steps=60, regression_batch=256,
                             q_lr=3e-3)


@pytest.fixture(scope="session")
def pendulum_setup():
    started = time.monotonic()
    train_ds = collect("pendulum", 1000, 20, seed=101, height=H, width=W)
    test_ds = collect("pendulum", 200, 20, seed=202, height=H, width=W)
    net = fit_encoder(train_ds, seed=11)
    return train_ds, test_ds, net, time.monotonic() - started


@pytest.fixture(scope="session")
def cartpole_setup():
    out = {}
    for camera, seed in (("static", 33), ("moving", 44)):
        train_ds = collect("cartpole", 600, 20, seed=300 + seed,
                           camera=camera, height=H, width=W)
        test_ds = collect("cartpole", 150, 20, seed=400 + seed,
                          camera=camera, height=H, width=W)
        out[camera] = (train_ds, test_ds, fit_encoder(train_ds, seed=seed))
    return out


@pytest.fixture(scope="session")
def ballincup_setup():
    train_ds = collect("ballincup", 600, 20, seed=555, height=H, width=W)
    test_ds = collect("ballincup", 150, 20, seed=666, height=H, width=W)
    return train_ds, test_ds, fit_encoder(train_ds, seed=55)


# -- 1: gradient correctness ---------------------------------------------------------

def test_gradient_suite_layers_and_priors():
    """Every layer and every prior loss passes central finite-difference
    checks on randomized small instances (per-coordinate relative error
    <= 1e-2, aggregate cosine distance <= 1e-3), in under a minute."""
    started = time.monotonic()
    rg = np.random.default_rng(12)

    # convolution and dense layers: quadratic losses, so a wide step has no
    # truncation error and suppresses float32 round-off
    x = Tensor(rg.normal(size=(2, 7, 7, 2)).astype(np.float32),
               requires_grad=True)
    conv = Conv2d(2, 3, kernel=3, stride=2, rng=rg)
    check_param_gradients(lambda: conv.forward(x).square().sum(),
                          [x, conv.weight, conv.bias], h=0.05)

    xd = Tensor(rg.normal(size=(5, 6)).astype(np.float32), requires_grad=True)
    dense = Dense(6, 4, rg)
    dense.bias.data = rg.normal(size=4).astype(np.float32)
    check_param_gradients(lambda: dense.forward(xd).square().sum(),
                          [xd, dense.weight, dense.bias], h=0.05)

    # activation, flatten, and stacking, through a small composite network;
    # a compact net keeps every coordinate's influence well above the float32
    # finite-difference noise floor
    net = Network([Conv2d(2, 2, kernel=3, stride=2, rng=rg), ReLU(),
                   Flatten(), Dense(18, 4, rg), Sigmoid(), Dense(4, 2, rg)])
    xn = Tensor(rg.uniform(0.2, 0.8, size=(2, 5, 5, 2)).astype(np.float32),
                requires_grad=True)
    check_param_gradients(lambda: net.forward(xn).square().sum(),
                          [xn] + net.param_tensors(), h=0.02)

    # the five prior losses with respect to encoded positions
    p = rg.normal(size=(3, 5, 5)).astype(np.float32)
    actions = rg.uniform(-1, 1, size=(3, 4, 2)).astype(np.float32)
    check_gradients(lambda a: variation_loss(
        PriorBatch.from_positions(a, 1.0)), [p], h=1e-2)
    check_gradients(lambda a: slowness_loss(
        PriorBatch.from_positions(a, 1.0)), [p], h=1e-2)
    check_gradients(lambda a: inertia_losses(
        PriorBatch.from_positions(a, 2.0))[0], [p], h=1e-2)
    check_gradients(lambda a: inertia_losses(
        PriorBatch.from_positions(a, 2.0))[1], [p], h=1e-2)
    check_gradients(lambda a: conservation_loss(
        PriorBatch.from_positions(a, 2.0)), [p], h=1e-2)
    check_gradients(lambda a: controlability_loss(
        PriorBatch.from_positions(a, 1.5, actions), 0), [p], h=1e-2)

    assert time.monotonic() - started < 60.0


# -- 2: loss identities ----------------------------------------------------------------

def test_loss_identity_values():
    """Pinned values: variation 1 on identical states, slowness 0 on constant
    sequences, inertia (0, 0) on constant velocity, conservation 0 on
    magnitude-preserving velocity, controlability 1 on constant actions."""
    D = 5
    const = PriorBatch.from_positions(
        Tensor(np.ones((3, 6, D), dtype=np.float32)), 2.0)
    assert variation_loss(const).item() == pytest.approx(1.0, abs=1e-6)
    assert slowness_loss(const).item() == pytest.approx(0.0, abs=1e-6)

    ramp = np.arange(6, dtype=np.float32)[None, :, None] * np.ones((2, 6, D),
                                                                   np.float32)
    lin = PriorBatch.from_positions(Tensor(ramp), 2.0)
    inertia, inertia_abs = inertia_losses(lin)
    assert inertia.item() == pytest.approx(0.0, abs=1e-6)
    assert inertia_abs.item() == pytest.approx(0.0, abs=1e-6)

    # positions that integrate rotating unit steps: velocity direction turns
    # but its magnitude never changes
    t = np.arange(7)
    units = np.stack([np.cos(t), np.sin(t)] + [np.zeros(7)] * 3, axis=-1)
    pos = np.cumsum(units, axis=0)[None].astype(np.float32)
    rot = PriorBatch.from_positions(Tensor(np.repeat(pos, 2, axis=0)), 1.0)
    assert conservation_loss(rot).item() == pytest.approx(0.0, abs=1e-6)

    rg = np.random.default_rng(3)
    wander = rg.normal(size=(3, 8, D)).astype(np.float32)
    actions = np.ones((3, 7, 2), dtype=np.float32) * np.array([0.3, -1.0],
                                                              np.float32)
    acted = PriorBatch.from_positions(Tensor(wander), 1.5, actions)
    assert controlability_loss(acted, 0).item() == pytest.approx(1.0, abs=1e-6)
    assert controlability_loss(acted, 1).item() == pytest.approx(1.0, abs=1e-6)


# -- 3: alpha = 0 curriculum equivalence -------------------------------------------------

def test_alpha_zero_velocity_losses_do_not_touch_updates():
    """At alpha = 0 the velocity-based priors contribute exactly nothing, so
    training with all six weights equals training with only variation and
    slowness, parameter for parameter."""
    rg = np.random.default_rng(9)
    frames = rg.random((6 * 5, 8, 8, 3)).astype(np.float32)
    actions = rg.uniform(-1, 1, size=(6, 4, 2)).astype(np.float32)
    full = LossWeights.for_task("ballincup")      # every weight non-zero
    position_only = LossWeights(full.variation, full.slowness, 0, 0, 0, 0)

    results = []
    for weights in (full, position_only):
        net = build_encoder(np.random.default_rng([41, 1]), 8, 8, 3)
        adam = Adam(net.param_tensors(), lr=1e-3)
        for _ in range(3):
            pos = encode(net, frames).reshape((6, 5, -1))
            batch = PriorBatch.from_positions(pos, 0.0, actions)
            total = combine(compute_losses(batch, weights), weights)
            net.zero_grad()
            total.backward()
            adam.step()
        results.append(net.state_dict())

    for name in results[0]:
        np.testing.assert_allclose(results[0][name], results[1][name],
                                   atol=1e-6)


# -- 4: pendulum embedding dimensionality -------------------------------------------------

def test_pendulum_two_components_explain_position_variance(pendulum_setup):
    """An encoder trained on 1000x20 pendulum trajectories embeds held-out
    observations so that the top-2 principal components carry >= 90% of the
    position-state variance, within the reduced-resolution time budget."""
    _, test_ds, net, seconds = pendulum_setup
    emb = embed_dataset(net, ALPHA, test_ds)
    _, ratios, _ = pca(emb.positions)
    assert ratios[:2].sum() >= 0.90
    assert seconds < 600.0


# -- 5: cart-pole embedding dimensionality ------------------------------------------------

def test_cartpole_three_components_both_cameras(cartpole_setup):
    """Cart-pole embeddings concentrate >= 85% of held-out position variance
    in three principal components, for the static and the moving camera."""
    for camera in ("static", "moving"):
        _, test_ds, net = cartpole_setup[camera]
        emb = embed_dataset(net, ALPHA, test_ds)
        _, ratios, _ = pca(emb.positions)
        assert ratios[:3].sum() >= 0.85, f"{camera}: {ratios}"


# -- 6: probe error bounds and orderings --------------------------------------------------

def probe_mses(net, train_ds, test_ds):
    emb_tr = embed_dataset(net, ALPHA, train_ds)
    emb_te = embed_dataset(net, ALPHA, test_ds)
    mses = probe(emb_tr.states, emb_tr.features,
                 emb_te.states, emb_te.features, ProbeSpec(seed=0))
    return mses, np.array(emb_te.feature_is_velocity)


@pytest.fixture(scope="session")
def pendulum_probe(pendulum_setup):
    train_ds, test_ds, net, _ = pendulum_setup
    trained, is_vel = probe_mses(net, train_ds, test_ds)
    random_net = build_encoder(np.random.default_rng([777, 1]), H, W)
    untrained, _ = probe_mses(random_net, train_ds, test_ds)
    return trained, untrained, is_vel


def test_pendulum_probe_error_bounds(pendulum_probe):
    """Probes from learned states recover cos/sin of the angle to MSE <= 0.02
    and the angular velocity to MSE <= 0.05 (standardized targets)."""
    trained, _, is_vel = pendulum_probe
    assert np.all(trained[~is_vel] <= 0.02)
    assert np.all(trained[is_vel] <= 0.05)


def test_velocity_probes_harder_than_position(pendulum_probe, cartpole_setup,
                                              ballincup_setup):
    """Per task, mean probe MSE of velocity features is at least the mean
    probe MSE of position features: velocities, built from frame differences,
    are never easier to read out than positions."""
    trained, _, is_vel = pendulum_probe
    assert trained[is_vel].mean() >= trained[~is_vel].mean()

    for setup in (cartpole_setup["static"], ballincup_setup):
        train_ds, test_ds, net = setup
        mses, is_vel = probe_mses(net, train_ds, test_ds)
        assert mses[is_vel].mean() >= mses[~is_vel].mean(), train_ds.task


def test_random_encoder_probes_ten_times_worse(pendulum_probe):
    """On pendulum position features, a random (untrained) encoder's probe
    MSE is at least 10x the trained encoder's."""
    trained, untrained, is_vel = pendulum_probe
    ratios = untrained[~is_vel] / trained[~is_vel]
    assert np.all(ratios >= 10.0), ratios


# -- 7: Q-learning separation --------------------------------------------------------------

def learning_curves(task, net, base_seed, epochs=RL_EPOCHS):
    cfg = rl_config(task)
    trained = run_learning_curve(task, (net, ALPHA), cfg, epochs=epochs,
                                 n_trials=RL_TRIALS, base_seed=base_seed,
                                 height=H, width=W)
    baseline = run_learning_curve(task, None, cfg, epochs=epochs,
                                  n_trials=RL_TRIALS, base_seed=base_seed,
                                  height=H, width=W)
    return trained, baseline


def assert_separation(trained, baseline, tail=20):
    """Mean return over the last `tail` epochs: trained exceeds baseline by
    at least 3x the pooled standard error across trials."""
    tr = trained.returns[:, -tail:].mean(axis=1)
    bl = baseline.returns[:, -tail:].mean(axis=1)
    diff = tr.mean() - bl.mean()
    pooled_se = np.sqrt(tr.var(ddof=1) / tr.size + bl.var(ddof=1) / bl.size)
    assert diff >= 3.0 * pooled_se, (tr, bl)


def assert_no_upward_trend(curve):
    """Slope of the epoch-vs-return regression is not significantly
    positive (one-sided t-test at the 5% level)."""
    returns = curve.returns.mean(axis=0)
    res = stats.linregress(np.arange(returns.size), returns)
    assert res.slope <= 0 or res.pvalue / 2 > 0.05, (res.slope, res.pvalue)


@pytest.fixture(scope="session")
def pendulum_rl(pendulum_setup):
    _, _, net, _ = pendulum_setup
    return learning_curves("pendulum", net, base_seed=900)


@pytest.fixture(scope="session")
def cartpole_rl(cartpole_setup):
    _, _, net = cartpole_setup["moving"]
    return learning_curves("cartpole", net, base_seed=910)


@pytest.fixture(scope="session")
def ballincup_rl(ballincup_setup):
    _, _, net = ballincup_setup
    return learning_curves("ballincup", net, base_seed=920, epochs=40)


def test_rl_pendulum_trained_encoder_beats_baseline(pendulum_rl):
    """Five seeded trials, 100 epochs: the trained encoder's mean return
    clears the random-encoder baseline by >= 3x pooled standard error, and
    the baseline itself never trends upward."""
    trained, baseline = pendulum_rl
    assert_separation(trained, baseline)
    assert_no_upward_trend(baseline)


def test_rl_cartpole_moving_camera_beats_baseline(cartpole_rl):
    """Same separation requirement for cart-pole with the moving camera."""
    trained, baseline = cartpole_rl
    assert_separation(trained, baseline)
    assert_no_upward_trend(baseline)


def test_rl_ballincup_trained_mean_return_higher(ballincup_rl):
    """Ball-in-cup: the trained encoder's overall mean return beats the
    random-encoder baseline's (no task-solved requirement)."""
    trained, baseline = ballincup_rl
    assert trained.returns.mean() > baseline.returns.mean()


# -- 8: determinism ----------------------------------------------------------------------

def small_train_run():
    dataset = collect("pendulum", 48, 11, seed=77, height=H, width=W)
    cur = Curriculum(alpha_max=10.0, phase1_epochs=4, ramp_epochs=3,
                     phase2_epochs=3, convergence_window=20)
    config = TrainConfig(sequences=16, steps=8, seed=7, lr=3e-4,
                         checkpoint_every=0, curriculum=cur)
    result = train(dataset, config, log=None)
    return dataset, result


def test_pipeline_determinism():
    """Rerunning collect, a 10-epoch train, and the evaluation with the same
    seeds reproduces every metric within 1e-6."""
    ds_a, run_a = small_train_run()
    ds_b, run_b = small_train_run()

    obs_a = np.stack([t.observations for t in ds_a.trajectories])
    obs_b = np.stack([t.observations for t in ds_b.trajectories])
    assert np.array_equal(obs_a, obs_b)

    assert len(run_a.epochs) == len(run_b.epochs) == 10
    totals_a = [s[3].total for s in run_a.steps]
    totals_b = [s[3].total for s in run_b.steps]
    np.testing.assert_allclose(totals_a, totals_b, atol=1e-6)
    state_a, state_b = run_a.net.state_dict(), run_b.net.state_dict()
    for name in state_a:
        np.testing.assert_allclose(state_a[name], state_b[name], atol=1e-6)

    spec = ProbeSpec(hidden=(64, 64), steps=150, batch=128, seed=5)
    metrics = []
    for run, ds in ((run_a, ds_a), (run_b, ds_b)):
        emb = embed_dataset(run.net, 10.0, ds)
        _, ratios, _ = pca(emb.positions)
        half = emb.traj_ids < 24
        mses = probe(emb.states[half], emb.features[half],
                     emb.states[~half], emb.features[~half], spec)
        metrics.append((ratios, mses))
    np.testing.assert_allclose(metrics[0][0], metrics[1][0], atol=1e-6)
    np.testing.assert_allclose(metrics[0][1], metrics[1][1], atol=1e-6)
