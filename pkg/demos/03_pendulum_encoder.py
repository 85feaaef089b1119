"""
Learning a pendulum state space from pixels
===========================================

Collect random-policy trajectories, train the encoder with the five
robotic-prior losses under the alpha curriculum, and inspect what it
learned: PCA of the embedded positions should concentrate nearly all
variance in two components (the pendulum's circle), and small probe
networks should read the angle back out of the learned states.

A small run for demonstration; the full-size recipe lives in the CLI
(pve collect / pve train / pve eval). Takes a minute or two on one core.
"""

import numpy as np

from pve.analysis import ProbeSpec, effective_dim, embed_dataset, pca, probe
from pve.data import collect
from pve.trainer import Curriculum, TrainConfig, train

# 1. Random-policy data: 200 trajectories of 20 transitions at 32x32.
train_ds = collect("pendulum", 200, 20, seed=1, height=32, width=32)
test_ds = collect("pendulum", 60, 20, seed=2, height=32, width=32)
print(f"collected {train_ds.n_traj} train / {test_ds.n_traj} test trajectories")

# 2. Train. Phase 1 uses only the position priors (alpha = 0); the ramp
#    raises alpha to 10, switching the velocity priors on gradually.
config = TrainConfig(sequences=32, steps=10, seed=3, lr=3e-4,
                     checkpoint_every=0,
                     curriculum=Curriculum(alpha_max=10.0, phase1_epochs=8,
                                           ramp_epochs=6, phase2_epochs=8,
                                           convergence_window=4))
result = train(train_ds, config,
               log=lambda msg: print("  " + msg, flush=True))
print(f"finished: phases {result.phase_boundaries}, aborted={result.aborted}")

# 3. Embed held-out data and look at the spectrum of the position states.
emb_train = embed_dataset(result.net, config.curriculum.alpha_max, train_ds)
emb_test = embed_dataset(result.net, config.curriculum.alpha_max, test_ds)
_, ratios, _ = pca(emb_test.positions)
print("explained variance ratios:", np.round(ratios, 4))
print("effective dimensionality (95%):", effective_dim(ratios))

# 4. Probe the combined position+velocity states for the true physical
#    quantities. Targets are standardized, so MSE 1.0 = chance.
mses = probe(emb_train.states, emb_train.features,
             emb_test.states, emb_test.features, ProbeSpec(seed=0))
for name, mse in zip(emb_test.feature_names, mses):
    print(f"probe MSE {name:12s} {mse:.4f}")
