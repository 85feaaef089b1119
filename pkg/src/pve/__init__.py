"""Position-velocity encoders: unsupervised state representations from pixels.

The package learns a 5-D position encoding of single camera frames using
five physics-motivated loss functions, derives velocities by finite
differences with a scheduled scale factor, and evaluates the representation
with PCA, regression probes, and batch reinforcement learning.
"""

from .tensor import AutodiffError, Tensor, concat, no_grad
from .layers import Conv2d, Dense, Flatten, Network, ReLU, Sigmoid
from .optim import Adam
from .envs import EnvState, make_env
from .render import render
from .data import Dataset, Trajectory, collect, load_dataset, save_dataset
from .encoder import (POSITION_DIM, accelerations, build_encoder, combined_state,
                      encode, encode_frames, load_encoder, save_encoder, velocities)
from .priors import (LossReport, PriorBatch, conservation_loss, controlability_loss,
                     inertia_losses, slowness_loss, variation_loss)
from .trainer import (Curriculum, LossWeights, TrainConfig, TrainResult,
                      combine, gradient_magnitude_report, make_batches, train)
from .analysis import (Embedding, ProbeSpec, effective_dim, embed_dataset,
                       pca, probe)
from .rl import LearningCurve, RLConfig, run_learning_curve

__version__ = "0.1.0"
