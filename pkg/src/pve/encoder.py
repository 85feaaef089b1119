"""The position encoder and finite-difference velocity/acceleration states.

The encoder maps single frames to a 5-D position state through three
strided 5x5 convolutions (16, 32, 64 channels) and dense layers of
128, 128, and 5 units, ReLU everywhere except the linear output.

Velocities are not learned: s_v[t] = alpha * (s_p[t] - s_p[t-1]) within a
sequence, and accelerations are first differences of velocities, so
s_a[t] = alpha * (s_p[t] - 2 s_p[t-1] + s_p[t-2]). Velocities exist from
t = 1 and accelerations from t = 2. The full state for control is the
concatenation [s_p; s_v].
"""

from __future__ import annotations

import numpy as np

from . import checkpoint as ckpt
from .layers import Conv2d, Dense, Flatten, Network, ReLU
from .optim import Adam
from .tensor import Tensor, no_grad

__all__ = ["POSITION_DIM", "build_encoder", "encode", "encode_frames",
           "velocities", "accelerations", "combined_state",
           "save_encoder", "load_encoder"]

POSITION_DIM = 5
CONV_CHANNELS = (16, 32, 64)
DENSE_UNITS = (128, 128)
KERNEL = 5
STRIDE = 2


def build_encoder(rng: np.random.Generator, height: int = 64, width: int = 64,
                  channels: int = 3) -> Network:
    layers = []
    h, w, c = height, width, channels
    for i, out_c in enumerate(CONV_CHANNELS):
        layers += [Conv2d(c, out_c, KERNEL, STRIDE, rng, name=f"conv{i + 1}"),
                   ReLU()]
        h, w, c = -(-h // STRIDE), -(-w // STRIDE), out_c
    layers.append(Flatten())
    flat = h * w * c
    for i, units in enumerate(DENSE_UNITS):
        layers += [Dense(flat, units, rng, init="he", name=f"dense{i + 1}"), ReLU()]
        flat = units
    layers.append(Dense(flat, POSITION_DIM, rng, init="xavier", name="out"))
    net = Network(layers, name="encoder")
    net.input_shape = (height, width, channels)
    return net


def encode(net: Network, frames) -> Tensor:
    """Encode a batch of frames (B, H, W, C) in [0, 1] to positions (B, 5)."""
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    return net.forward(x)


def encode_frames(net: Network, frames: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Inference-only encoding of many frames, chunked to bound memory."""
    flat = frames.reshape(-1, *frames.shape[-3:])
    out = np.empty((flat.shape[0], POSITION_DIM), dtype=np.float32)
    with no_grad():
        for start in range(0, flat.shape[0], chunk):
            stop = min(start + chunk, flat.shape[0])
            out[start:stop] = encode(net, flat[start:stop].astype(np.float32)).data
    return out.reshape(*frames.shape[:-3], POSITION_DIM)


def velocities(positions: Tensor, alpha: float) -> Tensor:
    """s_v[t] = alpha * (s_p[t] - s_p[t-1]) along the time axis (axis 1).

    Input (B, T, D) yields (B, T-1, D); entry j is the velocity at t = j+1.
    """
    if positions.data.ndim != 3 or positions.data.shape[1] < 2:
        raise ValueError(
            f"velocities need (B, T>=2, D) positions, got {positions.data.shape}")
    return positions.diff(axis=1) * np.float32(alpha)


def accelerations(vel: Tensor) -> Tensor:
    """s_a[t] = s_v[t] - s_v[t-1]; entry j is the acceleration at t = j+2.

    A single velocity step yields an empty (B, 0, D) result so that
    two-observation windows still form a valid batch.
    """
    if vel.data.ndim != 3 or vel.data.shape[1] < 1:
        raise ValueError(
            f"accelerations need (B, T>=1, D) velocities, got {vel.data.shape}")
    return vel.diff(axis=1)


def combined_state(pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Concatenate positions and velocities into the 10-D control state."""
    return np.concatenate([pos, vel], axis=-1)


def save_encoder(path, net: Network, alpha: float, adam: Adam | None = None) -> None:
    params = net.state_dict()
    h, w, c = net.input_shape
    params["meta/alpha"] = np.array([alpha], dtype=np.float32)
    params["meta/input"] = np.array([h, w, c], dtype=np.float32)
    ckpt.save_checkpoint(path, params,
                         adam.state_arrays() if adam is not None else None)


def load_encoder(path):
    """Load an encoder checkpoint -> (net, alpha, adam_state_or_None)."""
    params, adam_state = ckpt.load_checkpoint(path)
    try:
        alpha = float(params.pop("meta/alpha")[0])
        h, w, c = (int(v) for v in params.pop("meta/input"))
    except KeyError as e:
        raise ValueError(f"{path}: not an encoder checkpoint, missing {e}") from e
    net = build_encoder(np.random.default_rng(0), h, w, c)
    net.load_state_dict(params)
    return net, alpha, adam_state
