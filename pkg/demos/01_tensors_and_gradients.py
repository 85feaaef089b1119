"""
Tensors, reverse-mode gradients, and a tiny regression
======================================================

The pve.tensor module is a minimal float32 autograd engine: build a
computation out of Tensor operations, call backward() on a scalar, and
every participating Tensor with requires_grad=True receives a .grad.
"""

import numpy as np

from pve.layers import Dense, Network, Sigmoid
from pve.optim import Adam
from pve.tensor import Tensor

# A scalar chain first: y = sum((2x + 1)^2). dy/dx = 4(2x + 1).
x = Tensor(np.array([0.5, -1.0, 2.0], dtype=np.float32), requires_grad=True)
y = (x * 2.0 + 1.0).square().sum()
y.backward()
print("analytic grad:", 4 * (2 * x.data + 1))
print("autograd grad:", x.grad)

# The same machinery trains networks. Fit y = sin(3x) on [-1, 1] with a
# two-layer sigmoid net and Adam, exactly the stack the encoder uses.
rng = np.random.default_rng(0)
inputs = rng.uniform(-1, 1, size=(256, 1)).astype(np.float32)
targets = np.sin(3 * inputs)

net = Network([Dense(1, 32, rng), Sigmoid(), Dense(32, 1, rng)])
adam = Adam(net.param_tensors(), lr=1e-2)

for step in range(500):
    pred = net.forward(Tensor(inputs))
    loss = (pred - Tensor(targets)).square().mean()
    net.zero_grad()
    loss.backward()
    adam.step()
    if step % 100 == 0 or step == 499:
        print(f"step {step:3d}  mse {loss.item():.5f}")

# The fit should be well under the variance of the target (~0.5).
final = net.forward(Tensor(inputs)).data
print("final mse:", float(np.mean((final - targets) ** 2)))
