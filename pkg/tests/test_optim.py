"""Adam: update rule against a scalar reference, skip logic, state resume."""

import numpy as np
import pytest

from pve.optim import Adam
from pve.tensor import Tensor


def adam_reference(p0, grads, lr, beta1, beta2, eps):
    """Textbook Adam in float64 applied to a scalar parameter."""
    p, m, v = float(p0), 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return p


def test_first_step_has_unit_scale():
    # bias correction makes mhat = g and vhat = g^2, so the first update is
    # lr * g / (|g| + eps) ~= lr * sign(g) regardless of gradient magnitude
    for g0 in (1e-4, 3.7, -250.0):
        p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        opt = Adam([p], lr=0.01, eps=1e-8)
        p.grad = np.array([g0], dtype=np.float32)
        opt.step()
        want = 1.0 - 0.01 * g0 / (abs(g0) + 1e-8)
        np.testing.assert_allclose(p.data[0], want, rtol=0, atol=1e-7)
        np.testing.assert_allclose(p.data[0], 1.0 - 0.01 * np.sign(g0), atol=2e-6)


def test_multi_step_matches_reference():
    grads = [0.3, -1.2, 0.05, 0.8, -0.4]
    want = adam_reference(2.0, grads, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    p = Tensor(np.array([2.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    for g in grads:
        p.grad = np.array([g], dtype=np.float32)
        assert opt.step()
    np.testing.assert_allclose(p.data[0], want, rtol=1e-5)
    assert opt.t == len(grads)
    assert opt.skipped_steps == 0


def test_updates_are_elementwise():
    # each coordinate follows the scalar recursion independently
    grads = np.array([[0.5, -2.0, 0.01], [1.5, 0.3, -0.7]], dtype=np.float32)
    p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for g in grads:
        p.grad = g.copy()
        opt.step()
    for j in range(3):
        want = adam_reference(0.0, [float(g[j]) for g in grads],
                              lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8)
        np.testing.assert_allclose(p.data[j], want, rtol=1e-5)


def test_nonfinite_gradient_skips_whole_step():
    p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
    q = Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p, q], lr=0.1)
    p.grad = np.array([0.5, np.nan], dtype=np.float32)
    q.grad = np.array([1.0], dtype=np.float32)
    assert not opt.step()
    assert opt.skipped_steps == 1
    assert opt.t == 0
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    np.testing.assert_array_equal(q.data, [3.0])  # healthy param untouched too
    assert np.all(opt.m[0] == 0.0) and np.all(opt.v[1] == 0.0)

    p.grad = np.array([0.5, np.inf], dtype=np.float32)
    assert not opt.step()
    assert opt.skipped_steps == 2


def test_missing_grad_treated_as_zero():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    q = Tensor(np.array([5.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p, q], lr=0.1)
    p.grad = np.array([1.0], dtype=np.float32)
    q.grad = None
    assert opt.step()
    np.testing.assert_array_equal(q.data, [5.0])
    assert p.data[0] < 1.0


def test_state_resume_matches_uninterrupted_run():
    grads = [0.3, -1.2, 0.05, 0.8, -0.4, 0.9, -0.1]

    def run(n, opt, p):
        for g in grads[:n]:
            p.grad = np.full(4, g, dtype=np.float32)
            opt.step()

    p_full = Tensor(np.ones(4, dtype=np.float32), requires_grad=True)
    opt_full = Adam([p_full], lr=0.1)
    run(len(grads), opt_full, p_full)

    p_a = Tensor(np.ones(4, dtype=np.float32), requires_grad=True)
    opt_a = Adam([p_a], lr=0.1)
    run(3, opt_a, p_a)
    saved = {k: v.copy() for k, v in opt_a.state_arrays().items()}

    p_b = Tensor(p_a.data.copy(), requires_grad=True)
    opt_b = Adam([p_b], lr=999.0)  # hyperparameters restored from the state
    opt_b.load_state_arrays(saved)
    assert opt_b.t == 3 and opt_b.lr == pytest.approx(0.1)
    for g in grads[3:]:
        p_b.grad = np.full(4, g, dtype=np.float32)
        opt_b.step()
    np.testing.assert_allclose(p_b.data, p_full.data, rtol=1e-6, atol=1e-7)


def test_quadratic_convergence():
    # minimize (p - 3)^2: Adam should home in on 3
    p = Tensor(np.array([-1.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        p.grad = (2.0 * (p.data - 3.0)).astype(np.float32)
        opt.step()
    np.testing.assert_allclose(p.data[0], 3.0, atol=1e-2)
