import math

import numpy as np
import pytest

from lossguard.models import (
    Batch,
    ModelSpec,
    OptimizerState,
    accuracy,
    grad,
    init_params,
    local_train,
    loss,
    param_count,
)
from lossguard.vectors import RngStream


def logistic_spec(input_dim=4, num_classes=3):
    return ModelSpec(kind="logistic", input_dim=input_dim, num_classes=num_classes)


def mlp_spec(input_dim=4, num_classes=3, hidden_dim=5):
    return ModelSpec(kind="mlp", input_dim=input_dim, num_classes=num_classes, hidden_dim=hidden_dim)


def random_batch(rng, n, spec):
    feats = rng.normal(size=(n, spec.input_dim))
    labels = rng.integers(0, spec.num_classes, size=n)
    return Batch(feats, labels)


# ---------------------------------------------------------------- shapes


def test_param_count_logistic_mnist_shape():
    assert param_count(logistic_spec(784, 10)) == 7850


def test_param_count_mlp_formula():
    spec = mlp_spec(input_dim=20, num_classes=10, hidden_dim=16)
    assert param_count(spec) == (20 + 1) * 16 + (16 + 1) * 10 == 506


def test_init_zero_scale_gives_zero_vector():
    spec = ModelSpec(kind="logistic", input_dim=6, num_classes=4, init_scale=0.0)
    params = init_params(spec, RngStream(0, 0))
    assert np.array_equal(params, np.zeros(param_count(spec)))


def test_init_bounds_and_zero_biases():
    spec = ModelSpec(kind="mlp", input_dim=6, num_classes=4, hidden_dim=3, init_scale=0.1)
    params = init_params(spec, RngStream(5, 0))
    assert np.all(np.abs(params) <= 0.1)
    w1 = 6 * 3
    assert np.array_equal(params[w1 : w1 + 3], np.zeros(3))  # b1
    assert np.array_equal(params[-4:], np.zeros(4))  # b2


# ---------------------------------------------------------------- loss


def test_loss_at_zero_params_is_log_c():
    rng = np.random.default_rng(0)
    for spec in (logistic_spec(num_classes=10), mlp_spec(num_classes=10)):
        batch = random_batch(rng, 12, spec)
        val = loss(np.zeros(param_count(spec)), batch, spec)
        assert abs(val - math.log(10)) < 1e-12
        assert abs(val - 2.302585092994046) < 1e-12


def _loss_oracle(params, batch, spec):
    """Straight-line softmax-then-NLL with explicit loops."""
    from lossguard.models import logits

    z = logits(params, batch.features, spec)
    total = 0.0
    for i in range(len(batch)):
        exps = [math.exp(z[i, c]) for c in range(z.shape[1])]
        p = exps[batch.labels[i]] / sum(exps)
        total += -math.log(p)
    return total / len(batch)


def test_loss_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for spec in (logistic_spec(), mlp_spec()):
        for _ in range(5):
            params = rng.normal(scale=0.5, size=param_count(spec))
            batch = random_batch(rng, 9, spec)
            assert loss(params, batch, spec) == pytest.approx(
                _loss_oracle(params, batch, spec), rel=1e-12, abs=1e-12
            )


def test_loss_row_order_invariant_exactly():
    rng = np.random.default_rng(4)
    spec = logistic_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 20, spec)
    perm = rng.permutation(20)
    shuffled = Batch(batch.features[perm], batch.labels[perm])
    assert loss(params, batch, spec) == loss(params, shuffled, spec)


def test_empty_batch_errors():
    spec = logistic_spec()
    empty = Batch(np.zeros((0, 4)), np.zeros(0, dtype=int))
    params = np.zeros(param_count(spec))
    for fn in (loss, grad, accuracy):
        with pytest.raises(ValueError):
            fn(params, empty, spec)


# ---------------------------------------------------------------- grad


def test_grad_bias_block_closed_form_at_zero():
    spec = logistic_spec(input_dim=2, num_classes=4)
    feats = np.array([[1.0, -1.0], [2.0, 0.5], [0.0, 0.0], [1.0, 1.0]])
    labels = np.array([0, 0, 1, 3])
    g = grad(np.zeros(param_count(spec)), Batch(feats, labels), spec)
    freq = np.array([0.5, 0.25, 0.0, 0.25])
    bias_block = g[-4:]
    assert np.allclose(bias_block, 0.25 - freq, atol=1e-15)


def finite_difference(params, batch, spec, coords, h=1e-5):
    out = {}
    for j in coords:
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        out[j] = (loss(up, batch, spec) - loss(down, batch, spec)) / (2 * h)
    return out


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(11)
    for spec in (logistic_spec(), mlp_spec()):
        for _ in range(4):
            params = rng.normal(scale=0.6, size=param_count(spec))
            batch = random_batch(rng, 7, spec)
            g = grad(params, batch, spec)
            coords = rng.choice(param_count(spec), size=min(20, param_count(spec)), replace=False)
            fd = finite_difference(params, batch, spec, coords)
            for j, approx in fd.items():
                denom = max(abs(g[j]), abs(approx), 1e-8)
                assert abs(g[j] - approx) / denom < 1e-4


def test_grad_batch_duplication_invariance():
    rng = np.random.default_rng(12)
    spec = logistic_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 6, spec)
    doubled = Batch(
        np.concatenate([batch.features, batch.features]),
        np.concatenate([batch.labels, batch.labels]),
    )
    assert np.allclose(grad(params, batch, spec), grad(params, doubled, spec), atol=1e-15)


# ---------------------------------------------------------------- accuracy


def test_accuracy_zero_params_ties_to_class_zero():
    spec = logistic_spec(num_classes=3)
    batch = Batch(np.random.default_rng(1).normal(size=(10, 4)), np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 2]))
    assert accuracy(np.zeros(param_count(spec)), batch, spec) == 0.3


def test_accuracy_perfect_separation():
    spec = logistic_spec(input_dim=1, num_classes=2)
    batch = Batch(np.array([[-5.0], [5.0]]), np.array([0, 1]))
    params = np.array([-1.0, 1.0, 0.0, 0.0])  # W = [[-1, 1]], b = 0
    assert accuracy(params, batch, spec) == 1.0


def test_accuracy_matches_loop_oracle():
    rng = np.random.default_rng(2)
    spec = logistic_spec()
    from lossguard.models import logits

    for _ in range(10):
        params = rng.normal(size=param_count(spec))
        batch = random_batch(rng, 13, spec)
        z = logits(params, batch.features, spec)
        correct = 0
        for i in range(len(batch)):
            best = 0
            for c in range(1, spec.num_classes):
                if z[i, c] > z[i, best]:
                    best = c
            correct += best == batch.labels[i]
        assert accuracy(params, batch, spec) == correct / len(batch)


# ---------------------------------------------------------------- training


def test_local_train_zero_lr_is_identity():
    rng = np.random.default_rng(5)
    spec = logistic_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 10, spec)
    opt = OptimizerState(kind="sgd", learning_rate=0.0, momentum=0.0)
    out, _ = local_train(params, batch, 1, 32, opt, RngStream(0, 0), spec)
    assert np.array_equal(out, params)


def test_local_train_single_full_batch_sgd_step():
    rng = np.random.default_rng(6)
    spec = logistic_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 8, spec)
    lr = 0.05
    opt = OptimizerState(kind="sgd", learning_rate=lr, momentum=0.0)
    out, new_opt = local_train(params, batch, 1, len(batch), opt, RngStream(0, 0), spec)
    assert np.array_equal(out, params - lr * grad(params, batch, spec))
    assert new_opt.step_count == 1


def test_local_train_adam_deterministic():
    rng = np.random.default_rng(7)
    spec = mlp_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 40, spec)
    runs = []
    for _ in range(2):
        opt = OptimizerState(kind="adam", learning_rate=1e-3)
        out, st = local_train(params, batch, 5, 8, opt, RngStream(3, 1), spec)
        runs.append((out, st.step_count))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1] == 5


def test_local_train_counts_steps_not_epochs():
    rng = np.random.default_rng(8)
    spec = logistic_spec()
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, 6, spec)  # 2 batches per epoch at batch_size=3
    opt = OptimizerState(kind="sgd", learning_rate=0.01, momentum=0.0)
    _, st = local_train(params, batch, 7, 3, opt, RngStream(1, 0), spec)
    assert st.step_count == 7


def test_local_train_empty_partition_errors():
    spec = logistic_spec()
    with pytest.raises(ValueError):
        local_train(
            np.zeros(param_count(spec)),
            _EmptyBatch(),
            1,
            4,
            OptimizerState(),
            RngStream(0, 0),
            spec,
        )


def test_sgd_step_decreases_loss_with_small_enough_lr():
    # line-search sanity: halve lr up to 20 times until the loss drops
    rng = np.random.default_rng(9)
    for spec in (logistic_spec(), mlp_spec()):
        params = rng.normal(scale=0.5, size=param_count(spec))
        batch = random_batch(rng, 30, spec)
        before = loss(params, batch, spec)
        g = grad(params, batch, spec)
        lr = 1.0
        for _ in range(20):
            if loss(params - lr * g, batch, spec) < before:
                break
            lr /= 2
        else:
            pytest.fail("no learning rate in 20 halvings decreased the loss")
