"""Shared test utilities: finite-difference oracles and kink-free cases."""

import numpy as np

from labelloop.nn import TaskModel, grad_params, one_hot


def preactivation_margin(model, x):
    """Smallest |pre-activation| across hidden layers; the FD probe must not
    cross a ReLU kink, so test cases keep this above the probe-induced shift."""
    a = np.atleast_2d(x)
    margin = np.inf
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        margin = min(margin, float(np.min(np.abs(z))))
        a = np.maximum(z, 0.0)
    return margin


def make_smooth_case(seed, sizes=(3, 6, 4, 2), n=5, n_strong=4, margin=0.02):
    """Model + batches whose hidden pre-activations sit away from ReLU kinks."""
    rng = np.random.default_rng(seed)
    for _ in range(200):
        m = TaskModel.init(sizes, seed=int(rng.integers(0, 2**31)))
        x = rng.standard_normal((n, sizes[0]))
        xs = rng.standard_normal((n_strong, sizes[0]))
        if (preactivation_margin(m, x) > margin
                and preactivation_margin(m, xs) > margin):
            y = one_hot(rng.integers(0, sizes[-1], size=n), sizes[-1])
            ps = one_hot(rng.integers(0, sizes[-1], size=n_strong), sizes[-1])
            return m, x, y, xs, ps
    raise AssertionError("could not build a kink-free case")


def finite_diff_param_grads(model, batch, loss, step=1e-3):
    """Central-difference oracle over every parameter."""
    def loss_value():
        _, v = grad_params(model, batch, loss)
        return v

    out_w, out_b = [], []
    for w in model.weights:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + step
            up = loss_value()
            w[idx] = orig - step
            down = loss_value()
            w[idx] = orig
            g[idx] = (up - down) / (2 * step)
        out_w.append(g)
    for b in model.biases:
        g = np.zeros_like(b)
        for i in range(b.shape[0]):
            orig = b[i]
            b[i] = orig + step
            up = loss_value()
            b[i] = orig - step
            down = loss_value()
            b[i] = orig
            g[i] = (up - down) / (2 * step)
        out_b.append(g)
    return out_w, out_b


def max_rel_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.abs(gn), floor)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst
