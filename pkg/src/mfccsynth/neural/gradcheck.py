"""Finite-difference validation of every backward pass.

Each check builds a small instance of a layer (or the full generator
training graph), attaches a fixed random linear readout so the loss is
scalar, and compares analytic gradients against central differences
with step h. The reported figure for a tensor is

    max|g_analytic - g_numeric| / max(max|g_analytic|, max|g_numeric|, 1e-8)

i.e. the worst absolute disagreement relative to the gradient scale,
which stays meaningful when individual entries are near zero. Inputs
are drawn away from activation kinks so the loss is smooth at the
evaluation point.
"""

import numpy as np

from . import layers as L
from .losses import (discriminator_loss, generator_adversarial_loss,
                     peek_similarity_loss)
from .models import Discriminator, Generator

DEFAULT_STEP = 1e-5
DEFAULT_BOUND = 1e-4
FFT_BOUND = 1e-6


def _sample_positions(rng, size, limit):
    if size <= limit:
        return np.arange(size)
    return rng.choice(size, size=limit, replace=False)


def _tensor_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return np.max(np.abs(analytic - numeric)) / scale


def _activation_state(graph_layers):
    """Byte string identifying which side of its kink every (leaky)
    relu input sits on. Central differences are only meaningful when
    the +h and -h points share this state with the center."""
    parts = []
    for layer in graph_layers:
        mask = getattr(layer, "_mask", None)
        if mask is not None and isinstance(layer, (L.Relu, L.LeakyRelu)):
            parts.append(mask.tobytes())
    return b"".join(parts)


def _check_graph(loss_fn, tensors, rng, h=DEFAULT_STEP, limit=40):
    """loss_fn() -> (scalar, grads dict, kink state bytes); tensors:
    dict name -> array wiggled in place. Returns max error.

    Positions whose +-h evaluations cross an activation kink (the state
    bytes change) are excluded from the comparison; the loss is not
    differentiable there so a finite difference says nothing about the
    backward pass."""
    _, analytic, state0 = loss_fn()
    worst = 0.0
    sampled = 0
    kept = 0
    for name, tensor in tensors.items():
        grad = analytic[name]
        flat = tensor.reshape(-1)
        positions = _sample_positions(rng, flat.size, limit)
        num = []
        ana = []
        grad_flat = grad.reshape(-1)
        for pos in positions:
            orig = flat[pos]
            flat[pos] = orig + h
            up, _, state_up = loss_fn()
            flat[pos] = orig - h
            down, _, state_down = loss_fn()
            flat[pos] = orig
            sampled += 1
            if state_up != state0 or state_down != state0:
                continue
            kept += 1
            num.append((up - down) / (2.0 * h))
            ana.append(grad_flat[pos])
        if num:
            worst = max(worst, _tensor_error(np.array(ana), np.array(num)))
    if kept < max(1, sampled // 2):
        raise RuntimeError(
            f"gradient check degenerate: only {kept} of {sampled} sampled "
            f"positions were differentiable")
    return worst


def _layer_case(layer, x, rng, train=False):
    """Generic single-layer check: loss = sum(readout * layer(x)).

    Batch norm in training mode mutates its running statistics on every
    forward call, but those never enter the training-mode output, so
    repeated evaluations still measure the same smooth function.
    """
    y0 = layer.forward(x, train=train)
    readout = rng.standard_normal(y0.shape)

    def loss_fn():
        layer.zero_grads()
        y = layer.forward(x, train=train)
        loss = float(np.sum(readout * y))
        dx = layer.backward(readout)
        grads = {"input": dx}
        for name, g in layer.grads.items():
            grads[name] = g
        return loss, grads, _activation_state([layer])

    tensors = {"input": x}
    for name, _ in layer.trainable_items():
        tensors[name] = layer.params[name]
    return _check_graph(loss_fn, tensors, rng)


def _away_from_kinks(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    x[np.abs(x) < margin] = margin
    return x


def _generator_graph_error(rng, length=64):
    """Full generator update graph: adversarial + peek losses through a
    fixed discriminator in inference mode. The pulse length is shrunk;
    every layer and all the wiring are identical to the full model."""
    gen = Generator(rng=rng)
    disc = Discriminator(rng=rng, pulse_length=length)
    # move batch norm state off the all-zeros init so eval mode is
    # nontrivial
    for layer in disc.layers:
        if isinstance(layer, L.BatchNorm):
            layer.params["running_mean"][...] = \
                0.1 * rng.standard_normal(layer.n_features)
            layer.params["running_var"][...] = \
                1.0 + 0.2 * rng.random(layer.n_features)
    z = rng.standard_normal((2, length))
    xhat = 0.5 * rng.standard_normal((2, length))
    real = 0.5 * rng.standard_normal((2, length))
    _, peek_real = disc.forward(real, train=False)

    def loss_fn():
        gen.zero_grads()
        disc.zero_grads()
        fake = gen.forward(z, xhat, train=False)
        scores, peek_fake = disc.forward(fake, train=False)
        l_adv, d_scores = generator_adversarial_loss(scores)
        l_peek, d_peek = peek_similarity_loss(peek_real, peek_fake)
        dx = disc.backward(d_scores, d_peek)
        dz, dxh = gen.backward(dx)
        grads = {"z": dz, "xhat": dxh}
        for name, _, g in gen.named_trainable():
            grads[name] = g
        state = _activation_state(gen.layers + disc.layers)
        return float(l_adv + l_peek), grads, state

    tensors = {"z": z, "xhat": xhat}
    for name, param, _ in gen.named_trainable():
        tensors[name] = param
    return _check_graph(loss_fn, tensors, rng, limit=8)


def _discriminator_graph_error(rng, length=64):
    """Discriminator update graph under the real/fake square losses."""
    disc = Discriminator(rng=rng, pulse_length=length)
    real = 0.5 * rng.standard_normal((2, length))
    fake = 0.5 * rng.standard_normal((2, length))

    def loss_fn():
        disc.zero_grads()
        s_real, _ = disc.forward(real, train=True)
        state = _activation_state(disc.layers)
        g_real = (s_real - 1.0) / s_real.size
        disc.backward(g_real)
        s_fake, _ = disc.forward(fake, train=True)
        state += _activation_state(disc.layers)
        loss, _, g_fake = discriminator_loss(s_real, s_fake)
        disc.backward(g_fake)
        grads = {}
        for name, _, g in disc.named_trainable():
            grads[name] = g
        return float(loss), grads, state

    tensors = {}
    for name, param, _ in disc.named_trainable():
        tensors[name] = param
    return _check_graph(loss_fn, tensors, rng, limit=8)


def run_all(seed=0):
    """Run every gradient check. Returns a list of
    (name, max_relative_error, bound) tuples."""
    rng = np.random.default_rng(seed)
    results = []

    def add(name, err, bound=DEFAULT_BOUND):
        results.append((name, err, bound))

    add("dense", _layer_case(L.Dense(5, 7, rng=rng),
                             rng.standard_normal((3, 5)), rng))
    add("dense_time_major", _layer_case(L.Dense(4, 6, rng=rng),
                                        rng.standard_normal((2, 5, 4)), rng))
    add("conv1d_stride1", _layer_case(L.Conv1d(3, 4, 5, 1, rng=rng),
                                      rng.standard_normal((2, 3, 16)), rng))
    add("conv1d_stride3", _layer_case(L.Conv1d(2, 3, 7, 3, rng=rng),
                                      rng.standard_normal((2, 2, 20)), rng))
    add("batch_norm_train_2d", _layer_case(
        L.BatchNorm(5), rng.standard_normal((6, 5)), rng, train=True))
    add("batch_norm_train_3d", _layer_case(
        L.BatchNorm(3), rng.standard_normal((4, 3, 7)), rng, train=True))
    add("batch_norm_eval", _layer_case(
        L.BatchNorm(4), rng.standard_normal((3, 4, 5)), rng, train=False))
    add("relu", _layer_case(L.Relu(), _away_from_kinks(rng, (4, 9)), rng))
    add("leaky_relu", _layer_case(L.LeakyRelu(),
                                  _away_from_kinks(rng, (4, 9)), rng))
    add("tanh", _layer_case(L.Tanh(), rng.standard_normal((4, 9)), rng))
    add("softmax", _layer_case(L.Softmax(), rng.standard_normal((3, 8)), rng))
    std = L.Standardize(6)
    std.params["mean"][...] = rng.standard_normal(6)
    std.params["std"][...] = 0.5 + rng.random(6)
    add("standardize", _layer_case(std, rng.standard_normal((4, 6)), rng))
    add("lstm", _layer_case(L.Lstm(3, 4, rng=rng),
                            rng.standard_normal((2, 6, 3)), rng))
    add("blstm", _layer_case(L.Blstm(3, 4, rng=rng),
                             rng.standard_normal((2, 6, 3)), rng))
    add("gru", _layer_case(L.Gru(3, 4, rng=rng),
                           rng.standard_normal((2, 6, 3)), rng))
    add("global_average", _layer_case(L.GlobalAverage(),
                                      rng.standard_normal((3, 2, 5)), rng))
    add("fft_magnitude",
        _layer_case(L.FftMagnitude(32), rng.standard_normal((3, 32)), rng),
        bound=FFT_BOUND)
    add("generator_graph", _generator_graph_error(rng))
    add("discriminator_graph", _discriminator_graph_error(rng))
    return results


def all_passed(results):
    return all(err < bound for _, err, bound in results)
