"""Network definitions: pulse model, residual generator, discriminator.

Each model owns a flat layer list (the unit of serialization) plus the
wiring its forward/backward passes need beyond simple chaining: the
generator re-injects the coarse pulse as an extra channel before every
convolution and adds its output to the coarse pulse; the discriminator
computes its own log-spectrum input channel and exposes an intermediate
"peek" feature map for the similarity loss.
"""

import numpy as np

from ..errors import ContractError, FormatError
from . import layers as L
from .serialize import describe, load_weights, save_weights

PULSE_LENGTH = 400
COND_DIM = 22
CONTEXT_FRAMES = 40


class Model:
    layers = ()

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def named_trainable(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, val in layer.trainable_items():
                out.append((f"{i}.{layer.kind}.{name}", val,
                            layer.grads.get(name)))
        return out

    def save(self, path):
        save_weights(path, self.layers)

    @classmethod
    def _check_template(cls, path, loaded, template):
        got = [layer.kind for layer in loaded]
        want = [layer.kind for layer in template]
        if got != want:
            raise FormatError(
                f"{path}: layer topology mismatch\n"
                f"  expected: {describe(template)}\n"
                f"  found:    {describe(loaded)}")
        for lw, lg in zip(template, loaded):
            hw, hg = lw.hyper(), lg.hyper()
            ints = {k: v for k, v in hw.items() if isinstance(v, int)}
            for key, val in ints.items():
                if int(hg.get(key, -1)) != val:
                    raise FormatError(
                        f"{path}: layer topology mismatch\n"
                        f"  expected: {describe(template)}\n"
                        f"  found:    {describe(loaded)}")


class PulseModel(Model):
    """Conditioning context -> one glottal pulse.

    A GRU summarizes the last CONTEXT_FRAMES frames of conditioning
    (22 values per frame), a dense layer expands to the 400-sample
    pulse, and a stack of width-15 convolutions refines it.
    """

    def __init__(self, rng=None, layers=None):
        if layers is not None:
            self.layers = list(layers)
        else:
            stack = [
                L.Gru(COND_DIM, 50, rng=rng),
                L.Relu(),
                L.BatchNorm(50),
                L.Dense(50, PULSE_LENGTH, rng=rng),
                L.Relu(),
                L.BatchNorm(PULSE_LENGTH),
            ]
            c_prev = 1
            for _ in range(4):
                stack += [L.Conv1d(c_prev, 100, 15, rng=rng),
                          L.LeakyRelu(), L.BatchNorm(100)]
                c_prev = 100
            stack += [L.Conv1d(100, 1, 15, rng=rng),
                      L.LeakyRelu(), L.BatchNorm(1)]
            self.layers = stack
        self._gru = self.layers[0]

    def forward(self, context, train=False):
        if context.ndim != 3 or context.shape[2] != COND_DIM:
            raise ContractError(
                f"pulse model expects (batch, frames, {COND_DIM}) "
                f"conditioning, got {context.shape}")
        h = self._gru.forward(context, train=train)
        self._n_ctx = context.shape[1]
        x = h[:, -1, :]
        for layer in self.layers[1:6]:
            x = layer.forward(x, train=train)
        x = x[:, None, :]
        for layer in self.layers[6:]:
            x = layer.forward(x, train=train)
        return x[:, 0, :]

    def backward(self, grad):
        g = grad[:, None, :]
        for layer in reversed(self.layers[6:]):
            g = layer.backward(g)
        g = g[:, 0, :]
        for layer in reversed(self.layers[1:6]):
            g = layer.backward(g)
        g_seq = np.zeros((grad.shape[0], self._n_ctx, self._gru.n_hidden))
        g_seq[:, -1, :] = g
        return self._gru.backward(g_seq)

    @classmethod
    def load(cls, path):
        loaded = load_weights(path)
        template = cls().layers
        cls._check_template(path, loaded, template)
        return cls(layers=loaded)


class Generator(Model):
    """Residual pulse refiner: x' = xhat + G(z, xhat).

    Inputs are a noise frame z and the coarse pulse xhat, stacked as two
    channels; xhat is appended again as an extra channel before every
    later convolution. The final convolution produces one channel passed
    through tanh and batch norm (in that order by default; swap_order
    puts batch norm before tanh).
    """

    def __init__(self, rng=None, layers=None, swap_order=False):
        if layers is not None:
            self.layers = list(layers)
            tail = [layer.kind for layer in self.layers[9:]]
            swap_order = tail == ["conv1d", "batch_norm", "tanh"]
        else:
            stack = []
            c_prev = 2
            for _ in range(3):
                stack += [L.Conv1d(c_prev, 100, 15, rng=rng),
                          L.LeakyRelu(), L.BatchNorm(100)]
                c_prev = 101
            out_conv = L.Conv1d(101, 1, 15, rng=rng)
            if swap_order:
                stack += [out_conv, L.BatchNorm(1), L.Tanh()]
            else:
                stack += [out_conv, L.Tanh(), L.BatchNorm(1)]
            self.layers = stack
        self.swap_order = swap_order

    def forward(self, z, xhat, train=False):
        if z.shape != xhat.shape or z.ndim != 2:
            raise ContractError(
                f"generator expects matching (batch, time) noise and coarse "
                f"pulse, got {z.shape} and {xhat.shape}")
        h = np.stack([z, xhat], axis=1)
        xc = xhat[:, None, :]
        for i in range(3):
            for layer in self.layers[3 * i:3 * i + 3]:
                h = layer.forward(h, train=train)
            h = np.concatenate([h, xc], axis=1)
        for layer in self.layers[9:]:
            h = layer.forward(h, train=train)
        return xhat + h[:, 0, :]

    def backward(self, grad):
        """grad is d(loss)/d(x'). Returns (grad_z, grad_xhat)."""
        g = grad[:, None, :]
        for layer in reversed(self.layers[9:]):
            g = layer.backward(g)
        gx = grad.copy()  # from the residual connection
        for i in (2, 1, 0):
            gx += g[:, -1, :]
            g = g[:, :-1, :]
            for layer in reversed(self.layers[3 * i:3 * i + 3]):
                g = layer.backward(g)
        gx += g[:, 1, :]
        return g[:, 0, :], gx

    @classmethod
    def load(cls, path):
        loaded = load_weights(path)
        kinds = [layer.kind for layer in loaded]
        for swap in (False, True):
            template = cls(swap_order=swap).layers
            if kinds == [layer.kind for layer in template]:
                cls._check_template(path, loaded, template)
                return cls(layers=loaded)
        raise FormatError(
            f"{path}: layer topology mismatch\n"
            f"  expected: {describe(cls().layers)}\n"
            f"  found:    {describe(loaded)}")


class Discriminator(Model):
    """Pulse -> realness score with an intermediate peek feature map.

    The input pulse and its own log magnitude spectrum form two
    channels; five strided convolutions reduce time, and the global
    average of the last map is the score. forward() returns
    (scores, peek) where peek is the output of the third block.
    """

    PEEK_AFTER = 9  # layer index (after third block's batch norm)

    def __init__(self, rng=None, layers=None, pulse_length=PULSE_LENGTH):
        if layers is not None:
            self.layers = list(layers)
        else:
            stack = [L.FftMagnitude(pulse_length)]
            plan = [(2, 64, 7, 3), (64, 128, 7, 3), (128, 256, 7, 3),
                    (256, 128, 5, 2), (128, 1, 3, 2)]
            for c_in, c_out, width, stride in plan:
                stack += [L.Conv1d(c_in, c_out, width, stride, rng=rng),
                          L.LeakyRelu(), L.BatchNorm(c_out)]
            stack.append(L.GlobalAverage())
            self.layers = stack
        self._fft = self.layers[0]

    def forward(self, x, train=False):
        if x.ndim != 2:
            raise ContractError(
                f"discriminator expects (batch, time), got {x.shape}")
        spec = self._fft.forward(x, train=train)
        h = np.stack([x, spec], axis=1)
        peek = None
        for i, layer in enumerate(self.layers[1:], start=1):
            h = layer.forward(h, train=train)
            if i == self.PEEK_AFTER:
                peek = h
        return h, peek

    def backward(self, grad_scores, grad_peek=None):
        """Backpropagate to the input pulse. Either gradient may be
        None; grad_peek joins the chain at the peek tap."""
        n_layers = len(self.layers)
        if grad_scores is not None:
            g = grad_scores
            start = n_layers - 1
        else:
            if grad_peek is None:
                raise ContractError("discriminator backward needs a gradient")
            g = grad_peek
            grad_peek = None
            start = self.PEEK_AFTER
        for i in range(start, 0, -1):
            g = self.layers[i].backward(g)
            if grad_peek is not None and i - 1 == self.PEEK_AFTER:
                g = g + grad_peek
        dx = g[:, 0, :] + self._fft.backward(g[:, 1, :])
        return dx

    @classmethod
    def load(cls, path):
        loaded = load_weights(path)
        template = cls().layers
        cls._check_template(path, loaded, template)
        return cls(layers=loaded)


def build_f0_net(n_coef=20, n_classes=256, rng=None):
    """Layer list for the frame-wise pitch class network.

    Two tanh dense layers, a bidirectional LSTM, then a unidirectional
    LSTM whose input is the BLSTM output concatenated with a one-hot
    encoding of the previous predicted class, and a softmax output.
    The leading standardize layer holds the input normalization.
    """
    return [
        L.Standardize(n_coef),
        L.Dense(n_coef, 256, rng=rng),
        L.Tanh(),
        L.Dense(256, 256, rng=rng),
        L.Tanh(),
        L.Blstm(256, 128, rng=rng),
        L.Lstm(256 + n_classes, 128, rng=rng),
        L.Dense(128, n_classes, rng=rng),
        L.Softmax(),
    ]
