"""Neural network layers with explicit forward/backward passes.

Everything runs in float64 on numpy. Each layer caches whatever its
backward pass needs during forward; backward() consumes that cache and
returns the gradient with respect to the layer input while accumulating
parameter gradients in `grads`.

Tensor layouts:
  dense / activations / softmax   (..., features), applied on the last axis
  conv / batch norm               (batch, channels, time)
  recurrent layers                (batch, time, features)
"""

import numpy as np

from ..errors import ContractError


def _glorot(rng, shape):
    fan_in, fan_out = shape[-1], shape[0]
    if len(shape) == 3:
        # conv kernels (c_out, c_in, width)
        fan_in = shape[1] * shape[2]
        fan_out = shape[0] * shape[2]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng, shape):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols])


class Layer:
    """Base class: parameter bookkeeping shared by all layers."""

    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.non_trainable = ()

    def hyper(self):
        return {}

    def trainable_items(self):
        return [(k, v) for k, v in self.params.items()
                if k not in self.non_trainable]

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _accumulate(self, name, value):
        if name in self.grads:
            self.grads[name] += value
        else:
            self.grads[name] = value

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Dense(Layer):
    """Affine map on the last axis: y = x @ w.T + b."""

    kind = "dense"

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        if self.n_in < 1 or self.n_out < 1:
            raise ContractError("dense layer needs positive sizes")
        if rng is None:
            w = np.zeros((self.n_out, self.n_in))
        else:
            w = _glorot(rng, (self.n_out, self.n_in))
        self.params = {"w": w, "b": np.zeros(self.n_out)}

    def hyper(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x, train=False):
        if x.shape[-1] != self.n_in:
            raise ContractError(
                f"dense layer expects {self.n_in} input features, "
                f"got {x.shape[-1]}")
        self._x = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, grad):
        x2 = self._x.reshape(-1, self.n_in)
        g2 = grad.reshape(-1, self.n_out)
        self._accumulate("w", g2.T @ x2)
        self._accumulate("b", g2.sum(axis=0))
        return grad @ self.params["w"]


class Conv1d(Layer):
    """1-D convolution with SAME padding: output length ceil(T / stride).

    Total padding max((out-1)*stride + width - T, 0), split with the
    smaller half on the left. Implemented as cross-correlation over
    im2col patches so the inner product runs through BLAS.
    """

    kind = "conv1d"

    def __init__(self, c_in, c_out, width, stride=1, rng=None):
        super().__init__()
        self.c_in = int(c_in)
        self.c_out = int(c_out)
        self.width = int(width)
        self.stride = int(stride)
        if min(self.c_in, self.c_out, self.width, self.stride) < 1:
            raise ContractError("conv1d needs positive channel/width/stride")
        if rng is None:
            w = np.zeros((self.c_out, self.c_in, self.width))
        else:
            w = _glorot(rng, (self.c_out, self.c_in, self.width))
        self.params = {"w": w, "b": np.zeros(self.c_out)}

    def hyper(self):
        return {"c_in": self.c_in, "c_out": self.c_out,
                "width": self.width, "stride": self.stride}

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ContractError(
                f"conv1d expects (batch, {self.c_in}, time), got {x.shape}")
        b, _, t = x.shape
        out_t = -(-t // self.stride)
        pad = max((out_t - 1) * self.stride + self.width - t, 0)
        left = pad // 2
        xp = np.pad(x, ((0, 0), (0, 0), (left, pad - left)))
        if self.stride == 1:
            return self._forward_unit_stride(xp, b, t, left)
        idx = self.stride * np.arange(out_t)[None, :] \
            + np.arange(self.width)[:, None]
        cols = xp[:, :, idx].reshape(b, self.c_in * self.width, out_t)
        w2 = self.params["w"].reshape(self.c_out, -1)
        y = np.matmul(w2[None], cols) + self.params["b"][None, :, None]
        self._cache = (cols, xp.shape, left, t)
        return y

    def _forward_unit_stride(self, xp, b, t, left):
        # batch items laid side by side along time: each width-wide tap
        # becomes one wide matrix product instead of an im2col gather.
        tp = xp.shape[2]
        xc = np.ascontiguousarray(xp.transpose(1, 0, 2)).reshape(
            self.c_in, b * tp)
        span = b * tp - (self.width - 1)
        ybuf = np.zeros((self.c_out, b * tp))
        acc = ybuf[:, :span]
        tmp = np.empty_like(acc)
        for j in range(self.width):
            np.dot(self.params["w"][:, :, j], xc[:, j:j + span], out=tmp)
            acc += tmp
        y = ybuf.reshape(self.c_out, b, tp)[:, :, :t].transpose(1, 0, 2)
        y = y + self.params["b"][None, :, None]
        self._cache = (xc, left, t)
        return y

    def backward(self, grad):
        if self.stride == 1:
            return self._backward_unit_stride(grad)
        cols, xp_shape, left, t = self._cache
        b = grad.shape[0]
        w2 = self.params["w"].reshape(self.c_out, -1)
        self._accumulate(
            "w",
            np.matmul(grad, cols.transpose(0, 2, 1)).sum(axis=0)
            .reshape(self.params["w"].shape))
        self._accumulate("b", grad.sum(axis=(0, 2)))
        dcols = np.matmul(w2.T[None], grad)
        dpatch = dcols.reshape(b, self.c_in, self.width, -1)
        dxp = np.zeros((b, self.c_in, xp_shape[2]))
        grid = self.stride * np.arange(dpatch.shape[3])
        for j in range(self.width):
            dxp[:, :, j + grid] += dpatch[:, :, j, :]
        return dxp[:, :, left:left + t]

    def _backward_unit_stride(self, grad):
        xc, left, t = self._cache
        b = grad.shape[0]
        tp = xc.shape[1] // b
        span = b * tp - (self.width - 1)
        gbuf = np.zeros((self.c_out, b * tp))
        gbuf.reshape(self.c_out, b, tp)[:, :, :t] = grad.transpose(1, 0, 2)
        gval = gbuf[:, :span]
        dw = np.empty_like(self.params["w"])
        dxc = np.zeros_like(xc)
        tmp = np.empty((self.c_in, span))
        dwj = np.empty((self.c_out, self.c_in))
        for j in range(self.width):
            np.dot(gval, xc[:, j:j + span].T, out=dwj)
            dw[:, :, j] = dwj
            np.dot(self.params["w"][:, :, j].T, gval, out=tmp)
            dxc[:, j:j + span] += tmp
        self._accumulate("w", dw)
        self._accumulate("b", grad.sum(axis=(0, 2)))
        dxp = dxc.reshape(self.c_in, b, tp).transpose(1, 0, 2)
        return np.ascontiguousarray(dxp[:, :, left:left + t])


class BatchNorm(Layer):
    """Batch normalization over the batch (and time, if present) axes.

    Accepts (batch, features) or (batch, channels, time); the feature
    axis is always axis 1. Training mode normalizes with batch moments
    and updates running statistics; eval mode uses the running values.
    """

    kind = "batch_norm"

    def __init__(self, n_features, momentum=0.1, eps=1e-5):
        super().__init__()
        self.n_features = int(n_features)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.params = {
            "gamma": np.ones(self.n_features),
            "beta": np.zeros(self.n_features),
            "running_mean": np.zeros(self.n_features),
            "running_var": np.ones(self.n_features),
        }
        self.non_trainable = ("running_mean", "running_var")

    def hyper(self):
        return {"n_features": self.n_features, "momentum": self.momentum,
                "eps": self.eps}

    def _shape_for(self, ndim):
        if ndim == 2:
            return (1, self.n_features)
        return (1, self.n_features, 1)

    def forward(self, x, train=False):
        if x.ndim not in (2, 3) or x.shape[1] != self.n_features:
            raise ContractError(
                f"batch norm expects {self.n_features} features on axis 1, "
                f"got shape {x.shape}")
        axes = (0,) if x.ndim == 2 else (0, 2)
        shp = self._shape_for(x.ndim)
        gamma = self.params["gamma"].reshape(shp)
        beta = self.params["beta"].reshape(shp)
        if train:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.params["running_mean"] *= 1.0 - self.momentum
            self.params["running_mean"] += self.momentum * mu
            self.params["running_var"] *= 1.0 - self.momentum
            self.params["running_var"] += self.momentum * var
        else:
            mu = self.params["running_mean"]
            var = self.params["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu.reshape(shp)) * inv_std.reshape(shp)
        self._cache = (xhat, inv_std, axes, shp, train)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv_std, axes, shp, train = self._cache
        gamma = self.params["gamma"].reshape(shp)
        self._accumulate("gamma", (grad * xhat).sum(axis=axes))
        self._accumulate("beta", grad.sum(axis=axes))
        dxhat = grad * gamma
        if not train:
            return dxhat * inv_std.reshape(shp)
        n = 1
        for ax in axes:
            n *= xhat.shape[ax]
        mean_d = dxhat.mean(axis=axes).reshape(shp)
        mean_dx = (dxhat * xhat).mean(axis=axes).reshape(shp)
        return inv_std.reshape(shp) * (dxhat - mean_d - xhat * mean_dx)


class Relu(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class LeakyRelu(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = float(slope)

    def hyper(self):
        return {"slope": self.slope}

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad):
        return np.where(self._mask, grad, self.slope * grad)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, train=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y * self._y)


class Softmax(Layer):
    """Softmax over the last axis, stabilized by max subtraction."""

    kind = "softmax"

    def forward(self, x, train=False):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, grad):
        dot = (grad * self._y).sum(axis=-1, keepdims=True)
        return self._y * (grad - dot)


class Standardize(Layer):
    """Fixed feature-wise whitening (x - mean) / std on the last axis.

    mean and std are stored with the weights but never trained.
    """

    kind = "standardize"

    def __init__(self, n_features):
        super().__init__()
        self.n_features = int(n_features)
        self.params = {"mean": np.zeros(self.n_features),
                       "std": np.ones(self.n_features)}
        self.non_trainable = ("mean", "std")

    def hyper(self):
        return {"n_features": self.n_features}

    def forward(self, x, train=False):
        if x.shape[-1] != self.n_features:
            raise ContractError(
                f"standardize expects {self.n_features} features, "
                f"got {x.shape[-1]}")
        std = self.params["std"]
        if np.any(std <= 0):
            raise ContractError("standardize std values must be positive")
        return (x - self.params["mean"]) / std

    def backward(self, grad):
        return grad / self.params["std"]


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Lstm(Layer):
    """Unidirectional LSTM over (batch, time, features).

    Fused gate weights with row order [input, forget, cell, output];
    forget-gate bias starts at 1. step() exposes single-step evaluation
    for decoders that feed outputs back in.
    """

    kind = "lstm"

    def __init__(self, n_in, n_hidden, rng=None):
        super().__init__()
        self.n_in = int(n_in)
        self.n_hidden = int(n_hidden)
        h = self.n_hidden
        if rng is None:
            w = np.zeros((4 * h, self.n_in))
            u = np.zeros((4 * h, h))
        else:
            w = _glorot(rng, (4 * h, self.n_in))
            u = np.vstack([_orthogonal(rng, (h, h)) for _ in range(4)])
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        self.params = {"w": w, "u": u, "b": b}

    def hyper(self):
        return {"n_in": self.n_in, "n_hidden": self.n_hidden}

    def initial_state(self, batch):
        h = np.zeros((batch, self.n_hidden))
        return h, h.copy()

    def step(self, x_t, state):
        h_prev, c_prev = state
        nh = self.n_hidden
        z = x_t @ self.params["w"].T + h_prev @ self.params["u"].T \
            + self.params["b"]
        i = _sigmoid(z[:, :nh])
        f = _sigmoid(z[:, nh:2 * nh])
        g = np.tanh(z[:, 2 * nh:3 * nh])
        o = _sigmoid(z[:, 3 * nh:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache = (x_t, h_prev, c_prev, i, f, g, o, tc)
        return h, (h, c), cache

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ContractError(
                f"lstm expects (batch, time, {self.n_in}), got {x.shape}")
        b, t, _ = x.shape
        state = self.initial_state(b)
        self._steps = []
        out = np.empty((b, t, self.n_hidden))
        for k in range(t):
            h, state, cache = self.step(x[:, k, :], state)
            self._steps.append(cache)
            out[:, k, :] = h
        return out

    def backward(self, grad):
        b, t, _ = grad.shape
        nh = self.n_hidden
        dh_next = np.zeros((b, nh))
        dc_next = np.zeros((b, nh))
        dx = np.empty((b, t, self.n_in))
        dw = np.zeros_like(self.params["w"])
        du = np.zeros_like(self.params["u"])
        db = np.zeros_like(self.params["b"])
        for k in range(t - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tc = self._steps[k]
            dh = grad[:, k, :] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dw += dz.T @ x_t
            du += dz.T @ h_prev
            db += dz.sum(axis=0)
            dx[:, k, :] = dz @ self.params["w"]
            dh_next = dz @ self.params["u"]
            dc_next = dc * f
        self._accumulate("w", dw)
        self._accumulate("u", du)
        self._accumulate("b", db)
        return dx


class Blstm(Layer):
    """Bidirectional LSTM: n_hidden units per direction, outputs
    concatenated to 2*n_hidden features."""

    kind = "blstm"

    def __init__(self, n_in, n_hidden, rng=None):
        super().__init__()
        self.n_in = int(n_in)
        self.n_hidden = int(n_hidden)
        self.fwd = Lstm(n_in, n_hidden, rng=rng)
        self.bwd = Lstm(n_in, n_hidden, rng=rng)
        self.params = {}
        for name, val in self.fwd.params.items():
            self.params["fwd_" + name] = val
        for name, val in self.bwd.params.items():
            self.params["bwd_" + name] = val

    def hyper(self):
        return {"n_in": self.n_in, "n_hidden": self.n_hidden}

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()
        self._sync_grads()

    def _sync_grads(self):
        self.grads = {}
        for name, val in self.fwd.grads.items():
            self.grads["fwd_" + name] = val
        for name, val in self.bwd.grads.items():
            self.grads["bwd_" + name] = val

    def forward(self, x, train=False):
        # params may have been replaced wholesale by a weight loader
        for name in self.fwd.params:
            self.fwd.params[name] = self.params["fwd_" + name]
            self.bwd.params[name] = self.params["bwd_" + name]
        yf = self.fwd.forward(x, train=train)
        yb = self.bwd.forward(x[:, ::-1, :], train=train)[:, ::-1, :]
        return np.concatenate([yf, yb], axis=2)

    def backward(self, grad):
        nh = self.n_hidden
        dxf = self.fwd.backward(grad[:, :, :nh])
        dxb = self.bwd.backward(grad[:, ::-1, nh:])[:, ::-1, :]
        self._sync_grads()
        return dxf + dxb


class Gru(Layer):
    """GRU over (batch, time, features): h' = (1-z)*h + z*htilde."""

    kind = "gru"

    def __init__(self, n_in, n_hidden, rng=None):
        super().__init__()
        self.n_in = int(n_in)
        self.n_hidden = int(n_hidden)
        h = self.n_hidden
        names = ("z", "r", "h")
        self.params = {}
        for nm in names:
            if rng is None:
                self.params["w" + nm] = np.zeros((h, self.n_in))
                self.params["u" + nm] = np.zeros((h, h))
            else:
                self.params["w" + nm] = _glorot(rng, (h, self.n_in))
                self.params["u" + nm] = _orthogonal(rng, (h, h))
            self.params["b" + nm] = np.zeros(h)

    def hyper(self):
        return {"n_in": self.n_in, "n_hidden": self.n_hidden}

    def step(self, x_t, h_prev):
        p = self.params
        z = _sigmoid(x_t @ p["wz"].T + h_prev @ p["uz"].T + p["bz"])
        r = _sigmoid(x_t @ p["wr"].T + h_prev @ p["ur"].T + p["br"])
        rh = r * h_prev
        ht = np.tanh(x_t @ p["wh"].T + rh @ p["uh"].T + p["bh"])
        h = (1.0 - z) * h_prev + z * ht
        cache = (x_t, h_prev, z, r, rh, ht)
        return h, cache

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ContractError(
                f"gru expects (batch, time, {self.n_in}), got {x.shape}")
        b, t, _ = x.shape
        h = np.zeros((b, self.n_hidden))
        self._steps = []
        out = np.empty((b, t, self.n_hidden))
        for k in range(t):
            h, cache = self.step(x[:, k, :], h)
            self._steps.append(cache)
            out[:, k, :] = h
        return out

    def backward(self, grad):
        b, t, _ = grad.shape
        p = self.params
        dh_next = np.zeros((b, self.n_hidden))
        dx = np.empty((b, t, self.n_in))
        acc = {k: np.zeros_like(v) for k, v in p.items()}
        for k in range(t - 1, -1, -1):
            x_t, h_prev, z, r, rh, ht = self._steps[k]
            dh = grad[:, k, :] + dh_next
            dz = dh * (ht - h_prev)
            dht = dh * z
            dh_prev = dh * (1.0 - z)
            dht_pre = dht * (1.0 - ht * ht)
            drh = dht_pre @ p["uh"]
            dr = drh * h_prev
            dh_prev += drh * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dh_prev += dz_pre @ p["uz"] + dr_pre @ p["ur"]
            dx[:, k, :] = dz_pre @ p["wz"] + dr_pre @ p["wr"] \
                + dht_pre @ p["wh"]
            acc["wz"] += dz_pre.T @ x_t
            acc["uz"] += dz_pre.T @ h_prev
            acc["bz"] += dz_pre.sum(axis=0)
            acc["wr"] += dr_pre.T @ x_t
            acc["ur"] += dr_pre.T @ h_prev
            acc["br"] += dr_pre.sum(axis=0)
            acc["wh"] += dht_pre.T @ x_t
            acc["uh"] += dht_pre.T @ rh
            acc["bh"] += dht_pre.sum(axis=0)
            dh_next = dh_prev
        for name, val in acc.items():
            self._accumulate(name, val)
        return dx


class FftMagnitude(Layer):
    """Log magnitude spectrum of a fixed-length frame.

    y_k = scale * log(eps + Re_k^2 + Im_k^2) where Re/Im come from the
    full n-point DFT of the input, computed as dense matrix products so
    the pass is differentiable with plain matrix calculus.
    """

    kind = "fft_magnitude"

    def __init__(self, n_points, eps=1e-6, scale=0.5):
        super().__init__()
        self.n_points = int(n_points)
        self.eps = float(eps)
        self.scale = float(scale)
        n = self.n_points
        grid = 2.0 * np.pi * np.outer(np.arange(n), np.arange(n)) / n
        self._cos = np.cos(grid)
        self._sin = np.sin(grid)

    def hyper(self):
        return {"n_points": self.n_points, "eps": self.eps,
                "scale": self.scale}

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.n_points:
            raise ContractError(
                f"fft magnitude expects (batch, {self.n_points}), "
                f"got {x.shape}")
        re = x @ self._cos.T
        im = x @ self._sin.T
        denom = self.eps + re * re + im * im
        self._cache = (re, im, denom)
        return self.scale * np.log(denom)

    def backward(self, grad):
        re, im, denom = self._cache
        common = grad * (2.0 * self.scale) / denom
        return (common * re) @ self._cos + (common * im) @ self._sin


class GlobalAverage(Layer):
    """Mean over all non-batch axes: (batch, c, t) -> (batch,)."""

    kind = "global_average"

    def forward(self, x, train=False):
        if x.ndim != 3:
            raise ContractError(
                f"global average expects (batch, c, t), got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        b, c, t = self._shape
        return np.broadcast_to(
            grad[:, None, None] / (c * t), self._shape).copy()


class Sequential:
    """Chain of layers sharing one forward/backward interface."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, val in layer.params.items():
                out.append((f"{i}.{layer.kind}.{name}", val))
        return out

    def named_trainable(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, val in layer.trainable_items():
                out.append((f"{i}.{layer.kind}.{name}", val,
                            layer.grads.get(name)))
        return out
