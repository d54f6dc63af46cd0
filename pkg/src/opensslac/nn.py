"""Minimal numpy neural-network engine.

Layers cache what they need during ``forward`` and consume it in ``backward``.
Tensors are NHWC.  Everything runs in the dtype of the input batch, so the same
model can be trained in float32 and gradient-checked in float64.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class BackwardError(RuntimeError):
    pass


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def accumulate(self, g):
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != value shape {self.value.shape} for {self.name}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype)
        else:
            self.grad += g


class ModelParams:
    """Ordered, uniquely named parameter entries of one network."""

    def __init__(self, params=()):
        self._entries: OrderedDict[str, Param] = OrderedDict()
        for p in params:
            self.add(p)

    def add(self, p: Param):
        if p.name in self._entries:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        self._entries[p.name] = p

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, name) -> Param:
        return self._entries[name]

    def names(self):
        return list(self._entries)

    def zero_grad(self):
        for p in self:
            p.grad = None

    def count(self) -> int:
        return int(sum(p.value.size for p in self))


def _init_kernel(rng, shape, dtype):
    return (rng.normal(0.0, 0.02, size=shape)).astype(dtype)


# --------------------------------------------------------------------------- layers

class Layer:
    kind = "layer"

    def __init__(self):
        self.params: list[Param] = []
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def output_shape(self, shape):
        return shape

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise BackwardError(f"{self.kind}: backward called without a preceding forward")
        return self._cache


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.w = Param("kernel", _init_kernel(rng, (n_in, n_out), dtype))
        self.b = Param("bias", np.zeros(n_out, dtype=dtype))
        self.params = [self.w, self.b]

    def output_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.n_in:
            raise ShapeError(f"dense expects ({self.n_in},) per sample, got {tuple(shape)}")
        return (self.n_out,)

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        self._cache = x
        return x @ self.w.value + self.b.value

    def backward(self, dout):
        x = self._need_cache()
        self.w.accumulate(x.T @ dout)
        self.b.accumulate(dout.sum(axis=0))
        return dout @ self.w.value.T


def same_padding(size, stride, kernel=3):
    """TF-style 'same' padding: (pad_before, pad_after, out_size)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2, out


class Conv2D(Layer):
    """Kernel-3 convolution with 'same' padding, stride 1 or 2, NHWC."""

    kind = "conv2x"

    def __init__(self, c_in, c_out, stride, rng, dtype=np.float32, kernel=3):
        super().__init__()
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        self.c_in, self.c_out, self.stride, self.k = c_in, c_out, stride, kernel
        self.w = Param("kernel", _init_kernel(rng, (kernel, kernel, c_in, c_out), dtype))
        self.b = Param("bias", np.zeros(c_out, dtype=dtype))
        self.params = [self.w, self.b]

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.c_in:
            raise ShapeError(f"conv expects (H, W, {self.c_in}) per sample, got {tuple(shape)}")
        h, w, _ = shape
        return (same_padding(h, self.stride, self.k)[2], same_padding(w, self.stride, self.k)[2], self.c_out)

    def _pads(self, h, w):
        ph = same_padding(h, self.stride, self.k)
        pw = same_padding(w, self.stride, self.k)
        return ph, pw

    def _im2col(self, x, pads, stride, out_hw):
        (pt, pb), (pl, pr) = pads
        ho, wo = out_hw
        k = self.k
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        # (n, ho, wo, c, k, k) -> (n*ho*wo, k*k*c), matching the (k, k, c_in) kernel layout
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        return cols.reshape(x.shape[0] * ho * wo, k * k * x.shape[3]), xp.shape

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        n, h, w, c = x.shape
        (pt, pb, ho), (pl, pr, wo) = self._pads(h, w)
        cols, xpshape = self._im2col(x, ((pt, pb), (pl, pr)), self.stride, (ho, wo))
        out = cols @ self.w.value.reshape(-1, self.c_out) + self.b.value
        self._cache = (cols, x.shape, xpshape, (pt, pl), (ho, wo))
        return out.reshape(n, ho, wo, self.c_out)

    def backward(self, dout):
        cols, xshape, xpshape, (pt, pl), (ho, wo) = self._need_cache()
        n, h, w, c = xshape
        s, k = self.stride, self.k
        d2 = dout.reshape(-1, self.c_out)
        self.w.accumulate((cols.T @ d2).reshape(self.w.value.shape))
        self.b.accumulate(d2.sum(axis=0))
        if s == 1:
            # input gradient of a stride-1 conv is a conv of dout with the flipped kernel
            wf = self.w.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, c)
            pb, pr = xpshape[1] - h - pt, xpshape[2] - w - pl
            dcols, _ = self._im2col(dout, ((k - 1 - pt, k - 1 - pb), (k - 1 - pl, k - 1 - pr)), 1, (h, w))
            return (dcols @ wf).reshape(n, h, w, c)
        dcols = (d2 @ self.w.value.reshape(-1, self.c_out).T).reshape(n, ho, wo, k, k, c)
        dxp = np.zeros(xpshape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pt:pt + h, pl:pl + w, :]


class Upsample2x(Layer):
    kind = "upsample2x"

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"upsample2x expects (H, W, C), got {tuple(shape)}")
        return (shape[0] * 2, shape[1] * 2, shape[2])

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        self._cache = True
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, dout):
        self._need_cache()
        n, h, w, c = dout.shape
        return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


# kernel row i of a 3x3 conv applied after nearest 2x upsampling lands on
# low-res tap r for output phase a: _PHASE_TAPS[a][r] lists the contributing i.
_PHASE_TAPS = (((0,), (1, 2)), ((0, 1), (2,)))


class UpsampleConv2D(Layer):
    """Nearest 2x upsample followed by a stride-1 kernel-3 'same' conv, fused.

    Numerically the same map as ``Upsample2x`` then ``Conv2D(stride=1)`` with the
    same (3, 3, c_in, c_out) kernel, but each of the four output phases is a 2x2
    conv on the low-resolution input, which needs 16/36 of the multiply-adds.
    """

    kind = "upconv2x"

    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.w = Param("kernel", _init_kernel(rng, (3, 3, c_in, c_out), dtype))
        self.b = Param("bias", np.zeros(c_out, dtype=dtype))
        self.params = [self.w, self.b]

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.c_in:
            raise ShapeError(f"upconv expects (H, W, {self.c_in}) per sample, got {tuple(shape)}")
        return (2 * shape[0], 2 * shape[1], self.c_out)

    def _phase_kernel(self, a, b):
        w = self.w.value
        k = np.zeros((2, 2, self.c_in, self.c_out), dtype=w.dtype)
        for r, rows in enumerate(_PHASE_TAPS[a]):
            for s, cols in enumerate(_PHASE_TAPS[b]):
                k[r, s] = w[np.ix_(rows, cols)].sum(axis=(0, 1))
        return k.reshape(4 * self.c_in, self.c_out)

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        n, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        win = sliding_window_view(xp, (2, 2), axis=(1, 2))
        out = np.empty((n, h, 2, w, 2, self.c_out), dtype=x.dtype)
        cache = {}
        for a in (0, 1):
            for b in (0, 1):
                cols = np.ascontiguousarray(win[:, a:a + h, b:b + w].transpose(0, 1, 2, 4, 5, 3))
                cols = cols.reshape(n * h * w, 4 * c)
                out[:, :, a, :, b, :] = (cols @ self._phase_kernel(a, b) + self.b.value).reshape(n, h, w, -1)
                cache[a, b] = cols
        self._cache = (cache, x.shape)
        return out.reshape(n, 2 * h, 2 * w, self.c_out)

    def backward(self, dout):
        cache, (n, h, w, c) = self._need_cache()
        d6 = dout.reshape(n, h, 2, w, 2, self.c_out)
        dw = np.zeros_like(self.w.value)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dout.dtype)
        for (a, b), cols in cache.items():
            d2 = d6[:, :, a, :, b, :].reshape(-1, self.c_out)
            dk = (cols.T @ d2).reshape(2, 2, c, self.c_out)
            for r, rows in enumerate(_PHASE_TAPS[a]):
                for s, cs in enumerate(_PHASE_TAPS[b]):
                    for i in rows:
                        for j in cs:
                            dw[i, j] += dk[r, s]
            dcols = (d2 @ self._phase_kernel(a, b).T).reshape(n, h, w, 2, 2, c)
            for r in (0, 1):
                for s in (0, 1):
                    dxp[:, a + r:a + r + h, b + s:b + s + w, :] += dcols[:, :, :, r, s, :]
        self.w.accumulate(dw)
        self.b.accumulate(dout.sum(axis=(0, 1, 2)))
        return dxp[:, 1:h + 1, 1:w + 1, :]


class BatchNorm(Layer):
    """Batch normalization over all axes but the last.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    kind = "batch_norm"

    def __init__(self, channels, momentum=0.8, eps=1e-3, dtype=np.float32):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.gamma = Param("gamma", np.ones(channels, dtype=dtype))
        self.beta = Param("beta", np.zeros(channels, dtype=dtype))
        self.params = [self.gamma, self.beta]
        self.buffers = {"running_mean": np.zeros(channels, dtype=dtype),
                        "running_var": np.ones(channels, dtype=dtype)}

    def output_shape(self, shape):
        if shape[-1] != self.channels:
            raise ShapeError(f"batch_norm expects {self.channels} channels, got {tuple(shape)}")
        return shape

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"] = (m * self.buffers["running_mean"] + (1 - m) * mean).astype(x.dtype)
            self.buffers["running_var"] = (m * self.buffers["running_var"] + (1 - m) * var).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"].astype(x.dtype)
            var = self.buffers["running_var"].astype(x.dtype)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, training)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, dout):
        xhat, inv, training = self._need_cache()
        axes = tuple(range(dout.ndim - 1))
        self.gamma.accumulate((dout * xhat).sum(axis=axes))
        self.beta.accumulate(dout.sum(axis=axes))
        dxhat = dout * self.gamma.value
        if not training:
            return dxhat * inv
        m = dout.size // dout.shape[-1]
        return inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, alpha=0.2):
        super().__init__()
        self.alpha = alpha

    def forward(self, x, training=False, rng=None):
        slope = np.where(x > 0, 1.0, self.alpha).astype(x.dtype)
        self._cache = slope
        return x * slope

    def backward(self, dout):
        return dout * self._need_cache()


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, training=False, rng=None):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, dout):
        y = self._need_cache()
        return dout * (1.0 - y * y)


class Dropout(Layer):
    """Inverted dropout; identity outside training mode."""

    kind = "dropout"

    def __init__(self, rate=0.4):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate} (keep probability must be positive)")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._cache = 1.0
            return x
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


class GaussianNoise(Layer):
    """Additive zero-mean noise; identity outside training mode."""

    kind = "gaussian_noise"

    def __init__(self, std=0.2):
        super().__init__()
        self.std = std

    def forward(self, x, training=False, rng=None):
        self._cache = True
        if not training or self.std == 0.0:
            return x
        return x + rng.normal(0.0, self.std, size=x.shape).astype(x.dtype)

    def backward(self, dout):
        self._need_cache()
        return dout


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def output_shape(self, shape):
        if int(np.prod(shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {tuple(shape)} to {self.shape}")
        return self.shape

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


# --------------------------------------------------------------------------- model

class Sequential:
    """A stack of layers with uniquely named parameters ``"<index>.<kind>.<name>"``."""

    def __init__(self, layers, input_shape, name="model"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.name = name
        self.params = ModelParams()
        for i, layer in enumerate(self.layers):
            for p in layer.params:
                p.name = f"{i}.{layer.kind}.{p.name.split('.')[-1]}"
                self.params.add(p)
        self.output_shape = self.propagate_shape(self.input_shape)
        self._forwarded = False

    def propagate_shape(self, shape):
        for layer in self.layers:
            shape = tuple(layer.output_shape(tuple(shape)))
        return shape

    def buffers(self):
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k, v in layer.buffers.items():
                out[f"{i}.{layer.kind}.{k}"] = v
        return out

    def set_buffer(self, name, value):
        idx, _, key = name.split(".", 2)
        layer = self.layers[int(idx)]
        if key not in layer.buffers:
            raise KeyError(name)
        layer.buffers[key] = np.asarray(value, dtype=layer.buffers[key].dtype).reshape(layer.buffers[key].shape)

    def forward(self, x, training=False, rng=None):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"{self.name}: expected input (batch,) + {self.input_shape}, got {tuple(x.shape)}")
        if training and rng is None:
            raise ValueError("training-mode forward requires an rng")
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        self._forwarded = True
        self._out_shape = x.shape
        return x

    __call__ = forward

    def backward(self, dout):
        """Backpropagate ``dout`` (gradient of a scalar loss w.r.t. the output).

        Accumulates into every parameter's ``grad`` and returns the input gradient.
        """
        if not self._forwarded:
            raise BackwardError(f"{self.name}: backward called without a preceding forward")
        if dout.shape != self._out_shape:
            raise ShapeError(f"{self.name}: output gradient {dout.shape} != output {self._out_shape}")
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
        return dout

    def astype(self, dtype):
        for p in self.params:
            p.value = p.value.astype(dtype)
            p.grad = p.m = p.v = None
        for layer in self.layers:
            for k in layer.buffers:
                layer.buffers[k] = layer.buffers[k].astype(dtype)
        return self

    def state(self):
        """Flat name -> array mapping of parameters and buffers (copies)."""
        out = OrderedDict((p.name, p.value.copy()) for p in self.params)
        out.update((k, v.copy()) for k, v in self.buffers().items())
        return out

    def load_state(self, state):
        names = set(self.params.names())
        for k, v in state.items():
            if k in names:
                p = self.params[k]
                v = np.asarray(v)
                if v.shape != p.value.shape:
                    raise ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {p.value.shape}")
                p.value = v.astype(p.value.dtype).copy()
            else:
                self.set_buffer(k, v)
        missing = names - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")


# --------------------------------------------------------------------------- losses

def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_onehot(onehot):
    onehot = np.asarray(onehot)
    ok = np.isin(onehot, (0, 1)).all() and (onehot.sum(axis=-1) == 1).all()
    if not ok:
        raise ValueError("labels must be one-hot rows (a single 1 per row)")


def softmax_cross_entropy_with_logits(logits, onehot):
    """Mean over the batch of -sum_k y_k log softmax(logits)_k."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    onehot = np.atleast_2d(onehot)
    _check_onehot(onehot)
    return float(-(onehot * log_softmax(logits)).sum(axis=-1).mean())


def softmax_cross_entropy_grad(logits, onehot):
    logits = np.atleast_2d(logits)
    return (softmax(logits) - onehot) / logits.shape[0]


def sigmoid_cross_entropy_with_logits(logit, target):
    """Mean binary cross-entropy in the stable form max(l,0) - l*t + log(1+exp(-|l|))."""
    logit = np.asarray(logit, dtype=float)
    target = np.asarray(target)
    if not np.isin(target, (0, 1)).all():
        raise ValueError("binary targets must be 0 or 1")
    return float(np.mean(softplus(logit) - logit * target))


def sigmoid_cross_entropy_grad(logit, target):
    logit = np.asarray(logit)
    return (sigmoid(logit) - target).astype(logit.dtype) / logit.size


# --------------------------------------------------------------------------- optimizer

class Adam:
    """Adaptive-moment optimizer. Defaults follow the usual GAN setting (beta1=0.5)."""

    def __init__(self, params: ModelParams, learning_rate=2e-4, beta1=0.5, beta2=0.999, eps=1e-7):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = learning_rate, beta1, beta2, eps
        self.t = 0

    def step(self):
        missing = [p.name for p in self.params if p.grad is None]
        if missing:
            raise BackwardError(f"adam step before gradients exist for: {missing[:3]}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in self.params:
            if p.m is None:
                p.m = np.zeros_like(p.value)
                p.v = np.zeros_like(p.value)
            g = p.grad
            p.m *= b1
            p.m += (1.0 - b1) * g
            p.v *= b2
            p.v += (1.0 - b2) * g * g
            mhat = p.m / c1
            vhat = p.v / c2
            p.value -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.value.dtype)


def adam_step(params: ModelParams, learning_rate, optimizer: Adam | None = None):
    opt = optimizer or Adam(params, learning_rate)
    opt.lr = learning_rate
    opt.step()
    return opt


# --------------------------------------------------------------------------- gradient check

def grad_check(model: Sequential, x, loss_fn, eps=1e-4, training=False, seed=0, floor=1e-6,
               check_input=True):
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(out) -> (loss, dloss/dout)``. Stochastic layers see the same random
    draws on every evaluation (the rng is reseeded with ``seed``). Relative error
    per element is ``|a - n| / max(|a|, |n|, floor)``.
    """
    x = np.array(x, dtype=np.float64)
    model.astype(np.float64)
    saved = {k: v.copy() for k, v in model.buffers().items()}

    def run(inp):
        for k, v in saved.items():
            model.set_buffer(k, v)
        out = model.forward(inp, training=training, rng=np.random.default_rng(seed))
        return out

    model.params.zero_grad()
    out = run(x)
    loss, dout = loss_fn(out)
    dx = model.backward(dout)
    analytic = [(p, p.grad.copy()) for p in model.params]

    def numeric(arr, f):
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + eps
            lp = f()
            arr[idx] = old - eps
            lm = f()
            arr[idx] = old
            g[idx] = (lp - lm) / (2 * eps)
        return g

    def rel(a, n):
        return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))

    worst = 0.0
    for p, a in analytic:
        n = numeric(p.value, lambda: loss_fn(run(x))[0])
        worst = max(worst, rel(a, n))
    if check_input:
        n = numeric(x, lambda: loss_fn(run(x))[0])
        worst = max(worst, rel(dx, n))
    for k, v in saved.items():
        model.set_buffer(k, v)
    return worst
