"""Network layers with exact reverse-mode gradients, on plain numpy.

Every layer implements forward/backward pairs whose gradients are checked
against central finite differences in the test suite.  Parameters live in a
flat float64 vector (`ParamStore`) with named views, so the optimizer and
the checkpoint format see one contiguous array while layers see shaped
slices.
"""

from __future__ import annotations

import numpy as np


class ParamStore:
    """Flat parameter vector with named, shaped views into it."""

    def __init__(self, shapes):
        self.shapes = [(name, tuple(shape)) for name, shape in shapes]
        total = sum(int(np.prod(shape)) for _, shape in self.shapes)
        self.flat = np.zeros(total, dtype=np.float64)
        self.views = {}
        offset = 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            self.views[name] = self.flat[offset : offset + size].reshape(shape)
            offset += size

    @property
    def size(self) -> int:
        return self.flat.size

    def zeros_like(self) -> "ParamStore":
        return ParamStore(self.shapes)

    def copy(self) -> "ParamStore":
        out = ParamStore(self.shapes)
        out.flat[:] = self.flat
        return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Stateless-by-default layer; parameters come in through views."""

    kind = "layer"

    def param_shapes(self):
        return []

    def buffer_shapes(self):
        return []

    def init_params(self, views, rng):
        pass

    def init_buffers(self, views):
        pass

    def forward(self, x, views, buffers, train, update_stats):
        raise NotImplementedError

    def backward(self, dy, cache, views, grad_views):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        self.n_in = n_in
        self.n_out = n_out

    def param_shapes(self):
        return [("W", (self.n_in, self.n_out)), ("b", (self.n_out,))]

    def init_params(self, views, rng):
        views["W"][:] = rng.normal(0.0, 1.0 / np.sqrt(self.n_in), views["W"].shape)
        views["b"][:] = 0.0

    def forward(self, x, views, buffers, train, update_stats):
        return x @ views["W"] + views["b"], x

    def backward(self, dy, cache, views, grad_views):
        x = cache
        if grad_views is not None:
            grad_views["W"] += x.T @ dy
            grad_views["b"] += dy.sum(axis=0)
        return dy @ views["W"].T


class LeakyRelu(Layer):
    kind = "leaky_relu"

    def __init__(self, alpha: float = 0.2):
        self.alpha = alpha

    def forward(self, x, views, buffers, train, update_stats):
        slope = np.where(x > 0.0, 1.0, self.alpha)
        return x * slope, slope

    def backward(self, dy, cache, views, grad_views):
        return dy * cache


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, views, buffers, train, update_stats):
        y = np.tanh(x)
        return y, y

    def backward(self, dy, cache, views, grad_views):
        return dy * (1.0 - cache * cache)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, views, buffers, train, update_stats):
        y = _sigmoid(x)
        return y, y

    def backward(self, dy, cache, views, grad_views):
        return dy * cache * (1.0 - cache)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        self.shape = tuple(shape)  # per-sample shape, batch dim excluded

    def forward(self, x, views, buffers, train, update_stats):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, dy, cache, views, grad_views):
        return dy.reshape(cache)


class Flatten(Reshape):
    kind = "flatten"

    def __init__(self):
        pass

    def forward(self, x, views, buffers, train, update_stats):
        return x.reshape(x.shape[0], -1), x.shape


def _im2col_indices(cin, h, w, k, s, p):
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    i0 = np.tile(np.repeat(np.arange(k), k), cin)
    j0 = np.tile(np.arange(k), k * cin)
    i1 = s * np.repeat(np.arange(ho), wo)
    j1 = s * np.tile(np.arange(wo), ho)
    rows = i0[:, None] + i1[None, :]
    cols = j0[:, None] + j1[None, :]
    chan = np.repeat(np.arange(cin), k * k)[:, None]
    return chan, rows, cols, ho, wo


def im2col(x, k, s, p):
    """(N, C, H, W) -> (N, C*k*k, Ho*Wo) patch matrix."""
    n, cin, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    chan, rows, cols, ho, wo = _im2col_indices(cin, h, w, k, s, p)
    return xp[:, chan, rows, cols], ho, wo


def col2im(patches, x_shape, k, s, p):
    """Adjoint of im2col: scatter-add patches back onto the image grid."""
    n, cin, h, w = x_shape
    xp = np.zeros((n, cin, h + 2 * p, w + 2 * p), dtype=patches.dtype)
    chan, rows, cols, _, _ = _im2col_indices(cin, h, w, k, s, p)
    np.add.at(xp, (slice(None), chan, rows, cols), patches)
    if p == 0:
        return xp
    return xp[:, :, p : p + h, p : p + w]


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, cin, cout, k=4, stride=2, pad=1):
        self.cin, self.cout, self.k, self.stride, self.pad = cin, cout, k, stride, pad

    def param_shapes(self):
        return [("W", (self.cout, self.cin, self.k, self.k)), ("b", (self.cout,))]

    def init_params(self, views, rng):
        fan_in = self.cin * self.k * self.k
        views["W"][:] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), views["W"].shape)
        views["b"][:] = 0.0

    def forward(self, x, views, buffers, train, update_stats):
        patches, ho, wo = im2col(x, self.k, self.stride, self.pad)
        wm = views["W"].reshape(self.cout, -1)
        y = np.matmul(wm, patches) + views["b"][None, :, None]
        return y.reshape(x.shape[0], self.cout, ho, wo), (patches, x.shape)

    def backward(self, dy, cache, views, grad_views):
        patches, x_shape = cache
        n = dy.shape[0]
        dyf = dy.reshape(n, self.cout, -1)
        wm = views["W"].reshape(self.cout, -1)
        if grad_views is not None:
            grad_views["W"] += np.einsum("ncl,nkl->ck", dyf, patches).reshape(
                views["W"].shape
            )
            grad_views["b"] += dyf.sum(axis=(0, 2))
        dpatches = np.matmul(wm.T, dyf)
        return col2im(dpatches, x_shape, self.k, self.stride, self.pad)


class ConvTranspose2d(Layer):
    kind = "conv_transpose"

    def __init__(self, cin, cout, k=4, stride=2, pad=1):
        self.cin, self.cout, self.k, self.stride, self.pad = cin, cout, k, stride, pad

    def out_hw(self, h, w):
        s, k, p = self.stride, self.k, self.pad
        return (h - 1) * s - 2 * p + k, (w - 1) * s - 2 * p + k

    def param_shapes(self):
        return [("W", (self.cin, self.cout, self.k, self.k)), ("b", (self.cout,))]

    def init_params(self, views, rng):
        fan_in = self.cin * self.k * self.k
        views["W"][:] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), views["W"].shape)
        views["b"][:] = 0.0

    def forward(self, x, views, buffers, train, update_stats):
        n, cin, h, w = x.shape
        ho, wo = self.out_hw(h, w)
        xf = x.reshape(n, cin, h * w)
        wm = views["W"].reshape(cin, -1)
        patches = np.matmul(wm.T, xf)  # (n, cout*k*k, h*w)
        y = col2im(patches, (n, self.cout, ho, wo), self.k, self.stride, self.pad)
        return y + views["b"][None, :, None, None], (xf, x.shape)

    def backward(self, dy, cache, views, grad_views):
        xf, x_shape = cache
        n = dy.shape[0]
        dpatches, _, _ = im2col(dy, self.k, self.stride, self.pad)
        wm = views["W"].reshape(self.cin, -1)
        if grad_views is not None:
            grad_views["W"] += np.einsum("nil,njl->ij", xf, dpatches).reshape(
                views["W"].shape
            )
            grad_views["b"] += dy.sum(axis=(0, 2, 3))
        dxf = np.matmul(wm, dpatches)
        return dxf.reshape(x_shape)


class BatchNorm2d(Layer):
    """Per-channel normalization over (N, H, W); running stats for sampling."""

    kind = "batchnorm"

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps

    def param_shapes(self):
        return [("gamma", (self.channels,)), ("beta", (self.channels,))]

    def buffer_shapes(self):
        return [("running_mean", (self.channels,)), ("running_var", (self.channels,))]

    def init_params(self, views, rng):
        views["gamma"][:] = 1.0
        views["beta"][:] = 0.0

    def init_buffers(self, views):
        views["running_mean"][:] = 0.0
        views["running_var"][:] = 1.0

    def forward(self, x, views, buffers, train, update_stats):
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if update_stats:
                mom = self.momentum
                buffers["running_mean"][:] = (
                    mom * buffers["running_mean"] + (1.0 - mom) * mean
                )
                buffers["running_var"][:] = (
                    mom * buffers["running_var"] + (1.0 - mom) * var
                )
        else:
            mean = buffers["running_mean"]
            var = buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        y = views["gamma"][None, :, None, None] * xhat + views["beta"][None, :, None, None]
        return y, (xhat, inv, x - mean[None, :, None, None], train)

    def backward(self, dy, cache, views, grad_views):
        xhat, inv, centered, train = cache
        if grad_views is not None:
            grad_views["gamma"] += (dy * xhat).sum(axis=(0, 2, 3))
            grad_views["beta"] += dy.sum(axis=(0, 2, 3))
        g = views["gamma"][None, :, None, None]
        dxhat = dy * g
        if not train:
            return dxhat * inv[None, :, None, None]
        n, _, h, w = dy.shape
        m = n * h * w
        invb = inv[None, :, None, None]
        dvar = (dxhat * centered).sum(axis=(0, 2, 3)) * (-0.5) * inv**3
        dmean = -(dxhat * invb).sum(axis=(0, 2, 3)) + dvar * (
            -2.0 / m
        ) * centered.sum(axis=(0, 2, 3))
        return (
            dxhat * invb
            + dvar[None, :, None, None] * 2.0 * centered / m
            + dmean[None, :, None, None] / m
        )


ACTIVATIONS = ("leaky_relu", "relu", "tanh", "sigmoid")


def make_activation(spec: str) -> Layer:
    """Parse an activation spec like 'leaky_relu:0.2', 'relu', 'tanh'."""
    name, _, arg = spec.partition(":")
    if name == "leaky_relu":
        return LeakyRelu(float(arg) if arg else 0.2)
    if name == "relu":
        return LeakyRelu(0.0)
    if name == "tanh":
        return Tanh()
    if name == "sigmoid":
        return Sigmoid()
    raise ValueError(f"unknown activation {spec!r}; known: {ACTIVATIONS}")


class Sequential:
    """A named layer stack sharing one ParamStore per network."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.names = [f"{i:02d}-{layer.kind}" for i, layer in enumerate(self.layers)]

    def param_shapes(self):
        out = []
        for name, layer in zip(self.names, self.layers):
            out.extend((f"{name}.{local}", shape) for local, shape in layer.param_shapes())
        return out

    def buffer_shapes(self):
        out = []
        for name, layer in zip(self.names, self.layers):
            out.extend(
                (f"{name}.{local}", shape) for local, shape in layer.buffer_shapes()
            )
        return out

    def _local_views(self, store, name, layer, which):
        shapes = layer.param_shapes() if which == "params" else layer.buffer_shapes()
        return {local: store.views[f"{name}.{local}"] for local, _ in shapes}

    def init(self, params: ParamStore, buffers: ParamStore, rng) -> None:
        for name, layer in zip(self.names, self.layers):
            layer.init_params(self._local_views(params, name, layer, "params"), rng)
            layer.init_buffers(self._local_views(buffers, name, layer, "buffers"))

    def forward(self, x, params, buffers, train=False, update_stats=False):
        caches = []
        for name, layer in zip(self.names, self.layers):
            x, cache = layer.forward(
                x,
                self._local_views(params, name, layer, "params"),
                self._local_views(buffers, name, layer, "buffers"),
                train,
                update_stats,
            )
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches, params, grads: ParamStore | None):
        for name, layer, cache in zip(
            reversed(self.names), reversed(self.layers), reversed(caches)
        ):
            grad_views = (
                None
                if grads is None
                else self._local_views(grads, name, layer, "params")
            )
            dy = layer.backward(dy, cache, self._local_views(params, name, layer, "params"), grad_views)
        return dy
