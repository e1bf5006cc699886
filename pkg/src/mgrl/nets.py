"""Dense feed-forward networks with hand-written reverse-mode gradients.

Layers are (weights, bias, activation, dropout) tuples; dropout uses the
inverted convention (scale by 1/(1-p) at train time) so evaluation needs no
rescaling.  forward() returns a cache that backward() consumes.
"""

from dataclasses import dataclass

import numpy as np


class DimensionMismatch(ValueError):
    pass


class MissingForwardCache(RuntimeError):
    pass


def _relu(z):
    return np.maximum(z, 0.0)


def _drelu(z, a):
    return (z > 0.0).astype(z.dtype)


def _tanh(z):
    return np.tanh(z)


def _dtanh(z, a):
    return 1.0 - a * a


def _identity(z):
    return z


def _didentity(z, a):
    return np.ones_like(z)


ACTIVATIONS = {
    "relu": (_relu, _drelu),
    "tanh": (_tanh, _dtanh),
    "identity": (_identity, _didentity),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")


class DenseNet:
    """Stack of DenseLayers with seeded dropout masks."""

    def __init__(self, layers, rng_seed=0):
        for a, b in zip(layers, layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise DimensionMismatch(
                    f"layer widths do not chain: {a.weights.shape} -> {b.weights.shape}"
                )
        self.layers = layers
        self.rng = np.random.default_rng(rng_seed)

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weights.shape[0]

    def forward(self, x, train=False):
        """Returns (output, cache).  x may be a single state vector or a
        batch (B, in).  Dropout masks are drawn only in train mode."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input width {x.shape[1]} != expected {self.input_dim}"
            )
        cache = []
        a = x
        for layer in self.layers:
            z = a @ layer.weights.T + layer.bias
            act, _ = ACTIVATIONS[layer.activation]
            out = act(z)
            mask = None
            if train and layer.dropout > 0.0:
                keep = 1.0 - layer.dropout
                mask = (self.rng.random(out.shape) < keep) / keep
                out = out * mask
            cache.append((a, z, out, mask))
            a = out
        return (a[0] if squeeze else a), cache

    def backward(self, cache, grad_out):
        """Gradients of a scalar loss w.r.t. every weight/bias, given the
        loss gradient at the output.  Returns (grads, grad_input) with
        grads a list of (dW, db) matching self.layers."""
        if cache is None:
            raise MissingForwardCache("run forward() first and pass its cache")
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            a_in, z, out, mask = cache[i]
            if mask is not None:
                g = g * mask
            _, dact = ACTIVATIONS[layer.activation]
            # recompute the pre-dropout activation for tanh's derivative
            act_out = out if mask is None else ACTIVATIONS[layer.activation][0](z)
            gz = g * dact(z, act_out)
            grads[i] = (gz.T @ a_in, gz.sum(axis=0))
            g = gz @ layer.weights
        return grads, g

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def set_parameters(self, values):
        params = self.parameters()
        if len(values) != len(params):
            raise DimensionMismatch("parameter count mismatch")
        for dst, src in zip(params, values):
            if dst.shape != src.shape:
                raise DimensionMismatch(f"shape {src.shape} != {dst.shape}")
            dst[...] = src

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)


def build_net(widths, activations, dropouts, rng):
    """He-initialized stack; the final layer gets a small-scale init so the
    initial policy output sits near zero."""
    layers = []
    n = len(widths) - 1
    for i in range(n):
        fan_in = widths[i]
        scale = np.sqrt(2.0 / fan_in)
        if i == n - 1:
            scale = 0.1 / np.sqrt(fan_in)
        w = rng.standard_normal((widths[i + 1], fan_in)) * scale
        b = np.zeros(widths[i + 1])
        layers.append(DenseLayer(w, b, activations[i], dropouts[i]))
    return layers


class Adam:
    """Adaptive-moment optimizer over a flat list of parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
