"""Feedforward ReLU classifiers: representation, evaluation and gradients.

Networks are immutable stacks of {Dense, Conv2d, Relu, Flatten} layers over
float64 arrays. Images are channels-first (C, H, W) and Flatten uses row-major
(C, H, W) order, which the Flatten->Dense architectures rely on.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .tensors import Tensor, as_array

__all__ = [
    "Dense",
    "Conv2d",
    "Relu",
    "Flatten",
    "Network",
    "CrossEntropy",
    "LogitMargin",
    "SingleLogit",
    "forward",
    "classify",
    "grad_input",
]


def _finite_readonly(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    if not np.all(np.isfinite(a)):
        raise ValueError("layer parameters must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dense:
    """Affine layer: y = weights @ x + bias, weights shaped (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _finite_readonly(self.weights)
        b = _finite_readonly(self.bias)
        if w.ndim != 2:
            raise ValueError("Dense weights must be a matrix")
        if b.ndim != 1 or b.size != w.shape[0]:
            raise ValueError("Dense bias length must equal weight rows")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.weights.shape[1]:
            raise ValueError(
                f"Dense expects flat input of size {self.weights.shape[1]}, got {in_shape}"
            )
        return (self.weights.shape[0],)


@dataclass(frozen=True, eq=False)
class Conv2d:
    """2-D convolution, kernels shaped (out_c, in_c, kh, kw), padding 0 only."""

    kernels: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        k = _finite_readonly(self.kernels)
        if k.ndim != 4:
            raise ValueError("Conv2d kernels must be 4-D (out_c, in_c, kh, kw)")
        if self.stride < 1:
            raise ValueError("stride must be a positive integer")
        if self.padding != 0:
            raise ValueError("only padding 0 is supported")
        object.__setattr__(self, "kernels", k)

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ValueError(f"Conv2d expects (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        oc, ic, kh, kw = self.kernels.shape
        if ic != c:
            raise ValueError(f"Conv2d kernel expects {ic} channels, got {c}")
        if h < kh or w < kw:
            raise ValueError("Conv2d output spatial dims must be >= 1")
        oh = (h - kh) // self.stride + 1
        ow = (w - kw) // self.stride + 1
        return (oc, oh, ow)


@dataclass(frozen=True, eq=False)
class Relu:
    def out_shape(self, in_shape):
        return in_shape


@dataclass(frozen=True, eq=False)
class Flatten:
    def out_shape(self, in_shape):
        return (math.prod(in_shape),)


Layer = Dense | Conv2d | Relu | Flatten

# Derived conv data (patch index map and dense-equivalent matrix), cached per
# live layer object; keyed weakly so dead networks do not pin memory.
_CONV_DERIVED: "weakref.WeakKeyDictionary[Conv2d, dict]" = weakref.WeakKeyDictionary()


def _conv_patch_cols(in_shape, kernels_shape, stride):
    """Column index map turning a conv into a gather + matmul over flat input."""
    c, h, w = in_shape
    oc, ic, kh, kw = kernels_shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    idx = np.arange(c * h * w).reshape(c, h, w)
    cols = np.empty((oh * ow, ic * kh * kw), dtype=np.intp)
    p = 0
    for y in range(oh):
        for x in range(ow):
            patch = idx[:, y * stride : y * stride + kh, x * stride : x * stride + kw]
            cols[p] = patch.ravel()
            p += 1
    return cols, (oc, oh, ow)


def conv_derived(layer: Conv2d, in_shape):
    """Patch map, output shape and dense-equivalent matrix for a conv layer."""
    per_layer = _CONV_DERIVED.setdefault(layer, {})
    key = tuple(in_shape)
    if key not in per_layer:
        cols, out_shape = _conv_patch_cols(key, layer.kernels.shape, layer.stride)
        oc = out_shape[0]
        npatch = cols.shape[0]
        n_in = math.prod(key)
        kmat = layer.kernels.reshape(oc, -1)
        mat = np.zeros((oc, npatch, n_in))
        mat[
            np.arange(oc)[:, None, None],
            np.arange(npatch)[None, :, None],
            cols[None, :, :],
        ] = kmat[:, None, :]
        per_layer[key] = {
            "cols": cols,
            "out_shape": out_shape,
            "mat": mat.reshape(oc * npatch, n_in),
        }
    return per_layer[key]


@dataclass(frozen=True, eq=False)
class Network:
    """An ordered layer stack classifying inputs into n_classes labels.

    Immutable after construction; forward/classify/grad are pure, so instances
    can be shared freely across concurrent workers.
    """

    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]
    n_classes: int
    _shapes: tuple = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.n_classes < 2:
            raise ValueError("a classifier needs at least 2 classes")
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.out_shape(shapes[-1]))
        if shapes[-1] != (self.n_classes,):
            raise ValueError(
                f"final layer produces {shapes[-1]}, expected ({self.n_classes},)"
            )
        object.__setattr__(self, "_shapes", tuple(shapes))

    @property
    def layer_shapes(self):
        """Shapes at every layer boundary, starting with the input shape."""
        return self._shapes

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)

    def parameters(self):
        params = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                params.extend([layer.weights, layer.bias])
            elif isinstance(layer, Conv2d):
                params.append(layer.kernels)
        return params

    def with_parameters(self, params) -> "Network":
        """A copy of this network with new parameter arrays, same topology."""
        params = list(params)
        layers = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                w = params.pop(0)
                b = params.pop(0)
                layers.append(Dense(w, b))
            elif isinstance(layer, Conv2d):
                layers.append(Conv2d(params.pop(0), layer.stride, layer.padding))
            else:
                layers.append(layer)
        return Network(self.input_shape, tuple(layers), self.n_classes)

    # -- evaluation ---------------------------------------------------------

    def _apply_layer(self, layer, x, in_shape):
        """Apply one layer to a batch (B, *in_shape)."""
        if isinstance(layer, Dense):
            return x @ layer.weights.T + layer.bias
        if isinstance(layer, Relu):
            return np.maximum(x, 0.0)
        if isinstance(layer, Flatten):
            return x.reshape(x.shape[0], -1)
        if isinstance(layer, Conv2d):
            d = conv_derived(layer, in_shape)
            out = x.reshape(x.shape[0], -1) @ d["mat"].T
            return out.reshape((x.shape[0],) + d["out_shape"])
        raise TypeError(f"unknown layer {layer!r}")

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        """Logits for a batch of inputs shaped (B, *input_shape)."""
        x = np.asarray(xs, dtype=np.float64)
        x = x.reshape((x.shape[0],) + self.input_shape)
        for layer, in_shape in zip(self.layers, self._shapes):
            x = self._apply_layer(layer, x, in_shape)
        return x

    def activations(self, xs: np.ndarray):
        """Batch values at every layer boundary (input included)."""
        x = np.asarray(xs, dtype=np.float64).reshape((-1,) + self.input_shape)
        acts = [x]
        for layer, in_shape in zip(self.layers, self._shapes):
            x = self._apply_layer(layer, x, in_shape)
            acts.append(x)
        return acts

    def backward_batch(self, acts, grad_logits, want_param_grads=False):
        """Backpropagate d(loss)/d(logits) to the input (and parameters).

        ReLU uses the 0 subgradient at exactly 0, so kink points contribute
        nothing. Returns (grad_input, param_grads or None).
        """
        g = np.asarray(grad_logits, dtype=np.float64)
        param_grads = [] if want_param_grads else None
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x_in = acts[i]
            if isinstance(layer, Dense):
                if want_param_grads:
                    param_grads.append(g.sum(axis=0))
                    param_grads.append(g.T @ x_in)
                g = g @ layer.weights
            elif isinstance(layer, Relu):
                g = g * (acts[i + 1] > 0.0)
            elif isinstance(layer, Flatten):
                g = g.reshape(x_in.shape)
            elif isinstance(layer, Conv2d):
                in_shape = self._shapes[i]
                d = conv_derived(layer, in_shape)
                gflat = g.reshape(g.shape[0], -1)
                if want_param_grads:
                    oc = d["out_shape"][0]
                    patches = x_in.reshape(x_in.shape[0], -1)[:, d["cols"]]
                    gout = gflat.reshape(g.shape[0], oc, -1)
                    gk = np.einsum("bop,bpk->ok", gout, patches, optimize=True)
                    param_grads.append(gk.reshape(layer.kernels.shape))
                g = (gflat @ d["mat"]).reshape((g.shape[0],) + in_shape)
        if want_param_grads:
            param_grads.reverse()
        return g, param_grads


# -- loss specifications for input gradients -------------------------------


@dataclass(frozen=True)
class CrossEntropy:
    """Cross-entropy of the softmaxed logits against a fixed label."""

    label: int


@dataclass(frozen=True)
class LogitMargin:
    """logit[target] - max over other logits."""

    target: int


@dataclass(frozen=True)
class SingleLogit:
    """A single raw logit."""

    index: int


LossSpec = CrossEntropy | LogitMargin | SingleLogit


def loss_grad_logits(loss: LossSpec, logits: np.ndarray, n: int) -> np.ndarray:
    """d(loss)/d(logits) for a batch of logits."""
    g = np.zeros_like(logits)
    rows = np.arange(len(g))
    if isinstance(loss, CrossEntropy):
        if not 0 <= loss.label < n:
            raise ValueError(f"label {loss.label} out of range for {n} classes")
        z = logits - logits.max(axis=-1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        g[:] = p
        g[rows, loss.label] -= 1.0
    elif isinstance(loss, LogitMargin):
        if not 0 <= loss.target < n:
            raise ValueError(f"target {loss.target} out of range for {n} classes")
        masked = logits.copy()
        masked[:, loss.target] = -np.inf
        rival = masked.argmax(axis=-1)
        g[rows, loss.target] = 1.0
        g[rows, rival] -= 1.0
    elif isinstance(loss, SingleLogit):
        if not 0 <= loss.index < n:
            raise ValueError(f"logit index {loss.index} out of range for {n} classes")
        g[:, loss.index] = 1.0
    else:
        raise TypeError(f"unknown loss spec {loss!r}")
    return g


# -- public single-input operations ----------------------------------------


def forward(net: Network, x) -> Tensor:
    """Logits of `x`, a Tensor or array matching the network input shape."""
    a = as_array(x, net.input_shape)
    logits = net.forward_batch(a[None])[0]
    return Tensor.from_array(logits)


def classify(net: Network, x) -> int:
    """Predicted class index; exact logit ties go to the lowest index."""
    logits = forward(net, x)
    return int(np.argmax(logits.data))


def grad_input(net: Network, x, loss: LossSpec) -> Tensor:
    """Gradient of the scalar loss with respect to the input."""
    a = as_array(x, net.input_shape)
    acts = net.activations(a[None])
    g_logits = loss_grad_logits(loss, acts[-1], net.n_classes)
    g, _ = net.backward_batch(acts, g_logits)
    return Tensor.from_array(g[0])
