"""Fully convolutional network producing per-site unary potentials.

Layers: conv (stride 1, same zero padding, odd kernels), relu, maxpool
(stride 1, same padding with out-of-window border semantics), plus an
optional trailing softmax-readout marker.  The forward pass emits raw
logits; the CRF consumes them as unary potentials via psi = -logit, so
exp(-psi) is exactly the softmax the network was pretrained with.

Everything is float64 numpy with exact, hand-derived backward passes so the
gradients can be validated against finite differences.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import ContractViolation
from . import rng

CONV, RELU, MAXPOOL, SOFTMAX = "conv", "relu", "maxpool", "softmax-readout"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel_size: int = 0
    in_channels: int = 0
    out_channels: int = 0

    def __post_init__(self):
        if self.kind not in (CONV, RELU, MAXPOOL, SOFTMAX):
            raise ContractViolation(f"unknown layer kind {self.kind!r}")
        if self.kind in (CONV, MAXPOOL):
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ContractViolation(
                    f"{self.kind} kernel size must be odd and positive, "
                    f"got {self.kernel_size}")
        if self.kind == CONV and (self.in_channels < 1 or self.out_channels < 1):
            raise ContractViolation("conv channel counts must be positive")


@dataclass(frozen=True)
class NetworkSpec:
    input_channels: int
    layers: tuple

    def __post_init__(self):
        channels = self.input_channels
        for layer in self.layers:
            if layer.kind == CONV:
                if layer.in_channels != channels:
                    raise ContractViolation(
                        f"conv expects {layer.in_channels} input channels, "
                        f"previous layer emits {channels}")
                channels = layer.out_channels

    @property
    def output_channels(self) -> int:
        channels = self.input_channels
        for layer in self.layers:
            if layer.kind == CONV:
                channels = layer.out_channels
        return channels

    def conv_layers(self) -> List[LayerSpec]:
        return [l for l in self.layers if l.kind == CONV]


@dataclass
class ConvParams:
    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)


def make_spec(preset: str, num_labels: int, input_channels: int = 1) -> NetworkSpec:
    """Named architectures; the output layer always emits num_labels channels."""
    if preset == "desk":
        layers = (
            LayerSpec(CONV, 9, input_channels, 8),
            LayerSpec(RELU),
            LayerSpec(CONV, 5, 8, 8),
            LayerSpec(RELU),
            LayerSpec(CONV, 3, 8, num_labels),
        )
    elif preset == "paper":
        layers = (
            LayerSpec(CONV, 41, input_channels, 50),
            LayerSpec(RELU),
            LayerSpec(CONV, 17, 50, 50),
            LayerSpec(RELU),
            LayerSpec(CONV, 11, 50, 50),
            LayerSpec(MAXPOOL, 3),
            LayerSpec(RELU),
            LayerSpec(CONV, 5, 50, num_labels),
            LayerSpec(SOFTMAX),
        )
    else:
        raise ContractViolation(f"unknown network preset {preset!r}")
    return NetworkSpec(input_channels=input_channels, layers=layers)


def init_params(spec: NetworkSpec, seed: int) -> List[ConvParams]:
    """Uniform [-a, a] kernels with a = sqrt(6 / (fan_in + fan_out)), zero biases."""
    params = []
    for i, layer in enumerate(spec.conv_layers()):
        k = layer.kernel_size
        fan_in = layer.in_channels * k * k
        fan_out = layer.out_channels * k * k
        a = np.sqrt(6.0 / (fan_in + fan_out))
        gen = rng.stream(seed, rng.TAG_NET_INIT, counter=i)
        weight = gen.uniform(-a, a, size=(layer.out_channels, layer.in_channels, k, k))
        params.append(ConvParams(weight=weight, bias=np.zeros(layer.out_channels)))
    return params


def zero_like_params(params: List[ConvParams]) -> List[ConvParams]:
    return [ConvParams(np.zeros_like(p.weight), np.zeros_like(p.bias)) for p in params]


def copy_params(params: List[ConvParams]) -> List[ConvParams]:
    return [ConvParams(p.weight.copy(), p.bias.copy()) for p in params]


def _windows(padded: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """(C, h, w, k, k) sliding windows over a padded (C, hp, wp) map."""
    c = padded.shape[0]
    sc, sh, sw = padded.strides
    return np.lib.stride_tricks.as_strided(
        padded, shape=(c, h, w, k, k), strides=(sc, sh, sw, sh, sw))


def _conv_forward(x: np.ndarray, p: ConvParams):
    out_c, in_c, k, _ = p.weight.shape
    if x.shape[0] != in_c:
        raise ContractViolation(f"conv expects {in_c} channels, input has {x.shape[0]}")
    h, w = x.shape[1], x.shape[2]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    cols = _windows(xp, k, h, w).transpose(1, 2, 0, 3, 4).reshape(h * w, in_c * k * k)
    out = cols @ p.weight.reshape(out_c, -1).T + p.bias
    return out.T.reshape(out_c, h, w), cols


def _conv_backward(upstream: np.ndarray, cols: np.ndarray, p: ConvParams,
                   in_shape) -> tuple:
    out_c, in_c, k, _ = p.weight.shape
    c, h, w = in_shape
    up_flat = upstream.reshape(out_c, h * w).T  # (hw, out)
    d_weight = (up_flat.T @ cols).reshape(p.weight.shape)
    d_bias = up_flat.sum(axis=0)
    cols_grad = (up_flat @ p.weight.reshape(out_c, -1)).reshape(h, w, in_c, k, k)
    pad = (k - 1) // 2
    dxp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    for u in range(k):
        for v in range(k):
            dxp[:, u:u + h, v:v + w] += cols_grad[:, :, :, u, v].transpose(2, 0, 1)
    dx = dxp[:, pad:pad + h, pad:pad + w]
    return ConvParams(d_weight, d_bias), dx


def _maxpool_forward(x: np.ndarray, k: int):
    c, h, w = x.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    win = _windows(xp, k, h, w).reshape(c, h, w, k * k)
    arg = win.argmax(axis=-1)  # first max in raster order within the window
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _maxpool_backward(upstream: np.ndarray, arg: np.ndarray, k: int,
                      in_shape) -> np.ndarray:
    c, h, w = in_shape
    pad = (k - 1) // 2
    hp, wp = h + 2 * pad, w + 2 * pad
    du, dv = np.divmod(arg, k)
    rows = np.arange(h)[None, :, None] + du
    cols = np.arange(w)[None, None, :] + dv
    chan = np.arange(c)[:, None, None] * (hp * wp)
    flat_idx = (chan + rows * wp + cols).ravel()
    dxp = np.zeros(c * hp * wp)
    np.add.at(dxp, flat_idx, upstream.ravel())
    dxp = dxp.reshape(c, hp, wp)
    return dxp[:, pad:pad + h, pad:pad + w]


def forward(spec: NetworkSpec, params: List[ConvParams], x: np.ndarray,
            want_cache: bool = False):
    """Forward pass; returns (L, H, W) logits (and layer caches on request)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != spec.input_channels:
        raise ContractViolation(
            f"input shape {x.shape} does not match {spec.input_channels} channels")
    caches = []
    conv_i = 0
    out = x
    for layer in spec.layers:
        if layer.kind == CONV:
            in_shape = out.shape
            out, cols = _conv_forward(out, params[conv_i])
            caches.append((layer, conv_i, in_shape, cols))
            conv_i += 1
        elif layer.kind == RELU:
            mask = out > 0
            caches.append((layer, None, None, mask))
            out = out * mask
        elif layer.kind == MAXPOOL:
            in_shape = out.shape
            out, arg = _maxpool_forward(out, layer.kernel_size)
            caches.append((layer, None, in_shape, arg))
        else:  # softmax-readout marks the probability head; logits pass through
            caches.append((layer, None, None, None))
    if want_cache:
        return out, caches
    return out


def backward(spec: NetworkSpec, params: List[ConvParams], x: np.ndarray,
             upstream: np.ndarray, caches=None):
    """Gradients of sum(upstream * logits) w.r.t. parameters and the input."""
    if caches is None:
        logits, caches = forward(spec, params, x, want_cache=True)
        if upstream.shape != logits.shape:
            raise ContractViolation(
                f"upstream shape {upstream.shape} != logits shape {logits.shape}")
    grads = zero_like_params(params)
    d = np.asarray(upstream, dtype=np.float64)
    for layer, conv_i, in_shape, cache in reversed(caches):
        if layer.kind == CONV:
            g, d = _conv_backward(d, cache, params[conv_i], in_shape)
            grads[conv_i] = g
        elif layer.kind == RELU:
            d = d * cache
        elif layer.kind == MAXPOOL:
            d = _maxpool_backward(d, cache, layer.kernel_size, in_shape)
        # softmax-readout: identity on logits
    return grads, d


def unaries_from_logits(logits: np.ndarray) -> np.ndarray:
    """(L, H, W) logits -> (N, L) unary potentials with psi = -logit."""
    L = logits.shape[0]
    return -np.moveaxis(logits, 0, -1).reshape(-1, L)


def logit_upstream_from_unary_error(err: np.ndarray, height: int, width: int) -> np.ndarray:
    """(N, L) unary-potential error -> (L, H, W) upstream on the logits.

    With psi = -logit, descending the negative log-likelihood means the
    logit-level upstream is the indicator error itself (the two sign flips
    cancel).
    """
    L = err.shape[1]
    return np.moveaxis(err.reshape(height, width, L), -1, 0)


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=0, keepdims=True))
    return z / z.sum(axis=0, keepdims=True)


def cross_entropy_loss_and_grad(logits: np.ndarray, labels: np.ndarray):
    """Mean per-pixel softmax cross-entropy and its gradient on the logits.

    labels is a flat (H*W,) vector in raster order, every pixel counted
    (background included).
    """
    L, h, w = logits.shape
    labels = np.asarray(labels).reshape(h, w)
    probs = softmax_channels(logits)
    rows, cols = np.indices((h, w))
    picked = probs[labels, rows, cols]
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[labels, rows, cols] -= 1.0
    return loss, grad / (h * w)


def pretrain_step(spec: NetworkSpec, params: List[ConvParams], image: np.ndarray,
                  labels: np.ndarray, rate: float, momentum_coeff: float,
                  buffers: List[ConvParams]) -> float:
    """One SGD-with-momentum step on per-pixel cross-entropy; updates params
    and buffers in place, returns the pre-step loss."""
    logits, caches = forward(spec, params, image, want_cache=True)
    loss, grad = cross_entropy_loss_and_grad(logits, labels)
    grads, _ = backward(spec, params, image, grad, caches=caches)
    for p, g, v in zip(params, grads, buffers):
        v.weight *= momentum_coeff
        v.weight += g.weight
        v.bias *= momentum_coeff
        v.bias += g.bias
        p.weight -= rate * v.weight
        p.bias -= rate * v.bias
    return loss
