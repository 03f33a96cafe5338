"""Minimal dense-tensor kernel: exactly the ops the convolutional labeler needs.

Every differentiable op here has a hand-derived backward pass (no autodiff
graph); the test suite validates each one against central finite differences
in float64.  Ops are pure functions over arrays plus explicit RNG state, so
given a seed everything is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Tensor:
    """Dense N-dimensional float array with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) else np.float32
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def add_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != value shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def astype(self, dtype) -> "Tensor":
        t = Tensor(self.data.astype(dtype))
        if self.grad is not None:
            t.grad = self.grad.astype(dtype)
        return t

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.dtype})"


@dataclass(frozen=True)
class ConvSpec:
    """Shape contract for a length-preserving acausal dilated convolution."""

    kernel_size: int
    dilation: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be positive, got {self.dilation}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")

    @property
    def pad(self) -> int:
        """One-sided zero padding that keeps output length equal to input length."""
        return (self.kernel_size - 1) // 2 * self.dilation


def _conv_check(x: np.ndarray, spec: ConvSpec, w: np.ndarray, b: np.ndarray):
    if x.ndim not in (2, 3):
        raise ValueError(f"input must be [channels, n] or [batch, channels, n], got ndim={x.ndim}")
    if x.shape[-2] != spec.in_channels:
        raise ValueError(f"input channel dimension is {x.shape[-2]}, spec expects {spec.in_channels}")
    if x.shape[-1] < 1:
        raise ValueError("input length dimension must be >= 1")
    if w.shape != (spec.out_channels, spec.in_channels, spec.kernel_size):
        raise ValueError(
            f"weights shape {w.shape} != (out_channels, in_channels, kernel_size)="
            f"{(spec.out_channels, spec.in_channels, spec.kernel_size)}"
        )
    if b.shape != (spec.out_channels,):
        raise ValueError(f"bias shape {b.shape} != (out_channels,)={(spec.out_channels,)}")


def conv1d_acausal(x: Tensor, spec: ConvSpec, weights: Tensor, bias: Tensor) -> Tensor:
    """Centered dilated convolution with zero padding.

    out[b, c, t] = bias[c] + sum_{i,j} weights[c, i, j] * x[b, i, t + (j - (k-1)/2) * d]
    with out-of-range input treated as zero, so the output length equals the
    input length.  Accepts [C, n] or [B, C, n]; returns the same rank.
    """
    data = x.data
    _conv_check(data, spec, weights.data, bias.data)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[None]
    batch, _, n = data.shape
    pad = spec.pad
    xp = np.zeros((batch, spec.in_channels, n + 2 * pad), dtype=data.dtype)
    xp[:, :, pad:pad + n] = data
    # accumulate in [C_out, B, n] so each tap is one GEMM via tensordot
    acc = np.zeros((spec.out_channels, batch, n), dtype=data.dtype)
    for j in range(spec.kernel_size):
        off = j * spec.dilation
        acc += np.tensordot(weights.data[:, :, j], xp[:, :, off:off + n], axes=([1], [1]))
    out = np.ascontiguousarray(acc.transpose(1, 0, 2))
    out += bias.data[None, :, None]
    if squeeze:
        out = out[0]
    return Tensor(out)


def conv1d_acausal_backward(
    grad_out: np.ndarray, saved_input: np.ndarray, spec: ConvSpec, weights: Tensor
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of conv1d_acausal w.r.t. input, weights and bias."""
    squeeze = saved_input.ndim == 2
    x = saved_input[None] if squeeze else saved_input
    gy = grad_out[None] if grad_out.ndim == 2 else grad_out
    if gy.shape != (x.shape[0], spec.out_channels, x.shape[2]):
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with forward output")
    batch, _, n = x.shape
    pad = spec.pad
    xp = np.zeros((batch, spec.in_channels, n + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + n] = x

    grad_b = gy.sum(axis=(0, 2))
    grad_w = np.empty_like(weights.data)
    gxp = np.zeros((spec.in_channels, batch, n + 2 * pad), dtype=x.dtype)
    for j in range(spec.kernel_size):
        off = j * spec.dilation
        grad_w[:, :, j] = np.tensordot(gy, xp[:, :, off:off + n], axes=([0, 2], [0, 2]))
        gxp[:, :, off:off + n] += np.tensordot(weights.data[:, :, j], gy, axes=([0], [1]))
    grad_x = np.ascontiguousarray(gxp[:, :, pad:pad + n].transpose(1, 0, 2))
    if squeeze:
        grad_x = grad_x[0]
    return grad_x, grad_w, grad_b


class BatchNormState:
    """Per-channel affine normalization state with running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, epsilon: float = 1e-5, dtype=np.float32):
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must be in (0,1), got {momentum}")
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.epsilon = epsilon

    @property
    def channels(self) -> int:
        return self.gamma.size


def batchnorm_channel(x: Tensor, state: BatchNormState, train: bool):
    """Normalize each channel over (batch, time).

    Train mode standardizes with the batch statistics and updates the running
    stats with `momentum` (biased variance, matching the normalization).  Eval
    mode applies the deterministic affine map from the running stats.  Returns
    (output, ctx); ctx is None in eval mode and feeds the backward pass in
    train mode.
    """
    data = x.data
    if data.ndim != 3 or data.shape[1] != state.channels:
        raise ValueError(f"expected [batch, {state.channels}, n], got {data.shape}")
    gamma = state.gamma.data
    beta = state.beta.data
    if not train:
        inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
        scale = (gamma * inv_std).astype(data.dtype)
        shift = (beta - state.running_mean * scale).astype(data.dtype)
        return Tensor(data * scale[None, :, None] + shift[None, :, None]), None

    count = data.shape[0] * data.shape[2]
    if count < 2:
        raise ValueError("train-mode normalization needs at least 2 positions per channel")
    mean = data.mean(axis=(0, 2))
    var = data.var(axis=(0, 2))
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (data - mean[None, :, None]) * inv_std[None, :, None]
    out = xhat * gamma[None, :, None] + beta[None, :, None]
    m = state.momentum
    state.running_mean += m * (mean - state.running_mean)
    state.running_var += m * (var - state.running_var)
    return Tensor(out), (xhat, inv_std)


def batchnorm_channel_backward(grad_out: np.ndarray, ctx, state: BatchNormState):
    """Gradients of the train-mode normalization: (grad_x, grad_gamma, grad_beta)."""
    xhat, inv_std = ctx
    grad_beta = grad_out.sum(axis=(0, 2))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2))
    count = grad_out.shape[0] * grad_out.shape[2]
    mean_gy = grad_beta / count
    mean_gy_xhat = grad_gamma / count
    grad_x = (state.gamma.data * inv_std)[None, :, None] * (
        grad_out - mean_gy[None, :, None] - xhat * mean_gy_xhat[None, :, None]
    )
    return grad_x, grad_gamma, grad_beta


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0))


def relu_backward(grad_out: np.ndarray, saved_input: np.ndarray) -> np.ndarray:
    return grad_out * (saved_input > 0)


def spatial_dropout(x: Tensor, rate: float, rng) -> tuple[Tensor, np.ndarray | None]:
    """Zero whole channels (all time steps together) with probability `rate`.

    Survivors are scaled by 1/(1-rate), so the op is identity in expectation.
    `rng` is a seed or numpy Generator; rate 0 is an exact identity.  Returns
    (output, mask) where mask rescales survivors and feeds the backward pass.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if rate == 0.0:
        return x, None
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    data = x.data
    squeeze = data.ndim == 2
    if squeeze:
        data = data[None]
    keep = rng.random(data.shape[:2]) >= rate
    mask = keep.astype(data.dtype) / (1.0 - rate)
    out = data * mask[:, :, None]
    if squeeze:
        out, mask = out[0], mask[0]
    return Tensor(out), mask


def spatial_dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return grad_out
    return grad_out * mask[..., None]


def apply_time_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Zero every padded position so padding never leaks through a convolution."""
    if mask.shape != (x.shape[0], x.shape[-1]):
        raise ValueError(f"mask shape {mask.shape} != (batch, n)")
    return Tensor(x.data * mask[:, None, :].astype(x.dtype))


def apply_time_mask_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_out * mask[:, None, :].astype(grad_out.dtype)


def embed_lookup(ids: np.ndarray, table: Tensor) -> Tensor:
    """Gather embedding rows: int ids [n] or [B, n] -> [E, n] or [B, E, n]."""
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.shape[0]:
        raise ValueError(f"id out of range for vocabulary of size {table.shape[0]}")
    gathered = table.data[ids]                     # [..., n, E]
    return Tensor(np.ascontiguousarray(np.moveaxis(gathered, -1, -2)))


def embed_lookup_backward(grad_out: np.ndarray, ids: np.ndarray, table: Tensor) -> np.ndarray:
    grad_table = np.zeros_like(table.data)
    flat_ids = np.asarray(ids).ravel()
    flat_grad = np.moveaxis(grad_out, -2, -1).reshape(-1, table.shape[1])
    np.add.at(grad_table, flat_ids, flat_grad)
    return grad_table


def softmax_cross_entropy(
    logits: Tensor, targets: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross entropy over unmasked positions, plus the logits gradient.

    logits: [B, V, n]; targets: int [B, n]; mask: bool [B, n] (True = real
    position).  Padded positions contribute nothing to loss or gradient.
    """
    data = logits.data
    if data.ndim != 3:
        raise ValueError(f"logits must be [batch, vocab, n], got shape {data.shape}")
    total = int(mask.sum())
    if total == 0:
        raise ValueError("all positions are masked out; nothing to score")
    if targets.min() < 0 or targets.max() >= data.shape[1]:
        raise ValueError(f"target id out of range for vocab size {data.shape[1]}")
    shifted = data - data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    picked = np.take_along_axis(log_probs, targets[:, None, :], axis=1)[:, 0, :]
    loss = -(picked * mask).sum() / total

    grad = exp / denom
    batch_idx = np.arange(data.shape[0])[:, None]
    time_idx = np.arange(data.shape[2])[None, :]
    grad[batch_idx, targets, time_idx] -= 1.0
    grad *= (mask.astype(data.dtype) / total)[:, None, :]
    return float(loss), grad


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data))


def adam_step(
    param: Tensor,
    grad: np.ndarray,
    state: AdamState,
    step: int,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Standard Adam update with bias correction, in place. `step` starts at 1."""
    if grad.shape != param.data.shape:
        raise ValueError(f"grad shape {grad.shape} != param shape {param.data.shape}")
    state.m += (1.0 - beta1) * (grad - state.m)
    state.v += (1.0 - beta2) * (grad * grad - state.v)
    m_hat = state.m / (1.0 - beta1 ** step)
    v_hat = state.v / (1.0 - beta2 ** step)
    param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def global_norm_clip(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most max_norm."""
    total = 0.0
    for g in grads:
        total += float(np.vdot(g, g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
