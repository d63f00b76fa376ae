"""Small dense numeric kernels: activations, temporal smoothing, Adam, and a
central-difference gradient oracle.

Everything here is float64 and pure (the optimizer mutates only the state it
is handed). These are the primitives the analytic backward pass is certified
against, so they stay deliberately simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax: empty input")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x):
    """Elementwise logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def reflect_index(i, n: int):
    """Map indices onto [0, n) by reflection without edge repeat.

    Reflection is iterated (any offset is valid); n == 1 maps everything to 0.
    Accepts a scalar or an integer array.
    """
    if n == 1:
        return np.zeros_like(np.asarray(i)) if np.ndim(i) else 0
    # iterated reflection is periodic with period 2(n-1)
    j = np.abs(np.asarray(i)) % (2 * n - 2)
    j = np.where(j >= n, 2 * n - 2 - j, j)
    return j if np.ndim(i) else int(j)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized exp(-d^2 / 2 sigma^2) taps for |d| <= radius."""
    if sigma <= 0:
        raise ValueError(f"gaussian kernel: sigma must be > 0, got {sigma}")
    if radius < 0:
        raise ValueError(f"gaussian kernel: radius must be >= 0, got {radius}")
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(d**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_smooth(seq: np.ndarray, sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    """Smooth a length-T sequence with a normalized Gaussian, reflect padding."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("gaussian_smooth: expected a non-empty 1-D sequence")
    k = gaussian_kernel(sigma, radius)
    n = seq.size
    idx = reflect_index(np.arange(n)[:, None] + np.arange(-radius, radius + 1), n)
    return seq[idx] @ k


def gaussian_smooth_transpose(seq: np.ndarray, sigma: float = 1.0, radius: int = 2) -> np.ndarray:
    """Apply the transpose of the smoothing operator (scatter instead of gather).

    Needed when gradients are propagated through the smoothing argument.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("gaussian_smooth_transpose: expected a non-empty 1-D sequence")
    k = gaussian_kernel(sigma, radius)
    n = seq.size
    idx = reflect_index(np.arange(n)[:, None] + np.arange(-radius, radius + 1), n)
    out = np.zeros(n)
    np.add.at(out, idx, seq[:, None] * k)
    return out


@dataclass
class AdamState:
    """Adam moments plus the update-rule settings that travel with them.

    `learning_rate` is the current step size; the trainer multiplies it by
    `decay_fraction` once, halfway through a run. Weight decay is decoupled
    (applied to the parameter directly, never folded into the gradient).
    """

    shape: tuple
    learning_rate: float = 1e-3
    decay_fraction: float = 0.1
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: np.ndarray = field(init=False)
    second_moment: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.decay_fraction <= 1.0:
            raise ValueError("decay_fraction must lie in [0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        self.first_moment = np.zeros(self.shape)
        self.second_moment = np.zeros(self.shape)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; returns new params, mutates `state`."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"adam_step: shape mismatch params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    state.step += 1
    t = state.step
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads**2
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    out = params * (1.0 - state.learning_rate * state.weight_decay)
    out = out - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(out)):
        raise NumericError("adam_step produced non-finite parameters")
    return out


def finite_diff_grad(loss_fn, params: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss, one coordinate at a time.

    The oracle every hand-derived gradient in this package is checked against.
    """
    params = np.array(params, dtype=np.float64)
    grad = np.zeros_like(params)
    flat = params.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        up = loss_fn(params)
        flat[i] = orig - epsilon
        down = loss_fn(params)
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"finite_diff_grad: non-finite loss at coordinate {i}")
        gflat[i] = (up - down) / (2.0 * epsilon)
    return grad
