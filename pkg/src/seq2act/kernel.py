"""LSTM cell and softmax primitives, plus a finite-difference gradient
checker. Tensors are float64 numpy arrays in C order."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import EmptyInput, NonFiniteLoss, ShapeMismatch

Tensor = np.ndarray
DTYPE = np.float64


def as_tensor(data) -> Tensor:
    return np.ascontiguousarray(np.array(data, dtype=DTYPE))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, with max-subtraction."""
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.size == 0 or logits.shape[-1] == 0:
        raise EmptyInput("softmax of an empty vector")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Tensor) -> Tensor:
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.size == 0 or logits.shape[-1] == 0:
        raise EmptyInput("log-softmax of an empty vector")
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class RecurrentCellParams:
    """Gates stacked as [input, forget, output, candidate] along the rows
    of ``W``; ``W`` acts on the concatenation [x; h]."""

    W: Tensor
    b: Tensor

    @property
    def hidden_size(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden_size

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> RecurrentCellParams:
        return cls(np.zeros((4 * hidden_size, input_size + hidden_size)), np.zeros(4 * hidden_size))


@dataclass
class CellCache:
    xh: Tensor
    i: Tensor
    f: Tensor
    o: Tensor
    g: Tensor
    c_prev: Tensor
    tanh_c: Tensor


def _check_cell_shapes(params: RecurrentCellParams, x: Tensor, h: Tensor, c: Tensor) -> None:
    H = params.hidden_size
    if params.W.shape != (4 * H, params.W.shape[1]) or params.b.shape != (4 * H,):
        raise ShapeMismatch(f"cell weights {params.W.shape} / bias {params.b.shape}")
    if x.shape != (params.input_size,):
        raise ShapeMismatch(f"input of shape {x.shape}, cell expects ({params.input_size},)")
    if h.shape != (H,) or c.shape != (H,):
        raise ShapeMismatch(f"state shapes {h.shape}, {c.shape}, cell expects ({H},)")


def cell_forward(params: RecurrentCellParams, x: Tensor, h_prev: Tensor,
                 c_prev: Tensor) -> tuple[Tensor, Tensor, CellCache]:
    _check_cell_shapes(params, x, h_prev, c_prev)
    H = params.hidden_size
    xh = np.concatenate([x, h_prev])
    z = params.W @ xh + params.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H:2 * H])
    o = sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, CellCache(xh, i, f, o, g, c_prev, tanh_c)


def cell_step(params: RecurrentCellParams, x_embed: Tensor, h_prev: Tensor,
              c_prev: Tensor) -> tuple[Tensor, Tensor]:
    h, c, _ = cell_forward(params, x_embed, h_prev, c_prev)
    return h, c


def cell_backward(params: RecurrentCellParams, cache: CellCache, dh: Tensor,
                  dc_next: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Gradients w.r.t. the gate pre-activations and the inputs.

    Returns ``(dz, dxh, dc_prev, ...)`` where ``dz`` is the gradient of
    the stacked pre-activation (so dW = outer(dz, xh) and db = dz) and
    ``dxh`` the gradient of [x; h_prev].
    """
    i, f, o, g, tc = cache.i, cache.f, cache.o, cache.g, cache.tanh_c
    do = dh * tc
    dc = dc_next + dh * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * cache.c_prev
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)])
    dxh = params.W.T @ dz
    return dz, dxh, dc_prev, cache.xh


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a) + abs(n), 1e-4)


def grad_check(loss_fn: Callable[[Mapping[str, Tensor]], tuple[float, Mapping[str, Tensor]]],
               params: Mapping[str, Tensor], epsilon: float = 1e-5, samples: int = 200,
               seed: int = 0, per_block: bool = False):
    """Compare analytic gradients with central differences.

    ``loss_fn(params)`` returns ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Up to ``samples`` coordinates per block are perturbed in
    place and restored. Returns the maximum relative error, or a
    ``{block: max error}`` dict when ``per_block`` is set.
    """
    rng = np.random.default_rng(seed)
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    errors: dict[str, float] = {}
    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        if flat.size <= samples:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples, replace=False)
        worst = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + epsilon
            lp, _ = loss_fn(params)
            flat[k] = orig - epsilon
            lm, _ = loss_fn(params)
            flat[k] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NonFiniteLoss(f"loss is not finite around {name}[{k}]")
            numeric = (lp - lm) / (2 * epsilon)
            worst = max(worst, relative_error(float(g[k]), numeric))
        errors[name] = worst
    if per_block:
        return errors
    return max(errors.values()) if errors else 0.0
