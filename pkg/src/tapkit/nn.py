"""Minimal deterministic neural-network kernels.

Tensors are plain numpy arrays in row-major layout: spatial data is
``(H, W, C)`` for a single sample or ``(N, H, W, C)`` for a batch, dense
activations are ``(In,)`` or ``(B, In)``. Every forward operation has an
explicit backward companion, so models are trained without an autodiff
framework and the whole pipeline stays reproducible. Training arithmetic
runs in float32; gradient checking runs the same code paths in float64.

Convolutions are 3x3, stride 1, with zero same-padding. Pooling is 2x2 on
disjoint blocks with floor semantics (a trailing odd row/column is dropped).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream

Tensor = np.ndarray

ADAGRAD_EPSILON = 1e-8


class ContractViolation(ValueError):
    """An operation was called outside its declared preconditions."""


class TrainingDiverged(RuntimeError):
    """Optimization hit a nonfinite loss or gradient."""


@dataclass
class LayerParams:
    """Learned parameters of one layer plus its optimizer state.

    ``kind`` is one of ``conv3x3`` (weights ``(3, 3, Cin, Cout)``),
    ``dense`` (weights ``(In, Out)``) or ``embedding`` (weights
    ``(rows, dim)``, no bias). ``w_acc``/``b_acc`` hold the per-parameter
    squared-gradient sums used by the adaptive step; they start at zero and
    never decrease.
    """

    kind: str
    weights: Tensor
    bias: Tensor | None
    w_acc: Tensor
    b_acc: Tensor | None

    def copy(self) -> "LayerParams":
        return LayerParams(
            kind=self.kind,
            weights=self.weights.copy(),
            bias=None if self.bias is None else self.bias.copy(),
            w_acc=self.w_acc.copy(),
            b_acc=None if self.b_acc is None else self.b_acc.copy(),
        )


def _glorot_uniform(shape, fan_in: int, fan_out: int, rng: RngStream, dtype) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_conv(cin: int, cout: int, rng: RngStream, dtype=np.float32) -> LayerParams:
    w = _glorot_uniform((3, 3, cin, cout), 9 * cin, 9 * cout, rng, dtype)
    return LayerParams(
        kind="conv3x3",
        weights=w,
        bias=np.zeros(cout, dtype=dtype),
        w_acc=np.zeros_like(w),
        b_acc=np.zeros(cout, dtype=dtype),
    )


def init_dense(n_in: int, n_out: int, rng: RngStream, dtype=np.float32) -> LayerParams:
    w = _glorot_uniform((n_in, n_out), n_in, n_out, rng, dtype)
    return LayerParams(
        kind="dense",
        weights=w,
        bias=np.zeros(n_out, dtype=dtype),
        w_acc=np.zeros_like(w),
        b_acc=np.zeros(n_out, dtype=dtype),
    )


def init_embedding(rows: int, dim: int, rng: RngStream, dtype=np.float32) -> LayerParams:
    w = rng.uniform(-0.05, 0.05, size=(rows, dim)).astype(dtype)
    return LayerParams(kind="embedding", weights=w, bias=None, w_acc=np.zeros_like(w), b_acc=None)


# ---------------------------------------------------------------------------
# convolution (3x3, stride 1, zero same-padding)
# ---------------------------------------------------------------------------


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ContractViolation(f"expected (H, W, C) or (N, H, W, C) input, got shape {x.shape}")


def pad3x3(x: Tensor) -> Tensor:
    """Zero-pad the spatial dims by one on each side (same-padding for 3x3).

    Depends only on the input, so callers running forward and backward on
    the same activations can build it once and pass it to both.
    """
    xb, _ = _as_batch(x)
    n, h, w, c = xb.shape
    pad = np.zeros((n, h + 2, w + 2, c), dtype=xb.dtype)
    pad[:, 1 : h + 1, 1 : w + 1, :] = xb
    return pad


def im2col3x3(x: Tensor) -> Tensor:
    """Unfold zero-padded 3x3 windows into ``(N, H, W, 9 * C)`` columns,
    blocks ordered (dy, dx, c) to match ``weights.reshape(9 * C, Cout)``.

    Building this is a strided copy, so it only pays off for inputs that are
    reused many times (the training loop caches it for the raw-pixel layers,
    turning their forward and weight-gradient passes into single matmuls).
    """
    xb, _ = _as_batch(x)
    n, h, w, c = xb.shape
    pad = pad3x3(xb)
    cols = np.empty((n, h, w, 9 * c), dtype=xb.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[..., k * c : (k + 1) * c] = pad[:, dy : dy + h, dx : dx + w, :]
    return cols


def conv_forward(
    x: Tensor, params: LayerParams, pad: Tensor | None = None, cols: Tensor | None = None
) -> Tensor:
    """Cross-correlate with 3x3 filters; output keeps the spatial size.

    ``out[h, w, f]`` is ``bias[f]`` plus the window of ``x`` centered at
    ``(h, w)`` dotted with filter ``f``; reads outside the image are zero.
    Runs as nine window matmuls (contiguous copies), or as one matmul when
    precomputed ``cols`` are supplied.
    """
    if params.kind != "conv3x3":
        raise ContractViolation(f"conv_forward needs conv3x3 params, got {params.kind!r}")
    xb, squeeze = _as_batch(x)
    n, h, w, cin = xb.shape
    if h < 1 or w < 1:
        raise ContractViolation(f"conv input must be at least 1x1, got {h}x{w}")
    if cin != params.weights.shape[2]:
        raise ContractViolation(
            f"input has {cin} channels but filters expect {params.weights.shape[2]}"
        )
    cout = params.weights.shape[3]
    if cols is not None:
        out = cols.reshape(-1, 9 * cin) @ params.weights.reshape(9 * cin, cout)
        out += params.bias
    else:
        if pad is None:
            pad = pad3x3(xb)
        out = np.empty((n * h * w, cout), dtype=xb.dtype)
        out[:] = params.bias
        for k in range(9):
            dy, dx = divmod(k, 3)
            win = pad[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
            out += win @ params.weights[dy, dx]
    out = out.reshape(n, h, w, cout)
    return out[0] if squeeze else out


def conv_backward(
    dout: Tensor,
    x: Tensor | None,
    params: LayerParams,
    pad: Tensor | None = None,
    cols: Tensor | None = None,
    need_dx: bool = True,
) -> tuple[Tensor | None, Tensor, Tensor]:
    """Gradients of a conv layer: ``(dx, dweights, dbias)``.

    Accepts the precomputed padded input or column matrix instead of ``x``.
    ``need_dx=False`` skips the input gradient (first layers feed raw
    pixels, which are never updated).
    """
    doutb, squeeze = _as_batch(dout)
    n, h, w, cout = doutb.shape
    cin = params.weights.shape[2]
    dm = doutb.reshape(-1, cout)
    if cols is not None:
        dw = (cols.reshape(-1, 9 * cin).T @ dm).reshape(3, 3, cin, cout)
    else:
        if pad is None:
            if x is None:
                raise ContractViolation("conv_backward needs x, its padded form, or columns")
            pad = pad3x3(x)
        dw = np.empty_like(params.weights)
        for k in range(9):
            dy, dx_off = divmod(k, 3)
            win = pad[:, dy : dy + h, dx_off : dx_off + w, :].reshape(-1, cin)
            dw[dy, dx_off] = win.T @ dm
    db = dm.sum(axis=0)
    dx = None
    if need_dx:
        dpad = np.zeros((n, h + 2, w + 2, cin), dtype=doutb.dtype)
        for k in range(9):
            dy, dx_off = divmod(k, 3)
            dpad[:, dy : dy + h, dx_off : dx_off + w, :] += (
                dm @ params.weights[dy, dx_off].T
            ).reshape(n, h, w, cin)
        dx = dpad[:, 1 : h + 1, 1 : w + 1, :]
        if squeeze:
            dx = dx[0]
    return dx, dw, db


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------


def maxpool_forward(x: Tensor) -> Tensor:
    """Max over disjoint 2x2 blocks; odd trailing row/column is dropped."""
    xb, squeeze = _as_batch(x)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ContractViolation(f"maxpool input must be at least 2x2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = xb[:, : h2 * 2, : w2 * 2, :].reshape(n, h2, 2, w2, 2, c)
    out = blocks.max(axis=(2, 4))
    return out[0] if squeeze else out


def maxpool_route(dpooled: Tensor, x: Tensor, pooled: Tensor) -> Tensor:
    """Send each pooled gradient to the first cell (row-major within its 2x2
    block) that attains the block max; every other cell gets zero."""
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    dx = np.zeros_like(x)
    alive = np.ones(dpooled.shape, dtype=bool)
    for dy in (0, 1):
        for dx_off in (0, 1):
            cell = x[:, dy : h2 * 2 : 2, dx_off : w2 * 2 : 2, :]
            hit = alive & (cell == pooled)
            dx[:, dy : h2 * 2 : 2, dx_off : w2 * 2 : 2, :] = dpooled * hit
            alive ^= hit
    return dx


def maxpool_backward(dout: Tensor, x: Tensor, pooled: Tensor | None = None) -> Tensor:
    """Route each upstream gradient to exactly one input cell per block.

    Ties inside a block resolve to the first cell in row-major order, so the
    sum of routed gradients always equals the sum of upstream gradients.
    ``pooled`` (the forward output) avoids recomputing the block maxima.
    """
    xb, squeeze = _as_batch(x)
    doutb, _ = _as_batch(dout)
    if pooled is None:
        pooled = maxpool_forward(xb)
    dx = maxpool_route(doutb, xb, pooled)
    return dx[0] if squeeze else dx


# ---------------------------------------------------------------------------
# dense, relu, embedding, dropout
# ---------------------------------------------------------------------------


def dense_forward(x: Tensor, params: LayerParams) -> Tensor:
    if params.kind != "dense":
        raise ContractViolation(f"dense_forward needs dense params, got {params.kind!r}")
    n_in = params.weights.shape[0]
    if x.shape[-1] != n_in:
        raise ContractViolation(f"input length {x.shape[-1]} != weight rows {n_in}")
    return x @ params.weights + params.bias


def dense_backward(dout: Tensor, x: Tensor, params: LayerParams) -> tuple[Tensor, Tensor, Tensor]:
    if x.ndim == 1:
        dw = np.outer(x, dout)
        db = dout.copy()
    else:
        dw = x.T @ dout
        db = dout.sum(axis=0)
    dx = dout @ params.weights.T
    return dx, dw, db


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(dout: Tensor, x: Tensor) -> Tensor:
    return dout * (x > 0)


def embedding_forward(index: int, params: LayerParams) -> Tensor:
    if params.kind != "embedding":
        raise ContractViolation(f"embedding_forward needs embedding params, got {params.kind!r}")
    rows = params.weights.shape[0]
    if not 0 <= index < rows:
        raise ContractViolation(f"embedding index {index} out of range [0, {rows})")
    return params.weights[index].copy()


def embedding_backward(dout: Tensor, index: int, params: LayerParams) -> Tensor:
    """Dense table gradient with only row ``index`` populated."""
    dw = np.zeros_like(params.weights)
    dw[index] = dout
    return dw


def dropout_mask(shape, rate: float, rng: RngStream, dtype=np.float32) -> Tensor:
    """Inverted-dropout multiplier: zeros with probability ``rate``,
    ``1 / (1 - rate)`` otherwise, so inference needs no rescaling."""
    if not 0 <= rate < 1:
        raise ContractViolation(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / np.asarray(1 - rate, dtype=dtype)


def dropout(x: Tensor, rate: float, mode: str, rng: RngStream | None = None) -> Tensor:
    if mode == "infer":
        if not 0 <= rate < 1:
            raise ContractViolation(f"dropout rate must be in [0, 1), got {rate}")
        return x
    if mode != "train":
        raise ContractViolation(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if rng is None:
        raise ContractViolation("train-mode dropout needs an RngStream")
    return x * dropout_mask(x.shape, rate, rng, dtype=x.dtype)


# ---------------------------------------------------------------------------
# loss and optimizer
# ---------------------------------------------------------------------------


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_xent_loss(logit, label):
    """Numerically stable sigmoid cross-entropy and its logit gradient.

    ``loss = max(z, 0) - z * y + log(1 + exp(-|z|))``; the gradient is
    ``sigmoid(z) - y``. Never negative, never overflows. Works elementwise
    on arrays; scalars in, scalars out.
    """
    z = np.asarray(logit, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = sigmoid(z) - y
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def adagrad_step(
    params: LayerParams, dw: Tensor, db: Tensor | None = None, lr: float = 0.01
) -> LayerParams:
    """In-place adaptive update: ``acc += g^2; w -= lr * g / (sqrt(acc) + eps)``.

    Accumulators start at zero, so the very first unit-gradient step moves a
    weight by almost exactly ``lr``. Nonfinite gradients abort training.
    """
    if dw.shape != params.weights.shape:
        raise ContractViolation(
            f"gradient shape {dw.shape} != weight shape {params.weights.shape}"
        )
    if not np.all(np.isfinite(dw)):
        raise TrainingDiverged("nonfinite weight gradient")
    params.w_acc += dw * dw
    params.weights -= lr * dw / (np.sqrt(params.w_acc) + ADAGRAD_EPSILON)
    if params.bias is not None:
        if db is None:
            raise ContractViolation("layer has a bias but no bias gradient was given")
        if not np.all(np.isfinite(db)):
            raise TrainingDiverged("nonfinite bias gradient")
        params.b_acc += db * db
        params.bias -= lr * db / (np.sqrt(params.b_acc) + ADAGRAD_EPSILON)
    return params


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


def gradient_check(
    loss_and_grads, params: dict[str, Tensor], step: float = 1e-5, loss_fn=None
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grads()`` evaluates the network at the current parameter
    values and returns ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Parameters must be float64 views of the live network state
    and dropout must be disabled, otherwise the comparison is meaningless.
    Every element of every parameter is perturbed; ``loss_fn`` (loss only)
    can be supplied to skip the gradient work during the perturbed evals.
    """
    _, analytic = loss_and_grads()
    if loss_fn is None:
        loss_fn = lambda: loss_and_grads()[0]
    worst = 0.0
    for name, arr in params.items():
        if arr.dtype != np.float64:
            raise ContractViolation(f"gradient_check requires float64 params, {name} is {arr.dtype}")
        grad = analytic[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            lo_plus = loss_fn()
            arr[idx] = orig - step
            lo_minus = loss_fn()
            arr[idx] = orig
            numeric = (lo_plus - lo_minus) / (2 * step)
            a = float(grad[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
