"""Reverse-mode automatic differentiation over dense float64 tensors.

The op set is exactly what the sales model needs: affine, relu, dropout,
column concatenation, embedding gather, mean-squared-error, and the fused
``base + w * t`` trend term.  Everything is float64; gradients accumulate
with ``+=`` so parameters can be reused across passes and zeroed by the
optimizer.  The graph is built per forward pass and torn down at the end
of :func:`backward`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import OutOfVocabError, ShapeError

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class RngState:
    """Seed for a PCG64 stream; the same seed yields the same stream everywhere.

    Child states are derived by hashing ``"{seed}:{label}"`` with SHA-256, so
    independent sub-streams (init, shuffle, dropout, ...) stay deterministic
    and order-independent.
    """

    seed: int

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, label: str) -> "RngState":
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        return RngState(int.from_bytes(digest[:8], "little"))


class Tensor:
    """Dense float64 array with a gradient buffer and backward-graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, copy=True)
        self.data = arr
        self.grad = np.zeros_like(arr)
        self.requires_grad = requires_grad
        self._parents: tuple["Tensor", ...] = ()
        self._backward_fn: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wire(out: Tensor, parents: tuple[Tensor, ...], backward_fn: Callable[[], None]) -> Tensor:
    """Attach graph linkage to ``out`` when any parent participates in autodiff."""
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer: ``out[i, j] = sum_k x[i, k] * w[k, j] + b[0, j]``."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: x has shape {x.shape}, W has shape {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise ShapeError(f"affine: b has shape {b.shape}, expected (1, {w.shape[1]})")
    out = Tensor(x.data @ w.data + b.data)

    def _bw() -> None:
        if x.requires_grad:
            x.grad += out.grad @ w.data.T
        if w.requires_grad:
            w.grad += x.data.T @ out.grad
        if b.requires_grad:
            b.grad += out.grad.sum(axis=0, keepdims=True)

    return _wire(out, (x, w, b), _bw)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    out = Tensor(np.maximum(x.data, 0.0))

    def _bw() -> None:
        x.grad += (x.data > 0.0) * out.grad

    return _wire(out, (x,), _bw)


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: in train mode zero each element with probability ``p``
    and scale survivors by ``1/(1-p)``; in eval mode the identity map."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"dropout mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")
    if mode == EVAL or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode requires an rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.shape) >= p) * scale
    out = Tensor(x.data * mask)

    def _bw() -> None:
        x.grad += mask * out.grad

    return _wire(out, (x,), _bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Append columns of the 2-D parts in argument order."""
    if not parts:
        raise ShapeError("concat_cols: need at least one part")
    rows = parts[0].shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.shape[0] != rows:
            raise ShapeError(
                f"concat_cols: row counts differ, {p.shape} vs ({rows}, ...)"
            )
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def _bw() -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.grad += out.grad[:, lo:hi]

    return _wire(out, tuple(parts), _bw)


def embed_gather(table: Tensor, indices: Iterable[int]) -> Tensor:
    """Gather rows of ``table``; backward scatters (repeated indices sum)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embed_gather: indices must be 1-D, got shape {idx.shape}")
    vocab = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= vocab):
        bad = int(idx[(idx < 0) | (idx >= vocab)][0])
        raise OutOfVocabError(f"embed_gather: index {bad} outside vocabulary of size {vocab}")
    out = Tensor(table.data[idx])

    def _bw() -> None:
        np.add.at(table.grad, idx, out.grad)

    return _wire(out, (table,), _bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements, returned as a scalar tensor."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: pred {pred.shape} vs target {target.shape}")
    n = pred.data.size
    if n == 0:
        raise ShapeError("mse_loss: empty batch")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff * diff))

    def _bw() -> None:
        g = (2.0 / n) * diff * out.grad
        if pred.requires_grad:
            pred.grad += g
        if target.requires_grad:
            target.grad -= g

    return _wire(out, (pred, target), _bw)


def scalar_mul_add(base: Tensor, w: Tensor, t: Tensor) -> Tensor:
    """Trend-term composition ``out[i] = base[i] + w[i] * t[i]``.

    ``t`` is treated as constant input data: gradients flow to ``base`` and
    ``w`` (scaled by ``t``) only.
    """
    if not (base.shape == w.shape == t.shape):
        raise ShapeError(
            f"scalar_mul_add: shapes differ, base {base.shape}, w {w.shape}, t {t.shape}"
        )
    out = Tensor(base.data + w.data * t.data)

    def _bw() -> None:
        if base.requires_grad:
            base.grad += out.grad
        if w.requires_grad:
            w.grad += t.data * out.grad

    return _wire(out, (base, w), _bw)


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss.

    Every reachable tensor with ``requires_grad`` accumulates dLoss/dTensor
    into its ``grad`` buffer; repeated calls without zeroing accumulate.  The
    graph records are dropped afterwards.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad[...] = 1.0
    for node in reversed(topo):
        if node._backward_fn is not None:
            node._backward_fn()
    for node in topo:
        node._parents = ()
        node._backward_fn = None


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must return a scalar tensor.  The relative error per element is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``; the numeric
    side uses only forward evaluations, so it is independent of the backward
    rules it checks.
    """
    if h <= 0.0:
        raise ValueError(f"grad_check: step must be positive, got {h}")
    x.zero_grad()
    out = f(x)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {out.shape}")
    backward(out)
    analytic = x.grad.copy()
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(x).data)
        flat[i] = orig - h
        f_minus = float(f(x).data)
        flat[i] = orig
        num_flat[i] = (f_plus - f_minus) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
