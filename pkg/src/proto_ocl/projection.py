"""The trainable projection into hyperdimensional space, plus loss heads.

Hand-written forward/backward passes over a small stack of affine layers
with rectifier nonlinearities.  Two head flavors exist: a one-layer
classification head (logits for cross-entropy) and a two-layer embedding
head whose output is L2-normalized for the contrastive objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import ce_loss_batch, sup_con_loss
from .numerics import Rng

DEFAULT_HIDDEN = (512,)
DEFAULT_D_HYPER = 2048
SC_HEAD_DIMS = (160, 128)


@dataclass
class AffineLayer:
    w: np.ndarray  # (d_out, d_in)
    b: np.ndarray  # (d_out,)

    @property
    def d_in(self) -> int:
        return self.w.shape[1]

    @property
    def d_out(self) -> int:
        return self.w.shape[0]

    def param_count(self) -> int:
        return self.w.size + self.b.size


def init_affine(d_in: int, d_out: int, rng: Rng) -> AffineLayer:
    """Fan-in-scaled normal weights, zero biases."""
    w = rng.normal(d_out * d_in).reshape(d_out, d_in) / np.sqrt(d_in)
    return AffineLayer(w=w, b=np.zeros(d_out))


def _stack_forward(layers: list[AffineLayer], x: np.ndarray) -> np.ndarray:
    """Affine stack with ReLU between layers, linear output."""
    h = x
    for i, layer in enumerate(layers):
        h = h @ layer.w.T + layer.b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def _stack_forward_trace(layers, x):
    """Forward keeping pre-activations and layer inputs for the backward pass."""
    inputs, pre = [], []
    h = x
    for i, layer in enumerate(layers):
        inputs.append(h)
        z = h @ layer.w.T + layer.b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return h, (inputs, pre)


@dataclass
class ProjectionModule:
    layers: list[AffineLayer]

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_hyper(self) -> int:
        return self.layers[-1].d_out

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers)


@dataclass
class LossHead:
    kind: str  # "ce" or "sc"
    layers: list[AffineLayer]
    temperature: float = 0.1

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers)


@dataclass
class GradientTape:
    """Per-parameter gradient buffers mirroring a module and a head."""

    module: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    head: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def init_projection(
    d_in: int,
    d_hyper: int = DEFAULT_D_HYPER,
    rng: Rng | None = None,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> ProjectionModule:
    if d_in < 1 or d_hyper < 1:
        raise ValueError("dimensions must be positive")
    if rng is None:
        raise ValueError("an Rng is required for reproducible initialization")
    dims = (d_in, *hidden, d_hyper)
    layers = [init_affine(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
    return ProjectionModule(layers)


def init_head(
    kind: str,
    d_in: int,
    n_classes: int | None,
    rng: Rng,
    temperature: float = 0.1,
) -> LossHead:
    if kind == "ce":
        if n_classes is None or n_classes < 1:
            raise ValueError("ce head needs the class count")
        return LossHead("ce", [init_affine(d_in, n_classes, rng)], temperature)
    if kind == "sc":
        a, b = SC_HEAD_DIMS
        return LossHead(
            "sc", [init_affine(d_in, a, rng), init_affine(a, b, rng)], temperature
        )
    raise ValueError(f"unknown head kind {kind!r}")


def project(module: ProjectionModule, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass of one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (module.d_in,):
        raise ValueError(f"dimension mismatch: {x.shape} vs ({module.d_in},)")
    return _stack_forward(module.layers, x[None, :])[0]


def project_batch(module: ProjectionModule, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != module.d_in:
        raise ValueError(f"expected (n, {module.d_in}) batch, got {xs.shape}")
    return _stack_forward(module.layers, xs)


def head_forward(head: LossHead, xs: np.ndarray) -> np.ndarray:
    """Head output: logits for ce, unit-norm embeddings for sc."""
    out = _stack_forward(head.layers, xs)
    if head.kind == "sc":
        out = out / np.linalg.norm(out, axis=1, keepdims=True)
    return out


def _affine_stack_backward(layers, trace, d_out):
    inputs, pre = trace
    grads = [None] * len(layers)
    g = d_out
    for i in reversed(range(len(layers))):
        if i < len(layers) - 1:
            g = g * (pre[i] > 0.0)  # ReLU mask on this layer's pre-activation
        grads[i] = (g.T @ inputs[i], g.sum(axis=0))
        g = g @ layers[i].w
    return grads, g


def _head_loss_backward(head, xs, labels):
    """Loss through one head; returns (loss, head grads, d loss / d xs)."""
    out, trace = _stack_forward_trace(head.layers, xs)
    if head.kind == "ce":
        loss, d_out = ce_loss_batch(out, labels)
    elif head.kind == "sc":
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        z = out / norms
        loss, dz = sup_con_loss(z, labels, head.temperature)
        # back through row normalization: (I - z z^T) / |v|
        d_out = (dz - (dz * z).sum(axis=1, keepdims=True) * z) / norms
    else:
        raise ValueError(f"unknown head kind {head.kind!r}")
    head_grads, d_xs = _affine_stack_backward(head.layers, trace, d_out)
    return loss, head_grads, d_xs


def backward(
    module: ProjectionModule,
    head: LossHead,
    xs: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, GradientTape]:
    """Loss of head(module(xs)) plus analytic gradients for every parameter."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[0] == 0:
        raise ValueError("empty batch")
    emb, trace = _stack_forward_trace(module.layers, xs)
    loss, head_grads, d_emb = _head_loss_backward(head, emb, labels)
    module_grads, _ = _affine_stack_backward(module.layers, trace, d_emb)
    return loss, GradientTape(module=module_grads, head=head_grads)


def backward_head_only(
    head: LossHead, xs: np.ndarray, labels: np.ndarray
) -> tuple[float, GradientTape]:
    """Loss of head(xs) for the vanilla path, where xs is not trained."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[0] == 0:
        raise ValueError("empty batch")
    loss, head_grads, _ = _head_loss_backward(head, xs, labels)
    return loss, GradientTape(module=[], head=head_grads)


def backward_embedding(
    module: ProjectionModule, xs: np.ndarray, d_emb: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Module gradients given d loss / d embedding (online alignment path)."""
    _, trace = _stack_forward_trace(module.layers, np.asarray(xs, dtype=np.float64))
    grads, _ = _affine_stack_backward(module.layers, trace, d_emb)
    return grads


def sgd_step(
    layers: list[AffineLayer],
    grads: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
) -> None:
    """Plain gradient step p <- p - lr * g, in place."""
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    if len(layers) != len(grads):
        raise ValueError("gradient/parameter shape mismatch")
    for layer, (dw, db) in zip(layers, grads):
        if dw.shape != layer.w.shape or db.shape != layer.b.shape:
            raise ValueError("gradient/parameter shape mismatch")
        layer.w -= lr * dw
        layer.b -= lr * db
