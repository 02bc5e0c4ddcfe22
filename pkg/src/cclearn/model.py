"""Differentiable MLP backbone with a single-layer classifier head.

The backbone is a stack of affine layers with ReLU between them; the final
affine layer emits raw F-dimensional features with no activation. Two
branches leave the backbone: the head consumes the *raw* features and
produces class logits, while the contrast branch consumes the row-wise
l2-normalized features. ``backward`` propagates upstream gradients from both
branches, including the normalization Jacobian

    d(f/|f|)^T g = (g - (fhat.g) fhat) / |f|

for the contrast side. Training uses plain SGD with a half-cycle cosine
learning-rate schedule and a linear warm-up ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .centroids import normalize_rows
from .errors import StateError


@dataclass
class ModelParams:
    """Backbone affine layers plus the one-layer head.

    ``version`` counts in-place SGD updates so a stale forward cache can be
    detected in ``backward``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("backbone needs matching, non-empty weight/bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape} / {b.shape}")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(
                    f"layer {i} input dim {w.shape[0]} does not chain from "
                    f"{self.weights[i - 1].shape[1]}"
                )
        if self.head_weight.ndim != 2 or self.head_weight.shape[0] != self.feature_dim:
            raise ValueError(
                f"head weight shape {self.head_weight.shape} does not consume "
                f"{self.feature_dim}-dim features"
            )
        if self.head_bias.shape != (self.head_weight.shape[1],):
            raise ValueError(f"head bias shape {self.head_bias.shape} is wrong")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def num_classes(self) -> int:
        return self.head_weight.shape[1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])


@dataclass
class Gradients:
    """Same layout as ModelParams, holding d(total loss)/d(parameter)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by ``backward``."""

    x: np.ndarray
    pre_activations: list[np.ndarray]
    layer_inputs: list[np.ndarray]
    raw: np.ndarray
    norms: np.ndarray
    normalized: np.ndarray
    params_version: int


def init_params(
    input_dim: int,
    hidden_dims: tuple[int, ...],
    feature_dim: int,
    num_classes: int,
    rng: np.random.Generator | int,
) -> ModelParams:
    """Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases zero."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if input_dim < 1 or feature_dim < 1 or num_classes < 2:
        raise ValueError(
            f"bad dims: input={input_dim}, feature={feature_dim}, classes={num_classes}"
        )
    sizes = [int(input_dim), *[int(h) for h in hidden_dims], int(feature_dim)]
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    bound = 1.0 / math.sqrt(feature_dim)
    head_w = rng.uniform(-bound, bound, size=(feature_dim, num_classes))
    return ModelParams(weights, biases, head_w, np.zeros(num_classes))


def forward(
    params: ModelParams, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, ForwardCache]:
    """Run the network on a batch.

    Returns (raw_features, normalized_features, logits, cache). Raises
    DegenerateVectorError when any raw feature row has near-zero norm, since
    the contrast branch cannot normalize it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"input shape {x.shape} does not match D={params.input_dim}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    last = len(params.weights) - 1
    layer_inputs = [x]
    pre_activations = []
    a = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        if i < last:
            layer_inputs.append(a)
    raw = a
    norms = np.linalg.norm(raw, axis=1)
    normalized = normalize_rows(raw)
    logits = raw @ params.head_weight + params.head_bias
    cache = ForwardCache(x, pre_activations, layer_inputs, raw, norms, normalized, params.version)
    return raw, normalized, logits, cache


def backward(
    params: ModelParams,
    cache: ForwardCache,
    d_normalized: np.ndarray,
    d_logits: np.ndarray,
) -> Gradients:
    """Exact parameter gradients from the two branch gradients.

    ``d_normalized`` is d(loss)/d(normalized features) and ``d_logits`` is
    d(loss)/d(logits); both branches are merged at the raw features and
    propagated through the backbone.
    """
    if cache.params_version != params.version:
        raise StateError(
            f"stale forward cache (params version {params.version}, "
            f"cache version {cache.params_version})"
        )
    d_normalized = np.asarray(d_normalized, dtype=np.float64)
    d_logits = np.asarray(d_logits, dtype=np.float64)
    batch = cache.raw.shape[0]
    if d_normalized.shape != cache.normalized.shape:
        raise ValueError(f"d_normalized shape {d_normalized.shape} mismatches forward batch")
    if d_logits.shape != (batch, params.num_classes):
        raise ValueError(f"d_logits shape {d_logits.shape} mismatches forward batch")

    fhat = cache.normalized
    inner = (fhat * d_normalized).sum(axis=1, keepdims=True)
    d_raw = (d_normalized - inner * fhat) / cache.norms[:, None]
    d_raw = d_raw + d_logits @ params.head_weight.T

    g_head_w = cache.raw.T @ d_logits
    g_head_b = d_logits.sum(axis=0)

    g_weights: list[np.ndarray | None] = [None] * len(params.weights)
    g_biases: list[np.ndarray | None] = [None] * len(params.weights)
    upstream = d_raw
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            upstream = upstream * (cache.pre_activations[i] > 0.0)
        g_weights[i] = cache.layer_inputs[i].T @ upstream
        g_biases[i] = upstream.sum(axis=0)
        if i > 0:
            upstream = upstream @ params.weights[i].T
    return Gradients(g_weights, g_biases, g_head_w, g_head_b)


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    """In-place p <- p - lr * g over every parameter; returns the same object."""
    if lr < 0.0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if len(grads.weights) != len(params.weights):
        raise ValueError("gradient structure does not match parameters")
    for p, g in zip(params.weights + [params.head_weight], grads.weights + [grads.head_weight]):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    for p, g in zip(params.biases + [params.head_bias], grads.biases + [grads.head_bias]):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    for i in range(len(params.weights)):
        params.weights[i] -= lr * grads.weights[i]
        params.biases[i] -= lr * grads.biases[i]
    params.head_weight -= lr * grads.head_weight
    params.head_bias -= lr * grads.head_bias
    params.version += 1
    return params


@dataclass
class OptimState:
    """Learning-rate schedule bookkeeping; ``step`` is the next global step."""

    base_lr: float
    warmup_epochs: int
    total_epochs: int
    steps_per_epoch: int
    step: int = 0

    @property
    def total_steps(self) -> int:
        return self.total_epochs * self.steps_per_epoch

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch


def lr_at(opt: OptimState, step: int) -> float:
    """Half-cycle cosine schedule with a linear warm-up ramp from 0.

    During warm-up: base_lr * step / warmup_steps. Afterwards:
    base_lr * 0.5 * (1 + cos(pi * progress)) with progress spanning the
    post-warm-up steps, so the rate is base_lr right after warm-up and ~0 at
    the final step.
    """
    step = int(step)
    if not 0 <= step <= opt.total_steps:
        raise ValueError(f"step {step} outside schedule [0, {opt.total_steps}]")
    warm = opt.warmup_steps
    if step < warm:
        return opt.base_lr * step / warm
    span = opt.total_steps - warm
    if span == 0:
        return opt.base_lr
    progress = (step - warm) / span
    return opt.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def save_model(params: ModelParams, path) -> None:
    """Checkpoint as flat text: dims header, then row-major layer tensors.

    Line 1: "D F K L" (L = backbone layer count); line 2: the L backbone
    output sizes. Then per backbone layer the weight rows followed by one
    bias line, and finally the head weight rows and head bias. %.17g floats
    round-trip float64 exactly.
    """
    lines = [
        f"{params.input_dim} {params.feature_dim} {params.num_classes} {len(params.weights)}",
        " ".join(str(w.shape[1]) for w in params.weights),
    ]

    def emit(w: np.ndarray, b: np.ndarray) -> None:
        for row in w:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        lines.append(" ".join(f"{v:.17g}" for v in b))

    for w, b in zip(params.weights, params.biases):
        emit(w, b)
    emit(params.head_weight, params.head_bias)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        input_dim, feature_dim, num_classes, n_layers = (int(t) for t in lines[0].split())
        out_sizes = [int(t) for t in lines[1].split()]
    except (IndexError, ValueError) as exc:
        raise StateError(f"model file {path} has a malformed header") from exc
    if len(out_sizes) != n_layers or (out_sizes and out_sizes[-1] != feature_dim):
        raise StateError(f"model file {path} header is inconsistent")
    pos = 2

    def take(n_rows: int, n_cols: int) -> np.ndarray:
        nonlocal pos
        block = lines[pos : pos + n_rows]
        pos += n_rows
        arr = np.array([[float(t) for t in ln.split()] for ln in block], dtype=np.float64)
        if arr.shape != (n_rows, n_cols):
            raise StateError(f"model file {path} tensor block has shape {arr.shape}")
        return arr

    weights, biases = [], []
    fan_in = input_dim
    for out in out_sizes:
        weights.append(take(fan_in, out))
        biases.append(take(1, out)[0])
        fan_in = out
    head_w = take(feature_dim, num_classes)
    head_b = take(1, num_classes)[0]
    if pos != len(lines):
        raise StateError(f"model file {path} has {len(lines) - pos} trailing lines")
    return ModelParams(weights, biases, head_w, head_b)
