"""A small trainable scorer with an N-way softmax head over score buckets.

Desk-scale stand-in for the usual transfer-learning setup: instead of a
large pretrained convolutional backbone, images are summarized by fixed
statistics (per-channel mean/variance, a gradient-magnitude histogram, and
a coarse grid of local means) and passed through a small trainable MLP,
the "backbone" group. A final fully-connected layer, the "head" group,
produces one logit per score bucket. The training protocol keeps the
structure that matters: two learning-rate groups (backbone vs head),
SGD with momentum, dropout on the head input with inverted scaling,
exponential learning-rate decay every fixed number of epochs, and
resize / random-crop / horizontal-flip augmentation.

All passes are written out by hand so gradients can be checked against
finite differences, and every source of randomness flows from one seed.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .distributions import (
    BucketScale,
    ScoreDistribution,
    cross_entropy_grad,
    cross_entropy_loss,
    softmax,
    squared_emd_grad,
    squared_emd_loss,
)
from .errors import DataError, NumericalError
from .images import ImageTensor, bilinear_resize, hflip, random_crop

# Fixed image-statistics layout: per-channel means (3), per-channel
# variances (3), gradient-magnitude histogram (8 bins), 4x4 grid of local
# luminance means (16). Grayscale images are treated as three equal
# channels so the vector length never depends on the input.
GRAD_BIN_EDGES = np.array([0.0, 0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 1.5])
LOCAL_MEAN_GRID = 4
STATS_DIM = 3 + 3 + (len(GRAD_BIN_EDGES) - 1) + LOCAL_MEAN_GRID * LOCAL_MEAN_GRID

CHECKPOINT_FORMAT = "scoredist_model"
CHECKPOINT_VERSION = 1

LOSSES = ("emd", "cross_entropy")


def image_stats(img: ImageTensor) -> np.ndarray:
    """Fixed statistics vector of length STATS_DIM for one image.

    Deterministic in the pixel data. The mean/variance entries are
    invariant under horizontal mirroring; the histogram and grid entries
    are not required to be.
    """
    if img.channels == 3:
        chans = img.data
    else:
        chans = np.repeat(img.data, 3, axis=2)
    means = chans.mean(axis=(0, 1))
    variances = chans.var(axis=(0, 1))

    lum = img.luminance()
    dx = lum[:, 1:] - lum[:, :-1]
    dy = lum[1:, :] - lum[:-1, :]
    if dx.shape[0] > 1 and dx.shape[1] > 0:
        mag = np.hypot(dx[:-1, :], dy[:, :-1]).ravel()
    else:
        mag = np.zeros(1)
    hist, _ = np.histogram(mag, bins=GRAD_BIN_EDGES)
    hist = hist / max(mag.size, 1)

    g = LOCAL_MEAN_GRID
    row_edges = [round(i * img.height / g) for i in range(g + 1)]
    col_edges = [round(j * img.width / g) for j in range(g + 1)]
    grid = np.empty(g * g)
    for i in range(g):
        for j in range(g):
            r0, r1 = row_edges[i], max(row_edges[i + 1], row_edges[i] + 1)
            c0, c1 = col_edges[j], max(col_edges[j + 1], col_edges[j] + 1)
            grid[i * g + j] = lum[r0:r1, c0:c1].mean()
    return np.concatenate([means, variances, hist, grid])


@dataclass
class Layer:
    """One dense layer: out = activation(w @ x + b)."""

    w: np.ndarray  # (out_dim, in_dim)
    b: np.ndarray  # (out_dim,)
    activation: str  # "relu" or "linear"


@dataclass
class ModelParams:
    """All trainable state: backbone MLP, head layer, momentum buffers."""

    scale: BucketScale
    backbone: list[Layer]
    head: Layer
    velocities: list[tuple[np.ndarray, np.ndarray]]  # parallel to layers()
    rng_seed: int

    def layers(self) -> list[Layer]:
        return [*self.backbone, self.head]

    def __post_init__(self):
        if self.head.w.shape[0] != len(self.scale):
            raise ValueError(
                f"head outputs {self.head.w.shape[0]} logits for a "
                f"{len(self.scale)}-bucket scale"
            )
        if len(self.velocities) != len(self.layers()):
            raise ValueError("one velocity buffer pair per layer required")
        for layer, (vw, vb) in zip(self.layers(), self.velocities):
            if vw.shape != layer.w.shape or vb.shape != layer.b.shape:
                raise ValueError("velocity buffer shapes must mirror the weights")


def init_params(
    scale: BucketScale,
    hidden: Sequence[int] = (64, 64),
    feature_dim: int = STATS_DIM,
    seed: int = 0,
) -> ModelParams:
    """Seeded random initialization.

    Weights draw from a uniform distribution scaled by 1/sqrt(fan_in);
    biases start at zero, momentum buffers at zero.
    """
    rng = np.random.default_rng(seed)
    dims = [feature_dim, *hidden, len(scale)]
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), "relu" if i < len(dims) - 2 else "linear"))
    velocities = [(np.zeros_like(l.w), np.zeros_like(l.b)) for l in layers]
    return ModelParams(scale, layers[:-1], layers[-1], velocities, int(seed))


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. Defaults follow the reference protocol."""

    epochs: int
    lr_backbone: float = 3e-7
    lr_head: float = 3e-6
    momentum: float = 0.9
    dropout_rate: float = 0.75
    decay_factor: float = 0.95
    decay_every_epochs: int = 10
    batch_size: int = 32
    resize_to: int = 256
    crop_to: int = 224
    hflip: bool = True
    seed: int = 0
    loss: str = "emd"
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if not (0.0 < self.decay_factor <= 1.0):
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every_epochs < 1:
            raise ValueError("decay_every_epochs must be positive")
        if self.crop_to > self.resize_to:
            raise ValueError("crop_to must not exceed resize_to")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


def lr_at_epoch(base_lr: float, epoch: int, config: TrainConfig) -> float:
    """Effective rate during 0-based `epoch`: base * factor**(epoch // every)."""
    return base_lr * config.decay_factor ** (epoch // config.decay_every_epochs)


@dataclass
class ForwardCache:
    """Intermediates one forward pass records for the matching backward."""

    params: ModelParams
    inputs: list[np.ndarray]  # input to each backbone layer
    preacts: list[np.ndarray]  # pre-activation of each backbone layer
    head_input: np.ndarray  # post-dropout feature vector
    dropout_mask: np.ndarray | None
    logits: np.ndarray
    train_mode: bool


def extract_features(img: ImageTensor, params: ModelParams) -> np.ndarray:
    """Image statistics pushed through the backbone MLP (no dropout)."""
    x = image_stats(img)
    for layer in params.backbone:
        if layer.w.shape[1] != x.shape[0]:
            raise ValueError(
                f"layer expects {layer.w.shape[1]} inputs, got {x.shape[0]}"
            )
        x = layer.w @ x + layer.b
        if layer.activation == "relu":
            x = np.maximum(x, 0.0)
    return x


def forward(
    img: ImageTensor,
    params: ModelParams,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout_rate: float = 0.0,
) -> tuple[np.ndarray, ForwardCache]:
    """Compute logits; in train mode also sample the head-input dropout mask.

    Inference (train_mode=False) is a pure function of (img, params).
    """
    if train_mode and rng is None:
        raise ValueError("train_mode requires an rng for dropout sampling")
    x = image_stats(img)
    inputs, preacts = [], []
    for layer in params.backbone:
        if layer.w.shape[1] != x.shape[0]:
            raise ValueError(f"layer expects {layer.w.shape[1]} inputs, got {x.shape[0]}")
        inputs.append(x)
        z = layer.w @ x + layer.b
        preacts.append(z)
        x = np.maximum(z, 0.0) if layer.activation == "relu" else z
    mask = None
    head_input = x
    if train_mode:
        keep = 1.0 - dropout_rate
        mask = (rng.random(x.shape[0]) < keep).astype(np.float64) / keep
        head_input = x * mask
    if params.head.w.shape[1] != head_input.shape[0]:
        raise ValueError(
            f"head expects {params.head.w.shape[1]} inputs, got {head_input.shape[0]}"
        )
    logits = params.head.w @ head_input + params.head.b
    return logits, ForwardCache(params, inputs, preacts, head_input, mask, logits, train_mode)


def loss_value(gt: ScoreDistribution, logits, loss: str = "emd") -> float:
    if loss == "emd":
        return squared_emd_loss(gt, logits)
    if loss == "cross_entropy":
        return cross_entropy_loss(gt, logits)
    raise ValueError(f"unknown loss {loss!r}")


def backward(
    gt: ScoreDistribution,
    cache: ForwardCache,
    params: ModelParams,
    loss: str = "emd",
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the loss w.r.t. every weight and bias.

    Returns (dW, db) pairs ordered as params.layers(). The cache must come
    from a train-mode forward pass on the same params object; the inverted
    dropout scaling was applied in forward, so these gradients need no
    rescaling and inference needs none either. Learning rates play no role
    here; they apply at update time.
    """
    if cache.params is not params:
        raise ValueError("cache was produced by a different ModelParams instance")
    if not cache.train_mode:
        raise ValueError("backward requires a cache from a train-mode forward pass")
    if gt.scale != params.scale:
        raise ValueError("ground-truth scale does not match the model scale")
    if loss == "emd":
        dlogits = squared_emd_grad(gt, cache.logits)
    elif loss == "cross_entropy":
        dlogits = cross_entropy_grad(gt, cache.logits)
    else:
        raise ValueError(f"unknown loss {loss!r}")

    grads: list[tuple[np.ndarray, np.ndarray]] = [
        (np.outer(dlogits, cache.head_input), dlogits.copy())
    ]
    dx = params.head.w.T @ dlogits
    if cache.dropout_mask is not None:
        dx = dx * cache.dropout_mask
    for layer, x_in, z in zip(
        reversed(params.backbone), reversed(cache.inputs), reversed(cache.preacts)
    ):
        if layer.activation == "relu":
            dz = dx * (z > 0.0)
        else:
            dz = dx
        grads.append((np.outer(dz, x_in), dz))
        dx = layer.w.T @ dz
    grads.reverse()
    return grads


def predict(img: ImageTensor, params: ModelParams) -> ScoreDistribution:
    """Softmax of the inference-mode logits, on the model's scale."""
    logits, _ = forward(img, params, train_mode=False)
    return softmax(logits, params.scale)


def augment(img: ImageTensor, config: TrainConfig, rng: np.random.Generator) -> ImageTensor:
    """Resize, random-crop, then horizontally flip with probability 1/2."""
    out = bilinear_resize(img, config.resize_to, config.resize_to)
    out = random_crop(out, config.crop_to, rng)
    if config.hflip and rng.random() < 0.5:
        out = hflip(out)
    return out


def train(
    images: Sequence[ImageTensor],
    targets: Sequence[ScoreDistribution],
    config: TrainConfig,
) -> tuple[ModelParams, list[float]]:
    """SGD with momentum over (image, target-distribution) pairs.

    Two learning-rate groups: `lr_backbone` for the MLP layers and
    `lr_head` for the final bucket layer, both decayed by `decay_factor`
    every `decay_every_epochs` epochs. Batch gradients are the mean over
    the batch; the epoch loss trace averages per-example losses as
    visited. Bit-reproducible for a fixed config.
    """
    if len(images) == 0:
        raise ValueError("training requires at least one example")
    if len(images) != len(targets):
        raise ValueError("images and targets must align")
    scale = targets[0].scale
    for t in targets:
        if t.scale != scale:
            raise ValueError("all targets must share one bucket scale")

    rng = np.random.default_rng(config.seed)
    params = init_params(scale, hidden=config.hidden, seed=config.seed)
    n = len(images)
    trace: list[float] = []
    for epoch in range(config.epochs):
        lr_b = lr_at_epoch(config.lr_backbone, epoch, config)
        lr_h = lr_at_epoch(config.lr_head, epoch, config)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for batch_start in range(0, n, config.batch_size):
            batch = order[batch_start : batch_start + config.batch_size]
            batch_grads = None
            for idx in batch:
                view = augment(images[idx], config, rng)
                logits, cache = forward(
                    view, params, train_mode=True, rng=rng, dropout_rate=config.dropout_rate
                )
                if not np.all(np.isfinite(logits)):
                    raise NumericalError(
                        f"non-finite logits at epoch {epoch}, batch {batch_start // config.batch_size}"
                    )
                loss = loss_value(targets[idx], logits, config.loss)
                if not math.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}, batch {batch_start // config.batch_size}"
                    )
                epoch_loss += loss
                grads = backward(targets[idx], cache, params, loss=config.loss)
                if batch_grads is None:
                    batch_grads = grads
                else:
                    batch_grads = [
                        (gw + dw, gb + db)
                        for (gw, gb), (dw, db) in zip(batch_grads, grads)
                    ]
            inv = 1.0 / len(batch)
            layers = params.layers()
            for i, (layer, (dw, db)) in enumerate(zip(layers, batch_grads)):
                lr = lr_h if layer is params.head else lr_b
                vw, vb = params.velocities[i]
                vw *= config.momentum
                vw -= lr * (dw * inv)
                vb *= config.momentum
                vb -= lr * (db * inv)
                layer.w += vw
                layer.b += vb
        trace.append(epoch_loss / n)
    return params, trace


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    expected = 8 * int(np.prod(shape))
    if len(raw) != expected:
        raise DataError(f"weight blob holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def save_checkpoint(params: ModelParams, path: str | Path, config: TrainConfig | None = None) -> None:
    """Write a versioned JSON checkpoint with exact float64 weights.

    Little-endian byte order and canonical JSON keys make identical params
    serialize to identical bytes.
    """
    layers = []
    for layer, (vw, vb) in zip(params.layers(), params.velocities):
        layers.append(
            {
                "activation": layer.activation,
                "shape": list(layer.w.shape),
                "w": _encode_array(layer.w),
                "b": _encode_array(layer.b),
                "vw": _encode_array(vw),
                "vb": _encode_array(vb),
            }
        )
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "scale": list(params.scale.values),
        "seed": params.rng_seed,
        "layers": layers,
        "config": None if config is None else _config_echo(config),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _config_echo(config: TrainConfig) -> dict:
    echo = asdict(config)
    echo["hidden"] = list(echo["hidden"])
    return echo


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict | None]:
    """Read a checkpoint, rejecting version and shape mismatches."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: checkpoint version {doc.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        scale = BucketScale(tuple(doc["scale"]))
        layers = []
        velocities = []
        for spec in doc["layers"]:
            out_dim, in_dim = (int(v) for v in spec["shape"])
            w = _decode_array(spec["w"], (out_dim, in_dim))
            b = _decode_array(spec["b"], (out_dim,))
            vw = _decode_array(spec["vw"], (out_dim, in_dim))
            vb = _decode_array(spec["vb"], (out_dim,))
            layers.append(Layer(w, b, spec["activation"]))
            velocities.append((vw, vb))
        params = ModelParams(scale, layers[:-1], layers[-1], velocities, int(doc["seed"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed checkpoint: {exc}") from exc
    return params, doc.get("config")
