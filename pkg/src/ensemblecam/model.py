"""Small PAD classifier: forward trace, target-layer gradients, training.

Architecture (input 3x64x64, class 0 = live, class 1 = spoof):

    conv1 3->8  3x3 pad 1, relu, maxpool2
    conv2 8->16 3x3 pad 1, relu, maxpool2
    conv3 16->32 3x3 pad 1, relu        <- target layer (32x16x16)
    global average pool
    affine 32->2

Training uses AdamW with decoupled weight decay and a step-decay
learning-rate schedule.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .rng import make_rng

INPUT_SIZE = 64
TARGET_CHANNELS = 32
TARGET_SPATIAL = 16
NUM_CLASSES = 2

WEIGHT_MAGIC = b"ECAMW1"
WEIGHT_VERSION = 1

# (name, shape) table; order fixes the weight-file layout
PARAM_SHAPES = [
    ("conv1.w", (8, 3, 3, 3)),
    ("conv1.b", (8,)),
    ("conv2.w", (16, 8, 3, 3)),
    ("conv2.b", (16,)),
    ("conv3.w", (32, 16, 3, 3)),
    ("conv3.b", (32,)),
    ("fc.w", (2, 32)),
    ("fc.b", (2,)),
]


class WeightFileError(ValueError):
    """Raised when a weight file is malformed or does not match the model."""


@dataclass
class SmallCnn:
    params: dict[str, np.ndarray]

    def copy(self) -> "SmallCnn":
        return SmallCnn({k: v.copy() for k, v in self.params.items()})


def init_small_cnn(seed: int) -> SmallCnn:
    """Kaiming-style uniform init scaled by fan-in, biases zero."""
    rng = make_rng(seed, 0)
    params = {}
    for name, shape in PARAM_SHAPES:
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return SmallCnn(params)


@dataclass
class ForwardTrace:
    """Per-layer record of a single-image forward pass."""
    image: np.ndarray
    conv1_pre: np.ndarray
    conv1_act: np.ndarray
    pool1: np.ndarray
    pool1_idx: np.ndarray
    conv2_pre: np.ndarray
    conv2_act: np.ndarray
    pool2: np.ndarray
    pool2_idx: np.ndarray
    conv3_pre: np.ndarray
    target_activations: np.ndarray  # (1, 32, 16, 16), post-relu
    pooled: np.ndarray
    logits: np.ndarray  # (2,)
    probabilities: np.ndarray  # (2,)
    predicted_class: int
    confidence: float


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (1, 3, INPUT_SIZE, INPUT_SIZE):
        raise ops.ShapeError(
            f"expected image of shape (1, 3, {INPUT_SIZE}, {INPUT_SIZE}), got {image.shape}")
    return image


def forward(model: SmallCnn, image: np.ndarray) -> ForwardTrace:
    image = _check_image(image)
    p = model.params
    c1 = ops.conv2d(image, p["conv1.w"], p["conv1.b"], padding=1)
    a1 = ops.relu(c1)
    p1, i1 = ops.maxpool2(a1)
    c2 = ops.conv2d(p1, p["conv2.w"], p["conv2.b"], padding=1)
    a2 = ops.relu(c2)
    p2, i2 = ops.maxpool2(a2)
    c3 = ops.conv2d(p2, p["conv3.w"], p["conv3.b"], padding=1)
    a3 = ops.relu(c3)
    pooled = ops.global_avg_pool(a3)
    logits = ops.affine(pooled, p["fc.w"], p["fc.b"])[0]
    probs = ops.softmax(logits)
    # tie at equal logits -> class 0 (live); argmax takes the first maximum
    pred = int(np.argmax(logits))
    return ForwardTrace(
        image=image, conv1_pre=c1, conv1_act=a1, pool1=p1, pool1_idx=i1,
        conv2_pre=c2, conv2_act=a2, pool2=p2, pool2_idx=i2,
        conv3_pre=c3, target_activations=a3, pooled=pooled,
        logits=logits, probabilities=probs,
        predicted_class=pred, confidence=float(probs[pred]))


def head_logits(model: SmallCnn, target_activations: np.ndarray) -> np.ndarray:
    """Logits as a function of the target-layer activations (GAP + affine).

    Used by finite-difference checks of class_gradients.
    """
    pooled = ops.global_avg_pool(np.asarray(target_activations, dtype=np.float64))
    return ops.affine(pooled, model.params["fc.w"], model.params["fc.b"])[0]


def class_gradients(model: SmallCnn, trace: ForwardTrace, target_class: int) -> np.ndarray:
    """d(logit of target_class) / d(target-layer activations), shape (32,16,16).

    The class score is the pre-softmax logit; only the target logit's path
    contributes.  With GAP feeding the affine head the gradient is uniform
    per channel: fc.w[c,k] / (16*16).
    """
    if target_class not in range(NUM_CLASSES):
        raise ValueError(f"target_class must be in {{0, 1}}, got {target_class}")
    k = TARGET_CHANNELS
    grad_pooled = model.params["fc.w"][target_class]  # (32,)
    _, _, hh, ww = trace.target_activations.shape
    return np.broadcast_to(grad_pooled[:, None, None] / (hh * ww), (k, hh, ww)).copy()


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    epochs: int = 20
    step_size: int = 7
    gamma: float = 0.1
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate for a 1-based epoch: decayed by gamma every step_size epochs."""
    return config.learning_rate * config.gamma ** ((epoch - 1) // config.step_size)


def loss_and_grads(model: SmallCnn, images: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its gradients over a batch (N,3,64,64)."""
    p = model.params
    n = images.shape[0]
    c1 = ops.conv2d(images, p["conv1.w"], p["conv1.b"], padding=1)
    a1 = ops.relu(c1)
    p1, i1 = ops.maxpool2(a1)
    c2 = ops.conv2d(p1, p["conv2.w"], p["conv2.b"], padding=1)
    a2 = ops.relu(c2)
    p2, i2 = ops.maxpool2(a2)
    c3 = ops.conv2d(p2, p["conv3.w"], p["conv3.b"], padding=1)
    a3 = ops.relu(c3)
    pooled = ops.global_avg_pool(a3)
    logits = ops.affine(pooled, p["fc.w"], p["fc.b"])
    probs = ops.softmax(logits)

    floored = np.maximum(probs[np.arange(n), labels], ops.PROB_FLOOR)
    loss = float(-np.log(floored).mean())
    correct = int((logits.argmax(axis=1) == labels).sum())

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dpooled, gfw, gfb = ops.affine_backward(dlogits, pooled, p["fc.w"])
    da3 = ops.global_avg_pool_backward(dpooled, a3.shape)
    dc3 = ops.relu_backward(da3, c3)
    dp2, g3w, g3b = ops.conv2d_backward(dc3, p2, p["conv3.w"], padding=1)
    da2 = ops.maxpool2_backward(dp2, i2)
    dc2 = ops.relu_backward(da2, c2)
    dp1, g2w, g2b = ops.conv2d_backward(dc2, p1, p["conv2.w"], padding=1)
    da1 = ops.maxpool2_backward(dp1, i1)
    dc1 = ops.relu_backward(da1, c1)
    _, g1w, g1b = ops.conv2d_backward(dc1, images, p["conv1.w"], padding=1)

    grads = {"conv1.w": g1w, "conv1.b": g1b, "conv2.w": g2w, "conv2.b": g2b,
             "conv3.w": g3w, "conv3.b": g3b, "fc.w": gfw, "fc.b": gfb}
    return loss, grads, correct


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(model: SmallCnn, grads: dict[str, np.ndarray],
               state: AdamWState, config: TrainConfig, lr: float) -> None:
    """One AdamW update in place (decoupled weight decay)."""
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for name, param in model.params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        param -= lr * (m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * param)


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    loss: float
    accuracy: float


def train(model: SmallCnn, dataset, config: TrainConfig):
    """Train in place on a list of (image (1,3,64,64), label) pairs.

    Returns (model, per-epoch stats).  Deterministic given config.seed.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    labels_present = {int(lbl) for _, lbl in dataset}
    if labels_present != {0, 1}:
        raise ValueError(f"training dataset must contain both classes, got labels {sorted(labels_present)}")

    images = np.concatenate([img for img, _ in dataset], axis=0)
    labels = np.array([int(lbl) for _, lbl in dataset])
    n = len(dataset)
    state = AdamWState()
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(config, epoch)
        order = make_rng(config.seed, 1, epoch).permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads, correct = loss_and_grads(model, images[batch], labels[batch])
            adamw_step(model, grads, state, config, lr)
            total_loss += loss * len(batch)
            total_correct += correct
        history.append(EpochStats(epoch, lr, total_loss / n, total_correct / n))
    return model, history


def pad_metrics(model: SmallCnn, dataset) -> dict:
    """accuracy / apcer / bpcer over (image, label) pairs.

    apcer: spoof classified live; bpcer: live classified spoof.
    A metric whose class is absent is reported as None, not 0.
    """
    n_live = n_spoof = live_as_spoof = spoof_as_live = correct = 0
    for image, label in dataset:
        pred = forward(model, image).predicted_class
        if label == 0:
            n_live += 1
            live_as_spoof += pred == 1
        else:
            n_spoof += 1
            spoof_as_live += pred == 0
        correct += pred == label
    total = n_live + n_spoof
    return {
        "accuracy": correct / total if total else None,
        "apcer": spoof_as_live / n_spoof if n_spoof else None,
        "bpcer": live_as_spoof / n_live if n_live else None,
    }


# ---------------------------------------------------------------------------
# weight persistence: little-endian binary, magic "ECAMW1", then
# version u32, layer count u32, per layer: name-length u32 + UTF-8 name,
# rank u32, dims u32[], f64 payload.


def save_weights(model: SmallCnn, path) -> None:
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<II", WEIGHT_VERSION, len(PARAM_SHAPES)))
        for name, _ in PARAM_SHAPES:
            arr = np.ascontiguousarray(model.params[name], dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise WeightFileError(f"truncated weight file while reading {what}")
    return data


def load_weights(path) -> SmallCnn:
    expected = dict(PARAM_SHAPES)
    params: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        if _read_exact(f, len(WEIGHT_MAGIC), "magic") != WEIGHT_MAGIC:
            raise WeightFileError(f"bad magic in {path}, expected {WEIGHT_MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != WEIGHT_VERSION:
            raise WeightFileError(f"unsupported weight-file version {version}")
        if count != len(PARAM_SHAPES):
            raise WeightFileError(f"expected {len(PARAM_SHAPES)} layers, file declares {count}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            if name not in expected:
                raise WeightFileError(f"unknown layer {name!r} in weight file")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
            if dims != expected[name]:
                raise WeightFileError(
                    f"layer {name!r}: file shape {dims} does not match model shape {expected[name]}")
            payload = _read_exact(f, 8 * int(np.prod(dims)), f"payload of {name!r}")
            params[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        if f.read(1):
            raise WeightFileError("trailing bytes after last layer record")
    if set(params) != set(expected):
        raise WeightFileError("weight file does not cover every model layer")
    return SmallCnn(params)
