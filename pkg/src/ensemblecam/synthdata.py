"""Deterministic synthetic live/spoof image generator and manifest handling.

Live images are a smooth radial luminance blob with mild low-frequency
color variation plus Gaussian noise.  Spoof images take the same base
and composite a high-frequency periodic grid (a display/print artifact
proxy) with random phase and orientation into a random sub-window, so
the discriminative evidence is spatially compact and CAM localization
has a ground truth to find.  Everything is keyed per (seed, index)
through the counter-based RNG, so generation is order-independent.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import make_rng

IMAGE_SIZE = 64
LABELS = ("live", "spoof")
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = {"train": 0.70, "val": 0.15, "test": 0.15}


@dataclass
class SynthSpec:
    per_class: int
    seed: int = 0
    image_size: int = IMAGE_SIZE
    intensity: float = 0.5
    noise_level: float = 0.02

    def __post_init__(self):
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError(f"intensity must be in (0, 1], got {self.intensity} "
                             "(classes would be indistinguishable at 0)")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def save(self, path) -> None:
        with open(path, "w") as f:
            for e in self.entries:
                f.write(json.dumps({"path": e.path, "label": e.label, "split": e.split},
                                   sort_keys=True))
                f.write("\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        entries = []
        seen = set()
        base = Path(path).parent
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                entry = ManifestEntry(obj["path"], obj["label"], obj["split"])
                if entry.label not in LABELS or entry.split not in SPLITS:
                    raise ValueError(f"bad manifest entry: {obj}")
                if entry.path in seen:
                    raise ValueError(f"duplicate path in manifest: {entry.path}")
                seen.add(entry.path)
                if not (base / entry.path).exists():
                    raise FileNotFoundError(f"manifest references missing file {entry.path}")
                entries.append(entry)
        return cls(entries)


def _base_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth radial blob + low-frequency color tint + noise, in [0,1], (3,H,W)."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    r2 = (yy - cy) ** 2 + (xx - cx) ** 2
    # compact bright blob on a near-black field: zero-filled retention
    # masking then stays close to the training distribution
    lum = 0.50 * np.exp(-r2 / rng.uniform(0.02, 0.06)) + 0.03
    tint = np.empty((3, size, size))
    for ch in range(3):
        fy, fx = rng.uniform(0.5, 1.5, size=2)
        py, px = rng.uniform(0, 2 * np.pi, size=2)
        tint[ch] = 0.03 * np.sin(2 * np.pi * fy * yy + py) * np.cos(2 * np.pi * fx * xx + px)
    return lum[None] + tint


def _spoof_window(size: int, rng: np.random.Generator):
    side = int(rng.integers(size // 4, size // 2 + 1))
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    return top, left, side


def render_image(spec: SynthSpec, label: str, index: int) -> np.ndarray:
    """Deterministic (3,H,W) float image in [0,1] for (seed, label, index)."""
    size = spec.image_size
    stream = 10 if label == "live" else 11
    rng = make_rng(spec.seed, stream, index)
    img = _base_image(size, rng)
    if label == "spoof":
        top, left, side = _spoof_window(size, rng)
        yy, xx = np.mgrid[0:side, 0:side].astype(float)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        freq = rng.uniform(0.9, 1.3)  # cycles per ~3 px: high-frequency grid
        u = np.cos(theta) * xx + np.sin(theta) * yy
        v = -np.sin(theta) * xx + np.cos(theta) * yy
        grid = 0.5 * (np.sin(2 * np.pi * freq * u / 3.0 + phase)
                      + np.sin(2 * np.pi * freq * v / 3.0 + phase))
        img[:, top:top + side, left:left + side] += spec.intensity * 0.5 * grid[None]
    img += spec.noise_level * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def write_image(tensor: np.ndarray, path) -> None:
    """Save a (3,H,W) or (1,3,H,W) float [0,1] tensor as 8-bit RGB PNG."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 4:
        arr = arr[0]
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as a (1,3,H,W) float tensor in [0,1].

    Alpha channels are dropped with a warning; grayscale is promoted.
    """
    with Image.open(path) as im:
        if im.mode == "RGBA":
            warnings.warn(f"{path}: alpha channel dropped")
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)[None]


def _split_counts(per_class: int) -> dict[str, int]:
    n_train = int(per_class * SPLIT_FRACTIONS["train"])
    n_val = int(per_class * SPLIT_FRACTIONS["val"])
    return {"train": n_train, "val": n_val, "test": per_class - n_train - n_val}


def generate(spec: SynthSpec, out_dir) -> Manifest:
    """Write per_class images per label with a 70/15/15 split; returns the manifest.

    The manifest is saved alongside the images as manifest.jsonl.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = _split_counts(spec.per_class)
    entries = []
    for label in LABELS:
        index = 0
        for split in SPLITS:
            for _ in range(counts[split]):
                rel = f"{split}_{label}_{index:05d}.png"
                write_image(render_image(spec, label, index), out / rel)
                entries.append(ManifestEntry(rel, label, split))
                index += 1
    manifest = Manifest(entries)
    manifest.save(out / "manifest.jsonl")
    return manifest


def load_split(manifest_path, split: str):
    """Samples for a split as (image_id, image (1,3,H,W), label int) tuples."""
    manifest = Manifest.load(manifest_path)
    base = Path(manifest_path).parent
    samples = []
    for entry in manifest.split(split):
        samples.append((entry.path, load_image(base / entry.path),
                        LABELS.index(entry.label)))
    return samples
