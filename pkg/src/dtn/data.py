"""Dataset ingestion and synthetic domain-shift generation.

Loaders cover big-endian IDX image/label files and delimited numeric
text; every malformed input is rejected with a diagnostic (byte offset
for binary, line number for text) rather than silently truncated.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from dtn.errors import DataFormatError, ShapeError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class Role(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass
class DomainDataset:
    """Feature rows plus optional integer labels and a domain tag."""

    features: np.ndarray
    labels: np.ndarray = None
    name: str = ""
    role: Role = Role.SOURCE

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise ValueError(f"dataset {self.name!r} holds non-finite features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError(
                    f"{self.labels.shape[0] if self.labels.ndim == 1 else self.labels.shape} "
                    f"labels for {self.features.shape[0]} samples"
                )
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("labels must be nonnegative class indices")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


def _read_exact(f, count, offset, what):
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(
            f"truncated {what}: wanted {count} bytes at offset {offset}, got {len(data)}",
            offset=offset,
        )
    return data


def _read_be32(f, offset, what):
    return struct.unpack(">I", _read_exact(f, 4, offset, what))[0]


def load_idx_images(path):
    """Raw (count, rows, cols) float array in [0, 1] from an IDX image file."""
    with open(path, "rb") as f:
        magic = _read_be32(f, 0, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"bad image magic 0x{magic:08x} at offset 0 in {path}", offset=0
            )
        count = _read_be32(f, 4, "image count")
        rows = _read_be32(f, 8, "row count")
        cols = _read_be32(f, 12, "column count")
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise DataFormatError(
            f"image payload holds {len(payload)} bytes at offset 16, expected {expected}",
            offset=16,
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path):
    with open(path, "rb") as f:
        magic = _read_be32(f, 0, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x} at offset 0 in {path}", offset=0
            )
        count = _read_be32(f, 4, "label count")
        payload = f.read()
    if len(payload) != count:
        raise DataFormatError(
            f"label payload holds {len(payload)} bytes at offset 8, expected {count}",
            offset=8,
        )
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path=None, name="", role=Role.SOURCE,
             resize_to=None):
    """Load an IDX image file (plus optional label file) as a dataset.

    Pixels are scaled to [0, 1] and flattened row-major. resize_to, a
    (rows, cols) pair, bilinearly resamples every image first, which is
    how differently-sized image domains are reconciled.
    """
    images = load_idx_images(images_path)
    labels = None
    if labels_path is not None:
        labels = load_idx_labels(labels_path)
        if labels.shape[0] != images.shape[0]:
            raise DataFormatError(
                f"{images.shape[0]} images but {labels.shape[0]} labels"
            )
    features = images.reshape(images.shape[0], -1)
    dataset = DomainDataset(features, labels, name=name or str(images_path), role=role)
    if resize_to is not None and tuple(resize_to) != images.shape[1:]:
        dataset = resize_bilinear(dataset, images.shape[1:], tuple(resize_to))
    return dataset


def write_idx_images(path, images):
    """Write (count, rows, cols) pixel data in [0, 1] as an IDX image file."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ShapeError(f"expected (count, rows, cols), got {images.shape}")
    quantized = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *images.shape))
        f.write(quantized.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise ValueError("labels must be a vector of bytes")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def load_delimited(path, has_labels, delimiter=",", name="", role=Role.SOURCE):
    """Load a rectangular numeric table; final column is the label if asked."""
    rows = []
    width = None
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(delimiter)
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataFormatError(
                    f"ragged row at line {lineno}: {len(cells)} cells, expected {width}",
                    line=lineno,
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise DataFormatError(
                    f"non-numeric cell at line {lineno}", line=lineno
                ) from None
    if not rows:
        raise DataFormatError(f"no data rows in {path}", line=1)
    table = np.asarray(rows, dtype=np.float64)
    if has_labels:
        if table.shape[1] < 2:
            raise DataFormatError("label column requested but table has one column")
        labels = table[:, -1]
        if not np.array_equal(labels, np.rint(labels)) or labels.min() < 0:
            raise DataFormatError("label column must hold nonnegative integers")
        return DomainDataset(table[:, :-1], labels.astype(np.int64),
                             name=name or str(path), role=role)
    return DomainDataset(table, None, name=name or str(path), role=role)


def save_delimited(path, features, labels=None, delimiter=","):
    """Write features (and optional trailing label column) as delimited text."""
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w") as f:
        for i in range(features.shape[0]):
            cells = [repr(float(v)) for v in features[i]]
            if labels is not None:
                cells.append(str(int(labels[i])))
            f.write(delimiter.join(cells) + "\n")


def resize_bilinear(dataset, from_shape, to_shape):
    """Bilinearly resample flattened images to a new (rows, cols) shape.

    Uses corner-aligned sample coordinates, so the identity resize is
    exact and constants stay constant. Output values are clamped to [0, 1].
    """
    r, c = from_shape
    r2, c2 = to_shape
    if dataset.n_features != r * c:
        raise ShapeError(
            f"dataset width {dataset.n_features} != {r}x{c}"
        )
    images = dataset.features.reshape(-1, r, c)

    def _coords(n_from, n_to):
        if n_to == 1:
            return np.full(1, (n_from - 1) / 2.0)
        return np.arange(n_to) * (n_from - 1) / (n_to - 1)

    ys, xs = _coords(r, r2), _coords(c, c2)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, r - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, c - 1)
    y1, x1 = np.minimum(y0 + 1, r - 1), np.minimum(x0 + 1, c - 1)
    wy, wx = ys - y0, xs - x0

    top = images[:, y0][:, :, x0] * (1 - wx) + images[:, y0][:, :, x1] * wx
    bot = images[:, y1][:, :, x0] * (1 - wx) + images[:, y1][:, :, x1] * wx
    out = top * (1 - wy)[None, :, None] + bot * wy[None, :, None]
    out = np.clip(out, 0.0, 1.0)
    return DomainDataset(out.reshape(dataset.n_samples, r2 * c2),
                         dataset.labels, name=dataset.name, role=dataset.role)


@dataclass
class SynthShiftSpec:
    """Parameters of the two-domain Gaussian-mixture benchmark.

    Source classes are isotropic blobs around means on a circle; the
    target rotates the means, translates them, and scales the noise, so
    both the feature distribution and the label-given-feature
    distribution move.
    """

    classes: int
    dim: int
    per_class: int
    angle: float = 0.0
    translation: tuple = ()
    noise_ratio: float = 1.0
    seed: int = 0
    noise_scale: float = 0.5
    radius: float = 2.0

    def __post_init__(self):
        if self.classes < 2 or self.dim < 2 or self.per_class < 1:
            raise ValueError("need classes >= 2, dim >= 2, per_class >= 1")
        if not 0.0 <= self.angle < 2.0 * np.pi:
            raise ValueError(f"angle must lie in [0, 2*pi), got {self.angle}")
        if self.noise_ratio <= 0 or self.noise_scale <= 0:
            raise ValueError("noise scale and ratio must be positive")
        self.translation = tuple(float(t) for t in self.translation) or (0.0,) * self.dim
        if len(self.translation) != self.dim:
            raise ShapeError(
                f"translation has {len(self.translation)} entries for dim {self.dim}"
            )


def gen_synth_shift(spec):
    """Generate (source, target) datasets exhibiting the configured shift.

    Both datasets come back labeled; target labels exist only so runs can
    be scored, training must never see them.
    """
    rng = np.random.default_rng(spec.seed)
    angles = 2.0 * np.pi * np.arange(spec.classes) / spec.classes
    means = np.zeros((spec.classes, spec.dim))
    means[:, 0] = spec.radius * np.cos(angles)
    means[:, 1] = spec.radius * np.sin(angles)

    rot = np.eye(spec.dim)
    cos_a, sin_a = np.cos(spec.angle), np.sin(spec.angle)
    rot[0, 0], rot[0, 1] = cos_a, -sin_a
    rot[1, 0], rot[1, 1] = sin_a, cos_a
    t_means = means @ rot.T + np.asarray(spec.translation)

    def _domain(class_means, sigma, role, tag):
        feats = np.concatenate([
            class_means[c] + sigma * rng.standard_normal((spec.per_class, spec.dim))
            for c in range(spec.classes)
        ])
        labels = np.repeat(np.arange(spec.classes, dtype=np.int64), spec.per_class)
        return DomainDataset(feats, labels, name=tag, role=role)

    source = _domain(means, spec.noise_scale, Role.SOURCE, "synth-source")
    target = _domain(t_means, spec.noise_scale * spec.noise_ratio, Role.TARGET, "synth-target")
    return source, target
