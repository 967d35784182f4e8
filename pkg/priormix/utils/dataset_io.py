import csv
import gzip
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
from sklearn.preprocessing import MinMaxScaler

from priormix.core.errors import (
    CountMismatch,
    DataError,
    LabelRangeError,
    MagicMismatch,
    ParseError,
)
from priormix.learning.bags import LabeledDataset
from priormix.learning.prior_algebra import ClassPriorMatrix, TestPriors

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open_binary(path: PathLike):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_csv(
    path: PathLike,
    scaler: Optional[MinMaxScaler] = None,
    n_classes: Optional[int] = None,
) -> LabeledDataset:
    """Read a ``label,f1,...,fd`` file with 1-based integer labels.

    Features are min-max scaled to [0, 1]. Pass the ``scaler`` of the training
    split when loading a test split so both share the training ranges.
    """
    labels = []
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or not header or header[0].strip().lower() != "label":
            raise ParseError("expected header row 'label,f1,...,fd'", line=1)
        d = len(header) - 1
        if d < 1:
            raise ParseError("header declares no feature columns", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != d + 1:
                raise ParseError(
                    f"expected {d + 1} fields, got {len(row)}", line=line)
            try:
                label = int(row[0])
            except ValueError:
                raise ParseError(f"label {row[0]!r} is not an integer", line=line)
            if label < 1 or (n_classes is not None and label > n_classes):
                raise LabelRangeError(
                    f"label {label} outside 1..{n_classes or 'K'}", line=line)
            try:
                features = [float(cell) for cell in row[1:]]
            except ValueError as e:
                raise ParseError(str(e), line=line)
            labels.append(label)
            rows.append(features)

    if not rows:
        raise ParseError("file holds no samples", line=2)

    features = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise DataError(f"{path} holds non-finite feature values")
    if scaler is None:
        scaler = MinMaxScaler().fit(features)
    scaled = np.clip(scaler.transform(features), 0.0, 1.0)

    dataset = LabeledDataset(
        features=scaled,
        labels=np.asarray(labels, dtype=np.int64),
        n_classes=n_classes,
        scaler=scaler,
    )
    logger.info("Loaded CSV dataset", extra={
                "path": str(path), "n": dataset.n, "d": dataset.d, "K": dataset.K})
    return dataset


def load_idx(images_path: PathLike, labels_path: PathLike, n_classes: Optional[int] = None) -> LabeledDataset:
    """Read an IDX image/label pair (MNIST family); plain or gzipped."""
    # [offset] [type]          [value]
    # 0000     32 bit integer  0x00000803  magic (images)
    # 0004     32 bit integer  n           number of images
    # 0008     32 bit integer  rows
    # 0012     32 bit integer  cols
    # 0016     unsigned byte   pixels, row-major
    with _open_binary(images_path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise ParseError(f"{images_path}: truncated IDX header")
        magic, n_images, n_rows, n_cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise MagicMismatch(
                f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        expected = n_images * n_rows * n_cols
        pixels = f.read(expected)
    if len(pixels) < expected:
        raise ParseError(
            f"{images_path}: truncated, {len(pixels)} of {expected} pixel bytes")

    # 0000     32 bit integer  0x00000801  magic (labels)
    # 0004     32 bit integer  n           number of items
    # 0008     unsigned byte   labels
    with _open_binary(labels_path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise ParseError(f"{labels_path}: truncated IDX header")
        magic, n_labels = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise MagicMismatch(
                f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        raw_labels = f.read(n_labels)
    if len(raw_labels) < n_labels:
        raise ParseError(
            f"{labels_path}: truncated, {len(raw_labels)} of {n_labels} labels")
    if n_labels != n_images:
        raise CountMismatch(
            f"{n_images} images but {n_labels} labels")

    features = np.frombuffer(pixels, dtype=np.uint8).reshape(
        n_images, n_rows * n_cols).astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64) + 1

    dataset = LabeledDataset(features=features, labels=labels, n_classes=n_classes)
    logger.info("Loaded IDX dataset", extra={
                "images": str(images_path), "n": dataset.n, "d": dataset.d})
    return dataset


def make_gaussian_dataset(
    n: int,
    n_classes: int,
    d: int,
    separation: float = 3.0,
    rng_seed: int = 0,
    scale: float = 1.0,
) -> LabeledDataset:
    """Balanced isotropic Gaussian classes; class k is centred at separation * e_k.

    With d < K the centres wrap onto the available axes with alternating sign.
    """
    rng = np.random.default_rng(rng_seed)
    centres = gaussian_centres(n_classes, d, separation)
    labels = np.arange(n) % n_classes + 1
    rng.shuffle(labels)
    features = centres[labels - 1] + scale * rng.standard_normal((n, d))
    return LabeledDataset(features=features, labels=labels, n_classes=n_classes)


def gaussian_centres(n_classes: int, d: int, separation: float) -> np.ndarray:
    centres = np.zeros((n_classes, d))
    for k in range(n_classes):
        sign = 1.0 if (k // d) % 2 == 0 else -1.0
        centres[k, k % d] = sign * separation
    return centres


def _format_decimal(value: float) -> str:
    return np.format_float_positional(value, unique=True, trim="-")


def save_theta_csv(theta: ClassPriorMatrix, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in theta.entries:
            writer.writerow([_format_decimal(v) for v in row])
    return path


def _read_matrix(path: PathLike) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise ParseError(f"{path}: {e}", line=len(rows) + 1)
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError(f"{path}: expected a non-empty rectangular matrix")
    return np.asarray(rows, dtype=np.float64)


def load_theta_csv(path: PathLike) -> ClassPriorMatrix:
    return ClassPriorMatrix(_read_matrix(path))


def save_priors_csv(pi: TestPriors, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        csv.writer(f).writerow([_format_decimal(v) for v in pi.values])
    return path


def load_priors_csv(path: PathLike) -> TestPriors:
    return TestPriors(_read_matrix(path).reshape(-1))
