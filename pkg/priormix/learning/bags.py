"""Labeled sources and the unlabeled bags synthesised from them."""
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from priormix.core.errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    InsufficientClassSamples,
    LabelRangeError,
)
from priormix.learning.prior_algebra import ClassPriorMatrix

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Fully labeled data. Labels are 1-based; every class 1..K appears."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: Optional[int] = None
    # min-max scaler fitted on the training split, when the loader scaled features
    scaler: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or features.shape[0] != labels.size:
            raise DimensionMismatch(
                f"features {features.shape} do not match {labels.size} labels")
        if labels.size == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(features)):
            raise DataError("dataset has non-finite feature rows")
        k = self.n_classes if self.n_classes is not None else int(labels.max())
        if labels.min() < 1 or labels.max() > k:
            raise LabelRangeError(
                f"labels span {labels.min()}..{labels.max()}, expected 1..{k}")
        missing = np.setdiff1d(np.arange(1, k + 1), labels)
        if missing.size:
            raise DataError(f"classes {missing.tolist()} have no samples")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "n_classes", k)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.n_classes

    def class_indices(self, k: int) -> np.ndarray:
        """Row indices of class k (1-based)."""
        return np.flatnonzero(self.labels == k)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels - 1, minlength=self.K)


@dataclass(frozen=True, eq=False)
class UnlabeledBag:
    """One unlabeled training set X_m.

    ``hidden_labels`` and ``source_indices`` are kept for oracle checks only;
    training objectives receive feature blocks and never these fields.
    """

    bag_index: int
    features: np.ndarray
    hidden_labels: Optional[np.ndarray] = field(default=None, repr=False)
    source_indices: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DataError(f"bag {self.bag_index} is empty")
        object.__setattr__(self, "features", _frozen(features))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class BagCollection:
    bags: Tuple[UnlabeledBag, ...]
    theta: ClassPriorMatrix

    def __post_init__(self):
        bags = tuple(self.bags)
        if len(bags) != self.theta.M:
            raise DimensionMismatch(
                f"{len(bags)} bags for a class-prior matrix with M={self.theta.M}")
        dims = {bag.d for bag in bags}
        if len(dims) != 1:
            raise DimensionMismatch(f"bags disagree on feature dimension: {sorted(dims)}")
        object.__setattr__(self, "bags", bags)

    @property
    def M(self) -> int:
        return len(self.bags)

    @property
    def d(self) -> int:
        return self.bags[0].d

    @property
    def sizes(self) -> List[int]:
        return [bag.n for bag in self.bags]


def split_bag_sizes(total: int, M: int) -> List[int]:
    """M near-equal sizes summing to total; larger sizes go to lower indices."""
    if M < 1 or total < M:
        raise ConfigError(f"cannot split {total} samples into {M} non-empty bags")
    q, r = divmod(total, M)
    return [q + 1] * r + [q] * (M - r)


def largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts proportional to ``proportions`` summing exactly to ``total``.

    Leftover units go to the largest fractional parts, ties to the smaller index.
    """
    raw = np.round(np.asarray(proportions, dtype=np.float64) * total, 9)
    counts = np.floor(raw).astype(np.int64)
    leftover = int(total - counts.sum())
    if leftover > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:leftover]] += 1
    return counts


def make_bags(
    source: LabeledDataset,
    theta: ClassPriorMatrix,
    bag_size: Union[int, Sequence[int]],
    rng_seed: int,
) -> BagCollection:
    if source.K != theta.K:
        raise DimensionMismatch(
            f"source has {source.K} classes, class-prior matrix has {theta.K}")
    sizes = [int(bag_size)] * theta.M if np.isscalar(bag_size) else [int(s) for s in bag_size]
    if len(sizes) != theta.M or min(sizes) < 1:
        raise ConfigError(f"need {theta.M} positive bag sizes, got {sizes}")

    pools = [source.class_indices(k + 1) for k in range(theta.K)]
    counts = np.stack([largest_remainder_counts(theta.entries[m], sizes[m])
                       for m in range(theta.M)])
    for m in range(theta.M):
        for k in range(theta.K):
            if counts[m, k] > pools[k].size:
                raise InsufficientClassSamples(
                    bag=m + 1, klass=k + 1, needed=int(counts[m, k]), available=pools[k].size)

    rng = np.random.default_rng(rng_seed)
    bags = []
    for m in range(theta.M):
        picked = [rng.choice(pools[k], size=counts[m, k], replace=False)
                  for k in range(theta.K) if counts[m, k] > 0]
        indices = rng.permutation(np.concatenate(picked))
        bags.append(UnlabeledBag(
            bag_index=m + 1,
            features=source.features[indices],
            hidden_labels=_frozen(source.labels[indices].copy()),
            source_indices=_frozen(indices),
        ))

    logger.debug("Synthesised bags", extra={"M": theta.M, "sizes": sizes})
    return BagCollection(bags=tuple(bags), theta=theta)
