"""Class-prior matrices and the rewriting weights W = (Pi Theta^+)^T."""
from dataclasses import dataclass, field
import logging

import numpy as np

from priormix.core.errors import (
    GenerationFailed,
    IllConditioned,
    InvalidPriors,
    InvalidSimplex,
    RankDeficient,
)

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
IDENTITY_TOL = 1e-8
MAX_GENERATION_ATTEMPTS = 100


def _rank_tolerance(shape, sigma_max: float) -> float:
    return max(shape) * np.finfo(np.float64).eps * sigma_max


def numerical_rank(matrix: np.ndarray) -> int:
    """Number of singular values above max(M, K) * eps * sigma_max."""
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > _rank_tolerance(matrix.shape, s[0])))


@dataclass(frozen=True, eq=False)
class ClassPriorMatrix:
    """M x K row-stochastic matrix of bag class priors with full column rank."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise InvalidPriors(
                f"class-prior matrix must be 2-D, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidPriors("class-prior matrix has non-finite entries")
        if np.any(entries < 0):
            raise InvalidPriors("class-prior matrix has negative entries")
        row_sums = entries.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > SIMPLEX_TOL):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise InvalidPriors(
                f"row {bad + 1} of the class-prior matrix sums to {row_sums[bad]!r}")
        m, k = entries.shape
        if m < k:
            raise RankDeficient(
                f"need at least as many bags as classes, got M={m} < K={k}")
        rank = numerical_rank(entries)
        if rank < k:
            raise RankDeficient(
                f"class-prior matrix has column rank {rank} < K={k}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.entries))

    def dominant_classes(self) -> np.ndarray:
        """0-based argmax of each row, ties to the smallest class index."""
        return np.argmax(self.entries, axis=1)


@dataclass(frozen=True, eq=False)
class TestPriors:
    """Class priors pi of the deployment distribution."""

    __test__ = False  # not a pytest class

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise InvalidPriors("test priors must be a non-empty finite vector")
        if np.any(values < 0):
            raise InvalidPriors("test priors must be non-negative")
        if abs(values.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidPriors(f"test priors sum to {values.sum()!r}, not 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def K(self) -> int:
        return self.values.size

    @classmethod
    def uniform(cls, k: int) -> "TestPriors":
        return cls(np.full(k, 1.0 / k))


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Rewriting coefficients w_{m,k}; entries may be negative."""

    entries: np.ndarray
    max_abs: float = field(init=False)

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "max_abs", float(np.max(np.abs(entries))))

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    def identity_residual(self, theta: ClassPriorMatrix, pi: TestPriors) -> float:
        """max |W^T Theta - diag(pi)|."""
        return float(np.max(np.abs(self.entries.T @ theta.entries - np.diag(pi.values))))


def pseudoinverse(matrix: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a full-column-rank matrix via SVD.

    Raises RankDeficient when any singular value falls below
    max(M, K) * eps * sigma_max.
    """
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    cutoff = _rank_tolerance(matrix.shape, s[0]) if s.size else 0.0
    if s.size < matrix.shape[1] or np.any(s <= cutoff):
        raise RankDeficient(
            f"singular values {s.tolist()} fall below tolerance {cutoff:.3e}")
    return (vh.T / s) @ u.T


def compute_weights(theta: ClassPriorMatrix, pi: TestPriors) -> WeightMatrix:
    if pi.K != theta.K:
        raise InvalidPriors(
            f"test priors have {pi.K} classes, class-prior matrix has {theta.K}")
    theta_pinv = pseudoinverse(theta.entries)  # K x M
    weights = WeightMatrix((np.diag(pi.values) @ theta_pinv).T)

    residual = weights.identity_residual(theta, pi)
    if residual > IDENTITY_TOL:
        raise IllConditioned(residual, theta.condition_number())
    logger.debug("Computed rewriting weights", extra={
                 "M": theta.M, "K": theta.K, "max_abs": weights.max_abs})
    return weights


def symmetric_theta(a: float, b: float, K: int) -> ClassPriorMatrix:
    if not (a > 0 and b > 0):
        raise InvalidSimplex(f"symmetric priors need a > 0 and b > 0, got a={a}, b={b}")
    if abs(a + K * b - 1.0) > SIMPLEX_TOL:
        raise InvalidSimplex(
            f"a + K*b must equal 1, got {a} + {K}*{b} = {a + K * b}")
    return ClassPriorMatrix(a * np.eye(K) + b * np.ones((K, K)))


def _diagonal_dominated_draw(K: int, rng: np.random.Generator) -> np.ndarray:
    entries = rng.uniform(0.0, 1.0 / K, size=(K, K))
    np.fill_diagonal(entries, 0.0)
    np.fill_diagonal(entries, 1.0 - entries.sum(axis=1))
    return entries


def _generate(K: int, rng_seed: int, n_blocks: int) -> ClassPriorMatrix:
    if K < 2:
        raise InvalidSimplex(f"need at least two classes, got K={K}")
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        rng = np.random.default_rng(rng_seed + attempt)
        blocks = [_diagonal_dominated_draw(K, rng) for _ in range(n_blocks)]
        try:
            return ClassPriorMatrix(np.vstack(blocks))
        except RankDeficient:
            logger.info("Rank-deficient draw, retrying",
                        extra={"seed": rng_seed + attempt})
    raise GenerationFailed(
        f"{MAX_GENERATION_ATTEMPTS} consecutive rank-deficient draws from seed {rng_seed}")


def diagonal_dominated_theta(K: int, rng_seed: int) -> ClassPriorMatrix:
    """Off-diagonals ~ Uniform[0, 1/K]; each diagonal entry completes its row."""
    return _generate(K, rng_seed, n_blocks=1)


def nonsquare_theta(K: int, rng_seed: int) -> ClassPriorMatrix:
    """2K x K stack of two independent diagonal-dominated matrices."""
    return _generate(K, rng_seed, n_blocks=2)


def perturb_priors(theta: ClassPriorMatrix, noise_rate: float, rng_seed: int) -> ClassPriorMatrix:
    if not 0.0 <= noise_rate < 1.0:
        raise InvalidSimplex(f"noise rate must be in [0, 1), got {noise_rate}")
    if noise_rate == 0.0:
        return theta
    rng = np.random.default_rng(rng_seed)
    eps = rng.uniform(-noise_rate, noise_rate, size=theta.entries.shape)
    noisy = np.clip(theta.entries * (1.0 + eps), 0.0, None)
    noisy = noisy / noisy.sum(axis=1, keepdims=True)
    return ClassPriorMatrix(noisy)
