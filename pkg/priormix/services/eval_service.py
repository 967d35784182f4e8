from dataclasses import dataclass
from typing import Optional, Sequence
import logging

import numpy as np
from scipy.stats import norm

from priormix.core.config import settings
from priormix.core.errors import ConfigError, DimensionMismatch, EmptyTrajectory
from priormix.learning.bags import LabeledDataset, make_bags, split_bag_sizes
from priormix.learning.model import MlpModel, ce_loss_matrix, forward, predict
from priormix.learning.objectives import BatchSlice, unbiased_risk
from priormix.learning.prior_algebra import (
    ClassPriorMatrix,
    TestPriors,
    WeightMatrix,
    compute_weights,
)

logger = logging.getLogger(__name__)


def _logits_in_chunks(model: MlpModel, X: np.ndarray) -> np.ndarray:
    chunk = settings.EVAL_CHUNK_SIZE
    return np.vstack([forward(model, X[i:i + chunk]) for i in range(0, X.shape[0], chunk)])


def _predict_in_chunks(model: MlpModel, X: np.ndarray) -> np.ndarray:
    chunk = settings.EVAL_CHUNK_SIZE
    return np.concatenate([predict(model, X[i:i + chunk]) for i in range(0, X.shape[0], chunk)])


def test_error(model: MlpModel, test: LabeledDataset) -> float:
    """Fraction of samples whose argmax prediction (ties to the smallest class) is wrong."""
    if test.d != model.d:
        raise DimensionMismatch(
            f"test features have d={test.d}, model expects {model.d}")
    predictions = _predict_in_chunks(model, test.features)
    return float(np.mean(predictions != test.labels))


test_error.__test__ = False  # not a pytest test when imported into test modules


def class_weighted_error(model: MlpModel, test: LabeledDataset) -> float:
    """1 - sum_k freq_k * accuracy_k; equals test_error by construction."""
    predictions = _predict_in_chunks(model, test.features)
    freqs = test.class_counts() / test.n
    accuracies = np.array([
        np.mean(predictions[test.class_indices(k)] == k) for k in range(1, test.K + 1)])
    return float(1.0 - np.sum(freqs * accuracies))


def error_drop(trajectory: Sequence[float]) -> float:
    """Final test error minus the smallest test error over all epochs."""
    if len(trajectory) == 0:
        raise EmptyTrajectory("cannot compute the error drop of an empty trajectory")
    values = np.asarray(trajectory, dtype=np.float64)
    return float(values[-1] - values.min())


def supervised_risk(model: MlpModel, source: LabeledDataset, pi: TestPriors) -> float:
    """sum_k pi_k * mean cross-entropy of class-k samples against label k."""
    ce = ce_loss_matrix(_logits_in_chunks(model, source.features))
    return float(sum(
        pi.values[k - 1] * ce[source.class_indices(k), k - 1].mean()
        for k in range(1, source.K + 1)))


@dataclass(frozen=True)
class OracleResult:
    mc_mean: float
    supervised_risk: float
    z_score: float
    stderr: float
    redraws: int


def unbiasedness_oracle(
    source: LabeledDataset,
    theta: ClassPriorMatrix,
    pi: TestPriors,
    model: MlpModel,
    redraws: int,
    rng_seed: int,
    bag_size: Optional[int] = None,
    weights: Optional[WeightMatrix] = None,
) -> OracleResult:
    """Monte-Carlo mean of the unbiased risk over fresh bag draws vs. the labeled risk.

    ``weights`` overrides the rewriting weights (negative controls); ``bag_size``
    defaults to an equal split of the source over the M bags.
    """
    if redraws < 100:
        raise ConfigError(f"need at least 100 redraws, got {redraws}")
    W = weights if weights is not None else compute_weights(theta, pi)
    sizes = bag_size if bag_size is not None else split_bag_sizes(source.n, theta.M)

    seeds = np.random.SeedSequence(rng_seed).generate_state(redraws)
    risks = np.empty(redraws)
    for r, seed in enumerate(seeds):
        bags = make_bags(source, theta, sizes, int(seed))
        risks[r] = unbiased_risk(BatchSlice.from_bags(bags), W, model).value

    target = supervised_risk(model, source, pi)
    mc_mean = float(risks.mean())
    stderr = float(risks.std(ddof=1) / np.sqrt(redraws))
    z = abs(mc_mean - target) / stderr if stderr > 0 else (0.0 if mc_mean == target else np.inf)
    logger.info("Unbiasedness oracle", extra={
                "mc_mean": mc_mean, "supervised": target, "z": z})
    return OracleResult(mc_mean=mc_mean, supervised_risk=target, z_score=float(z),
                        stderr=stderr, redraws=redraws)


def exact_linear_risk(model: MlpModel, centres: np.ndarray, pi: TestPriors, scale: float = 1.0) -> float:
    """Exact 0-1 risk of a linear two-class model on isotropic Gaussian classes."""
    if model.n_layers != 1 or model.K != 2:
        raise ConfigError("exact risk needs a single-layer two-class model")
    w = model.weights[0][:, 0] - model.weights[0][:, 1]
    c = model.biases[0][0] - model.biases[0][1]
    norm_w = np.linalg.norm(w)
    if norm_w == 0.0:
        # constant scores: ties go to class 1
        return float(pi.values[1]) if c >= 0 else float(pi.values[0])
    # class 1 errs when w.x + c < 0, class 2 when w.x + c >= 0
    err_1 = norm.cdf(-(w @ centres[0] + c) / (scale * norm_w))
    err_2 = norm.cdf((w @ centres[1] + c) / (scale * norm_w))
    return float(pi.values[0] * err_1 + pi.values[1] * err_2)
