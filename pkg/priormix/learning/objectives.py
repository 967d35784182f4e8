"""Training objectives over a stratified mini-batch of bag slices.

Every objective returns the reported value together with per-(sample, class)
upstream weights for ``model.backward``: all of them are (piecewise) linear
combinations of the same B x K cross-entropy matrix, except the proportion loss
whose chain rule is folded into the same interface.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple
import logging

import numpy as np
from scipy.special import softmax

from priormix.core.errors import ConfigError, DimensionMismatch
from priormix.learning.bags import BagCollection
from priormix.learning.model import MlpModel, ce_loss_matrix, forward, zo_loss_matrix
from priormix.learning.prior_algebra import ClassPriorMatrix, WeightMatrix

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12


class Objective(str, Enum):
    UNBIASED = "unbiased"
    BIASED = "biased"
    PROP = "prop"
    U_CORRECT = "u-correct"
    U_STOP = "u-stop"
    U_FLOOD = "u-flood"
    U_PRR = "u-prr"


@dataclass(frozen=True, eq=False)
class BatchSlice:
    """Feature blocks of one mini-batch, one non-empty block per bag."""

    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.float64) for b in self.blocks)
        if not blocks:
            raise DimensionMismatch("a batch needs at least one bag slice")
        for m, block in enumerate(blocks):
            if block.ndim != 2 or block.shape[0] < 1:
                raise DimensionMismatch(f"bag slice {m + 1} is empty")
        if len({b.shape[1] for b in blocks}) != 1:
            raise DimensionMismatch("bag slices disagree on feature dimension")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_stacked", np.vstack(blocks))

    @classmethod
    def from_bags(cls, bags: BagCollection) -> "BatchSlice":
        return cls(tuple(bag.features for bag in bags.bags))

    @property
    def M(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.shape[0] for b in self.blocks])

    @property
    def stacked(self) -> np.ndarray:
        """All slices stacked in bag order; rows of ``upstream`` follow this order."""
        return self._stacked


@dataclass(frozen=True, eq=False)
class PartialRiskTable:
    surrogate: np.ndarray
    zero_one: np.ndarray
    flood_levels: np.ndarray


@dataclass(frozen=True, eq=False)
class PrrConfig:
    alpha: float
    s_ga: float
    lam: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.s_ga > 0.0:
            raise ConfigError(f"s_ga must be positive, got {self.s_ga}")
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=np.float64))

    @classmethod
    def from_weights(cls, alpha: float, s_ga: float, weights: WeightMatrix,
                     lam: Optional[np.ndarray] = None) -> "PrrConfig":
        """lambda_{m,k} = |w_{m,k}| unless given explicitly."""
        return cls(alpha=alpha, s_ga=s_ga, lam=np.abs(weights.entries) if lam is None else lam)


@dataclass(frozen=True, eq=False)
class ObjectiveResult:
    value: float
    upstream: np.ndarray
    # the function whose gradient ``upstream`` realises; differs from value only for u-prr
    surrogate_value: float


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Everything besides batch and model that an objective may need."""

    weights: WeightMatrix
    theta: ClassPriorMatrix
    prr: Optional[PrrConfig] = None
    flood_b: float = 0.0


def _bag_means(batch: BatchSlice, per_sample: np.ndarray) -> np.ndarray:
    """M x K means of a per-sample B x K matrix over each bag slice."""
    offsets = np.concatenate([[0], np.cumsum(batch.sizes)])
    return np.add.reduceat(per_sample, offsets[:-1], axis=0) / batch.sizes[:, None]


def _spread(batch: BatchSlice, per_bag: np.ndarray) -> np.ndarray:
    """Repeat an M x K table to one row per sample, divided by the bag size."""
    return np.repeat(per_bag / batch.sizes[:, None], batch.sizes, axis=0)


def _check_table(batch: BatchSlice, table: np.ndarray, K: int, what: str):
    if table.shape != (batch.M, K):
        raise DimensionMismatch(
            f"{what} has shape {table.shape}, batch needs {(batch.M, K)}")


def _logits(batch: BatchSlice, model: MlpModel) -> np.ndarray:
    return forward(model, batch.stacked)


def _unbiased_from_ce(batch: BatchSlice, W: WeightMatrix, ce: np.ndarray) -> Tuple[float, np.ndarray]:
    _check_table(batch, W.entries, ce.shape[1], "weight matrix")
    value = float(np.sum(W.entries * _bag_means(batch, ce)))
    return value, _spread(batch, W.entries)


def unbiased_risk(batch: BatchSlice, W: WeightMatrix, model: MlpModel) -> ObjectiveResult:
    ce = ce_loss_matrix(_logits(batch, model))
    value, upstream = _unbiased_from_ce(batch, W, ce)
    return ObjectiveResult(value, upstream, value)


def partial_risk_table(batch: BatchSlice, model: MlpModel, theta: ClassPriorMatrix) -> PartialRiskTable:
    logits = _logits(batch, model)
    _check_table(batch, theta.entries, logits.shape[1], "class-prior matrix")
    return PartialRiskTable(
        surrogate=_bag_means(batch, ce_loss_matrix(logits)),
        zero_one=_bag_means(batch, zo_loss_matrix(logits)),
        flood_levels=1.0 - theta.entries,
    )


def u_prr(batch: BatchSlice, W: WeightMatrix, theta: ClassPriorMatrix, cfg: PrrConfig,
          model: MlpModel) -> ObjectiveResult:
    logits = _logits(batch, model)
    ce = ce_loss_matrix(logits)
    base_value, base_upstream = _unbiased_from_ce(batch, W, ce)
    if cfg.alpha == 1.0:
        return ObjectiveResult(base_value, base_upstream, base_value)

    _check_table(batch, theta.entries, ce.shape[1], "class-prior matrix")
    _check_table(batch, cfg.lam, ce.shape[1], "trade-off table")
    levels = 1.0 - theta.entries
    surrogate = _bag_means(batch, ce)
    zero_one = _bag_means(batch, zo_loss_matrix(logits))

    # zero-one risk picks the branch, surrogate risk carries the gradient
    descent = zero_one >= levels
    branch = np.where(descent, 1.0, -cfg.s_ga)

    reg_value = float(np.sum(cfg.lam * np.abs(zero_one - levels)))
    reg_surrogate = float(np.sum(cfg.lam * branch * (surrogate - levels)))
    value = cfg.alpha * base_value + (1.0 - cfg.alpha) * reg_value
    surrogate_value = cfg.alpha * base_value + (1.0 - cfg.alpha) * reg_surrogate
    upstream = cfg.alpha * base_upstream + (1.0 - cfg.alpha) * _spread(batch, cfg.lam * branch)
    return ObjectiveResult(value, upstream, surrogate_value)


def u_flood(batch: BatchSlice, W: WeightMatrix, model: MlpModel, b: float) -> ObjectiveResult:
    if b < 0:
        raise ConfigError(f"flood level must be non-negative, got {b}")
    base = unbiased_risk(batch, W, model)
    if base.value >= b:
        return base
    value = 2.0 * b - base.value
    return ObjectiveResult(value, -base.upstream, value)


def u_correct(batch: BatchSlice, W: WeightMatrix, model: MlpModel) -> ObjectiveResult:
    ce = ce_loss_matrix(_logits(batch, model))
    _check_table(batch, W.entries, ce.shape[1], "weight matrix")
    per_class = np.sum(W.entries * _bag_means(batch, ce), axis=0)
    signs = np.where(per_class >= 0.0, 1.0, -1.0)
    value = float(np.sum(np.abs(per_class)))
    return ObjectiveResult(value, _spread(batch, W.entries) * signs, value)


def biased_proportion(batch: BatchSlice, theta: ClassPriorMatrix, model: MlpModel) -> ObjectiveResult:
    ce = ce_loss_matrix(_logits(batch, model))
    _check_table(batch, theta.entries, ce.shape[1], "class-prior matrix")
    pseudo = np.zeros_like(theta.entries)
    pseudo[np.arange(batch.M), theta.dominant_classes()] = 1.0 / batch.M
    value = float(np.sum(pseudo * _bag_means(batch, ce)))
    return ObjectiveResult(value, _spread(batch, pseudo), value)


def proportion_loss(batch: BatchSlice, theta: ClassPriorMatrix, model: MlpModel) -> ObjectiveResult:
    """Cross-entropy between each bag's priors and its mean predicted distribution.

    Through the chain rule on the bag-mean softmax, upstream weights
    u_ik = theta_mk * p_ik / (b_m * pbar_mk) reproduce the exact gradient.
    """
    probs = softmax(_logits(batch, model), axis=1)
    _check_table(batch, theta.entries, probs.shape[1], "class-prior matrix")
    mean_probs = np.maximum(_bag_means(batch, probs), PROBABILITY_FLOOR)
    value = float(-np.sum(theta.entries * np.log(mean_probs)))
    upstream = _spread(batch, theta.entries / mean_probs) * probs
    return ObjectiveResult(value, upstream, value)


def evaluate(objective: Objective, batch: BatchSlice, model: MlpModel,
             ctx: ObjectiveContext) -> ObjectiveResult:
    """Dispatch on the objective name; u-stop trains on the plain unbiased risk."""
    objective = Objective(objective)
    if objective in (Objective.UNBIASED, Objective.U_STOP):
        return unbiased_risk(batch, ctx.weights, model)
    if objective is Objective.BIASED:
        return biased_proportion(batch, ctx.theta, model)
    if objective is Objective.PROP:
        return proportion_loss(batch, ctx.theta, model)
    if objective is Objective.U_CORRECT:
        return u_correct(batch, ctx.weights, model)
    if objective is Objective.U_FLOOD:
        return u_flood(batch, ctx.weights, model, ctx.flood_b)
    if ctx.prr is None:
        raise ConfigError("u-prr needs a PrrConfig")
    return u_prr(batch, ctx.weights, ctx.theta, ctx.prr, model)

