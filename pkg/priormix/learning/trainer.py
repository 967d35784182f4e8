"""Epoch loop: per-bag shuffling, stratified mini-batches, Adam/SGD updates."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from priormix.core.errors import ConfigError, DimensionMismatch, NonFiniteLoss
from priormix.learning.bags import BagCollection, LabeledDataset
from priormix.learning.model import MlpModel, backward
from priormix.learning.objectives import (
    BatchSlice,
    Objective,
    ObjectiveContext,
    PrrConfig,
    evaluate,
    unbiased_risk,
)
from priormix.learning.prior_algebra import TestPriors, WeightMatrix
from priormix.schemas.run_schemas import EpochRecord, RunRecord, TrainConfig
from priormix.services.eval_service import error_drop, test_error

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(t=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam update; weight decay adds lambda * param to the gradient."""
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise DimensionMismatch("optimizer state does not match the parameters")
    beta1, beta2 = betas
    t = state.t + 1
    # bias corrections once per step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t

    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(t=t, m=new_m, v=new_v)


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
) -> List[np.ndarray]:
    return [p - lr * (g + weight_decay * p) for p, g in zip(params, grads)]


def stratified_batches(bags: BagCollection, batches: int, rng: np.random.Generator) -> List[BatchSlice]:
    """Shuffle every bag independently, then cut each into ``batches`` contiguous slices.

    Mini-batch j is the union of slice j of every bag, so each batch sees all M bags
    with floor(n_m/batches) or ceil(n_m/batches) samples from bag m.
    """
    splits = [np.array_split(rng.permutation(bag.n), batches) for bag in bags.bags]
    return [
        BatchSlice(tuple(bag.features[split[j]] for bag, split in zip(bags.bags, splits)))
        for j in range(batches)
    ]


def train(
    bags: BagCollection,
    W: WeightMatrix,
    pi: TestPriors,
    model_init: MlpModel,
    cfg: TrainConfig,
    test_set: LabeledDataset,
) -> Tuple[MlpModel, RunRecord]:
    if W.M != bags.M or W.K != bags.theta.K or pi.K != W.K:
        raise DimensionMismatch(
            f"weights {W.entries.shape} do not fit {bags.M} bags / {pi.K} classes")
    if model_init.d != bags.d or model_init.K != W.K:
        raise DimensionMismatch(
            f"model {model_init.layer_dims} does not fit d={bags.d}, K={W.K}")
    if cfg.batches_per_epoch > min(bags.sizes):
        raise ConfigError(
            f"{cfg.batches_per_epoch} batches per epoch leave empty slices "
            f"in a bag of {min(bags.sizes)} samples")

    objective = Objective(cfg.objective)
    ctx = ObjectiveContext(
        weights=W,
        theta=bags.theta,
        prr=PrrConfig.from_weights(cfg.alpha, cfg.s_ga, W),
        flood_b=cfg.flood_b,
    )
    full_batch = BatchSlice.from_bags(bags)
    rng = np.random.default_rng(cfg.seed)

    model = model_init.copy()
    params = model.parameters()
    state = AdamState.zeros_like(params)
    initial_error = test_error(model, test_set)

    epochs: List[EpochRecord] = []
    stopped_epoch: Optional[int] = None
    stop_train_ru: Optional[float] = None
    first_negative: Optional[int] = None

    for epoch in range(1, cfg.epochs + 1):
        previous = model
        values = []
        for batch in stratified_batches(bags, cfg.batches_per_epoch, rng):
            result = evaluate(objective, batch, model, ctx)
            if not np.isfinite(result.value) or not np.all(np.isfinite(result.upstream)):
                raise NonFiniteLoss(epoch=epoch, objective=objective.value)
            grads = backward(model, batch.stacked, result.upstream).parameters()
            if cfg.optimizer == "adam":
                params, state = adam_step(params, grads, state, cfg.learning_rate,
                                          cfg.betas, cfg.eps, cfg.weight_decay)
            else:
                params = sgd_step(params, grads, cfg.learning_rate, cfg.weight_decay)
            model = model.with_parameters(params)
            values.append(result.value)

        if not model.is_finite():
            raise NonFiniteLoss(epoch=epoch, objective=objective.value)

        train_ru = unbiased_risk(full_batch, W, model).value
        if train_ru < 0 and first_negative is None:
            first_negative = epoch
            logger.warning("Full-train unbiased risk turned negative",
                           extra={"epoch": epoch, "train_ru": train_ru})

        if objective is Objective.U_STOP and train_ru < 0:
            stopped_epoch, stop_train_ru = epoch, train_ru
            model = previous
            logger.info("Early stop on negative risk", extra={"epoch": epoch})
            break

        record = EpochRecord(
            epoch=epoch,
            objective_value=float(np.mean(values)),
            train_ru=train_ru,
            test_error=test_error(model, test_set),
        )
        epochs.append(record)
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs:
            logger.info(
                f"epoch {epoch}/{cfg.epochs} objective={record.objective_value:.4f} "
                f"train_ru={train_ru:.4f} test_error={record.test_error:.4f}")

    errors = [e.test_error for e in epochs]
    run = RunRecord(
        objective=objective,
        epochs=epochs,
        initial_test_error=initial_error,
        final_error=errors[-1] if errors else initial_error,
        error_drop=0.0 if stopped_epoch is not None or not errors else error_drop(errors),
        stopped_epoch=stopped_epoch,
        stop_train_ru=stop_train_ru,
        first_negative_epoch=first_negative,
    )
    return model, run
