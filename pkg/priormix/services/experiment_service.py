from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import json
import logging

import numpy as np

from priormix.core.errors import InvalidPriors
from priormix.learning import model as mlp
from priormix.learning.bags import BagCollection, LabeledDataset, make_bags, split_bag_sizes
from priormix.learning.model import MlpModel
from priormix.learning.prior_algebra import (
    ClassPriorMatrix,
    TestPriors,
    WeightMatrix,
    compute_weights,
    diagonal_dominated_theta,
    nonsquare_theta,
    perturb_priors,
    symmetric_theta,
)
from priormix.learning.trainer import train
from priormix.schemas.experiment_schemas import DatasetSpec, ExperimentConfig, MethodSpec, ThetaSpec
from priormix.schemas.run_schemas import RunRecord
from priormix.utils.checkpoint_utils import save_checkpoint
from priormix.utils.dataset_io import (
    load_csv,
    load_idx,
    load_priors_csv,
    load_theta_csv,
    make_gaussian_dataset,
    save_theta_csv,
)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=8)
def _load_dataset_cached(spec_json: str) -> Tuple[LabeledDataset, LabeledDataset]:
    spec = DatasetSpec.model_validate_json(spec_json)
    if spec.format == "csv":
        train_set = load_csv(spec.train_path)
        test_set = load_csv(spec.test_path, scaler=train_set.scaler, n_classes=train_set.K)
    elif spec.format == "idx":
        train_set = load_idx(spec.train_images, spec.train_labels)
        test_set = load_idx(spec.test_images, spec.test_labels, n_classes=train_set.K)
    else:
        train_set = make_gaussian_dataset(
            spec.n_train, spec.n_classes, spec.dim, spec.separation, rng_seed=spec.seed)
        test_set = make_gaussian_dataset(
            spec.n_test, spec.n_classes, spec.dim, spec.separation, rng_seed=spec.seed + 1)
    return train_set, test_set


@dataclass
class TrialOutcome:
    model: MlpModel
    run: RunRecord
    theta: ClassPriorMatrix
    learner_theta: ClassPriorMatrix
    weights: WeightMatrix


class ExperimentService:
    """Builds data, class priors and models from config documents and runs trials."""

    def load_dataset(self, spec: DatasetSpec) -> Tuple[LabeledDataset, LabeledDataset]:
        return _load_dataset_cached(spec.model_dump_json())

    def build_theta(self, spec: ThetaSpec, n_classes: int) -> ClassPriorMatrix:
        if spec.kind == "symmetric":
            return symmetric_theta(spec.a, spec.b, n_classes)
        if spec.kind == "diag":
            return diagonal_dominated_theta(n_classes, spec.seed)
        if spec.kind == "nonsquare":
            return nonsquare_theta(n_classes, spec.seed)
        theta = load_theta_csv(spec.path)
        if theta.K != n_classes:
            raise InvalidPriors(f"{spec.path} has {theta.K} classes, dataset has {n_classes}")
        return theta

    def resolve_test_priors(self, test_priors: Optional[List[float]],
                            test_priors_path: Optional[str], n_classes: int) -> TestPriors:
        if test_priors is not None:
            pi = TestPriors(test_priors)
        elif test_priors_path is not None:
            pi = load_priors_csv(test_priors_path)
        else:
            pi = TestPriors.uniform(n_classes)
        if pi.K != n_classes:
            raise InvalidPriors(f"test priors have {pi.K} classes, dataset has {n_classes}")
        return pi

    def run_trial(
        self,
        dataset: DatasetSpec,
        theta_spec: ThetaSpec,
        method: MethodSpec,
        seed: int,
        noise_rate: float = 0.0,
        test_priors: Optional[List[float]] = None,
        test_priors_path: Optional[str] = None,
    ) -> TrialOutcome:
        """One training run. Bags follow the true priors; the learner sees the (noisy) copy."""
        train_set, test_set = self.load_dataset(dataset)
        theta = self.build_theta(theta_spec, train_set.K)
        pi = self.resolve_test_priors(test_priors, test_priors_path, train_set.K)

        noise_seed, bag_seed, init_seed, train_seed = (
            int(s) for s in np.random.SeedSequence(seed).generate_state(4))
        learner_theta = perturb_priors(theta, noise_rate, noise_seed)

        sizes = split_bag_sizes(train_set.n, theta.M)
        true_bags = make_bags(train_set, theta, sizes, bag_seed)
        bags = BagCollection(bags=true_bags.bags, theta=learner_theta)
        weights = compute_weights(learner_theta, pi)

        model_init = mlp.init(
            mlp.preset_dims(method.depth, train_set.d, train_set.K, method.hidden_width), init_seed)
        logger.info("Starting trial", extra={
            "dataset": dataset.name, "theta": theta_spec.label(), "method": method.label(),
            "noise_rate": noise_rate, "seed": seed, "max_abs_w": weights.max_abs})
        model, run = train(bags, weights, pi, model_init,
                           method.train_config(train_seed), test_set)
        return TrialOutcome(model=model, run=run, theta=theta,
                            learner_theta=learner_theta, weights=weights)

    def run_experiment(self, cfg: ExperimentConfig) -> Dict[str, Any]:
        """Run every trial of a config and write its artifacts under output_dir."""
        output_dir = Path(cfg.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        config_echo = cfg.model_dump(mode="json")

        trials = []
        for trial in range(cfg.trials):
            seed = int(np.random.SeedSequence([cfg.base_seed, trial]).generate_state(1)[0])
            outcome = self.run_trial(
                cfg.dataset, cfg.theta, cfg.method, seed, cfg.noise_rate,
                cfg.test_priors, cfg.test_priors_path)

            trial_dir = output_dir / f"trial_{trial}"
            outcome.run.write(trial_dir, config_echo={"trial": trial, "seed": seed})
            save_checkpoint(outcome.model, trial_dir / "model.ckpt")
            save_theta_csv(outcome.learner_theta, trial_dir / "theta.csv")
            trials.append({"trial": trial, "seed": seed, **outcome.run.summary()})

        errors = [t["final_error"] for t in trials]
        summary = {
            "config": config_echo,
            "trials": trials,
            "mean_final_error": float(np.mean(errors)),
            "std_final_error": float(np.std(errors, ddof=1)) if len(errors) > 1 else None,
        }
        with open(output_dir / "summary.json", "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        logger.info(f"Wrote experiment artifacts to {output_dir}")
        return summary


# Create singleton instance
experiment_service = ExperimentService()
