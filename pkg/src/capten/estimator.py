"""Sklearn-style estimator wrapping the two-stage fitting pipeline.

``CapabilityModel`` follows the scikit-learn conventions: hyperparameters
are stored verbatim in ``__init__`` (so ``get_params``/``set_params`` and
``clone`` work), ``fit`` returns ``self``, and fitted state lives in
trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import InputError
from .fitting import (
    AdamConfig,
    FitConfig,
    Stage2Config,
    Stage3Config,
    canonicalize,
    fit_stage2,
    fit_stage3_finetune,
    merge_human,
    multi_restart,
)
from . import inference, prediction
from .model import nll
from .types import HUMAN_RATER, Dataset, Template


def check_dataset(data, require_human: bool = True, require_autorater: bool = True) -> Dataset:
    """Validate the estimator's input: a Dataset with the slices it needs."""
    if not isinstance(data, Dataset):
        raise InputError(f"expected a Dataset, got {type(data).__name__}")
    if require_autorater and not (data.rater_ids != HUMAN_RATER).any():
        raise InputError("fitting needs autorater observations (rater_id > 0)")
    if require_human and not (data.rater_ids == HUMAN_RATER).any():
        raise InputError("fitting needs human observations (rater_id = 0)")
    return data


class CapabilityModel(BaseEstimator):
    """Low-rank capability model fit on autorater data, calibrated on human labels.

    Parameters mirror the two fitting stages: the Adam settings drive the
    stage-1 representation fit over the (seed, learning rate) restart grid,
    and the stage-2 Newton settings drive the convex human calibration that
    also produces the interval covariance. Optional fine-tuning trades the
    validity of standard intervals for sharper point predictions.
    """

    def __init__(
        self,
        rank: int = 3,
        learning_rates: tuple[float, ...] = (0.05,),
        seeds: tuple[int, ...] = (0,),
        epochs: int = 150,
        batch_size: int = 1024,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_eps: float = 1e-8,
        projection_eps: float = 1e-4,
        init_scale: float = 0.1,
        stage2_max_iterations: int = 100,
        stage2_tolerance: float = 1e-9,
        finetune: bool = False,
        finetune_learning_rate: float = 0.02,
        finetune_max_epochs: int = 200,
        finetune_validation_fraction: float = 0.2,
        finetune_patience: int = 10,
        finetune_seed: int = 0,
        apply_canonicalization: bool = True,
    ):
        self.rank = rank
        self.learning_rates = learning_rates
        self.seeds = seeds
        self.epochs = epochs
        self.batch_size = batch_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.projection_eps = projection_eps
        self.init_scale = init_scale
        self.stage2_max_iterations = stage2_max_iterations
        self.stage2_tolerance = stage2_tolerance
        self.finetune = finetune
        self.finetune_learning_rate = finetune_learning_rate
        self.finetune_max_epochs = finetune_max_epochs
        self.finetune_validation_fraction = finetune_validation_fraction
        self.finetune_patience = finetune_patience
        self.finetune_seed = finetune_seed
        self.apply_canonicalization = apply_canonicalization

    def make_config(self) -> FitConfig:
        return FitConfig(
            rank=self.rank,
            adam=AdamConfig(
                learning_rates=tuple(self.learning_rates),
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.adam_eps,
                batch_size=self.batch_size,
                epochs=self.epochs,
            ),
            projection_eps=self.projection_eps,
            seeds=tuple(self.seeds),
            stage2=Stage2Config(
                max_iterations=self.stage2_max_iterations,
                gradient_tolerance=self.stage2_tolerance,
            ),
            stage3=Stage3Config(
                learning_rate=self.finetune_learning_rate,
                max_epochs=self.finetune_max_epochs,
                validation_fraction=self.finetune_validation_fraction,
                patience=self.finetune_patience,
            ),
            init_scale=self.init_scale,
        )

    def fit(self, dataset: Dataset, y=None):
        """Run stage 1 (+ restarts), canonicalize, then the stage-2 calibration."""
        data = check_dataset(dataset)
        config = self.make_config()
        restarts = multi_restart(data.autorater_slice(), config)
        frozen = canonicalize(restarts.params) if self.apply_canonicalization else restarts.params
        human = data.human_slice()
        stage2 = fit_stage2(
            human,
            frozen,
            max_iterations=config.stage2.max_iterations,
            tolerance=config.stage2.gradient_tolerance,
        )
        params = merge_human(frozen, stage2)
        if self.finetune:
            rng = np.random.default_rng(self.finetune_seed)
            n = len(human)
            n_val = max(1, int(round(config.stage3.validation_fraction * n)))
            order = rng.permutation(n)
            val = human.subset(order[:n_val])
            train = human.subset(order[n_val:])
            params = fit_stage3_finetune(params, train, val, config)

        self.params_ = params
        self.covariance_ = stage2.covariance
        self.stage1_ = restarts.best
        self.restart_table_ = restarts.table
        self.stage2_ = stage2
        self.human_template_ = data.rater_specs[HUMAN_RATER].template
        self.rater_specs_ = data.rater_specs
        self.n_models_, self.n_prompts_, self.n_raters_ = data.dims
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this CapabilityModel instance is not fitted yet")

    # -- fitted-model views ----------------------------------------------

    def nll(self, dataset: Dataset) -> float:
        self._check_fitted()
        return nll(self.params_, dataset)

    def leaderboard(self, scope, **kwargs) -> inference.Leaderboard:
        self._check_fitted()
        kwargs.setdefault("human_template", self.human_template_)
        return inference.leaderboard(self.params_, self.covariance_, scope, **kwargs)

    def joint_leaderboards(self, scopes, **kwargs) -> list[inference.Leaderboard]:
        self._check_fitted()
        kwargs.setdefault("human_template", self.human_template_)
        return inference.joint_leaderboards(self.params_, self.covariance_, scopes, **kwargs)

    def compare(self, pair, prompts, **kwargs) -> inference.ModelComparison:
        self._check_fitted()
        return inference.compare_models(self.params_, self.covariance_, pair, prompts, **kwargs)

    def composite(self, prompt_set):
        self._check_fitted()
        return inference.reference_composite(self.params_, prompt_set)

    def cohesion_test(self, group_assignment, n_permutations: int = 1000, seed: int = 0):
        self._check_fitted()
        return inference.cohesion_permutation_test(
            self.params_, group_assignment, n_permutations=n_permutations, seed=seed
        )

    def predict_average_score(self, model_id: int, prompts) -> tuple[float, float]:
        self._check_fitted()
        cov = None if self.params_.fine_tuned else self.covariance_
        return prediction.predict_average_score(
            self.params_, model_id, prompts, self.human_template_, cov
        )

    def predict_win_rate_difference(self, model_id: int, prompts, opponents) -> tuple[float, float]:
        self._check_fitted()
        cov = None if self.params_.fine_tuned else self.covariance_
        return prediction.predict_win_rate_difference(
            self.params_, model_id, prompts, opponents, self.human_template_, cov
        )
