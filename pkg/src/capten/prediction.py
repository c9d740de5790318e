"""Predicting human-judged performance for models without human labels.

Expected average scores (single-sided human template) and win-rate
differences (side-by-side, loss/tie/win) are computed by replacing observed
outcomes with their model expectations. Standard errors propagate only the
stage-2 covariance via the delta method; prompts are treated as independent
in the plug-in error of the actual metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, FitError, InputError
from .fitting import FitConfig, canonicalize, fit_stage1, fit_stage2, merge_human
from .inference import feature_vector
from .model import ordinal_pmf, ordinal_pmf_ddelta
from .types import HUMAN_RATER, CovarianceEstimate, Dataset, FactorParams, Template


@dataclass(frozen=True)
class HoldoutReport:
    model_id: int
    metric: str  # "average_score" or "win_rate_difference"
    predicted: float
    standard_error_predicted: float
    actual: float | None = None
    standard_error_actual: float | None = None
    n_withheld: int = 0

    def __post_init__(self):
        if not np.isfinite(self.predicted):
            raise FitError(f"non-finite prediction {self.predicted}")
        if self.standard_error_predicted < 0:
            raise InputError("negative standard error")
        if self.standard_error_actual is not None and self.standard_error_actual < 0:
            raise InputError("negative standard error")


def _check_se_allowed(params: FactorParams, cov) -> None:
    if cov is not None and params.fine_tuned:
        raise ContractError("delta-method standard errors are invalid for fine-tuned parameters")


def predict_average_score(
    params: FactorParams,
    model_id: int,
    prompts: Sequence[int],
    human_template: Template,
    cov: CovarianceEstimate | None = None,
) -> tuple[float, float]:
    """Mean expected human label over the prompts (repeats allowed).

    Requires a single-sided human template. Returns (value, standard_error);
    the error is NaN when no covariance is supplied.
    """
    if human_template != Template.POINTWISE:
        raise ContractError("average-score prediction needs a pointwise human template")
    _check_se_allowed(params, cov)
    prompts = [int(j) for j in prompts]
    if not prompts:
        raise InputError("need at least one prompt")
    cuts = params.cutoffs(HUMAN_RATER)
    categories = np.arange(cuts.size + 1)
    feats = np.stack([feature_vector(params, model_id, j) for j in prompts])
    deltas = feats @ params.rater_loadings[HUMAN_RATER]
    value = float(np.mean([categories @ ordinal_pmf(d, cuts) for d in deltas]))
    if cov is None:
        return value, float("nan")
    slopes = np.array([categories @ ordinal_pmf_ddelta(d, cuts) for d in deltas])
    grad = (slopes[:, None] * feats).mean(axis=0)
    se = float(np.sqrt(max(grad @ cov.sigma_hat @ grad, 0.0) / cov.m))
    return value, se


def predict_win_rate_difference(
    params: FactorParams,
    model_id: int,
    prompts: Sequence[int],
    opponents: Sequence[int],
    human_template: Template,
    cov: CovarianceEstimate | None = None,
) -> tuple[float, float]:
    """Mean P(win) - P(loss) against a per-prompt opponent schedule.

    Requires a side-by-side human template with three categories
    (loss/tie/win for the reference model, which sits second in each match).
    """
    if human_template != Template.PAIRWISE:
        raise ContractError("win-rate prediction needs a pairwise human template")
    if params.num_categories(HUMAN_RATER) != 3:
        raise ContractError("win-rate difference is defined for loss/tie/win outcomes")
    _check_se_allowed(params, cov)
    prompts = [int(j) for j in prompts]
    opponents = [int(o) for o in opponents]
    if not prompts:
        raise InputError("need at least one prompt")
    if len(prompts) != len(opponents):
        raise InputError("prompts and opponents must align")
    if any(o == model_id for o in opponents):
        raise InputError("opponent schedule references the model itself")

    cuts = params.cutoffs(HUMAN_RATER)
    feats = np.stack(
        [
            feature_vector(params, model_id, j) - feature_vector(params, opp, j)
            for j, opp in zip(prompts, opponents)
        ]
    )
    deltas = feats @ params.rater_loadings[HUMAN_RATER]
    pmfs = np.stack([ordinal_pmf(d, cuts) for d in deltas])
    value = float(np.mean(pmfs[:, 2] - pmfs[:, 0]))
    if cov is None:
        return value, float("nan")
    dpmfs = np.stack([ordinal_pmf_ddelta(d, cuts) for d in deltas])
    grad = ((dpmfs[:, 2] - dpmfs[:, 0])[:, None] * feats).mean(axis=0)
    se = float(np.sqrt(max(grad @ cov.sigma_hat @ grad, 0.0) / cov.m))
    return value, se


def _oriented_outcomes(data: Dataset, held_out: int) -> np.ndarray:
    """Win(+1)/tie(0)/loss(-1) for the held-out model per withheld match.

    Labels follow the loss/tie/win convention for the second model of the
    recorded pair, so matches where the held-out model sat first flip sign.
    """
    as_second = data.second_model == held_out
    score = np.where(data.labels == 2, 1, np.where(data.labels == 0, -1, 0))
    return np.where(as_second, score, -score)


def holdout_evaluation(
    full_dataset: Dataset,
    held_out_model: int,
    fit_config: FitConfig,
    prompts: Sequence[int] | None = None,
    opponents: Sequence[int] | None = None,
    reuse_stage1: FactorParams | None = None,
) -> HoldoutReport:
    """Evaluate one model with its human labels withheld.

    Stage 1 runs on every autorater observation (the held-out model keeps
    its autorater labels), stage 2 on the remaining human data. When the
    dataset holds human labels for the model they become the ground truth;
    otherwise ``prompts`` (and ``opponents`` for pairwise humans) define the
    prediction target. ``reuse_stage1`` skips refitting stage 1; because the
    autorater slice is identical for every held-out model, passing the
    stage-1 fit of the full dataset changes nothing but the runtime.
    Withheld matches are oriented so the held-out model sits second.
    """
    auto = full_dataset.autorater_slice()
    involves = (auto.first_model == held_out_model) | (auto.second_model == held_out_model)
    if not involves.any():
        raise ContractError(
            f"model {held_out_model} has no autorater labels; stage 1 cannot place it"
        )
    human = full_dataset.human_slice()
    withheld_mask = (human.first_model == held_out_model) | (human.second_model == held_out_model)
    withheld = human.subset(withheld_mask)
    remaining = human.subset(~withheld_mask)
    if len(remaining) == 0:
        raise FitError("no human observations remain after withholding the model")

    if reuse_stage1 is None:
        stage1 = canonicalize(fit_stage1(auto, fit_config, fit_config.seeds[0]).params)
    else:
        stage1 = reuse_stage1
    stage2 = fit_stage2(
        remaining,
        stage1,
        max_iterations=fit_config.stage2.max_iterations,
        tolerance=fit_config.stage2.gradient_tolerance,
    )
    params = merge_human(stage1, stage2)
    template = full_dataset.rater_specs[HUMAN_RATER].template

    if template == Template.POINTWISE:
        if len(withheld):
            target_prompts = withheld.prompt_ids.tolist()
        elif prompts is not None:
            target_prompts = [int(j) for j in prompts]
        else:
            target_prompts = list(range(full_dataset.n_prompts))
        predicted, se_pred = predict_average_score(
            params, held_out_model, target_prompts, template, stage2.covariance
        )
        actual = se_actual = None
        if len(withheld):
            y = withheld.labels.astype(float)
            actual = float(y.mean())
            se_actual = float(y.std() / np.sqrt(len(y)))
        return HoldoutReport(
            model_id=held_out_model,
            metric="average_score",
            predicted=predicted,
            standard_error_predicted=se_pred,
            actual=actual,
            standard_error_actual=se_actual,
            n_withheld=len(withheld),
        )

    if len(withheld):
        target_prompts = withheld.prompt_ids.tolist()
        target_opponents = np.where(
            withheld.second_model == held_out_model, withheld.first_model, withheld.second_model
        ).tolist()
    elif prompts is not None and opponents is not None:
        target_prompts = [int(j) for j in prompts]
        target_opponents = [int(o) for o in opponents]
    else:
        raise InputError(
            "prediction-only pairwise holdout needs an explicit opponent schedule"
        )
    predicted, se_pred = predict_win_rate_difference(
        params, held_out_model, target_prompts, target_opponents, template, stage2.covariance
    )
    actual = se_actual = None
    if len(withheld):
        outcomes = _oriented_outcomes(withheld, held_out_model).astype(float)
        actual = float(outcomes.mean())
        se_actual = float(outcomes.std() / np.sqrt(len(outcomes)))
    return HoldoutReport(
        model_id=held_out_model,
        metric="win_rate_difference",
        predicted=predicted,
        standard_error_predicted=se_pred,
        actual=actual,
        standard_error_actual=se_actual,
        n_withheld=len(withheld),
    )
