"""Fine-grained outputs from fitted parameters and the stage-2 covariance.

All intervals neglect stage-1 estimation error (the features are treated as
fixed), which every interval records via ``first_stage_exact``. Fine-tuned
parameter sets are refused wherever an interval is requested, since the
stage-2 asymptotics no longer apply to them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .errors import ContractError, InputError, NumericalError
from .types import (
    HUMAN_RATER,
    CIMode,
    CompositeResult,
    CovarianceEstimate,
    FactorParams,
    IntervalEstimate,
    Template,
    Verdict,
)

DEGENERATE_VARIANCE = 1e-14
MC_CHUNK = 20_000


@dataclass(frozen=True)
class LeaderboardEntry:
    model_id: int
    interval: IntervalEstimate
    rank: int  # 1 = best point estimate


@dataclass(frozen=True)
class Leaderboard:
    entries: tuple[LeaderboardEntry, ...]
    scope: tuple[int, ...]  # the prompt, or the prompt set
    composite: CompositeResult | None  # present for category scopes
    calibration_constant: float
    level: float
    mode: CIMode
    # False when the human template is pairwise: capability levels are then
    # only identified within a prompt, not across prompts
    psi_comparable_across_prompts: bool | None = None


@dataclass(frozen=True)
class ComparisonRow:
    prompt_id: int
    interval: IntervalEstimate
    verdict: Verdict


@dataclass(frozen=True)
class ModelComparison:
    model_a: int
    model_b: int
    rows: tuple[ComparisonRow, ...]
    fraction_second_better: float
    fraction_first_better: float
    fraction_indistinguishable: float
    calibration_constant: float
    level: float
    mode: CIMode


@dataclass(frozen=True)
class CohesionTest:
    group: Hashable
    n_prompts: int
    observed_cohesion: float | None
    p_value: float | None
    skipped: bool = False


# -- feature vectors -----------------------------------------------------------


def feature_vector(params: FactorParams, model_id: int, prompt_id: int) -> np.ndarray:
    """Elementwise product of one model row and one prompt row."""
    if not (0 <= model_id < params.n_models):
        raise InputError(f"model id {model_id} out of range")
    if not (0 <= prompt_id < params.n_prompts):
        raise InputError(f"prompt id {prompt_id} out of range")
    return params.model_loadings[model_id] * params.prompt_loadings[prompt_id]


def composite_feature(params: FactorParams, model_id: int, direction: np.ndarray) -> np.ndarray:
    """Elementwise product of one model row and a unit composite direction."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-8:
        raise InputError("composite direction must be a unit vector")
    if not (0 <= model_id < params.n_models):
        raise InputError(f"model id {model_id} out of range")
    return params.model_loadings[model_id] * direction


# -- confidence intervals --------------------------------------------------------


def _query_variance(v: np.ndarray, cov: CovarianceEstimate) -> float:
    var = float(v @ cov.sigma_hat @ v)
    if var < -1e-10:
        raise NumericalError(f"negative interval variance {var:.3e}")
    return max(var, 0.0)


def gaussian_quantile(level: float) -> float:
    if not (0.0 < level < 1.0):
        raise InputError(f"confidence level must be in (0,1), got {level}")
    return float(norm.ppf((1.0 + level) / 2.0))


def pointwise_ci(point: float, v: np.ndarray, cov: CovarianceEstimate, level: float) -> IntervalEstimate:
    """Asymptotic interval: point +- z * sqrt(v' Sigma v / m)."""
    z = gaussian_quantile(level)
    return _interval(point, np.asarray(v, float), cov, z, level, CIMode.POINTWISE)


def _interval(point, v, cov, constant, level, mode) -> IntervalEstimate:
    var = _query_variance(v, cov)
    degenerate = var <= DEGENERATE_VARIANCE
    half = 0.0 if degenerate else constant * np.sqrt(var / cov.m)
    return IntervalEstimate(
        point=float(point),
        lower=float(point - half),
        upper=float(point + half),
        level=level,
        mode=mode,
        calibration_constant=float(constant),
        degenerate=degenerate,
    )


def simultaneous_constant(
    features: np.ndarray,
    cov: CovarianceEstimate,
    level: float,
    mc_draws: int = 100_000,
    seed: int = 0,
) -> float:
    """Monte Carlo quantile of the max absolute standardized Gaussian.

    Builds the query covariance V Sigma V', standardizes it to a correlation
    matrix (zero-variance rows are dropped), and returns the empirical
    ``level`` quantile of the max |coordinate| across draws.
    """
    if not (0.0 < level < 1.0):
        raise InputError(f"confidence level must be in (0,1), got {level}")
    if mc_draws < 1000:
        raise InputError("mc_draws must be >= 1000")
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] < 1:
        raise InputError("need at least one query row")
    xi = features @ cov.sigma_hat @ features.T
    variances = np.diag(xi).copy()
    keep = variances > DEGENERATE_VARIANCE
    if not keep.any():
        raise InputError("every query row has zero variance")
    xi = xi[np.ix_(keep, keep)]
    scale = 1.0 / np.sqrt(variances[keep])
    corr = xi * scale[:, None] * scale[None, :]
    eigvals, eigvecs = np.linalg.eigh((corr + corr.T) / 2.0)
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))

    rng = np.random.default_rng(seed)
    q = corr.shape[0]
    maxima = np.empty(mc_draws)
    done = 0
    while done < mc_draws:
        chunk = min(MC_CHUNK, mc_draws - done)
        z = rng.standard_normal((chunk, q)) @ factor.T
        maxima[done : done + chunk] = np.abs(z).max(axis=1)
        done += chunk
    return float(np.quantile(maxima, level))


# -- reference composite ---------------------------------------------------------


def reference_composite(params: FactorParams, prompt_set: Sequence[int]) -> CompositeResult:
    """Leading eigenvector of the prompt-loading Gram sum, with cohesion.

    The direction sign is fixed so its first nonzero coordinate is positive;
    a tied leading eigenvalue is flagged.
    """
    prompts = list(prompt_set)
    if not prompts:
        raise InputError("prompt set must be nonempty")
    rows = params.prompt_loadings[prompts]
    gram = rows.T @ rows
    if not gram.any():
        raise InputError("all prompt loadings in the set are zero")
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.clip(eigvals[::-1], 0.0, None)  # descending
    direction = eigvecs[:, -1]
    nonzero = np.nonzero(np.abs(direction) > 1e-12)[0]
    if nonzero.size and direction[nonzero[0]] < 0:
        direction = -direction
    tied = eigvals.size > 1 and (eigvals[0] - eigvals[1]) <= 1e-9 * max(eigvals[0], 1e-300)
    return CompositeResult(
        direction=direction,
        cohesion=float(eigvals[0] / eigvals.sum()),
        eigenvalues=eigvals,
        tied=tied,
    )


# -- leaderboards ------------------------------------------------------------------


def _require_standard_intervals(params: FactorParams) -> None:
    if params.fine_tuned:
        raise ContractError(
            "standard confidence intervals are invalid for fine-tuned parameters"
        )


def _scope_features(params: FactorParams, scope):
    """Query rows for every model in one scope; returns (V, scope, composite)."""
    if np.isscalar(scope):
        j = int(scope)
        rows = np.stack([feature_vector(params, i, j) for i in range(params.n_models)])
        return rows, (j,), None
    prompts = tuple(int(j) for j in scope)
    if not prompts:
        raise InputError("category scope must contain at least one prompt")
    comp = reference_composite(params, prompts)
    rows = params.model_loadings * comp.direction[None, :]
    return rows, prompts, comp


def _entries(points, intervals) -> tuple[LeaderboardEntry, ...]:
    order = np.argsort(-np.asarray(points), kind="stable")
    return tuple(
        LeaderboardEntry(model_id=int(i), interval=intervals[i], rank=r + 1)
        for r, i in enumerate(order)
    )


def leaderboard(
    params: FactorParams,
    cov: CovarianceEstimate,
    scope,
    level: float = 0.95,
    simultaneous: bool = True,
    mc_draws: int = 100_000,
    seed: int = 0,
    human_template: Template | None = None,
) -> Leaderboard:
    """Rank all models on one prompt (int scope) or prompt set (sequence).

    Simultaneous intervals share one calibration constant across the models
    in the scope; use :func:`joint_leaderboards` to calibrate across several
    scopes at once.
    """
    boards = joint_leaderboards(
        params,
        cov,
        [scope],
        level=level,
        simultaneous=simultaneous,
        mc_draws=mc_draws,
        seed=seed,
        human_template=human_template,
    )
    return boards[0]


def joint_leaderboards(
    params: FactorParams,
    cov: CovarianceEstimate,
    scopes: Sequence,
    level: float = 0.95,
    simultaneous: bool = True,
    mc_draws: int = 100_000,
    seed: int = 0,
    human_template: Template | None = None,
) -> list[Leaderboard]:
    """Leaderboards for several scopes with jointly calibrated intervals."""
    _require_standard_intervals(params)
    gamma0 = params.rater_loadings[HUMAN_RATER]
    blocks = [_scope_features(params, scope) for scope in scopes]
    stacked = np.vstack([rows for rows, _, _ in blocks])
    if simultaneous:
        constant = simultaneous_constant(stacked, cov, level, mc_draws=mc_draws, seed=seed)
        mode = CIMode.SIMULTANEOUS
    else:
        constant = gaussian_quantile(level)
        mode = CIMode.POINTWISE
    comparable = None if human_template is None else human_template == Template.POINTWISE

    out = []
    for rows, scope, comp in blocks:
        points = rows @ gamma0
        intervals = [_interval(p, v, cov, constant, level, mode) for p, v in zip(points, rows)]
        out.append(
            Leaderboard(
                entries=_entries(points, intervals),
                scope=scope,
                composite=comp,
                calibration_constant=float(constant),
                level=level,
                mode=mode,
                psi_comparable_across_prompts=comparable,
            )
        )
    return out


# -- two-model comparison -----------------------------------------------------------


def compare_models(
    params: FactorParams,
    cov: CovarianceEstimate,
    pair: tuple[int, int],
    prompts: Sequence[int],
    level: float = 0.95,
    simultaneous: bool = True,
    mc_draws: int = 100_000,
    seed: int = 0,
) -> ModelComparison:
    """Per-prompt advantage of the second model over the first, with verdicts.

    A prompt is decided for the second model when its interval lower bound
    exceeds zero, for the first when the upper bound is below zero, and
    indistinguishable otherwise.
    """
    model_a, model_b = (int(p) for p in pair)
    if model_a == model_b:
        raise InputError("compare_models needs two distinct model ids")
    _require_standard_intervals(params)
    prompts = [int(j) for j in prompts]
    if not prompts:
        raise InputError("need at least one prompt to compare on")
    diffs = np.stack(
        [feature_vector(params, model_b, j) - feature_vector(params, model_a, j) for j in prompts]
    )
    points = diffs @ params.rater_loadings[HUMAN_RATER]
    if simultaneous:
        constant = simultaneous_constant(diffs, cov, level, mc_draws=mc_draws, seed=seed)
        mode = CIMode.SIMULTANEOUS
    else:
        constant = gaussian_quantile(level)
        mode = CIMode.POINTWISE

    rows = []
    for j, point, v in zip(prompts, points, diffs):
        interval = _interval(point, v, cov, constant, level, mode)
        if interval.lower > 0:
            verdict = Verdict.SECOND_BETTER
        elif interval.upper < 0:
            verdict = Verdict.FIRST_BETTER
        else:
            verdict = Verdict.INDISTINGUISHABLE
        rows.append(ComparisonRow(prompt_id=j, interval=interval, verdict=verdict))
    n = len(rows)
    n_second = sum(r.verdict == Verdict.SECOND_BETTER for r in rows)
    n_first = sum(r.verdict == Verdict.FIRST_BETTER for r in rows)
    return ModelComparison(
        model_a=model_a,
        model_b=model_b,
        rows=tuple(rows),
        fraction_second_better=n_second / n,
        fraction_first_better=n_first / n,
        fraction_indistinguishable=(n - n_second - n_first) / n,
        calibration_constant=float(constant),
        level=level,
        mode=mode,
    )


# -- cohesion permutation test ---------------------------------------------------------


def _group_cohesions(rows: np.ndarray, slot_group: np.ndarray, n_groups: int) -> np.ndarray:
    """Cohesion of each group given rows assigned to slots."""
    rank = rows.shape[1]
    grams = np.zeros((n_groups, rank, rank))
    np.add.at(grams, slot_group, rows[:, :, None] * rows[:, None, :])
    eigvals = np.linalg.eigvalsh(grams)
    eigvals = np.clip(eigvals, 0.0, None)
    totals = eigvals.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, eigvals[:, -1] / totals, np.nan)


def cohesion_permutation_test(
    params: FactorParams,
    group_assignment: Mapping[int, Hashable],
    n_permutations: int = 1000,
    seed: int = 0,
) -> dict[Hashable, CohesionTest]:
    """Permutation p-values for the cohesion of each prompt group.

    Group labels are permuted over the participating prompts, preserving
    group sizes; the add-one estimator keeps p-values strictly positive.
    Singleton groups are skipped (their cohesion is trivially 1).
    """
    if n_permutations < 1:
        raise InputError("n_permutations must be >= 1")
    items = sorted(group_assignment.items())
    prompt_ids = np.array([j for j, _ in items], dtype=np.int64)
    if prompt_ids.size == 0:
        raise InputError("group assignment is empty")
    if prompt_ids.max() >= params.n_prompts or prompt_ids.min() < 0:
        raise InputError("group assignment references an unknown prompt")
    labels = [g for _, g in items]
    unique = sorted(set(labels), key=repr)
    sizes = {g: labels.count(g) for g in unique}
    tested = [g for g in unique if sizes[g] >= 2]
    results: dict[Hashable, CohesionTest] = {}
    for g in unique:
        if sizes[g] < 2:
            results[g] = CohesionTest(g, sizes[g], None, None, skipped=True)

    if not tested:
        return results
    group_index = {g: gi for gi, g in enumerate(tested)}
    # slots for skipped singles still participate in the shuffle pool but are
    # binned into a throwaway group
    slot_group = np.array([group_index.get(g, len(tested)) for g in labels], dtype=np.int64)
    n_bins = len(tested) + (1 if (slot_group == len(tested)).any() else 0)
    rows = params.prompt_loadings[prompt_ids]

    observed = _group_cohesions(rows, slot_group, n_bins)[: len(tested)]
    counts = np.zeros(len(tested), dtype=np.int64)
    rng = np.random.default_rng(seed)
    for _ in range(n_permutations):
        perm = rng.permutation(rows.shape[0])
        permuted = _group_cohesions(rows[perm], slot_group, n_bins)[: len(tested)]
        counts += permuted >= observed
    p_values = (1.0 + counts) / (1.0 + n_permutations)
    for g in tested:
        gi = group_index[g]
        results[g] = CohesionTest(g, sizes[g], float(observed[gi]), float(p_values[gi]))
    return results
