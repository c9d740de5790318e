"""Generative model: capability entries, ordinal probabilities, likelihood.

The observed ordinal outcome for (subject, prompt, rater) is driven by an
effective advantage through an ordered-logit link with rater-specific
cutoffs. Middle-category probabilities are evaluated through a product form
that stays accurate for advantages far into either tail.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InputError
from .types import Dataset, FactorParams, Subject

PROB_FLOOR = 1e-12


def cutoffs_from_gaps(base: float, gaps) -> np.ndarray:
    """Increasing cutoffs from a base value and strictly positive gaps.

    Returns a vector of length ``len(gaps) + 1``; a binary rater has a
    single cutoff equal to ``base``.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size and gaps.min() <= 0:
        raise InputError(f"gaps must be strictly positive, got min {gaps.min()}")
    return np.concatenate(([float(base)], base + np.cumsum(gaps)))


def _check_cutoffs(cutoffs: np.ndarray) -> np.ndarray:
    cutoffs = np.asarray(cutoffs, dtype=float)
    if cutoffs.ndim != 1 or cutoffs.size < 1:
        raise InputError("cutoffs must be a nonempty 1-D vector")
    if cutoffs.size > 1 and np.any(np.diff(cutoffs) <= 0):
        raise InputError("cutoffs must be strictly increasing")
    return cutoffs


def _interval_prob(lower: np.ndarray, upper: np.ndarray, delta) -> np.ndarray:
    """P(lower < Z <= upper) for a logistic variable centered at delta.

    ``lower``/``upper`` may contain -inf/+inf; the product form
    sigma(-(lower-delta)) * sigma(upper-delta) * (1 - exp(lower-upper))
    reduces to the correct one-sided sigmoid in those cases and avoids the
    cancellation of sigma(b) - sigma(a) in the tails.
    """
    a = lower - delta
    b = upper - delta
    # lower-upper is delta-free; using it directly keeps the factor exact,
    # and any infinite bound drives it to -inf, where -expm1 gives exactly 1
    return expit(-a) * expit(b) * (-np.expm1(lower - upper))


def ordinal_pmf(delta: float, cutoffs) -> np.ndarray:
    """Probability vector over the C = len(cutoffs)+1 ordered categories."""
    cutoffs = _check_cutoffs(cutoffs)
    lower = np.concatenate(([-np.inf], cutoffs))
    upper = np.concatenate((cutoffs, [np.inf]))
    return _interval_prob(lower, upper, float(delta))


def expected_label(delta: float, cutoffs) -> float:
    """Mean category index under the ordinal outcome distribution."""
    p = ordinal_pmf(delta, cutoffs)
    return float(np.arange(p.size) @ p)


def _dsigma(x: np.ndarray) -> np.ndarray:
    """Logistic density sigma'(x); exactly 0 at +-inf."""
    return expit(x) * expit(-x)


def ordinal_pmf_ddelta(delta: float, cutoffs) -> np.ndarray:
    """Derivative of each category probability with respect to the advantage."""
    cutoffs = _check_cutoffs(cutoffs)
    lower = np.concatenate(([-np.inf], cutoffs))
    upper = np.concatenate((cutoffs, [np.inf]))
    a = lower - float(delta)
    b = upper - float(delta)
    return _dsigma(a) - _dsigma(b)


def expected_label_ddelta(delta: float, cutoffs) -> float:
    dp = ordinal_pmf_ddelta(delta, cutoffs)
    return float(np.arange(dp.size) @ dp)


def capability(params: FactorParams, model_id: int, prompt_id: int, rater_id: int) -> float:
    """Capability tensor entry: rank-R inner product of the three loadings."""
    _check_index(model_id, params.n_models, "model")
    _check_index(prompt_id, params.n_prompts, "prompt")
    _check_index(rater_id, params.n_raters, "rater")
    return float(
        params.model_loadings[model_id]
        @ (params.prompt_loadings[prompt_id] * params.rater_loadings[rater_id])
    )


def effective_advantage(params: FactorParams, subject: Subject, prompt_id: int, rater_id: int) -> float:
    """The scalar driving the outcome: capability, or capability difference."""
    if subject.is_pair:
        i0, i1 = subject.models
        return capability(params, i1, prompt_id, rater_id) - capability(params, i0, prompt_id, rater_id)
    return capability(params, subject.models[0], prompt_id, rater_id)


def _check_index(idx: int, limit: int, what: str) -> None:
    if not (0 <= idx < limit):
        raise InputError(f"{what} id {idx} out of range [0, {limit})")


# -- vectorized likelihood over datasets -------------------------------------


def _padded_bounds(params: FactorParams):
    """(K, Cmax+1) cutoff table padded with -inf on the left, +inf beyond C_k-1.

    Column t holds the lower bound of category t, so for an observation
    (k, y) the interval is (table[k, y], table[k, y+1]].
    """
    c_max = max(params.num_categories(k) for k in range(params.n_raters))
    table = np.full((params.n_raters, c_max + 1), np.inf)
    table[:, 0] = -np.inf
    for k in range(params.n_raters):
        cuts = params.cutoffs(k)
        table[k, 1 : 1 + cuts.size] = cuts
    return table


def advantages(params: FactorParams, data: Dataset) -> np.ndarray:
    """Effective advantage of every observation in the slice."""
    th = params.model_loadings
    skill = np.where(
        (data.second_model >= 0)[:, None],
        th[data.second_model] - th[data.first_model],
        th[data.first_model],
    )
    feats = skill * params.prompt_loadings[data.prompt_ids] * params.rater_loadings[data.rater_ids]
    return feats.sum(axis=1)


def _observation_probs(params: FactorParams, data: Dataset):
    """Per-observation outcome probability plus interval bounds (a, b)."""
    table = _padded_bounds(params)
    delta = advantages(params, data)
    lower = table[data.rater_ids, data.labels]
    upper = table[data.rater_ids, data.labels + 1]
    return _interval_prob(lower, upper, delta), lower - delta, upper - delta


def nll(params: FactorParams, data: Dataset, prob_floor: float = PROB_FLOOR) -> float:
    """Total negative log-likelihood of a dataset slice.

    Probabilities are floored at ``prob_floor`` before the log so extreme
    advantages cannot produce infinities. An empty slice contributes 0 and
    triggers a warning.
    """
    if len(data) == 0:
        warnings.warn("nll of an empty observation slice is 0", stacklevel=2)
        return 0.0
    probs, _, _ = _observation_probs(params, data)
    return float(-np.log(np.maximum(probs, prob_floor)).sum())


@dataclass(frozen=True)
class ParamMask:
    """Which parameter blocks receive gradients.

    ``gamma_rows``/``cutoff_raters`` of None mean every row/rater.
    """

    model_loadings: bool = True
    prompt_loadings: bool = True
    gamma_rows: tuple[int, ...] | None = None
    cutoff_raters: tuple[int, ...] | None = None

    @classmethod
    def full(cls) -> "ParamMask":
        return cls()

    @classmethod
    def autorater(cls, n_raters: int) -> "ParamMask":
        """Everything except the human rater's embedding and cutoffs."""
        rows = tuple(range(1, n_raters))
        return cls(gamma_rows=rows, cutoff_raters=rows)

    @classmethod
    def human(cls) -> "ParamMask":
        """Only the human rater's embedding and cutoffs."""
        return cls(model_loadings=False, prompt_loadings=False, gamma_rows=(0,), cutoff_raters=(0,))


@dataclass
class FactorGradient:
    """Gradient of the NLL, shaped like :class:`FactorParams`."""

    model_loadings: np.ndarray
    prompt_loadings: np.ndarray
    rater_loadings: np.ndarray
    base_cutoffs: np.ndarray
    cutoff_gaps: list[np.ndarray]


def _scatter_rows(values: np.ndarray, index: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum (n, R) rows of ``values`` into an (n_rows, R) accumulator."""
    out = np.empty((n_rows, values.shape[1]))
    for r in range(values.shape[1]):
        out[:, r] = np.bincount(index, weights=values[:, r], minlength=n_rows)
    return out


def nll_gradient(
    params: FactorParams,
    data: Dataset,
    mask: ParamMask | None = None,
    prob_floor: float = PROB_FLOOR,
) -> FactorGradient:
    """Analytic gradient of :func:`nll`; masked blocks come back as zeros.

    Where the observation probability sits at the floor the objective is
    locally flat, so those rows contribute zero gradient.
    """
    mask = mask or ParamMask.full()
    n_models, n_prompts, n_raters = params.n_models, params.n_prompts, params.n_raters
    grad = FactorGradient(
        np.zeros((n_models, params.rank)),
        np.zeros((n_prompts, params.rank)),
        np.zeros((n_raters, params.rank)),
        np.zeros(n_raters),
        [np.zeros_like(g) for g in params.cutoff_gaps],
    )
    if len(data) == 0:
        warnings.warn("gradient of an empty observation slice is 0", stacklevel=2)
        return grad

    probs, a, b = _observation_probs(params, data)
    live = probs > prob_floor
    inv_p = np.where(live, 1.0 / np.maximum(probs, prob_floor), 0.0)
    da = _dsigma(a)
    db = _dsigma(b)
    # d(-log p)/d(advantage) and d(-log p)/d(cutoff) weights per observation
    w_delta = (db - da) * inv_p
    w_lower = da * inv_p  # toward cutoff index y-1 (absent for y = 0)
    w_upper = -db * inv_p  # toward cutoff index y   (absent for y = C_k-1)

    th = params.model_loadings
    pl = params.prompt_loadings[data.prompt_ids]
    rl = params.rater_loadings[data.rater_ids]
    is_pair = data.second_model >= 0
    skill = np.where(is_pair[:, None], th[data.second_model] - th[data.first_model], th[data.first_model])

    if mask.model_loadings:
        contrib = w_delta[:, None] * pl * rl
        grad.model_loadings += _scatter_rows(
            np.where(is_pair[:, None], -contrib, contrib), data.first_model, n_models
        )
        pair_rows = is_pair.nonzero()[0]
        if pair_rows.size:
            grad.model_loadings += _scatter_rows(
                contrib[pair_rows], data.second_model[pair_rows], n_models
            )
    if mask.prompt_loadings:
        grad.prompt_loadings += _scatter_rows(
            w_delta[:, None] * skill * rl, data.prompt_ids, n_prompts
        )

    gamma_rows = set(range(n_raters)) if mask.gamma_rows is None else set(mask.gamma_rows)
    gamma_scatter = _scatter_rows(w_delta[:, None] * skill * pl, data.rater_ids, n_raters)
    for k in range(n_raters):
        if k in gamma_rows:
            grad.rater_loadings[k] = gamma_scatter[k]

    cut_raters = set(range(n_raters)) if mask.cutoff_raters is None else set(mask.cutoff_raters)
    n_cuts = max(params.num_categories(k) - 1 for k in range(n_raters))
    # boundary categories have exactly zero weight, so clipping their
    # out-of-range cutoff index is harmless
    lower_idx = data.rater_ids * n_cuts + np.maximum(data.labels - 1, 0)
    upper_idx = data.rater_ids * n_cuts + np.minimum(data.labels, n_cuts - 1)
    size = n_raters * n_cuts
    flat = np.bincount(lower_idx, weights=w_lower, minlength=size) + np.bincount(
        upper_idx, weights=w_upper, minlength=size
    )
    per_cut = flat.reshape(n_raters, n_cuts)
    for k in range(n_raters):
        if k not in cut_raters:
            continue
        gc = per_cut[k, : params.num_categories(k) - 1]
        grad.base_cutoffs[k] = gc.sum()
        if gc.size > 1:
            # gap l feeds every cutoff strictly after it
            grad.cutoff_gaps[k][:] = np.cumsum(gc[::-1])[::-1][1:]
    return grad
