"""Shared builders for randomized test instances."""

import numpy as np

from capten.types import Dataset, FactorParams, RaterSpec, Template


def make_rater_specs(templates, categories):
    return tuple(
        RaterSpec(k, t, c) for k, (t, c) in enumerate(zip(templates, categories))
    )


def random_params(specs, n_models, n_prompts, rank, seed=0, scale=0.6, gap=0.9):
    rng = np.random.default_rng(seed)
    n_raters = len(specs)
    return FactorParams(
        model_loadings=rng.normal(0, scale, (n_models, rank)),
        prompt_loadings=rng.normal(0, scale, (n_prompts, rank)),
        rater_loadings=rng.normal(0, scale, (n_raters, rank)),
        base_cutoffs=rng.normal(0, 0.3, n_raters),
        cutoff_gaps=tuple(
            gap * rng.uniform(0.5, 1.5, s.num_categories - 2) for s in specs
        ),
        rank=rank,
    )


def random_dataset(params, specs, n_obs, seed=0):
    """Observations with labels drawn from the model itself."""
    from capten.model import advantages, ordinal_pmf

    rng = np.random.default_rng(seed)
    n_models, n_prompts = params.n_models, params.n_prompts
    raters = rng.integers(0, len(specs), n_obs)
    prompts = rng.integers(0, n_prompts, n_obs)
    first = rng.integers(0, n_models, n_obs)
    second = np.full(n_obs, -1, dtype=np.int64)
    for n, k in enumerate(raters):
        if specs[k].template == Template.PAIRWISE:
            a, b = rng.choice(n_models, size=2, replace=False)
            first[n], second[n] = a, b
    labels = np.zeros(n_obs, dtype=np.int64)
    data = Dataset.from_arrays(
        first, second, prompts, raters, labels, (n_models, n_prompts, len(specs)), specs
    )
    delta = advantages(params, data)
    for n in range(n_obs):
        p = ordinal_pmf(delta[n], params.cutoffs(int(raters[n])))
        labels[n] = rng.choice(len(p), p=p)
    return Dataset.from_arrays(
        first, second, prompts, raters, labels, (n_models, n_prompts, len(specs)), specs
    )
