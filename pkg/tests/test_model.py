import numpy as np
import pytest
from scipy.special import expit

from conftest import make_rater_specs, random_dataset, random_params

from capten.errors import InputError
from capten.model import (
    capability,
    cutoffs_from_gaps,
    effective_advantage,
    expected_label,
    expected_label_ddelta,
    nll,
    nll_gradient,
    ordinal_pmf,
    ordinal_pmf_ddelta,
    ParamMask,
)
from capten.types import Dataset, FactorParams, RaterSpec, Subject, Template


def tiny_params(theta, a, gamma, base=(0.0,), gaps=((),)):
    theta = np.atleast_2d(np.asarray(theta, float))
    a = np.atleast_2d(np.asarray(a, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    return FactorParams(
        model_loadings=theta,
        prompt_loadings=a,
        rater_loadings=gamma,
        base_cutoffs=np.asarray(base, float),
        cutoff_gaps=tuple(np.asarray(g, float) for g in gaps),
        rank=theta.shape[1],
    )


# -- capability ---------------------------------------------------------------


def test_capability_rank1_all_ones():
    p = tiny_params([[1.0]], [[1.0]], [[1.0]])
    assert capability(p, 0, 0, 0) == 1.0


def test_capability_zero_row():
    p = tiny_params([[0.0, 0.0]], [[1.0, 2.0]], [[3.0, 4.0]])
    assert capability(p, 0, 0, 0) == 0.0


def test_capability_matches_loop_oracle():
    theta, a, gamma = [1.0, 2.0], [3.0, 4.0], [5.0, 6.0]
    p = tiny_params([theta], [a], [gamma])
    looped = sum(theta[r] * a[r] * gamma[r] for r in range(2))
    assert looped == 63.0
    assert capability(p, 0, 0, 0) == pytest.approx(63.0, abs=1e-12)


def test_capability_index_error():
    p = tiny_params([[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(InputError):
        capability(p, 1, 0, 0)


def test_capability_trilinear_in_model_row():
    rng = np.random.default_rng(3)
    p = tiny_params(rng.normal(size=(2, 3)), rng.normal(size=(4, 3)), rng.normal(size=(1, 3)))
    scaled = p.replace(model_loadings=np.vstack([3.5 * p.model_loadings[0], p.model_loadings[1]]))
    for j in range(4):
        assert capability(scaled, 0, j, 0) == pytest.approx(3.5 * capability(p, 0, j, 0), rel=1e-15)
        assert capability(scaled, 1, j, 0) == capability(p, 1, j, 0)


# -- effective advantage ------------------------------------------------------


def test_advantage_pair_is_difference():
    # rank-1 setup with capabilities 2.0 and 0.5
    p = tiny_params([[0.5], [2.0]], [[1.0]], [[1.0]])
    assert effective_advantage(p, Subject.pair(0, 1), 0, 0) == 1.5


def test_advantage_identical_rows_zero():
    row = [0.7, -0.2]
    p = tiny_params([row, row], [[1.0, 1.0]], [[1.0, 1.0]])
    assert effective_advantage(p, Subject.pair(0, 1), 0, 0) == 0.0


def test_advantage_single_equals_capability():
    p = tiny_params([[1.0, 2.0]], [[3.0, 4.0]], [[5.0, 6.0]])
    assert effective_advantage(p, Subject.single(0), 0, 0) == pytest.approx(63.0, abs=1e-12)


# -- cutoffs ------------------------------------------------------------------


def test_cutoffs_binary():
    assert cutoffs_from_gaps(0.0, []).tolist() == [0.0]


def test_cutoffs_cumsum():
    assert cutoffs_from_gaps(0.0, [1.0, 1.0]).tolist() == [0.0, 1.0, 2.0]


def test_cutoffs_cumsum_oracle():
    base, gaps = -0.5, [0.25, 0.75]
    expect = [base]
    for g in gaps:
        expect.append(expect[-1] + g)
    assert expect == [-0.5, -0.25, 0.5]
    np.testing.assert_allclose(cutoffs_from_gaps(base, gaps), expect, atol=1e-15)


def test_cutoffs_reject_nonpositive_gap():
    with pytest.raises(InputError):
        cutoffs_from_gaps(0.0, [0.5, 0.0])


# -- ordinal pmf --------------------------------------------------------------


def test_pmf_binary_half():
    np.testing.assert_allclose(ordinal_pmf(0.0, [0.0]), [0.5, 0.5], atol=1e-15)


def test_pmf_three_categories():
    # sigma(1) = 0.7310586
    p = ordinal_pmf(0.0, [0.0, 1.0])
    np.testing.assert_allclose(p, [0.5, 0.2310586, 0.2689414], atol=1e-7)


def test_pmf_symmetry():
    cuts = [-1.5, -0.25, 0.25, 1.5]
    for d in [0.3, 1.7, 8.0, 25.0]:
        np.testing.assert_allclose(
            ordinal_pmf(-d, cuts), ordinal_pmf(d, cuts)[::-1], rtol=1e-12, atol=1e-300
        )


def test_pmf_sums_to_one_across_sweep():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        c = rng.integers(2, 13)
        cuts = np.sort(rng.uniform(-4, 4, c - 1))
        if c > 2 and np.min(np.diff(cuts)) < 1e-6:
            continue
        delta = rng.uniform(-30, 30)
        p = ordinal_pmf(delta, cuts)
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) < 1e-12


def test_pmf_binary_reduction_exact():
    for d in [-22.0, -3.0, 0.0, 1.3, 17.0]:
        p = ordinal_pmf(d, [0.0])
        assert p[1] == expit(d)


def test_cdf_strictly_decreasing_in_delta():
    cuts = [-1.0, 0.5, 2.0]
    grid = np.linspace(-6, 6, 25)
    pmfs = np.array([ordinal_pmf(d, cuts) for d in grid])
    cdf = np.cumsum(pmfs, axis=1)[:, :-1]
    assert np.all(np.diff(cdf, axis=0) < 0)


def test_pmf_rejects_bad_cutoffs():
    with pytest.raises(InputError):
        ordinal_pmf(0.0, [1.0, 1.0])


def test_pmf_ddelta_matches_fd():
    cuts = [-1.0, 0.2, 1.4]
    for d in [-2.0, 0.0, 3.3]:
        h = 1e-6
        fd = (ordinal_pmf(d + h, cuts) - ordinal_pmf(d - h, cuts)) / (2 * h)
        np.testing.assert_allclose(ordinal_pmf_ddelta(d, cuts), fd, atol=1e-8)
        fd_mean = (expected_label(d + h, cuts) - expected_label(d - h, cuts)) / (2 * h)
        assert expected_label_ddelta(d, cuts) == pytest.approx(fd_mean, abs=1e-8)


# -- expected label -----------------------------------------------------------


def test_expected_label_binary_half():
    assert expected_label(0.0, [0.0]) == pytest.approx(0.5, abs=1e-15)


def test_expected_label_saturates():
    assert expected_label(100.0, [0.0, 1.0]) == pytest.approx(2.0, abs=1e-10)


def test_expected_label_dot_oracle():
    p = ordinal_pmf(0.0, [0.0, 1.0])
    oracle = 0 * p[0] + 1 * p[1] + 2 * p[2]
    assert oracle == pytest.approx(0.7689414, abs=1e-7)
    assert expected_label(0.0, [0.0, 1.0]) == pytest.approx(oracle, abs=1e-15)


# -- nll ----------------------------------------------------------------------


def test_nll_single_binary_observation():
    specs = make_rater_specs([Template.POINTWISE], [2])
    p = tiny_params([[0.0]], [[1.0]], [[1.0]])
    data = Dataset.from_arrays([0], [-1], [0], [0], [1], (1, 1, 1), specs)
    assert nll(p, data) == pytest.approx(np.log(2), abs=1e-12)


def test_nll_additive():
    specs = make_rater_specs([Template.POINTWISE], [2])
    p = tiny_params([[0.0]], [[1.0]], [[1.0]])
    data = Dataset.from_arrays([0, 0], [-1, -1], [0, 0], [0, 0], [1, 0], (1, 1, 1), specs)
    assert nll(p, data) == pytest.approx(2 * np.log(2), abs=1e-12)


def test_nll_matches_per_observation_loop():
    specs = make_rater_specs([Template.POINTWISE, Template.PAIRWISE], [4, 3])
    params = random_params(specs, n_models=3, n_prompts=4, rank=2, seed=11)
    data = random_dataset(params, specs, 60, seed=12)
    total = 0.0
    for o in data.observations():
        delta = effective_advantage(params, o.subject, o.prompt_id, o.rater_id)
        total -= np.log(ordinal_pmf(delta, params.cutoffs(o.rater_id))[o.label])
    assert nll(params, data) == pytest.approx(total, rel=1e-12)


def test_nll_empty_slice_warns():
    specs = make_rater_specs([Template.POINTWISE], [2])
    p = tiny_params([[0.0]], [[1.0]], [[1.0]])
    data = Dataset.from_arrays([], [], [], [], [], (1, 1, 1), specs)
    with pytest.warns(UserWarning):
        assert nll(p, data) == 0.0


# -- gradient -----------------------------------------------------------------


def params_to_blocks(params):
    blocks = [
        ("model_loadings", params.model_loadings),
        ("prompt_loadings", params.prompt_loadings),
        ("rater_loadings", params.rater_loadings),
        ("base_cutoffs", params.base_cutoffs),
    ]
    for k, g in enumerate(params.cutoff_gaps):
        blocks.append((f"gaps{k}", g))
    return blocks


def perturb(params, block, index, eps):
    def bump(arr):
        out = np.array(arr)
        out[index] += eps
        return out

    if block.startswith("gaps"):
        k = int(block[4:])
        gaps = [np.array(g) for g in params.cutoff_gaps]
        gaps[k][index] += eps
        return params.replace(cutoff_gaps=tuple(gaps))
    return params.replace(**{block: bump(getattr(params, block))})


def fd_gradient(params, data, h=1e-5):
    """Independent central-difference oracle over every coordinate."""
    out = {}
    for name, arr in params_to_blocks(params):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            up = nll(perturb(params, name, idx, h), data)
            dn = nll(perturb(params, name, idx, -h), data)
            g[idx] = (up - dn) / (2 * h)
        out[name] = g
    return out


def grad_to_blocks(grad):
    out = {
        "model_loadings": grad.model_loadings,
        "prompt_loadings": grad.prompt_loadings,
        "rater_loadings": grad.rater_loadings,
        "base_cutoffs": grad.base_cutoffs,
    }
    for k, g in enumerate(grad.cutoff_gaps):
        out[f"gaps{k}"] = g
    return out


def test_gradient_matches_finite_differences():
    specs = make_rater_specs([Template.POINTWISE, Template.PAIRWISE], [4, 3])
    params = random_params(specs, n_models=3, n_prompts=4, rank=2, seed=5)
    data = random_dataset(params, specs, 50, seed=6)
    analytic = grad_to_blocks(nll_gradient(params, data))
    numeric = fd_gradient(params, data)
    for name, fd in numeric.items():
        rel = np.abs(analytic[name] - fd) / np.maximum(np.abs(fd), 1e-6)
        assert rel.max() < 1e-5, f"{name}: {rel.max()}"


def test_gradient_zero_at_symmetric_mode():
    # symmetric cutoffs, advantage at the mode: d nll / d delta = 0, so the
    # model-loading gradient (advantage direction) vanishes
    specs = make_rater_specs([Template.POINTWISE], [3])
    p = tiny_params([[0.0]], [[1.0]], [[1.0]], base=(-0.5,), gaps=([1.0],))
    data = Dataset.from_arrays([0], [-1], [0], [0], [1], (1, 1, 1), specs)
    g = nll_gradient(p, data)
    assert g.model_loadings[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_gradient_mask_zeroes_blocks():
    specs = make_rater_specs([Template.POINTWISE, Template.PAIRWISE], [4, 3])
    params = random_params(specs, n_models=3, n_prompts=4, rank=2, seed=7)
    data = random_dataset(params, specs, 40, seed=8)
    g = nll_gradient(params, data, mask=ParamMask.human())
    assert np.all(g.model_loadings == 0)
    assert np.all(g.prompt_loadings == 0)
    assert np.all(g.rater_loadings[1] == 0)
    assert np.any(g.rater_loadings[0] != 0)
    assert g.base_cutoffs[1] == 0
    assert np.all(g.cutoff_gaps[1] == 0)

    g2 = nll_gradient(params, data, mask=ParamMask.autorater(2))
    assert np.all(g2.rater_loadings[0] == 0)
    assert g2.base_cutoffs[0] == 0
    assert np.any(g2.model_loadings != 0)
