"""Two-stage maximum-likelihood fitting, fine-tuning, and baselines.

Stage 1 runs mini-batch Adam over autorater data with two projections after
every step: cutoff gaps clamped at a positivity floor, and model/prompt
loading columns rescaled to unit L2 norm. Stage 2 freezes those loadings
and solves the remaining convex ordinal regression for the human embedding
and cutoffs by damped Newton, which also yields the observed-information
covariance used by all confidence intervals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import FitError, InputError
from .model import PROB_FLOOR, ParamMask, _dsigma, nll, nll_gradient
from .types import (
    HUMAN_RATER,
    CovarianceEstimate,
    Dataset,
    FactorParams,
    Template,
)

# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class AdamConfig:
    learning_rates: tuple[float, ...] = (0.05,)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1024
    epochs: int = 150

    def __post_init__(self):
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise InputError("need at least one positive learning rate")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")


@dataclass(frozen=True)
class Stage2Config:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-9


@dataclass(frozen=True)
class Stage3Config:
    learning_rate: float = 0.02
    max_epochs: int = 200
    validation_fraction: float = 0.2
    patience: int = 10

    def __post_init__(self):
        if not (0.0 < self.validation_fraction <= 0.5):
            raise InputError("validation_fraction must be in (0, 0.5]")


@dataclass(frozen=True)
class FitConfig:
    rank: int = 3
    adam: AdamConfig = AdamConfig()
    projection_eps: float = 1e-4
    seeds: tuple[int, ...] = (0,)
    stage2: Stage2Config = Stage2Config()
    stage3: Stage3Config = Stage3Config()
    init_scale: float = 0.1
    l2_model: float = 0.0  # baseline ridge on model loadings
    l2_prompt: float = 0.0  # baseline ridge pulling prompt loadings toward ones

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("rank must be >= 1")
        if self.projection_eps < 0:
            raise InputError("projection_eps must be >= 0")
        if not self.seeds:
            raise InputError("need at least one restart seed")


# -- flat parameter vector ----------------------------------------------------


class ParamPacker:
    """Maps FactorParams to/from one flat float vector, block by block."""

    def __init__(self, template: FactorParams):
        self.n_models = template.n_models
        self.n_prompts = template.n_prompts
        self.n_raters = template.n_raters
        self.rank = template.rank
        self.gap_sizes = [g.size for g in template.cutoff_gaps]
        sizes = [
            self.n_models * self.rank,
            self.n_prompts * self.rank,
            self.n_raters * self.rank,
            self.n_raters,
            *self.gap_sizes,
        ]
        edges = np.concatenate(([0], np.cumsum(sizes)))
        self.sl_theta = slice(edges[0], edges[1])
        self.sl_prompt = slice(edges[1], edges[2])
        self.sl_rater = slice(edges[2], edges[3])
        self.sl_base = slice(edges[3], edges[4])
        self.sl_gaps = [slice(edges[4 + i], edges[5 + i]) for i in range(self.n_raters)]
        self.size = edges[-1]

    def pack(self, params: FactorParams) -> np.ndarray:
        return np.concatenate(
            [
                params.model_loadings.ravel(),
                params.prompt_loadings.ravel(),
                params.rater_loadings.ravel(),
                params.base_cutoffs,
                *params.cutoff_gaps,
            ]
        )

    def pack_grad(self, grad) -> np.ndarray:
        return np.concatenate(
            [
                grad.model_loadings.ravel(),
                grad.prompt_loadings.ravel(),
                grad.rater_loadings.ravel(),
                grad.base_cutoffs,
                *grad.cutoff_gaps,
            ]
        )

    def unpack(self, vec: np.ndarray, fine_tuned: bool = False) -> FactorParams:
        return FactorParams(
            model_loadings=vec[self.sl_theta].reshape(self.n_models, self.rank),
            prompt_loadings=vec[self.sl_prompt].reshape(self.n_prompts, self.rank),
            rater_loadings=vec[self.sl_rater].reshape(self.n_raters, self.rank),
            base_cutoffs=vec[self.sl_base],
            cutoff_gaps=tuple(vec[sl] for sl in self.sl_gaps),
            rank=self.rank,
            fine_tuned=fine_tuned,
        )


# -- stage 1: projected Adam --------------------------------------------------


@dataclass
class Stage1Fit:
    params: FactorParams
    nll_per_epoch: list[float]  # mean training NLL after each epoch
    final_nll: float
    seed: int
    learning_rate: float


def _initial_params(data: Dataset, config: FitConfig, seed: int) -> tuple[FactorParams, np.random.Generator]:
    rng = np.random.default_rng(seed)
    n_models, n_prompts, n_raters = data.dims
    scale = config.init_scale
    params = FactorParams(
        model_loadings=rng.normal(0.0, scale, (n_models, config.rank)),
        prompt_loadings=rng.normal(0.0, scale, (n_prompts, config.rank)),
        rater_loadings=rng.normal(0.0, scale, (n_raters, config.rank)),
        base_cutoffs=np.zeros(n_raters),
        cutoff_gaps=tuple(np.ones(s.num_categories - 2) for s in data.rater_specs),
        rank=config.rank,
    )
    return params, rng


def _adam_fit(
    data: Dataset,
    params0: FactorParams,
    mask: ParamMask,
    config: FitConfig,
    rng: np.random.Generator,
    learning_rate: float,
    normalize_columns: bool,
    l2_model: float = 0.0,
    l2_prompt: float = 0.0,
) -> tuple[FactorParams, list[float]]:
    """Mini-batch Adam with per-step gap clamping and column normalization."""
    packer = ParamPacker(params0)
    vec = packer.pack(params0)
    m = np.zeros_like(vec)
    v = np.zeros_like(vec)
    beta1, beta2, eps = config.adam.beta1, config.adam.beta2, config.adam.eps
    n = len(data)
    batch = min(config.adam.batch_size, n)
    trace: list[float] = []
    step = 0

    theta_view = vec[packer.sl_theta].reshape(packer.n_models, packer.rank)
    prompt_view = vec[packer.sl_prompt].reshape(packer.n_prompts, packer.rank)

    for epoch in range(config.adam.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            rows = data.subset(perm[start : start + batch])
            params = packer.unpack(vec)
            g = packer.pack_grad(nll_gradient(params, rows, mask))
            if l2_model:
                g[packer.sl_theta] += (len(rows) / n) * 2.0 * l2_model * vec[packer.sl_theta]
            if l2_prompt:
                g[packer.sl_prompt] += (len(rows) / n) * 2.0 * l2_prompt * (vec[packer.sl_prompt] - 1.0)
            step += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat = m / (1 - beta1**step)
            v_hat = v / (1 - beta2**step)
            vec -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            # projections: gap positivity, then unit-norm loading columns
            for sl in packer.sl_gaps:
                np.maximum(vec[sl], config.projection_eps, out=vec[sl])
            if normalize_columns:
                for view in (theta_view, prompt_view):
                    norms = np.linalg.norm(view, axis=0)
                    np.divide(view, norms, out=view, where=norms > 0)
        epoch_nll = nll(packer.unpack(vec), data) / n
        if not np.isfinite(epoch_nll):
            raise FitError(f"training NLL became non-finite at epoch {epoch}")
        trace.append(float(epoch_nll))
    return packer.unpack(vec), trace


def fit_stage1(
    data: Dataset, config: FitConfig, seed: int, learning_rate: float | None = None
) -> Stage1Fit:
    """Fit all non-human parameters on the autorater slice.

    Returns the fit together with the per-epoch mean training NLL. With
    ``epochs=0`` the random initialization is returned untouched.
    """
    if len(data) == 0:
        raise InputError("stage 1 requires a nonempty autorater slice")
    if np.any(data.rater_ids == HUMAN_RATER):
        raise InputError("stage 1 data must contain only autorater observations (rater_id > 0)")
    lr = float(learning_rate if learning_rate is not None else config.adam.learning_rates[0])
    params0, rng = _initial_params(data, config, seed)
    mask = ParamMask.autorater(data.n_raters)
    params, trace = _adam_fit(data, params0, mask, config, rng, lr, normalize_columns=True)
    final = trace[-1] if trace else float(nll(params, data) / len(data))
    return Stage1Fit(params, trace, final, seed, lr)


@dataclass
class MultiRestartResult:
    best: Stage1Fit
    table: list[dict]  # one row per (seed, learning_rate) restart

    @property
    def params(self) -> FactorParams:
        return self.best.params


def multi_restart(data: Dataset, config: FitConfig) -> MultiRestartResult:
    """Run stage 1 over the (seed, learning rate) grid; keep the lowest NLL.

    Ties on the exact final NLL break toward the earliest seed in the list.
    Diverged restarts are recorded and skipped; if every restart diverges
    the whole fit fails.
    """
    best: Stage1Fit | None = None
    table: list[dict] = []
    for seed in config.seeds:
        for lr in config.adam.learning_rates:
            try:
                fit = fit_stage1(data, config, seed, lr)
            except FitError as exc:
                table.append({"seed": int(seed), "learning_rate": float(lr), "final_nll": None, "error": str(exc)})
                continue
            table.append({"seed": int(seed), "learning_rate": float(lr), "final_nll": fit.final_nll})
            if best is None or fit.final_nll < best.final_nll:
                best = fit
    if best is None:
        raise FitError("every stage-1 restart diverged")
    return MultiRestartResult(best, table)


# -- ordinal regression core (stage 2 and the Constant baseline) --------------


@dataclass
class OrdinalFit:
    coef: np.ndarray  # (p,)
    cutoffs: np.ndarray  # (C-1,), strictly increasing
    final_nll: float  # total NLL at the optimum
    converged: bool
    n_iterations: int
    hessian: np.ndarray  # observed information (total, unnormalized, no ridge)


def _ordinal_nll_grad_hess(x, y, coef, cutoffs, want_hess=True, ridge=0.0):
    n, p = x.shape
    n_cut = cutoffs.size
    ext = np.concatenate(([-np.inf], cutoffs, [np.inf]))
    u = x @ coef
    a = ext[y] - u
    b = ext[y + 1] - u
    pa = expit(a)
    pb = expit(b)
    prob = np.maximum(expit(-a) * pb * (-np.expm1(ext[y] - ext[y + 1])), PROB_FLOOR)
    f = -np.log(prob).sum() + ridge * (coef @ coef)

    da = _dsigma(a)
    db = _dsigma(b)
    ga = da / prob
    gb = -db / prob
    g_coef = -x.T @ (ga + gb) + 2.0 * ridge * coef
    lo = y - 1  # cutoff index below the observed label (-1 when absent)
    hi = y  # cutoff index above (== n_cut when absent)
    g_cut = np.bincount(np.maximum(lo, 0), weights=ga, minlength=n_cut) + np.bincount(
        np.minimum(hi, n_cut - 1), weights=gb, minlength=n_cut
    )
    grad = np.concatenate([g_coef, g_cut])
    if not want_hess:
        return f, grad, None

    dda = da * (1.0 - 2.0 * pa)  # sigma''(a)
    ddb = db * (1.0 - 2.0 * pb)
    haa = dda / prob + ga * ga
    hbb = -ddb / prob + gb * gb
    hab = ga * gb
    h = np.zeros((p + n_cut, p + n_cut))
    w = haa + hbb + 2.0 * hab
    h[:p, :p] = x.T @ (x * w[:, None]) + 2.0 * ridge * np.eye(p)
    lo_c = np.maximum(lo, 0)
    hi_c = np.minimum(hi, n_cut - 1)
    for t in range(n_cut):
        wt = -(np.where(lo == t, haa + hab, 0.0) + np.where(hi == t, hbb + hab, 0.0))
        h[:p, p + t] = x.T @ wt
        h[p + t, :p] = h[:p, p + t]
    diag_lo = np.bincount(lo_c, weights=haa, minlength=n_cut)
    diag_hi = np.bincount(hi_c, weights=hbb, minlength=n_cut)
    h[p:, p:] += np.diag(diag_lo + diag_hi)
    both = (lo >= 0) & (hi < n_cut)
    if both.any():
        off = np.zeros((n_cut, n_cut))
        np.add.at(off, (lo[both], hi[both]), hab[both])
        h[p:, p:] += off + off.T
    return f, grad, h


def fit_ordinal_regression(
    x: np.ndarray,
    y: np.ndarray,
    n_categories: int,
    max_iterations: int = 100,
    tolerance: float = 1e-9,
    init: np.ndarray | None = None,
    ridge: float = 0.0,
) -> OrdinalFit:
    """Damped-Newton MLE for ordered-logit regression on fixed features.

    The objective is convex in (coefficients, raw cutoffs), so any feasible
    start converges to the same optimum. ``ridge`` adds a tiny quadratic on
    the coefficients; baselines use it to pin gauge-flat directions.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n, p = x.shape
    counts = np.bincount(y, minlength=n_categories)
    if (counts == 0).any():
        missing = np.nonzero(counts == 0)[0].tolist()
        raise FitError(f"categories {missing} never observed: cutoffs not identifiable")

    if init is None:
        cum = np.cumsum(counts)[:-1] / n
        z = np.concatenate([np.zeros(p), np.log(cum / (1 - cum))])
    else:
        z = np.array(init, dtype=float)
        if z.size != p + n_categories - 1:
            raise InputError("init has wrong length")
        if np.any(np.diff(z[p:]) <= 0):
            raise InputError("init cutoffs must be strictly increasing")

    f, grad, hess = _ordinal_nll_grad_hess(x, y, z[:p], z[p:], ridge=ridge)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        if np.max(np.abs(grad)) < tolerance:
            converged = True
            break
        jitter = 0.0
        while True:
            try:
                direction = np.linalg.solve(hess + jitter * np.eye(hess.shape[0]), -grad)
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 10.0, 1e-10)
                if jitter > 1e6:
                    raise FitError("singular Hessian in ordinal regression")
        slope = grad @ direction
        if slope >= 0:  # numerically non-descent; fall back to gradient
            direction = -grad
            slope = grad @ direction
        t = 1.0
        accepted = False
        for _ in range(60):
            z_new = z + t * direction
            if np.all(np.diff(z_new[p:]) > 0):
                f_new, grad_new, hess_new = _ordinal_nll_grad_hess(x, y, z_new[:p], z_new[p:], ridge=ridge)
                if f_new <= f + 1e-4 * t * slope:
                    z, f, grad, hess = z_new, f_new, grad_new, hess_new
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            converged = np.max(np.abs(grad)) < tolerance * 1e3
            break
    else:
        it = max_iterations

    if not converged:
        max_adv = float(np.max(np.abs(x @ z[:p]))) if n else 0.0
        if max_adv > 60.0:
            raise FitError(
                "ordinal regression did not converge and advantages saturated; "
                "data may be separable (optimum at infinity)"
            )
        warnings.warn(f"ordinal regression stopped with gradient norm {np.max(np.abs(grad)):.2e}")
    # report the observed information of the plain NLL, without the ridge
    _, _, hess_clean = _ordinal_nll_grad_hess(x, y, z[:p], z[p:], ridge=0.0)
    return OrdinalFit(z[:p], z[p:], float(f - ridge * (z[:p] @ z[:p])), converged, it, hess_clean)


# -- stage 2: frozen-feature human calibration --------------------------------


@dataclass
class Stage2Result:
    gamma0: np.ndarray  # (R,) human rater embedding
    base_cutoff: float
    gaps: np.ndarray  # (C0-2,)
    covariance: CovarianceEstimate
    converged: bool
    final_nll: float
    n_iterations: int


def human_features(params: FactorParams, data: Dataset) -> np.ndarray:
    """Frozen per-observation regressors: loading products or their differences."""
    th = params.model_loadings
    skill = np.where(
        (data.second_model >= 0)[:, None],
        th[data.second_model] - th[data.first_model],
        th[data.first_model],
    )
    return skill * params.prompt_loadings[data.prompt_ids]


def fit_stage2(
    human_data: Dataset,
    frozen: FactorParams,
    max_iterations: int = 100,
    tolerance: float = 1e-9,
    init: np.ndarray | None = None,
) -> Stage2Result:
    """Fit the human embedding and cutoffs on frozen model/prompt loadings.

    This is a convex ordinal regression; the covariance is the gamma block
    of the inverse Hessian of the normalized NLL at the optimum, with the
    cutoff rows marginalized out by block inversion.
    """
    m = len(human_data)
    if m == 0:
        raise InputError("stage 2 requires human observations")
    if np.any(human_data.rater_ids != HUMAN_RATER):
        raise InputError("stage 2 data must contain only human observations (rater_id = 0)")
    n_cat = human_data.rater_specs[HUMAN_RATER].num_categories
    rank = frozen.rank
    n_params = rank + n_cat - 1
    unreliable = m < n_params
    if unreliable:
        warnings.warn(
            f"only {m} human observations for {n_params} parameters; covariance unreliable"
        )

    x = human_features(frozen, human_data)
    fit = fit_ordinal_regression(
        x, human_data.labels, n_cat, max_iterations=max_iterations, tolerance=tolerance, init=init
    )
    norm_hess = fit.hessian / m
    try:
        full_cov = np.linalg.inv(norm_hess)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate stage-2 optimum: observed information is singular") from exc
    sigma = full_cov[:rank, :rank]
    covariance = CovarianceEstimate(
        sigma_hat=(sigma + sigma.T) / 2.0, m=m, includes_cutoffs=False, unreliable=unreliable
    )
    cuts = fit.cutoffs
    return Stage2Result(
        gamma0=fit.coef,
        base_cutoff=float(cuts[0]),
        gaps=np.diff(cuts),
        covariance=covariance,
        converged=fit.converged,
        final_nll=fit.final_nll,
        n_iterations=fit.n_iterations,
    )


def merge_human(params: FactorParams, stage2: Stage2Result) -> FactorParams:
    """Write the stage-2 human embedding and cutoffs into the parameter set."""
    rl = np.array(params.rater_loadings)
    rl[HUMAN_RATER] = stage2.gamma0
    base = np.array(params.base_cutoffs)
    base[HUMAN_RATER] = stage2.base_cutoff
    gaps = list(params.cutoff_gaps)
    gaps[HUMAN_RATER] = stage2.gaps
    return params.replace(rater_loadings=rl, base_cutoffs=base, cutoff_gaps=tuple(gaps))


# -- stage 3: optional fine-tuning on human data -------------------------------


def fit_stage3_finetune(
    params: FactorParams,
    human_train: Dataset,
    human_val: Dataset,
    config: FitConfig,
) -> FactorParams:
    """Full-parameter gradient descent on human train NLL with early stopping.

    Keeps the parameters from the best validation epoch (epoch 0 being the
    input) and flags the result as fine-tuned, which makes downstream
    interval constructors refuse it.
    """
    if len(human_val) == 0:
        raise InputError("fine-tuning requires a nonempty validation slice")
    if len(human_train) == 0:
        raise InputError("fine-tuning requires a nonempty training slice")
    for part in (human_train, human_val):
        if np.any(part.rater_ids != HUMAN_RATER):
            raise InputError("fine-tuning slices must be human-only")

    cfg = config.stage3
    packer = ParamPacker(params)
    vec = packer.pack(params)
    best_vec = vec.copy()
    best_val = nll(params, human_val) / len(human_val)
    bad = 0
    n = len(human_train)
    for _ in range(cfg.max_epochs):
        current = packer.unpack(vec)
        g = packer.pack_grad(nll_gradient(current, human_train, ParamMask.full())) / n
        vec -= cfg.learning_rate * g
        for sl in packer.sl_gaps:
            np.maximum(vec[sl], max(config.projection_eps, 1e-8), out=vec[sl])
        val = nll(packer.unpack(vec), human_val) / len(human_val)
        if not np.isfinite(val):
            raise FitError("validation NLL became non-finite during fine-tuning")
        if val < best_val:
            best_val = val
            best_vec = vec.copy()
            bad = 0
        else:
            bad += 1
            if bad > cfg.patience:
                break
    return packer.unpack(best_vec, fine_tuned=True)


# -- canonicalization ----------------------------------------------------------


def canonicalize(params: FactorParams) -> FactorParams:
    """Gauge-fix an observationally equivalent parameterization.

    Model and prompt loading columns get unit norm (norms pushed into the
    rater loadings), columns are sorted by decreasing rater-loading norm,
    and signs are flipped so the last model and prompt entries per column
    are positive. Cutoffs and every likelihood are unchanged.
    """
    th = np.array(params.model_loadings)
    pl = np.array(params.prompt_loadings)
    rl = np.array(params.rater_loadings)
    for r in range(params.rank):
        nt = np.linalg.norm(th[:, r])
        na = np.linalg.norm(pl[:, r])
        if nt > 0:
            th[:, r] /= nt
        if na > 0:
            pl[:, r] /= na
        rl[:, r] *= nt * na

    norms = np.linalg.norm(rl, axis=0)
    if params.rank > 1:
        sorted_norms = np.sort(norms)[::-1]
        if np.any(np.abs(np.diff(sorted_norms)) < 1e-9):
            warnings.warn("tied rater-loading column norms; column order left stable")
    order = np.argsort(-norms, kind="stable")
    th, pl, rl = th[:, order], pl[:, order], rl[:, order]

    sign_t = np.where(th[-1, :] < 0, -1.0, 1.0)
    sign_p = np.where(pl[-1, :] < 0, -1.0, 1.0)
    th *= sign_t
    pl *= sign_p
    rl *= sign_t * sign_p
    return params.replace(model_loadings=th, prompt_loadings=pl, rater_loadings=rl)


# -- restricted baselines -------------------------------------------------------


CONSTANT = "constant"
PROMPT_SPECIFIC = "prompt_specific"


def _indicator_features(data: Dataset, n_models: int) -> np.ndarray:
    x = np.zeros((len(data), n_models))
    rows = np.arange(len(data))
    is_pair = data.second_model >= 0
    x[rows, data.first_model] = np.where(is_pair, -1.0, 1.0)
    pair_rows = rows[is_pair]
    x[pair_rows, data.second_model[is_pair]] = 1.0
    return x


def fit_baseline(data: Dataset, kind: str, config: FitConfig, seed: int = 0) -> FactorParams:
    """Restricted fits on human-only data.

    ``constant`` pins the prompt and rater loadings to ones and fits one
    scalar skill per model plus the cutoffs (a convex ordinal regression,
    solved exactly). ``prompt_specific`` keeps trainable prompt loadings,
    pins the single rater row to ones, and reuses the stage-1 optimizer
    without column normalization; ridge strengths come from the config.
    """
    if len(data) == 0:
        raise InputError("baseline fits need observations")
    if np.any(data.rater_ids != HUMAN_RATER):
        raise InputError("baseline fits are defined on human-only data")
    spec = data.rater_specs[HUMAN_RATER]
    n_models, n_prompts = data.n_models, data.n_prompts

    if kind == CONSTANT:
        x = _indicator_features(data, n_models)
        fit = fit_ordinal_regression(
            x,
            data.labels,
            spec.num_categories,
            max_iterations=config.stage2.max_iterations,
            tolerance=config.stage2.gradient_tolerance,
            ridge=1e-8,
        )
        return FactorParams(
            model_loadings=fit.coef[:, None],
            prompt_loadings=np.ones((n_prompts, 1)),
            rater_loadings=np.ones((1, 1)),
            base_cutoffs=np.array([fit.cutoffs[0]]),
            cutoff_gaps=(np.diff(fit.cutoffs),),
            rank=1,
        )

    if kind == PROMPT_SPECIFIC:
        rank = config.rank
        rng = np.random.default_rng(seed)
        human_specs = (data.rater_specs[HUMAN_RATER],)
        reindexed = Dataset.from_arrays(
            data.first_model,
            data.second_model,
            data.prompt_ids,
            np.zeros(len(data), dtype=np.int64),
            data.labels,
            (n_models, n_prompts, 1),
            human_specs,
        )
        params0 = FactorParams(
            model_loadings=rng.normal(0.0, config.init_scale, (n_models, rank)),
            prompt_loadings=1.0 + rng.normal(0.0, config.init_scale, (n_prompts, rank)),
            rater_loadings=np.ones((1, rank)),
            base_cutoffs=np.zeros(1),
            cutoff_gaps=(np.ones(spec.num_categories - 2),),
            rank=rank,
        )
        mask = ParamMask(gamma_rows=(), cutoff_raters=(0,))
        params, _ = _adam_fit(
            reindexed,
            params0,
            mask,
            config,
            rng,
            config.adam.learning_rates[0],
            normalize_columns=False,
            l2_model=config.l2_model,
            l2_prompt=config.l2_prompt,
        )
        return params

    raise InputError(f"unknown baseline kind {kind!r}; use {CONSTANT!r} or {PROMPT_SPECIFIC!r}")
