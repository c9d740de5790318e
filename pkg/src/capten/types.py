"""Domain types: raters, subjects, observations, datasets, and parameters.

All types are immutable after construction; numpy arrays they hold are
marked read-only. Index conventions: models in [0, I), prompts in [0, J),
raters in [0, K) with rater 0 reserved for the human rater.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NumericalError

HUMAN_RATER = 0


class Template(str, enum.Enum):
    """Evaluation template: score one model, or compare two side by side."""

    POINTWISE = "pointwise"
    PAIRWISE = "pairwise"


class CIMode(str, enum.Enum):
    POINTWISE = "pointwise"
    SIMULTANEOUS = "simultaneous"


class Verdict(str, enum.Enum):
    FIRST_BETTER = "first_better"
    SECOND_BETTER = "second_better"
    INDISTINGUISHABLE = "indistinguishable"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, order="C")
    out.setflags(write=False)
    return out


def _freeze_int(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.int64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RaterSpec:
    """One rater: its index, template type, and ordered-category count."""

    rater_id: int
    template: Template
    num_categories: int

    def __post_init__(self):
        if self.num_categories < 2:
            raise InputError(f"rater {self.rater_id}: need >= 2 categories, got {self.num_categories}")
        if self.rater_id < 0:
            raise InputError(f"negative rater id {self.rater_id}")


@dataclass(frozen=True)
class Subject:
    """One model (single-sided) or an ordered model pair (side-by-side)."""

    models: tuple[int, ...]

    @classmethod
    def single(cls, model_id: int) -> "Subject":
        return cls((int(model_id),))

    @classmethod
    def pair(cls, model_0: int, model_1: int) -> "Subject":
        return cls((int(model_0), int(model_1)))

    def __post_init__(self):
        if len(self.models) not in (1, 2):
            raise InputError(f"subject must hold 1 or 2 model ids, got {len(self.models)}")
        if any(m < 0 for m in self.models):
            raise InputError(f"negative model id in subject {self.models}")
        if len(self.models) == 2 and self.models[0] == self.models[1]:
            raise InputError(f"pair subject with identical models {self.models}")

    @property
    def is_pair(self) -> bool:
        return len(self.models) == 2


@dataclass(frozen=True)
class Observation:
    """One labeled evaluation event."""

    subject: Subject
    prompt_id: int
    rater_id: int
    label: int


class Dataset:
    """A validated collection of observations with fixed dimensions.

    Stores the observations in flat arrays for vectorized likelihood work:
    ``first_model``/``second_model`` (second is -1 for single-sided rows),
    ``prompt_ids``, ``rater_ids``, ``labels``.
    """

    def __init__(
        self,
        observations: Iterable[Observation],
        dims: tuple[int, int, int],
        rater_specs: Sequence[RaterSpec],
        provenance: dict | None = None,
    ):
        obs = list(observations)
        first = np.array([o.subject.models[0] for o in obs], dtype=np.int64)
        second = np.array(
            [o.subject.models[1] if o.subject.is_pair else -1 for o in obs], dtype=np.int64
        )
        prompts = np.array([o.prompt_id for o in obs], dtype=np.int64)
        raters = np.array([o.rater_id for o in obs], dtype=np.int64)
        labels = np.array([o.label for o in obs], dtype=np.int64)
        self._init_from_arrays(first, second, prompts, raters, labels, dims, rater_specs, provenance)

    @classmethod
    def from_arrays(
        cls,
        first_model,
        second_model,
        prompt_ids,
        rater_ids,
        labels,
        dims: tuple[int, int, int],
        rater_specs: Sequence[RaterSpec],
        provenance: dict | None = None,
    ) -> "Dataset":
        self = cls.__new__(cls)
        self._init_from_arrays(
            np.asarray(first_model, dtype=np.int64),
            np.asarray(second_model, dtype=np.int64),
            np.asarray(prompt_ids, dtype=np.int64),
            np.asarray(rater_ids, dtype=np.int64),
            np.asarray(labels, dtype=np.int64),
            dims,
            rater_specs,
            provenance,
        )
        return self

    def _init_from_arrays(self, first, second, prompts, raters, labels, dims, rater_specs, provenance):
        n_models, n_prompts, n_raters = (int(d) for d in dims)
        specs = tuple(rater_specs)
        if len(specs) != n_raters:
            raise InputError(f"dims claim {n_raters} raters but {len(specs)} specs given")
        for k, spec in enumerate(specs):
            if spec.rater_id != k:
                raise InputError(f"rater spec {k} carries id {spec.rater_id}; specs must be in order")
        n = len(labels)
        if not (len(first) == len(second) == len(prompts) == len(raters) == n):
            raise InputError("observation arrays have inconsistent lengths")

        if n > 0:
            self._check_ranges(first, second, prompts, raters, labels, n_models, n_prompts, n_raters, specs)

        self.first_model = _freeze_int(first)
        self.second_model = _freeze_int(second)
        self.prompt_ids = _freeze_int(prompts)
        self.rater_ids = _freeze_int(raters)
        self.labels = _freeze_int(labels)
        self.dims = (n_models, n_prompts, n_raters)
        self.rater_specs = specs
        self.provenance = dict(provenance) if provenance else {}

    @staticmethod
    def _check_ranges(first, second, prompts, raters, labels, n_models, n_prompts, n_raters, specs):
        def first_bad(mask, what):
            if mask.any():
                idx = int(np.argmax(mask))
                raise InputError(f"observation {idx}: {what}")

        first_bad((raters < 0) | (raters >= n_raters), "rater id out of range")
        first_bad((prompts < 0) | (prompts >= n_prompts), "prompt id out of range")
        first_bad((first < 0) | (first >= n_models), "model id out of range")
        is_pair = second >= 0
        first_bad(is_pair & (second >= n_models), "second model id out of range")
        first_bad(is_pair & (first == second), "pair with identical models")

        templates = np.array([s.template == Template.PAIRWISE for s in specs])
        cats = np.array([s.num_categories for s in specs])
        first_bad(is_pair != templates[raters], "subject variant does not match rater template")
        first_bad((labels < 0) | (labels >= cats[raters]), "label out of range for rater")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_models(self) -> int:
        return self.dims[0]

    @property
    def n_prompts(self) -> int:
        return self.dims[1]

    @property
    def n_raters(self) -> int:
        return self.dims[2]

    def subset(self, mask: np.ndarray) -> "Dataset":
        """New Dataset holding the masked rows; dims and specs unchanged."""
        return Dataset.from_arrays(
            self.first_model[mask],
            self.second_model[mask],
            self.prompt_ids[mask],
            self.rater_ids[mask],
            self.labels[mask],
            self.dims,
            self.rater_specs,
            self.provenance,
        )

    def human_slice(self) -> "Dataset":
        return self.subset(self.rater_ids == HUMAN_RATER)

    def autorater_slice(self) -> "Dataset":
        return self.subset(self.rater_ids != HUMAN_RATER)

    def observations(self) -> list[Observation]:
        out = []
        for f, s, j, k, y in zip(
            self.first_model, self.second_model, self.prompt_ids, self.rater_ids, self.labels
        ):
            subj = Subject.pair(f, s) if s >= 0 else Subject.single(f)
            out.append(Observation(subj, int(j), int(k), int(y)))
        return out


@dataclass(frozen=True)
class FactorParams:
    """Full parameter set: factor loadings plus per-rater cutoff structure.

    Cutoffs are stored as a base (the first cutoff) plus strictly positive
    gaps, so the derived cutoff sequence is increasing by construction.
    ``cutoff_gaps[k]`` has length C_k - 2.
    """

    model_loadings: np.ndarray  # (I, R)
    prompt_loadings: np.ndarray  # (J, R)
    rater_loadings: np.ndarray  # (K, R)
    base_cutoffs: np.ndarray  # (K,)
    cutoff_gaps: tuple[np.ndarray, ...]  # per rater, length C_k - 2
    rank: int
    fine_tuned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model_loadings", _freeze(self.model_loadings))
        object.__setattr__(self, "prompt_loadings", _freeze(self.prompt_loadings))
        object.__setattr__(self, "rater_loadings", _freeze(self.rater_loadings))
        object.__setattr__(self, "base_cutoffs", _freeze(self.base_cutoffs))
        object.__setattr__(self, "cutoff_gaps", tuple(_freeze(g) for g in self.cutoff_gaps))
        if self.rank < 1:
            raise InputError(f"rank must be >= 1, got {self.rank}")
        i_r = self.model_loadings.shape
        j_r = self.prompt_loadings.shape
        k_r = self.rater_loadings.shape
        if len(i_r) != 2 or len(j_r) != 2 or len(k_r) != 2:
            raise InputError("loading matrices must be 2-D")
        if not (i_r[1] == j_r[1] == k_r[1] == self.rank):
            raise InputError(f"loading widths {i_r[1]},{j_r[1]},{k_r[1]} disagree with rank {self.rank}")
        if self.base_cutoffs.shape != (k_r[0],):
            raise InputError("need one base cutoff per rater")
        if len(self.cutoff_gaps) != k_r[0]:
            raise InputError("need one gap vector per rater")
        for k, gaps in enumerate(self.cutoff_gaps):
            if gaps.size and gaps.min() <= 0:
                raise InputError(f"rater {k}: nonpositive cutoff gap")

    @property
    def n_models(self) -> int:
        return self.model_loadings.shape[0]

    @property
    def n_prompts(self) -> int:
        return self.prompt_loadings.shape[0]

    @property
    def n_raters(self) -> int:
        return self.rater_loadings.shape[0]

    def num_categories(self, rater_id: int) -> int:
        return len(self.cutoff_gaps[rater_id]) + 2

    def cutoffs(self, rater_id: int) -> np.ndarray:
        """Increasing cutoff vector for one rater, length C_k - 1."""
        base = float(self.base_cutoffs[rater_id])
        gaps = self.cutoff_gaps[rater_id]
        return np.concatenate(([base], base + np.cumsum(gaps)))

    def replace(self, **kwargs) -> "FactorParams":
        fields = dict(
            model_loadings=self.model_loadings,
            prompt_loadings=self.prompt_loadings,
            rater_loadings=self.rater_loadings,
            base_cutoffs=self.base_cutoffs,
            cutoff_gaps=self.cutoff_gaps,
            rank=self.rank,
            fine_tuned=self.fine_tuned,
        )
        fields.update(kwargs)
        return FactorParams(**fields)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Asymptotic covariance of the human-rater embedding estimate."""

    sigma_hat: np.ndarray  # (R, R)
    m: int  # human observations behind the estimate
    includes_cutoffs: bool = False  # True if cutoff rows were NOT marginalized out
    unreliable: bool = False  # set when m < number of fitted parameters

    def __post_init__(self):
        sig = np.asarray(self.sigma_hat, dtype=float)
        if sig.ndim != 2 or sig.shape[0] != sig.shape[1]:
            raise InputError("sigma_hat must be square")
        if not np.allclose(sig, sig.T, atol=1e-8):
            raise NumericalError("sigma_hat is not symmetric within 1e-8")
        eigs = np.linalg.eigvalsh((sig + sig.T) / 2.0)
        if eigs.min() < -1e-8:
            raise NumericalError(f"sigma_hat has negative eigenvalue {eigs.min():.3e}")
        if self.m < 1:
            raise InputError(f"m must be >= 1, got {self.m}")
        object.__setattr__(self, "sigma_hat", _freeze(sig))

    @property
    def rank(self) -> int:
        return self.sigma_hat.shape[0]


@dataclass(frozen=True)
class IntervalEstimate:
    """A point estimate with calibrated lower/upper bounds.

    ``calibration_constant`` is the Monte Carlo max-statistic quantile for
    simultaneous intervals, or the Gaussian quantile used for pointwise ones.
    ``first_stage_exact`` records the working assumption that stage-1
    estimation error is neglected.
    """

    point: float
    lower: float
    upper: float
    level: float
    mode: CIMode
    calibration_constant: float
    degenerate: bool = False
    first_stage_exact: bool = True

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise InputError(f"level must be in (0,1), got {self.level}")
        if not (self.lower <= self.point <= self.upper):
            raise NumericalError(
                f"interval ordering violated: {self.lower} <= {self.point} <= {self.upper}"
            )

    @property
    def half_width(self) -> float:
        return (self.upper - self.lower) / 2.0

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class CompositeResult:
    """Reference composite of a prompt set: direction, cohesion, spectrum."""

    direction: np.ndarray  # unit vector, length R
    cohesion: float
    eigenvalues: np.ndarray  # nonincreasing, length R
    tied: bool = False  # leading eigenvalue tied within tolerance

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        ev = np.asarray(self.eigenvalues, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-10:
            raise NumericalError("composite direction is not a unit vector within 1e-10")
        if np.any(np.diff(ev) > 1e-12):
            raise NumericalError("eigenvalues must be nonincreasing")
        total = ev.sum()
        if total > 0 and abs(self.cohesion - ev[0] / total) > 1e-10:
            raise NumericalError("cohesion does not match leading eigenvalue share")
        object.__setattr__(self, "direction", _freeze(d))
        object.__setattr__(self, "eigenvalues", _freeze(ev))
