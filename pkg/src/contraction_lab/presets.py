"""Named model and study configurations used by the CLI, scripts and tests."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .harness import Axis, StudyConfig
from .model_zoo import ModelKind, ModelSpec, parse_kind

# sampler budget for desk-scale studies; see the README for the runtime table
STUDY_DIFFUSION = {"n_steps": 4000, "burn_in": 2000, "n_chains": 4}


def default_model(kind, d: int, p: int = 2) -> ModelSpec:
    """Logistic: ``theta* = 1/sqrt(d)`` per coordinate; singular models at ``theta* = 0``;
    the calibration model at the origin."""
    kind = parse_kind(kind)
    if kind is ModelKind.LOGISTIC:
        return ModelSpec(kind, d, tuple(np.full(d, 1.0 / math.sqrt(d))))
    if kind is ModelKind.SINGLE_INDEX:
        return ModelSpec.at_origin(kind, d, p)
    if kind is ModelKind.OVERSPEC_GMM:
        return ModelSpec.at_origin(kind, d)
    return ModelSpec(kind, d, tuple(np.zeros(d)))


def logistic_rate_study(trials: int = 20, master_seed: int = 2024) -> StudyConfig:
    return StudyConfig(
        model=default_model("logistic", 5),
        grid=(250, 500, 1000, 2000, 4000, 8000),
        trials=trials,
        diffusion=STUDY_DIFFUSION,
        master_seed=master_seed,
        acceptance_grade=trials >= 5,
    )


def single_index_rate_study(trials: int = 20, master_seed: int = 2024) -> StudyConfig:
    return StudyConfig(
        model=default_model("single_index", 4, 2),
        grid=(500, 1000, 2000, 4000, 8000, 16000),
        trials=trials,
        diffusion=STUDY_DIFFUSION,
        master_seed=master_seed,
        acceptance_grade=trials >= 5,
    )


def gmm_rate_study(trials: int = 20, master_seed: int = 2024) -> StudyConfig:
    return StudyConfig(
        model=default_model("gmm", 4),
        grid=(500, 1000, 2000, 4000, 8000, 16000, 32000),
        trials=trials,
        diffusion=STUDY_DIFFUSION,
        master_seed=master_seed,
        acceptance_grade=trials >= 5,
    )


def gmm_dimension_study(trials: int = 20, master_seed: int = 2024) -> StudyConfig:
    return StudyConfig(
        model=default_model("gmm", 2),
        axis=Axis.DIMENSION,
        grid=(2, 4, 8, 16, 32),
        n_fixed=4000,
        trials=trials,
        diffusion=STUDY_DIFFUSION,
        master_seed=master_seed,
        acceptance_grade=trials >= 5,
    )


def calibration_study(trials: int = 5, master_seed: int = 2024) -> StudyConfig:
    """Conjugate Gaussian model, d=3, single cell at n=1000 with the default sampler budget."""
    return StudyConfig(
        model=default_model("gaussian_location", 3),
        grid=(1000,),
        trials=trials,
        master_seed=master_seed,
    )


STUDIES = {
    "logistic": logistic_rate_study,
    "single_index": single_index_rate_study,
    "gmm": gmm_rate_study,
    "gmm_dimension": gmm_dimension_study,
    "calibration": calibration_study,
}


def preset_study(name: str, **kwargs) -> StudyConfig:
    key = name.replace("-", "_").lower()
    if key not in STUDIES:
        raise ConfigurationError(f"unknown study preset {name!r}; choose from {sorted(STUDIES)}")
    return STUDIES[key](**kwargs)
