"""Relaxed flow sampling toolkit.

Thin Python layer over the C++ core: oracle flow fields for Gaussian
mixtures, Gaussian field relaxation, logit blur, soft visibility, the
alpha schedule, optimal-transport metrics and the experiment runner.
"""

import json as _json

from ._core import (
    ConfigError,
    GaussianMixture,
    NumericError,
    alpha_schedule,
    alphas,
    band_energy,
    blur_logits,
    estimate_lipschitz,
    frechet_distance,
    kernel_size,
    relax_field,
    relaxed_attention,
    scenario_names,
    soft_visibility,
    visibility_blend,
    wasserstein2_exact,
    wasserstein2_gaussian_1d,
)
from . import _core

__all__ = [
    "ConfigError",
    "GaussianMixture",
    "NumericError",
    "alpha_schedule",
    "alphas",
    "band_energy",
    "blur_logits",
    "compute_visibility",
    "default_config",
    "estimate_lipschitz",
    "frechet_distance",
    "kernel_size",
    "relax_field",
    "relaxed_attention",
    "run_experiment",
    "scenario_names",
    "soft_visibility",
    "visibility_blend",
    "wasserstein2_exact",
    "wasserstein2_gaussian_1d",
]


def default_config(scenario):
    """Full default config of a scenario as a dict."""
    return _json.loads(_core._default_config(scenario))


def run_experiment(config):
    """Runs a scenario config (dict, merged over its defaults) and returns the report dict."""
    return _json.loads(_core._run_experiment(_json.dumps(config)))


def compute_visibility(voxels, resolution, camera, beta=1.5, gamma=1.5, lam=3.0):
    """Soft visibility weights for occupied voxels (n x 3 integer indices).

    `camera` is a dict with intrinsics, rotation, scale, translation, width and height.
    """
    return _core._compute_visibility(voxels, resolution, _json.dumps(camera), beta, gamma, lam)
