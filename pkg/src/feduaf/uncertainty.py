"""Prediction-level uncertainty from stochastic forward passes.

Uncertainty is the spread of T dropout-enabled predictions: population
variance for regression, entropy of the mean probability vector for
classification. Per-modality uncertainty probes each available channel on
its own through the encoder and heads; the fused uncertainty runs the whole
pipeline under the fusion weights those probes imply. This is a stability
signal, not a Bayesian posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .datagen import batch_from_samples
from .exceptions import ConfigError, DegenerateInputError, NumericError, ValidationError
from .fusion import MODALITIES, fusion_weights_batch
from .model import ModelParams, fused_mc_predictions, probe_predictions
from .rng import Rng

PROB_SUM_TOL = 1e-6


@dataclass
class UncertaintyEstimate:
    per_modality: dict  # modality -> u_m, available modalities only
    fused: float
    passes: int

    def validate(self):
        if self.passes < 2:
            raise ConfigError("uncertainty needs at least 2 passes")
        values = list(self.per_modality.values()) + [self.fused]
        arr = np.array(values, dtype=np.float64)
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise NumericError("uncertainties must be finite and non-negative")


def variance_uncertainty(preds) -> float:
    """Population variance (divide by T) of a list of scalar predictions."""
    arr = np.asarray(preds, dtype=np.float64).ravel()
    if arr.shape[0] < 2:
        raise ConfigError("variance needs at least 2 predictions")
    return float(kernels.population_variance(np.ascontiguousarray(arr[:, None]))[0])


def entropy_uncertainty(probs_per_pass) -> float:
    """Shannon entropy (natural log) of the mean probability vector.

    Each pass must be a normalized probability vector; 0*log(0) counts as 0.
    """
    mat = np.asarray(probs_per_pass, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ValidationError("need at least one probability vector")
    if (mat < 0).any():
        raise ValidationError("probabilities must be non-negative")
    sums = mat.sum(axis=1)
    if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
        raise ValidationError("each probability vector must sum to 1 within 1e-6")
    mean = mat.mean(axis=0)
    nz = mean > 0.0
    return float(-(mean[nz] * np.log(mean[nz])).sum())


def _check_sample_inputs(mask: np.ndarray, T: int):
    if T < 2:
        raise ConfigError(f"uncertainty passes must be >= 2, got {T}")
    if not mask.any():
        raise DegenerateInputError("sample has no available modality")


def probe_uncertainties(model: ModelParams, feats: dict, mask: np.ndarray,
                        T: int, rng: Rng) -> np.ndarray:
    """Per-modality probe variances for a batch; (B, 3), NaN where missing.

    For each modality with any available sample, runs T single-modality
    stochastic passes and takes the per-sample population variance.
    """
    mask = np.asarray(mask, dtype=bool)
    b = mask.shape[0]
    u = np.full((b, len(MODALITIES)), np.nan)
    for mi, m in enumerate(MODALITIES):
        if not mask[:, mi].any():
            continue
        preds = probe_predictions(model, m, feats[m], T, rng)
        u[:, mi] = kernels.population_variance(np.ascontiguousarray(preds))
    u[~mask] = np.nan
    return u


def fused_uncertainties(model: ModelParams, feats: dict, alpha: np.ndarray,
                        T: int, rng: Rng) -> np.ndarray:
    """Per-sample population variance of T fused stochastic passes; (B,)."""
    preds = fused_mc_predictions(model, feats, alpha, T, rng)
    return kernels.population_variance(np.ascontiguousarray(preds))


def mc_predict(model: ModelParams, sample, T: int, rng: Rng) -> list:
    """T stochastic full-pipeline predictions for one sample.

    Fusion weights come from a fresh probe round; each of the T passes then
    draws its own dropout masks through encoders and heads.
    """
    feats, mask, _ = batch_from_samples([sample], model.feature_dims())
    _check_sample_inputs(mask, T)
    u = probe_uncertainties(model, feats, mask, T, rng)
    alpha = fusion_weights_batch(u, mask)
    preds = fused_mc_predictions(model, feats, alpha, T, rng)
    return [float(p) for p in preds[:, 0]]


def modality_uncertainties(model: ModelParams, sample, T: int, rng: Rng) -> UncertaintyEstimate:
    """Per-modality and fused uncertainty for one sample."""
    feats, mask, _ = batch_from_samples([sample], model.feature_dims())
    _check_sample_inputs(mask, T)
    u = probe_uncertainties(model, feats, mask, T, rng)
    alpha = fusion_weights_batch(u, mask)
    fused_preds = fused_mc_predictions(model, feats, alpha, T, rng)
    fused = float(kernels.population_variance(np.ascontiguousarray(fused_preds))[0])
    per_modality = {
        m: float(u[0, mi]) for mi, m in enumerate(MODALITIES) if mask[0, mi]
    }
    est = UncertaintyEstimate(per_modality=per_modality, fused=fused, passes=T)
    est.validate()
    return est
