"""Uncertainty-guided fusion of modality representations.

Fusion weights are a masked softmax over negative per-modality
uncertainties: low-uncertainty modalities get high weight, unavailable
modalities get exactly zero, and the weights of the available ones sum to
one. The fused representation is the convex combination of the modality
representations under those weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, ShapeError, StateError

log = logging.getLogger(__name__)

MODALITIES = ("v", "a", "t")
WEIGHT_SUM_TOL = 1e-9


@dataclass
class ModalityMask:
    """Per-sample availability bits for the v/a/t channels."""

    available: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.available) != set(MODALITIES):
            raise ShapeError(f"mask must cover exactly {MODALITIES}")
        self.available = {m: bool(self.available[m]) for m in MODALITIES}

    @classmethod
    def full(cls) -> "ModalityMask":
        return cls({m: True for m in MODALITIES})

    @classmethod
    def of(cls, *modalities) -> "ModalityMask":
        return cls({m: m in modalities for m in MODALITIES})

    def modalities(self) -> list:
        return [m for m in MODALITIES if self.available[m]]

    def count(self) -> int:
        return sum(self.available.values())

    def as_array(self) -> np.ndarray:
        return np.array([self.available[m] for m in MODALITIES], dtype=bool)


@dataclass
class FusionWeights:
    alpha: dict

    def __post_init__(self):
        self.alpha = {m: float(self.alpha.get(m, 0.0)) for m in MODALITIES}

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha[m] for m in MODALITIES])

    def validate(self, mask: ModalityMask):
        total = 0.0
        for m in MODALITIES:
            if mask.available[m]:
                total += self.alpha[m]
            elif self.alpha[m] != 0.0:
                raise StateError(f"unavailable modality {m!r} has nonzero weight")
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise StateError(f"weights sum to {total}, expected 1")


def _uncertainty_map(u) -> dict:
    # accept an UncertaintyEstimate-like object or a plain modality->u map
    return u.per_modality if hasattr(u, "per_modality") else dict(u)


def fusion_weights(u, mask: ModalityMask) -> FusionWeights:
    """Softmax of negative uncertainty over the available modalities.

    Unavailable modalities get weight exactly 0. An available modality with
    a non-finite uncertainty is treated as masked (fail-soft, logged); if
    that leaves nothing the input is degenerate.
    """
    u_map = _uncertainty_map(u)
    usable = []
    for m in mask.modalities():
        if m not in u_map:
            raise StateError(f"no uncertainty for available modality {m!r}")
        if not np.isfinite(u_map[m]):
            log.warning("non-finite uncertainty for modality %r; masking it", m)
            continue
        usable.append(m)
    if not usable:
        if not mask.modalities():
            raise DegenerateInputError("all modalities are masked")
        raise DegenerateInputError("no finite uncertainty among available modalities")
    neg = np.array([-float(u_map[m]) for m in usable])
    neg -= neg.max()  # overflow guard
    expd = np.exp(neg)
    w = expd / expd.sum()
    alpha = {m: 0.0 for m in MODALITIES}
    for m, wm in zip(usable, w):
        alpha[m] = float(wm)
    return FusionWeights(alpha)


def uniform_fusion_weights(mask: ModalityMask) -> FusionWeights:
    """Equal weight for every available modality (fusion ablation)."""
    mods = mask.modalities()
    if not mods:
        raise DegenerateInputError("all modalities are masked")
    w = 1.0 / len(mods)
    return FusionWeights({m: (w if m in mods else 0.0) for m in MODALITIES})


def fuse(reps: dict, alpha: FusionWeights) -> np.ndarray:
    """Convex combination h = sum_m alpha_m * h_m; zero-weight reps may be absent."""
    out = None
    for m in MODALITIES:
        w = alpha.alpha[m]
        if w == 0.0:
            continue
        if m not in reps:
            raise ShapeError(f"missing representation for weighted modality {m!r}")
        h = np.asarray(reps[m], dtype=np.float64)
        if out is None:
            out = w * h
        elif h.shape != out.shape:
            raise ShapeError("modality representations have mismatched shapes")
        else:
            out = out + w * h
    if out is None:
        raise DegenerateInputError("all fusion weights are zero")
    return out


# ----------------------------------------------------------- batched variants

def fusion_weights_batch(u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise masked softmax of -u; u and mask are (B, 3) in v/a/t order.

    Matches `fusion_weights` exactly per row. Non-finite uncertainties on
    available entries are masked out (fail-soft); rows with nothing usable
    raise.
    """
    u = np.asarray(u, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if u.shape != mask.shape or u.ndim != 2 or u.shape[1] != len(MODALITIES):
        raise ShapeError(f"expected (B, {len(MODALITIES)}) arrays, got {u.shape}")
    finite = np.isfinite(u)
    usable = mask & finite
    if not mask.any(axis=1).all():
        raise DegenerateInputError("a row has all modalities masked")
    if (mask & ~finite).any():
        log.warning("non-finite uncertainties present; masking those entries")
        if not usable.any(axis=1).all():
            raise DegenerateInputError("a row has no finite uncertainty available")
    neg = np.where(usable, -u, -np.inf)
    neg = neg - neg.max(axis=1, keepdims=True)
    expd = np.where(usable, np.exp(neg), 0.0)
    return expd / expd.sum(axis=1, keepdims=True)


def uniform_fusion_weights_batch(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1, keepdims=True)
    if (counts == 0).any():
        raise DegenerateInputError("a row has all modalities masked")
    return np.where(mask, 1.0, 0.0) / counts
