"""Multimodal model bundle and its fused forward/backward pipeline.

A bundle holds one encoder per modality, a shared representation head (the
only block the federation exchanges by default), and a client-specific
scalar prediction head. Fusion weights enter the forward pass as constants
(stop-gradient): the backward pass scales each modality's representation
gradient by its weight and never differentiates through the weights
themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .fusion import MODALITIES
from .nn import EVAL, IDENTITY, RELU, TRAIN, Mlp, Tape, backward, forward, init_mlp
from .rng import Rng
from .serialize import assign_mlp_tensors, mlp_tensors


@dataclass
class ModelParams:
    encoders: dict  # modality -> Mlp
    shared_head: Mlp
    prediction_head: Mlp

    def validate(self):
        if set(self.encoders) != set(MODALITIES):
            raise ShapeError(f"encoders must cover exactly {MODALITIES}")
        fusion_dim = self.shared_head.in_dim
        for m, enc in self.encoders.items():
            enc.validate()
            if enc.out_dim != fusion_dim:
                raise ShapeError(
                    f"encoder {m!r} output dim {enc.out_dim} != fusion dim {fusion_dim}"
                )
        self.shared_head.validate()
        self.prediction_head.validate()
        if self.shared_head.out_dim != self.prediction_head.in_dim:
            raise ShapeError("shared head output does not feed prediction head")
        if self.prediction_head.out_dim != 1:
            raise ShapeError("prediction head must output a scalar")

    def components(self) -> list:
        """Canonical (name, Mlp) order used for parameter/gradient lists."""
        out = [(f"encoder.{m}", self.encoders[m]) for m in MODALITIES]
        out.append(("shared_head", self.shared_head))
        out.append(("prediction_head", self.prediction_head))
        return out

    def feature_dims(self) -> dict:
        return {m: self.encoders[m].in_dim for m in MODALITIES}


def init_model_params(feature_dims: dict, hidden_dim: int, fusion_dim: int,
                      dropout_rate: float, rng: Rng) -> ModelParams:
    encoders = {
        m: init_mlp([feature_dims[m], hidden_dim, fusion_dim],
                    rng.derive("encoder", m), dropout_rate,
                    activations=[RELU, IDENTITY])
        for m in MODALITIES
    }
    shared = init_mlp([fusion_dim, hidden_dim], rng.derive("shared_head"),
                      dropout_rate, activations=[RELU])
    pred = init_mlp([hidden_dim, 1], rng.derive("prediction_head"), 0.0,
                    activations=[IDENTITY])
    model = ModelParams(encoders, shared, pred)
    model.validate()
    return model


def trainable_params(model: ModelParams) -> list:
    """Flat list of parameter arrays in canonical component order (views)."""
    out = []
    for _, mlp in model.components():
        out.extend(mlp.parameters())
    return out


def shared_components(model: ModelParams, share_encoders: bool = False) -> list:
    """(name, Mlp) pairs that constitute the exchanged parameter block."""
    out = []
    if share_encoders:
        out.extend((f"encoder.{m}", model.encoders[m]) for m in MODALITIES)
    out.append(("shared_head", model.shared_head))
    return out


def extract_shared(model: ModelParams, share_encoders: bool = False) -> list:
    """Copy the exchanged block out as named tensors."""
    tensors = []
    for name, mlp in shared_components(model, share_encoders):
        tensors.extend(mlp_tensors(name, mlp))
    return tensors


def assign_shared(model: ModelParams, tensors: list, share_encoders: bool = False):
    """Copy named tensors into the exchanged block of this bundle."""
    mapping = dict(tensors)
    for name, mlp in shared_components(model, share_encoders):
        assign_mlp_tensors(name, mlp, mapping)


@dataclass
class FusedTape:
    """Records of one fused forward pass, consumed by backward_fused."""

    encoder_tapes: dict  # modality -> Tape
    shared_tape: Tape
    pred_tape: Tape
    alpha: np.ndarray  # (B, 3)


def forward_fused(model: ModelParams, feats: dict, alpha: np.ndarray,
                  mode: str = EVAL, rng: Rng | None = None):
    """Full pipeline on a batch: encoders -> weighted fusion -> heads.

    `feats[m]` is (B, d_m) with zero rows where the modality is missing;
    `alpha` is (B, 3) in v/a/t order and is treated as constant. Returns
    (predictions (B,), tape).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    enc_tapes = {}
    fused = None
    for mi, m in enumerate(MODALITIES):
        rep, tape = forward(model.encoders[m], feats[m], mode, rng)
        enc_tapes[m] = tape
        contrib = alpha[:, mi:mi + 1] * rep
        fused = contrib if fused is None else fused + contrib
    s, shared_tape = forward(model.shared_head, fused, mode, rng)
    out, pred_tape = forward(model.prediction_head, s, mode, rng)
    return out[:, 0], FusedTape(enc_tapes, shared_tape, pred_tape, alpha)


def backward_fused(model: ModelParams, tape: FusedTape, dpreds: np.ndarray) -> list:
    """Gradients for one fused pass, flat in canonical component order.

    Fusion weights act as constants: each encoder sees its representation
    gradient scaled by alpha_m (zero for missing/zero-weight samples).
    """
    dpreds = np.asarray(dpreds, dtype=np.float64)
    g_pred = backward(model.prediction_head, tape.pred_tape, dpreds[:, None])
    g_shared = backward(model.shared_head, tape.shared_tape, g_pred.input_grad)
    dh = g_shared.input_grad  # (B, fusion_dim)
    grads = []
    for mi, m in enumerate(MODALITIES):
        d_rep = tape.alpha[:, mi:mi + 1] * dh
        g_enc = backward(model.encoders[m], tape.encoder_tapes[m], d_rep)
        grads.extend(g_enc.flat_list())
    grads.extend(g_shared.flat_list())
    grads.extend(g_pred.flat_list())
    return grads


def probe_predictions(model: ModelParams, modality: str, x: np.ndarray,
                      T: int, rng: Rng) -> np.ndarray:
    """T stochastic single-modality passes; returns (T, B) predictions.

    Routes only `modality` through its encoder and the heads (fusion weight
    1 on that channel), with fresh dropout masks on every pass.
    """
    x = np.asarray(x, dtype=np.float64)
    tiled = np.tile(x, (T, 1))
    rep, _ = forward(model.encoders[modality], tiled, TRAIN, rng)
    s, _ = forward(model.shared_head, rep, TRAIN, rng)
    out, _ = forward(model.prediction_head, s, TRAIN, rng)
    return out[:, 0].reshape(T, x.shape[0])


def fused_mc_predictions(model: ModelParams, feats: dict, alpha: np.ndarray,
                         T: int, rng: Rng) -> np.ndarray:
    """T stochastic full-pipeline passes with fixed fusion weights; (T, B)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    b = alpha.shape[0]
    tiled_feats = {m: np.tile(np.asarray(feats[m], dtype=np.float64), (T, 1))
                   for m in MODALITIES}
    tiled_alpha = np.tile(alpha, (T, 1))
    preds, _ = forward_fused(model, tiled_feats, tiled_alpha, TRAIN, rng)
    return preds.reshape(T, b)


def predict_eval(model: ModelParams, feats: dict, alpha: np.ndarray) -> np.ndarray:
    """Deterministic eval-mode prediction under given fusion weights; (B,)."""
    preds, _ = forward_fused(model, feats, alpha, EVAL, None)
    return preds
