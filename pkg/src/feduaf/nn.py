"""From-scratch dense network numerics: forward, dropout, backprop, Adam.

Networks are small MLPs over float64 numpy arrays. Dropout is inverted
(train mode scales kept units by 1/keep so eval needs no rescaling) and is
applied after every relu activation; identity layers are plain affine maps.
Backprop is hand-derived for this fixed layer structure and checked against
finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exceptions import ConfigError, NumericError, ShapeError, StateError
from .rng import Rng

RELU = "relu"
IDENTITY = "identity"
TRAIN = "train"
EVAL = "eval"


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def validate(self):
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != out_dim {self.weights.shape[0]}"
            )
        if self.activation not in (RELU, IDENTITY):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericError("layer parameters contain non-finite entries")


@dataclass
class Mlp:
    layers: list[DenseLayer]
    dropout_rate: float = 0.0

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def validate(self):
        if not self.layers:
            raise ConfigError("Mlp needs at least one layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for layer in self.layers:
            layer.validate()
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [w0, b0, w1, b1, ...]; views, not copies."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out


def init_mlp(dims, rng: Rng, dropout_rate: float = 0.0, activations=None) -> Mlp:
    """Build an MLP with Glorot-uniform weights and zero biases.

    `dims` is [in, hidden..., out]; default activations are relu on every
    layer except an identity last layer.
    """
    if len(dims) < 2:
        raise ConfigError("dims needs at least an input and an output size")
    n_layers = len(dims) - 1
    if activations is None:
        activations = [RELU] * (n_layers - 1) + [IDENTITY]
    if len(activations) != n_layers:
        raise ConfigError("one activation per layer required")
    layers = []
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), activations[i]))
    mlp = Mlp(layers, dropout_rate)
    mlp.validate()
    return mlp


@dataclass
class Tape:
    """Activation record from one forward call, consumed by backward."""

    mlp_id: int
    mode: str
    single: bool  # input was 1-D
    inputs: list = field(default_factory=list)  # per-layer input (B, in_dim)
    preacts: list = field(default_factory=list)  # per-layer z (B, out_dim)
    masks: list = field(default_factory=list)  # bool dropout mask or None
    keep: float = 1.0


def _as_batch(x: np.ndarray, dim: int, what: str):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} has shape {x.shape}, expected (*, {dim})")
    return x, single


def forward(mlp: Mlp, x: np.ndarray, mode: str = EVAL, rng: Rng | None = None):
    """Run the MLP on a vector or batch; returns (output, tape).

    Train mode draws fresh inverted-dropout masks from `rng` after each relu
    (no draw when dropout_rate is 0, so rate-0 train equals eval exactly).
    Eval mode is deterministic and consumes no randomness.
    """
    if mode not in (TRAIN, EVAL):
        raise ConfigError(f"mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")
    a, single = _as_batch(x, mlp.in_dim, "input")
    if not np.isfinite(a).all():
        raise NumericError("non-finite values in forward input")
    use_dropout = mode == TRAIN and mlp.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ConfigError("train-mode forward with dropout requires an rng")
    keep = 1.0 - mlp.dropout_rate
    tape = Tape(mlp_id=id(mlp), mode=mode, single=single, keep=keep)
    for layer in mlp.layers:
        z = a @ layer.weights.T + layer.bias
        tape.inputs.append(a)
        tape.preacts.append(z)
        if layer.activation == RELU:
            if use_dropout:
                mask = rng.random(z.shape) < keep
                a = kernels.relu_dropout_forward(z, mask, keep)
                tape.masks.append(mask)
            else:
                a = kernels.relu_forward(z)
                tape.masks.append(None)
        else:
            a = z
            tape.masks.append(None)
    return (a[0] if single else a), tape


@dataclass
class MlpGradients:
    layers: list  # per layer (d_weights, d_bias)
    input_grad: np.ndarray

    def flat_list(self) -> list[np.ndarray]:
        out = []
        for dw, db in self.layers:
            out.append(dw)
            out.append(db)
        return out


def backward(mlp: Mlp, tape: Tape, loss_grad: np.ndarray) -> MlpGradients:
    """Backprop the loss gradient through a taped forward pass.

    Dropout masks recorded on the tape are respected: dropped units pass no
    gradient. Returns per-parameter gradients plus the gradient w.r.t. the
    forward input (used to chain encoders through fusion).
    """
    if tape.mlp_id != id(mlp):
        raise StateError("tape was produced by a different network")
    if len(tape.preacts) != len(mlp.layers):
        raise StateError("tape layer count does not match network")
    g, _ = _as_batch(loss_grad, mlp.out_dim, "loss_grad")
    if g.shape[0] != tape.preacts[-1].shape[0]:
        raise ShapeError("loss_grad batch size does not match tape")
    layer_grads = [None] * len(mlp.layers)
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        z = tape.preacts[i]
        if layer.activation == RELU:
            mask = tape.masks[i]
            if mask is not None:
                gz = kernels.relu_dropout_backward(g, z, mask, tape.keep)
            else:
                gz = kernels.relu_backward(g, z)
        else:
            gz = g
        dw = gz.T @ tape.inputs[i]
        db = gz.sum(axis=0)
        layer_grads[i] = (dw, db)
        g = gz @ layer.weights
    input_grad = g[0] if tape.single else g
    return MlpGradients(layers=layer_grads, input_grad=input_grad)


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def init_for(cls, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps_adam: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            step_count=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps_adam=eps_adam,
        )

    def to_dict(self) -> dict:
        return {
            "first_moment": [m.tolist() for m in self.first_moment],
            "second_moment": [v.tolist() for v in self.second_moment],
            "shapes": [list(m.shape) for m in self.first_moment],
            "step_count": self.step_count,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps_adam": self.eps_adam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        first = [np.array(m, dtype=np.float64).reshape(s)
                 for m, s in zip(d["first_moment"], d["shapes"])]
        second = [np.array(v, dtype=np.float64).reshape(s)
                  for v, s in zip(d["second_moment"], d["shapes"])]
        return cls(first, second, d["step_count"], d["lr"], d["beta1"],
                   d["beta2"], d["eps_adam"])


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam step, updating `params` and `state` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state length mismatch")
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
        if not p.flags["C_CONTIGUOUS"]:
            raise ShapeError("adam_step requires C-contiguous parameter arrays")
    state.step_count += 1
    # bias corrections computed here so numba and numpy kernels see the
    # same float values (their pow routines can differ by one ulp)
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        kernels.adam_update(
            p.ravel(), np.ascontiguousarray(g, dtype=np.float64).ravel(),
            m.ravel(), v.ravel(),
            bc1, bc2, state.lr, state.beta1, state.beta2, state.eps_adam,
        )
    return params, state


def mse_loss(pred: float, label: float):
    """Squared error and its gradient w.r.t. the prediction."""
    if not (np.isfinite(pred) and np.isfinite(label)):
        raise NumericError("mse_loss requires finite inputs")
    diff = pred - label
    return diff * diff, 2.0 * diff


def mse_loss_batch(preds: np.ndarray, labels: np.ndarray):
    """Mean squared error over a batch and the per-prediction gradient."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ShapeError(f"preds {preds.shape} vs labels {labels.shape}")
    if not (np.isfinite(preds).all() and np.isfinite(labels).all()):
        raise NumericError("mse_loss_batch requires finite inputs")
    diff = preds - labels
    n = preds.shape[0]
    return float(diff @ diff) / n, 2.0 * diff / n
