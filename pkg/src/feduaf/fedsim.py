"""Round-synchronous federated protocol engine.

Each round the server broadcasts the shared representation parameters,
selected clients train locally with uncertainty-guided fusion, upload the
(possibly perturbed) shared block plus a scalar reliability score, and the
server aggregates under the configured strategy. Client work is independent
given its derived rng stream, so parallel and serial execution are
bit-identical; aggregation always sums in sorted client order.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .datagen import (
    ClientData,
    FederationSpec,
    batch_from_samples,
    generate_federation,
    load_jsonl,
    mark_noisy_clients,
    split_dataset,
)
from .exceptions import ConfigError, NumericError, ProtocolError, ShapeError
from .fusion import fusion_weights_batch, uniform_fusion_weights_batch
from .model import (
    ModelParams,
    assign_shared,
    backward_fused,
    extract_shared,
    forward_fused,
    init_model_params,
    predict_eval,
    shared_components,
    trainable_params,
)
from .nn import TRAIN, AdamState, adam_step, mse_loss_batch
from .rng import Rng
from .uncertainty import fused_uncertainties, probe_uncertainties

RELIABILITY_WEIGHTED = "reliability_weighted"
UNIFORM = "uniform"
DATA_SIZE = "data_size"
FEDPROX = "fedprox"
STRATEGIES = (RELIABILITY_WEIGHTED, UNIFORM, DATA_SIZE, FEDPROX)


@dataclass
class ClientUpdate:
    client_id: str
    shared_params: list  # named tensors
    reliability: float
    num_samples: int


@dataclass
class LocalStats:
    batch_losses: list
    mean_loss: float
    mean_uncertainty: float


@dataclass
class RoundReport:
    round_index: int
    train_loss: dict  # client_id -> mean batch loss
    test_mae: float
    mean_reliability: float
    weights: dict  # client_id -> aggregation weight
    reliabilities: dict  # client_id -> r_k

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "train_loss": self.train_loss,
            "test_mae": self.test_mae,
            "mean_reliability": self.mean_reliability,
            "weights": self.weights,
            "reliabilities": self.reliabilities,
        }


@dataclass
class ClientRuntime:
    data: ClientData
    model: ModelParams


@dataclass
class FederationState:
    clients: list  # ClientRuntime, sorted by client_id
    shared: list  # current global named tensors
    round_index: int = 0
    reports: list = field(default_factory=list)


def effective_strategy(config) -> str:
    """Resolve the ablation flag: no RelAgg turns reliability weighting off."""
    if config.strategy == RELIABILITY_WEIGHTED and not config.ablation.rel_agg:
        return UNIFORM
    return config.strategy


# -------------------------------------------------------------- server math

def normalize_reliabilities(updates: list) -> np.ndarray:
    """Weights proportional to reliability, summing to 1."""
    if not updates:
        raise ProtocolError("no client updates to normalize")
    r = np.array([u.reliability for u in updates], dtype=np.float64)
    if not np.isfinite(r).all() or (r <= 0).any():
        raise ProtocolError("reliabilities must be finite and positive")
    return r / r.sum()


def aggregation_weights(updates: list, strategy: str) -> np.ndarray:
    if strategy == RELIABILITY_WEIGHTED:
        return normalize_reliabilities(updates)
    if strategy == UNIFORM:
        return np.full(len(updates), 1.0 / len(updates))
    if strategy in (DATA_SIZE, FEDPROX):
        n = np.array([u.num_samples for u in updates], dtype=np.float64)
        if (n <= 0).any():
            raise ProtocolError("num_samples must be positive for data-size weights")
        return n / n.sum()
    raise ConfigError(f"unknown aggregation strategy {strategy!r}")


def aggregate(updates: list, strategy: str) -> list:
    """Weighted average of uploaded blocks in sorted client order.

    The result is clamped to the coordinate-wise [min, max] of the uploads
    so the convex-combination guarantee survives float rounding.
    """
    if not updates:
        raise ProtocolError("cannot aggregate an empty update set")
    updates = sorted(updates, key=lambda u: u.client_id)
    w = aggregation_weights(updates, strategy)
    names = [name for name, _ in updates[0].shared_params]
    for u in updates[1:]:
        if [name for name, _ in u.shared_params] != names:
            raise ProtocolError("uploads carry different tensor sets")
    out = []
    for ti, name in enumerate(names):
        shape = updates[0].shared_params[ti][1].shape
        for u in updates:
            if u.shared_params[ti][1].shape != shape:
                raise ProtocolError(f"shape mismatch for tensor {name!r}")
        stack = np.stack([u.shared_params[ti][1] for u in updates])
        agg = np.tensordot(w, stack, axes=1)
        np.clip(agg, stack.min(axis=0), stack.max(axis=0), out=agg)
        out.append((name, agg))
    return out


def perturb_update(tensors: list, gamma: float, rng: Rng) -> list:
    """Add zero-mean Gaussian noise scaled per tensor by gamma * its std."""
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0.0:
        return [(name, arr.copy()) for name, arr in tensors]
    out = []
    for name, arr in tensors:
        std = float(arr.std())
        if std == 0.0:
            out.append((name, arr.copy()))
        else:
            out.append((name, arr + rng.normal(0.0, gamma * std, arr.shape)))
    return out


def fedprox_penalty(theta_local: list, theta_global: list, mu: float):
    """Proximal term (mu/2)*||theta - theta_global||^2 and its gradient."""
    if mu < 0:
        raise ConfigError(f"mu must be >= 0, got {mu}")
    if len(theta_local) != len(theta_global):
        raise ShapeError("parameter lists have different lengths")
    penalty = 0.0
    grads = []
    for p, g in zip(theta_local, theta_global):
        if p.shape != g.shape:
            raise ShapeError(f"shape mismatch {p.shape} vs {g.shape}")
        diff = p - g
        penalty += 0.5 * mu * float((diff * diff).sum())
        grads.append(mu * diff)
    return penalty, grads


# -------------------------------------------------------------- client side

def _shared_param_indices(model: ModelParams, share_encoders: bool) -> list:
    """Indices of the exchanged block inside the trainable parameter list,
    in the same order extract_shared emits tensors."""
    offsets = {}
    pos = 0
    for name, mlp in model.components():
        n = len(mlp.parameters())
        offsets[name] = list(range(pos, pos + n))
        pos += n
    idx = []
    for name, _ in shared_components(model, share_encoders):
        idx.extend(offsets[name])
    return idx


def _batch_fusion_weights(model, feats, mask, config, rng):
    if config.ablation.ua_fusion:
        u = probe_uncertainties(model, feats, mask, config.uncertainty.passes, rng)
        return fusion_weights_batch(u, mask)
    return uniform_fusion_weights_batch(mask)


def client_mean_uncertainty(model: ModelParams, samples: list, config, rng: Rng) -> float:
    """Mean fused prediction uncertainty over (a subsample of) the samples."""
    max_n = config.reliability.max_samples
    if len(samples) > max_n:
        idx = np.sort(rng.choice(len(samples), size=max_n, replace=False))
        samples = [samples[i] for i in idx]
    feats, mask, _ = batch_from_samples(samples, model.feature_dims())
    alpha = _batch_fusion_weights(model, feats, mask, config, rng)
    u = fused_uncertainties(model, feats, alpha, config.uncertainty.passes, rng)
    return float(u.mean())


def local_update(client: ClientRuntime, theta_s: list, config,
                 round_index: int, rng: Rng):
    """One client's round: local epochs, optional noisy perturbation of the
    shared block, reliability from post-perturbation uncertainty, upload.

    Returns (ClientUpdate, LocalStats).
    """
    cid = client.data.client_id
    train = client.data.train
    if not train.samples:
        raise ConfigError(f"client {cid!r} has an empty training set")
    share_enc = config.share_encoders
    assign_shared(client.model, theta_s, share_enc)
    params = trainable_params(client.model)
    adam = AdamState.init_for(params, lr=config.training.lr)
    prox_mu = config.training.fedprox_mu if config.strategy == FEDPROX else 0.0
    if prox_mu > 0.0:
        prox_idx = _shared_param_indices(client.model, share_enc)
        theta_global = [arr.copy() for _, arr in theta_s]
    n = len(train.samples)
    feats_all, mask_all, labels_all = batch_from_samples(
        train.samples, client.model.feature_dims())
    batch = config.training.batch_size
    losses = []
    for _epoch in range(config.training.local_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            feats_b = {m: feats_all[m][idx] for m in feats_all}
            mask_b = mask_all[idx]
            alpha = _batch_fusion_weights(client.model, feats_b, mask_b, config, rng)
            preds, tape = forward_fused(client.model, feats_b, alpha, TRAIN, rng)
            loss, dpreds = mse_loss_batch(preds, labels_all[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"client {cid!r} diverged at round {round_index} (non-finite loss)"
                )
            grads = backward_fused(client.model, tape, dpreds)
            if prox_mu > 0.0:
                _, prox_grads = fedprox_penalty(
                    [params[i] for i in prox_idx], theta_global, prox_mu)
                for i, pg in zip(prox_idx, prox_grads):
                    grads[i] = grads[i] + pg
            adam_step(params, grads, adam)
            losses.append(loss)
    if client.data.is_noisy and config.noise_gamma > 0.0:
        perturbed = perturb_update(
            extract_shared(client.model, share_enc), config.noise_gamma, rng)
        assign_shared(client.model, perturbed, share_enc)
    # reliability reflects the model as uploaded (perturbation included)
    u_bar = client_mean_uncertainty(client.model, train.samples, config, rng)
    reliability = 1.0 / (u_bar + config.reliability.epsilon)
    update = ClientUpdate(cid, extract_shared(client.model, share_enc),
                          reliability, n)
    mean_loss = float(np.mean(losses)) if losses else 0.0
    return update, LocalStats(losses, mean_loss, u_bar)


# -------------------------------------------------------------- evaluation

def evaluate_mae(clients: list, config, rng: Rng, collect: list | None = None) -> float:
    """Average over clients of the mean absolute error on their test split.

    Predictions are deterministic eval-mode forwards; fusion weights still
    come from stochastic probe passes when uncertainty fusion is on. Pass
    `collect` to receive per-sample (prediction, label) records.
    """
    client_maes = []
    for client in clients:
        test = client.data.test
        if not test.samples:
            raise ConfigError(f"client {client.data.client_id!r} has an empty test set")
        feats, mask, labels = batch_from_samples(
            test.samples, client.model.feature_dims())
        alpha = _batch_fusion_weights(
            client.model, feats, mask, config, rng.derive(client.data.client_id))
        preds = predict_eval(client.model, feats, alpha)
        client_maes.append(float(np.mean(np.abs(preds - labels))))
        if collect is not None:
            collect.append({
                "client_id": client.data.client_id,
                "predictions": [float(p) for p in preds],
                "labels": [float(y) for y in labels],
            })
    return float(np.mean(client_maes))


# -------------------------------------------------------------- round loop

def _select_clients(state: FederationState, config, round_index: int,
                    run_rng: Rng) -> list:
    k = len(state.clients)
    frac = config.training.participation
    if frac >= 1.0:
        return list(range(k))
    n_sel = max(1, int(round(frac * k)))
    chosen = run_rng.derive("select", round_index).choice(k, size=n_sel, replace=False)
    return sorted(int(i) for i in chosen)


def run_round(state: FederationState, config, run_rng: Rng,
              n_threads: int = 1) -> RoundReport:
    """Broadcast, train selected clients (optionally in threads), aggregate,
    evaluate. Appends the report to the state and returns it."""
    r = state.round_index + 1
    selected = _select_clients(state, config, r, run_rng)
    theta = state.shared

    def work(i):
        client = state.clients[i]
        rng_i = run_rng.derive("round", r, "client", client.data.client_id)
        return local_update(client, theta, config, r, rng_i)

    try:
        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                results = list(pool.map(work, selected))
        else:
            results = [work(i) for i in selected]
    except NumericError as exc:
        raise NumericError(f"round {r}: {exc}") from exc
    updates = [res[0] for res in results]
    stats = {u.client_id: s for u, s in zip(updates, (res[1] for res in results))}
    strategy = effective_strategy(config)
    ordered = sorted(updates, key=lambda u: u.client_id)
    weights = aggregation_weights(ordered, strategy)
    state.shared = aggregate(ordered, strategy)
    for client in state.clients:
        assign_shared(client.model, state.shared, config.share_encoders)
    mae = evaluate_mae(state.clients, config, run_rng.derive("eval", r))
    report = RoundReport(
        round_index=r,
        train_loss={u.client_id: stats[u.client_id].mean_loss for u in ordered},
        test_mae=mae,
        mean_reliability=float(np.mean([u.reliability for u in ordered])),
        weights={u.client_id: float(w) for u, w in zip(ordered, weights)},
        reliabilities={u.client_id: float(u.reliability) for u in ordered},
    )
    state.round_index = r
    state.reports.append(report)
    return report


# -------------------------------------------------------------- entry points

def build_federation_data(config, seed: int) -> list:
    """Materialize ClientData for the run: synthetic spec or JSONL ingestion."""
    fed = config.federation
    if config.data_path:
        datasets = sorted(load_jsonl(config.data_path), key=lambda d: d.client_id)
        clients = [split_dataset(ds) for ds in datasets]
        return mark_noisy_clients(clients, fed.noisy_ratio,
                                  Rng(seed).derive("noisy-mark"))
    spec = FederationSpec(
        num_clients=fed.num_clients,
        samples_per_client=fed.samples_per_client,
        noniid_intensity=fed.noniid_intensity,
        missing_ratio=fed.missing_ratio,
        noisy_ratio=fed.noisy_ratio,
        seed=fed.seed if fed.seed is not None else seed,
        feature_dim=fed.feature_dim,
        latent_dim=fed.latent_dim,
    )
    return generate_federation(spec)


def _data_feature_dims(clients: list, default_dim: int) -> dict:
    from .fusion import MODALITIES

    dims = {}
    for client in clients:
        for ds in (client.train, client.val, client.test):
            for s in ds.samples:
                for m, vec in s.features.items():
                    dims.setdefault(m, len(vec))
    return {m: dims.get(m, default_dim) for m in MODALITIES}


def init_federation(config, seed: int) -> FederationState:
    data = build_federation_data(config, seed)
    data = sorted(data, key=lambda c: c.client_id)
    dims = _data_feature_dims(data, config.federation.feature_dim)
    init_rng = Rng(seed)
    clients = [
        ClientRuntime(
            data=cd,
            model=init_model_params(
                dims, config.model.hidden_dim, config.model.fusion_dim,
                config.model.dropout, init_rng.derive("init", cd.client_id)),
        )
        for cd in data
    ]
    server_model = init_model_params(
        dims, config.model.hidden_dim, config.model.fusion_dim,
        config.model.dropout, init_rng.derive("init", "server"))
    shared = extract_shared(server_model, config.share_encoders)
    return FederationState(clients=clients, shared=shared)


def run_simulation(config, seed: int, run_dir, n_threads: int | None = None) -> dict:
    """Execute a full run and write rounds.jsonl + summary.json to run_dir."""
    if n_threads is None:
        n_threads = int(os.environ.get("FEDUAF_THREADS", "1"))
    t_start = time.perf_counter()
    kernels.warmup()
    state = init_federation(config, seed)
    run_rng = Rng(seed).derive("protocol")
    for client in state.clients:
        assign_shared(client.model, state.shared, config.share_encoders)
    initial_mae = evaluate_mae(state.clients, config, run_rng.derive("eval", 0))
    os.makedirs(run_dir, exist_ok=True)
    rounds_path = os.path.join(run_dir, "rounds.jsonl")
    with open(rounds_path, "w", encoding="utf-8") as fh:
        for _ in range(config.training.rounds):
            report = run_round(state, config, run_rng, n_threads=n_threads)
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    from .serialize import save_params

    save_params(os.path.join(run_dir, "shared_params.json"), state.shared)
    summary = {
        "config": config.to_dict(),
        "seed": seed,
        "initial_mae": initial_mae,
        "final_mae": state.reports[-1].test_mae,
        "final_mean_reliability": state.reports[-1].mean_reliability,
        "rounds_completed": state.round_index,
        "noisy_clients": [c.data.client_id for c in state.clients if c.data.is_noisy],
        "kernel_backend": kernels.BACKEND,
        "wall_time_s": time.perf_counter() - t_start,
    }
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
