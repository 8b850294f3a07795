"""Synthetic federated multimodal data, missing-modality injection, noisy
client marking, and JSONL ingestion.

The generator draws a shared latent factor per sample; the label is a
clipped linear readout plus a per-client style offset whose spread is the
Non-IID knob, and each modality observes a fixed seeded projection of the
latent with channel-specific noise (audio noisiest, text cleanest) so the
modalities genuinely differ in reliability. Client ids play the role of
speakers: one client, one style.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError, ParseError, ValidationError
from .fusion import MODALITIES, ModalityMask
from .rng import Rng

LABEL_RANGE = (-3.0, 3.0)
LABEL_NOISE_STD = 0.1
LABEL_WEIGHT_NORM = 1.2
# visual is the reference channel; audio is 2x noisier, text 2x cleaner
MODALITY_NOISE_STD = {"v": 0.6, "a": 1.2, "t": 0.3}
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class Sample:
    features: dict  # modality -> float64 vector, available modalities only
    mask: ModalityMask
    label: float

    def validate(self):
        lo, hi = LABEL_RANGE
        if not np.isfinite(self.label) or not lo <= self.label <= hi:
            raise ValidationError(f"label {self.label} outside [{lo}, {hi}]")
        if set(self.features) != set(self.mask.modalities()):
            raise ValidationError("features must exist exactly for available modalities")
        for m, vec in self.features.items():
            if not np.isfinite(vec).all():
                raise ValidationError(f"non-finite features for modality {m!r}")


@dataclass
class ClientDataset:
    client_id: str
    samples: list
    is_noisy: bool = False

    def validate(self):
        if not self.samples:
            raise ValidationError(f"client {self.client_id!r} has no samples")
        for s in self.samples:
            if not s.mask.modalities():
                raise ValidationError(
                    f"client {self.client_id!r} has a sample with no modality"
                )

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])


@dataclass
class ClientData:
    """One client's train/val/test datasets."""

    client_id: str
    train: ClientDataset
    val: ClientDataset
    test: ClientDataset
    is_noisy: bool = False


@dataclass
class FederationSpec:
    num_clients: int
    samples_per_client: int = 100
    noniid_intensity: float = 0.0  # client style spread knob, in [0, 1]
    missing_ratio: float = 0.0  # per (sample, modality) drop probability
    noisy_ratio: float = 0.0
    seed: int = 0
    feature_dim: int = 20
    latent_dim: int = 8

    def validate(self):
        checks = [
            (self.num_clients >= 2, "num_clients must be >= 2"),
            (self.samples_per_client >= 2, "samples_per_client must be >= 2"),
            (0.0 <= self.noniid_intensity <= 1.0, "noniid_intensity must be in [0, 1]"),
            (0.0 <= self.missing_ratio < 1.0, "missing_ratio must be in [0, 1)"),
            (0.0 <= self.noisy_ratio <= 1.0, "noisy_ratio must be in [0, 1]"),
            (isinstance(self.seed, int) and self.seed >= 0, "seed must be >= 0"),
            (self.feature_dim >= 1, "feature_dim must be >= 1"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


def split_dataset(dataset: ClientDataset) -> ClientData:
    """Positional 70/10/20 train/val/test split (at least 1 train and 1 test)."""
    n = len(dataset.samples)
    n_tr = max(1, int(round(SPLIT_FRACTIONS[0] * n)))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    while n_tr + n_val >= n:
        if n_val > 0:
            n_val -= 1
        else:
            n_tr -= 1
    parts = (
        dataset.samples[:n_tr],
        dataset.samples[n_tr:n_tr + n_val],
        dataset.samples[n_tr + n_val:],
    )
    train, val, test = (
        ClientDataset(dataset.client_id, list(p), dataset.is_noisy) for p in parts
    )
    return ClientData(dataset.client_id, train, val, test, dataset.is_noisy)


def generate_federation(spec: FederationSpec) -> list:
    """Generate the full synthetic federation described by `spec`.

    Deterministic in the spec: the same spec yields bit-identical data.
    Missing-modality injection and noisy-client marking are applied here so
    the result is ready for training.
    """
    spec.validate()
    master = Rng(spec.seed).derive("datagen")
    w = master.derive("label_weights").normal(size=spec.latent_dim)
    w *= LABEL_WEIGHT_NORM / np.linalg.norm(w)
    projections = {
        m: master.derive("projection", m).normal(size=(spec.feature_dim, spec.latent_dim))
        / np.sqrt(spec.latent_dim)
        for m in MODALITIES
    }
    clients = []
    for k in range(spec.num_clients):
        cid = f"spk{k:03d}"
        crng = master.derive("client", k)
        style = crng.normal(0.0, 2.0 * spec.noniid_intensity)
        z = crng.normal(size=(spec.samples_per_client, spec.latent_dim))
        eta = crng.normal(0.0, LABEL_NOISE_STD, size=spec.samples_per_client)
        labels = np.clip(z @ w + style + eta, *LABEL_RANGE)
        feats = {}
        for m in MODALITIES:
            noise = crng.normal(0.0, MODALITY_NOISE_STD[m],
                                size=(spec.samples_per_client, spec.feature_dim))
            feats[m] = z @ projections[m].T + noise
        samples = [
            Sample({m: feats[m][i].copy() for m in MODALITIES},
                   ModalityMask.full(), float(labels[i]))
            for i in range(spec.samples_per_client)
        ]
        client = split_dataset(ClientDataset(cid, samples))
        if spec.missing_ratio > 0.0:
            client = replace(
                client,
                train=inject_missing(client.train, spec.missing_ratio,
                                     crng.derive("missing", "train")),
                val=inject_missing(client.val, spec.missing_ratio,
                                   crng.derive("missing", "val")),
                test=inject_missing(client.test, spec.missing_ratio,
                                    crng.derive("missing", "test")),
            )
        clients.append(client)
    return mark_noisy_clients(clients, spec.noisy_ratio, master.derive("noisy"))


def draw_missing_masks(masks: np.ndarray, rho_m: float, rng: Rng):
    """Drop each (sample, modality) bit independently with probability rho_m.

    Samples that would lose every available modality get one of their
    previously available modalities restored, uniformly at random. Returns
    (new_masks, pre_restoration_drop_events, restored_count) where
    drop_events is the raw (n, 3) bool matrix of drop draws.
    """
    masks = np.asarray(masks, dtype=bool)
    out = masks.copy()
    drop_events = np.zeros_like(masks)
    restored = 0
    for i in range(masks.shape[0]):
        if not masks[i].any():
            raise ValidationError("sample has no available modality before injection")
        dropped = rng.random(len(MODALITIES)) < rho_m
        drop_events[i] = dropped
        new = masks[i] & ~dropped
        if not new.any():
            candidates = np.flatnonzero(masks[i])
            new[candidates[rng.integers(0, len(candidates))]] = True
            restored += 1
        out[i] = new
    return out, drop_events, restored


def inject_missing(dataset: ClientDataset, rho_m: float, rng: Rng) -> ClientDataset:
    """Apply sample-level modality dropping to a dataset (non-destructive)."""
    if not 0.0 <= rho_m < 1.0:
        raise ConfigError(f"rho_m must be in [0, 1), got {rho_m}")
    if rho_m == 0.0:
        return dataset
    masks = np.array([s.mask.as_array() for s in dataset.samples], dtype=bool)
    new_masks, _, _ = draw_missing_masks(masks, rho_m, rng)
    new_samples = []
    for s, row in zip(dataset.samples, new_masks):
        mask = ModalityMask({m: bool(row[mi]) for mi, m in enumerate(MODALITIES)})
        feats = {m: s.features[m] for m in mask.modalities()}
        new_samples.append(Sample(feats, mask, s.label))
    return ClientDataset(dataset.client_id, new_samples, dataset.is_noisy)


def _set_noisy(client, flag: bool):
    if isinstance(client, ClientData):
        return replace(
            client,
            is_noisy=flag,
            train=replace(client.train, is_noisy=flag),
            val=replace(client.val, is_noisy=flag),
            test=replace(client.test, is_noisy=flag),
        )
    return replace(client, is_noisy=flag)


def mark_noisy_clients(clients: list, noisy_ratio: float, rng: Rng) -> list:
    """Flag exactly round(ratio * K) clients, chosen uniformly without replacement."""
    if not 0.0 <= noisy_ratio <= 1.0:
        raise ConfigError(f"noisy_ratio must be in [0, 1], got {noisy_ratio}")
    k = len(clients)
    n_noisy = int(round(noisy_ratio * k))
    chosen = set()
    if n_noisy > 0:
        chosen = set(int(i) for i in rng.choice(k, size=n_noisy, replace=False))
    return [_set_noisy(c, i in chosen) for i, c in enumerate(clients)]


# ------------------------------------------------------------------- batching

def batch_from_samples(samples: list, feature_dims: dict):
    """Stack samples into per-modality matrices (missing rows zero-filled).

    Returns (feats: modality -> (B, d), mask: (B, 3) bool, labels: (B,)).
    """
    b = len(samples)
    feats = {m: np.zeros((b, feature_dims[m])) for m in MODALITIES}
    mask = np.zeros((b, len(MODALITIES)), dtype=bool)
    labels = np.empty(b)
    for i, s in enumerate(samples):
        labels[i] = s.label
        for mi, m in enumerate(MODALITIES):
            if s.mask.available[m]:
                feats[m][i] = s.features[m]
                mask[i, mi] = True
    return feats, mask, labels


# ----------------------------------------------------------------- JSONL I/O

_SAMPLE_KEYS = {"client_id", "features", "mask", "label"}


def save_jsonl(path, clients: list):
    """Write one sample per line; ClientData splits are flattened in
    train/val/test order so a positional re-split reproduces them."""
    with open(path, "w", encoding="utf-8") as fh:
        for client in clients:
            if isinstance(client, ClientData):
                datasets = (client.train, client.val, client.test)
            else:
                datasets = (client,)
            for ds in datasets:
                for s in ds.samples:
                    rec = {
                        "client_id": ds.client_id,
                        "features": {m: s.features[m].tolist()
                                     for m in MODALITIES if s.mask.available[m]},
                        "mask": {m: int(s.mask.available[m]) for m in MODALITIES},
                        "label": float(s.label),
                    }
                    fh.write(json.dumps(rec) + "\n")


def _parse_line(line: str, lineno: int, dims_seen: dict) -> tuple:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
    if not isinstance(rec, dict):
        raise ValidationError(f"line {lineno}: expected a JSON object")
    unknown = set(rec) - _SAMPLE_KEYS
    if unknown:
        raise ValidationError(f"line {lineno}: unknown keys {sorted(unknown)}")
    missing = _SAMPLE_KEYS - set(rec)
    if missing:
        raise ValidationError(f"line {lineno}: missing keys {sorted(missing)}")
    cid = rec["client_id"]
    if not isinstance(cid, str) or not cid:
        raise ValidationError(f"line {lineno}: client_id must be a non-empty string")
    mask_rec = rec["mask"]
    if not isinstance(mask_rec, dict) or set(mask_rec) != set(MODALITIES):
        raise ValidationError(f"line {lineno}: mask must have exactly keys {MODALITIES}")
    for m, bit in mask_rec.items():
        if bit not in (0, 1):
            raise ValidationError(f"line {lineno}: mask[{m!r}] must be 0 or 1")
    mask = ModalityMask({m: bool(mask_rec[m]) for m in MODALITIES})
    if not mask.modalities():
        raise ValidationError(f"line {lineno}: sample has no available modality")
    feats_rec = rec["features"]
    if not isinstance(feats_rec, dict):
        raise ValidationError(f"line {lineno}: features must be an object")
    if set(feats_rec) != set(mask.modalities()):
        raise ValidationError(
            f"line {lineno}: features keys {sorted(feats_rec)} do not match "
            f"available modalities {sorted(mask.modalities())}"
        )
    features = {}
    for m, vec in feats_rec.items():
        arr = np.asarray(vec, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0 or not np.isfinite(arr).all():
            raise ValidationError(
                f"line {lineno}: features[{m!r}] must be a non-empty finite vector"
            )
        if m in dims_seen and dims_seen[m] != arr.size:
            raise ValidationError(
                f"line {lineno}: features[{m!r}] has dim {arr.size}, "
                f"expected {dims_seen[m]}"
            )
        dims_seen.setdefault(m, arr.size)
        features[m] = arr
    label = rec["label"]
    lo, hi = LABEL_RANGE
    if not isinstance(label, (int, float)) or not np.isfinite(label) or not lo <= label <= hi:
        raise ValidationError(f"line {lineno}: label must be a number in [{lo}, {hi}]")
    return cid, Sample(features, mask, float(label))


def load_jsonl(path) -> list:
    """Parse a JSONL dataset into ClientDatasets grouped by client_id."""
    groups: dict = {}
    dims_seen: dict = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"dataset file not found: {path}")
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cid, sample = _parse_line(line, lineno, dims_seen)
            groups.setdefault(cid, []).append(sample)
    if not groups:
        raise ValidationError(f"{path}: empty dataset file")
    return [ClientDataset(cid, samples) for cid, samples in groups.items()]
