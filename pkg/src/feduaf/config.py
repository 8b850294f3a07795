"""Declarative experiment configuration (JSON).

An empty object is a valid config: every key has a default, and the
defaults for rounds/epochs/lr/passes/hidden width are the protocol's
reference values (R=100, E=5, lr=1e-3, T=5, width 128). Parsing is strict:
unknown keys and out-of-range values are errors that name the key.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

from .exceptions import ConfigError, ParseError
from .fedsim import STRATEGIES


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _take(section: dict, path: str, key: str, default, check, desc: str):
    if key in section:
        val = section.pop(key)
    else:
        val = default
    if not check(val):
        raise ConfigError(
            f"config key '{path}.{key}' expects {desc}, got {val!r}"
        )
    return val


def _finish_section(section: dict, path: str):
    if section:
        raise ConfigError(f"unknown config key '{path}.{sorted(section)[0]}'")


@dataclass
class FederationConfig:
    num_clients: int = 10
    samples_per_client: int = 100
    noniid_intensity: float = 0.0
    missing_ratio: float = 0.0
    noisy_ratio: float = 0.0
    seed: int | None = None  # null means: use the run seed
    feature_dim: int = 20
    latent_dim: int = 8


@dataclass
class ModelConfig:
    hidden_dim: int = 128
    fusion_dim: int = 128
    dropout: float = 0.1


@dataclass
class UncertaintyConfig:
    passes: int = 5


@dataclass
class TrainingConfig:
    rounds: int = 100
    local_epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 32
    fedprox_mu: float = 0.01
    participation: float = 1.0


@dataclass
class ReliabilityConfig:
    epsilon: float = 1e-8
    max_samples: int = 256


@dataclass
class AblationConfig:
    ua_fusion: bool = True
    rel_agg: bool = True


@dataclass
class ExperimentConfig:
    federation: FederationConfig = field(default_factory=FederationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    reliability: ReliabilityConfig = field(default_factory=ReliabilityConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    strategy: str = "reliability_weighted"
    noise_gamma: float = 1.0
    share_encoders: bool = False
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    output_dir: str = "runs"
    data_path: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    d = copy.deepcopy(raw)

    fed_raw = d.pop("federation", {})
    if not isinstance(fed_raw, dict):
        raise ConfigError("config key 'federation' must be an object")
    fed = FederationConfig(
        num_clients=_take(fed_raw, "federation", "num_clients", 10,
                          lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
        samples_per_client=_take(fed_raw, "federation", "samples_per_client", 100,
                                 lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
        noniid_intensity=_take(fed_raw, "federation", "noniid_intensity", 0.0,
                               lambda v: _is_num(v) and 0.0 <= v <= 1.0,
                               "a number in [0, 1]"),
        missing_ratio=_take(fed_raw, "federation", "missing_ratio", 0.0,
                            lambda v: _is_num(v) and 0.0 <= v < 1.0,
                            "a number in [0, 1)"),
        noisy_ratio=_take(fed_raw, "federation", "noisy_ratio", 0.0,
                          lambda v: _is_num(v) and 0.0 <= v <= 1.0,
                          "a number in [0, 1]"),
        seed=_take(fed_raw, "federation", "seed", None,
                   lambda v: v is None or (_is_int(v) and v >= 0),
                   "null or an integer >= 0"),
        feature_dim=_take(fed_raw, "federation", "feature_dim", 20,
                          lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        latent_dim=_take(fed_raw, "federation", "latent_dim", 8,
                         lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    )
    _finish_section(fed_raw, "federation")

    model_raw = d.pop("model", {})
    if not isinstance(model_raw, dict):
        raise ConfigError("config key 'model' must be an object")
    hidden = _take(model_raw, "model", "hidden_dim", 128,
                   lambda v: _is_int(v) and v >= 1, "an integer >= 1")
    model = ModelConfig(
        hidden_dim=hidden,
        fusion_dim=_take(model_raw, "model", "fusion_dim", hidden,
                         lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        dropout=_take(model_raw, "model", "dropout", 0.1,
                      lambda v: _is_num(v) and 0.0 <= v < 1.0,
                      "a number in [0, 1)"),
    )
    _finish_section(model_raw, "model")

    unc_raw = d.pop("uncertainty", {})
    if not isinstance(unc_raw, dict):
        raise ConfigError("config key 'uncertainty' must be an object")
    unc = UncertaintyConfig(
        passes=_take(unc_raw, "uncertainty", "passes", 5,
                     lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
    )
    _finish_section(unc_raw, "uncertainty")

    train_raw = d.pop("training", {})
    if not isinstance(train_raw, dict):
        raise ConfigError("config key 'training' must be an object")
    training = TrainingConfig(
        rounds=_take(train_raw, "training", "rounds", 100,
                     lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        local_epochs=_take(train_raw, "training", "local_epochs", 5,
                           lambda v: _is_int(v) and v >= 0, "an integer >= 0"),
        lr=_take(train_raw, "training", "lr", 1e-3,
                 lambda v: _is_num(v) and v > 0, "a number > 0"),
        batch_size=_take(train_raw, "training", "batch_size", 32,
                         lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        fedprox_mu=_take(train_raw, "training", "fedprox_mu", 0.01,
                         lambda v: _is_num(v) and v >= 0, "a number >= 0"),
        participation=_take(train_raw, "training", "participation", 1.0,
                            lambda v: _is_num(v) and 0.0 < v <= 1.0,
                            "a number in (0, 1]"),
    )
    _finish_section(train_raw, "training")

    rel_raw = d.pop("reliability", {})
    if not isinstance(rel_raw, dict):
        raise ConfigError("config key 'reliability' must be an object")
    rel = ReliabilityConfig(
        epsilon=_take(rel_raw, "reliability", "epsilon", 1e-8,
                      lambda v: _is_num(v) and v > 0, "a number > 0"),
        max_samples=_take(rel_raw, "reliability", "max_samples", 256,
                          lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    )
    _finish_section(rel_raw, "reliability")

    abl_raw = d.pop("ablation", {})
    if not isinstance(abl_raw, dict):
        raise ConfigError("config key 'ablation' must be an object")
    ablation = AblationConfig(
        ua_fusion=_take(abl_raw, "ablation", "ua_fusion", True,
                        lambda v: isinstance(v, bool), "a boolean"),
        rel_agg=_take(abl_raw, "ablation", "rel_agg", True,
                      lambda v: isinstance(v, bool), "a boolean"),
    )
    _finish_section(abl_raw, "ablation")

    strategy = _take(d, "<root>", "strategy", "reliability_weighted",
                     lambda v: v in STRATEGIES, f"one of {STRATEGIES}")
    noise_gamma = _take(d, "<root>", "noise_gamma", 1.0,
                        lambda v: _is_num(v) and v >= 0, "a number >= 0")
    share_encoders = _take(d, "<root>", "share_encoders", False,
                           lambda v: isinstance(v, bool), "a boolean")
    seeds = _take(d, "<root>", "seeds", [1, 2, 3],
                  lambda v: isinstance(v, list) and len(v) >= 1
                  and all(_is_int(s) and s >= 0 for s in v),
                  "a non-empty list of integers >= 0")
    output_dir = _take(d, "<root>", "output_dir", "runs",
                       lambda v: isinstance(v, str) and v, "a non-empty string")
    data_path = _take(d, "<root>", "data_path", None,
                      lambda v: v is None or (isinstance(v, str) and v),
                      "null or a non-empty string")
    if d:
        raise ConfigError(f"unknown config key '{sorted(d)[0]}'")
    return ExperimentConfig(
        federation=fed, model=model, uncertainty=unc, training=training,
        reliability=rel, ablation=ablation, strategy=strategy,
        noise_gamma=noise_gamma, share_encoders=share_encoders,
        seeds=list(seeds), output_dir=output_dir, data_path=data_path,
    )


def parse_config(path) -> ExperimentConfig:
    """Load and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc.msg}, line {exc.lineno})")
    return config_from_dict(raw)
