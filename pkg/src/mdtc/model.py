"""Shared-private classification network with a joint class-domain discriminator.

One shared feature extractor serves every domain, one private extractor per
domain captures domain-specific structure, a single classifier reads the
concatenated features, and a discriminator reads only the shared feature.
In joint-alignment mode the discriminator scores all (class, domain) pairs
(2M outputs); in marginal mode it scores domains alone (M outputs).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, UsageError

NUM_CLASSES = 2

Layer = tuple[Tensor, Tensor]


@dataclass
class ModelConfig:
    num_domains: int
    input_dim: int
    shared_dim: int = 128
    private_dim: int = 64
    extractor_hidden: tuple[int, ...] = (1000, 500)
    classifier_hidden: int | None = None
    discriminator_hidden: int = 128
    dropout_rate: float = 0.4
    joint_alignment: bool = True

    def __post_init__(self):
        self.extractor_hidden = tuple(self.extractor_hidden)
        if self.classifier_hidden is None:
            self.classifier_hidden = self.shared_dim + self.private_dim
        self.validate()

    def validate(self) -> None:
        if self.num_domains < 1:
            raise ConfigError(f"num_domains must be >= 1, got {self.num_domains}")
        for name in ("input_dim", "shared_dim", "private_dim",
                     "classifier_hidden", "discriminator_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if any(h < 1 for h in self.extractor_hidden):
            raise ConfigError(f"extractor_hidden must be positive, got {self.extractor_hidden}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def feature_dim(self) -> int:
        return self.shared_dim + self.private_dim

    @property
    def discriminator_classes(self) -> int:
        return (NUM_CLASSES if self.joint_alignment else 1) * self.num_domains

    def to_dict(self) -> dict:
        return {
            "num_domains": self.num_domains,
            "input_dim": self.input_dim,
            "shared_dim": self.shared_dim,
            "private_dim": self.private_dim,
            "extractor_hidden": list(self.extractor_hidden),
            "classifier_hidden": self.classifier_hidden,
            "discriminator_hidden": self.discriminator_hidden,
            "dropout_rate": self.dropout_rate,
            "joint_alignment": self.joint_alignment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["extractor_hidden"] = tuple(d["extractor_hidden"])
        return cls(**d)


@dataclass
class SharedPrivateModel:
    config: ModelConfig
    shared: list[Layer] = field(default_factory=list)
    private: list[list[Layer]] = field(default_factory=list)
    classifier: list[Layer] = field(default_factory=list)
    discriminator: list[Layer] = field(default_factory=list)

    def parameter_items(self) -> list[tuple[str, Tensor]]:
        items: list[tuple[str, Tensor]] = []
        for i, (w, b) in enumerate(self.shared):
            items += [(f"shared/{i}/W", w), (f"shared/{i}/b", b)]
        for d, layers in enumerate(self.private):
            for i, (w, b) in enumerate(layers):
                items += [(f"private{d}/{i}/W", w), (f"private{d}/{i}/b", b)]
        for i, (w, b) in enumerate(self.classifier):
            items += [(f"classifier/{i}/W", w), (f"classifier/{i}/b", b)]
        for i, (w, b) in enumerate(self.discriminator):
            items += [(f"discriminator/{i}/W", w), (f"discriminator/{i}/b", b)]
        return items

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.parameter_items()]

    def task_parameters(self) -> list[Tensor]:
        """Everything the minimizing players own: shared, private, classifier."""
        out = [t for w_b in self.shared for t in w_b]
        for layers in self.private:
            out += [t for w_b in layers for t in w_b]
        out += [t for w_b in self.classifier for t in w_b]
        return out

    def discriminator_parameters(self) -> list[Tensor]:
        return [t for w_b in self.discriminator for t in w_b]

    def private_parameters(self, domain: int) -> list[Tensor]:
        return [t for w_b in self.private[domain] for t in w_b]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def component_hashes(self) -> dict[str, str]:
        """Sha256 per component; used for isolation checks and run manifests."""
        buckets: dict[str, hashlib._hashlib.HASH] = {}
        for name, t in self.parameter_items():
            comp = name.split("/")[0]
            h = buckets.setdefault(comp, hashlib.sha256())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return {comp: h.hexdigest() for comp, h in sorted(buckets.items())}

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for name, t in self.parameter_items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def _init_layer(fan_in: int, fan_out: int, rng: np.random.Generator) -> Layer:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True)
    return w, b


def _init_mlp(dims: list[int], rng: np.random.Generator) -> list[Layer]:
    return [_init_layer(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> SharedPrivateModel:
    """Fan-based uniform weight init, zero biases, deterministic given rng.

    Draw order is shared, privates, classifier, discriminator, so joint and
    marginal variants built from the same seed share every non-discriminator
    parameter bit for bit.
    """
    cfg.validate()
    hidden = list(cfg.extractor_hidden)
    model = SharedPrivateModel(config=cfg)
    model.shared = _init_mlp([cfg.input_dim] + hidden + [cfg.shared_dim], rng)
    model.private = [
        _init_mlp([cfg.input_dim] + hidden + [cfg.private_dim], rng)
        for _ in range(cfg.num_domains)
    ]
    model.classifier = _init_mlp([cfg.feature_dim, cfg.classifier_hidden, NUM_CLASSES], rng)
    model.discriminator = _init_mlp(
        [cfg.shared_dim, cfg.discriminator_hidden, cfg.discriminator_classes], rng)
    return model


def _mlp_forward(layers: list[Layer], x: Tensor, dropout_rate: float,
                 training: bool, rng: np.random.Generator | None) -> Tensor:
    """Linear layers with ReLU + dropout after each hidden activation;
    the final layer stays linear."""
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = ad.relu(h)
            h = ad.dropout(h, dropout_rate, rng=rng, training=training)
    return h


def classifier_logits(model: SharedPrivateModel, x: Tensor, domain: int,
                      training: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
    cfg = model.config
    if not 0 <= domain < cfg.num_domains:
        raise UsageError(f"domain {domain} out of range [0, {cfg.num_domains})")
    shared = _mlp_forward(model.shared, x, cfg.dropout_rate, training, rng)
    private = _mlp_forward(model.private[domain], x, cfg.dropout_rate, training, rng)
    feat = ad.concat(shared, private)
    return _mlp_forward(model.classifier, feat, cfg.dropout_rate, training, rng)


def forward_classifier(model: SharedPrivateModel, x: Tensor, domain: int,
                       training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
    """Class probabilities from the concatenated shared + private features."""
    return ad.softmax(classifier_logits(model, x, domain, training, rng))


def shared_features(model: SharedPrivateModel, x: Tensor,
                    training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
    return _mlp_forward(model.shared, x, model.config.dropout_rate, training, rng)


def discriminator_logits(model: SharedPrivateModel, x: Tensor,
                         training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
    shared = shared_features(model, x, training, rng)
    return _mlp_forward(model.discriminator, shared, model.config.dropout_rate,
                        training, rng)


def forward_discriminator(model: SharedPrivateModel, x: Tensor,
                          training: bool = False,
                          rng: np.random.Generator | None = None) -> Tensor:
    """Joint (class, domain) probabilities from the shared feature alone."""
    return ad.softmax(discriminator_logits(model, x, training, rng))


def save_checkpoint(model: SharedPrivateModel, path) -> None:
    """Write parameters plus a config header into one .npz container."""
    arrays = {name.replace("/", "."): t.data for name, t in model.parameter_items()}
    arrays["config.json"] = np.array(json.dumps(model.config.to_dict(), sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path) -> SharedPrivateModel:
    with np.load(path, allow_pickle=False) as bundle:
        cfg = ModelConfig.from_dict(json.loads(str(bundle["config.json"])))
        rng = np.random.default_rng(0)
        model = init_model(cfg, rng)
        for name, t in model.parameter_items():
            key = name.replace("/", ".")
            stored = bundle[key]
            if stored.shape != t.data.shape:
                raise UsageError(f"checkpoint shape mismatch for {name}: "
                                 f"{stored.shape} vs {t.data.shape}")
            t.data = np.ascontiguousarray(stored.astype(np.float64))
    return model
