"""Alternating minimax training.

Each step runs two phases. Phase A updates only the discriminator to get
better at the adversarial prediction task. Phase B updates the shared
extractor, private extractors, and classifier to minimize

    L_c - lambda_d * L_d + lambda_uvt * (L_e + L_uvt) + lambda_lvt * L_lvt

so the shared extractor plays against the discriminator while the
classifier and private extractors never receive adversarial gradient
(structurally: the discriminator reads only the shared feature).
Pseudo-labels for unlabeled adversarial targets are recomputed at the
start of every step and held fixed within it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericError, UsageError
from .losses import (LossWeights, classification_loss, entropy_loss,
                     joint_adversarial_loss, joint_label_indices)
from .model import (ModelConfig, SharedPrivateModel, forward_classifier,
                    forward_discriminator, init_model)
from .vat import VatConfig, vat_loss, vat_perturbation
from .data import DomainDataset


@dataclass
class TrainConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights)
    vat: VatConfig = field(default_factory=VatConfig)
    learning_rate: float = 0.0001
    batch_size: int = 8
    epochs: int = 50
    seed: int = 0
    folds: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log1p_features: bool = False
    model: ModelConfig | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_update(params: list[Tensor], grads: list[np.ndarray | None],
                state: AdamState, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam; one call advances the shared step counter once."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("adam_update: params, grads and state must align")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise UsageError(f"adam_update: grad shape {g.shape} != param {p.data.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class OptimizerState:
    task: AdamState
    disc: AdamState

    @classmethod
    def for_model(cls, model: SharedPrivateModel) -> "OptimizerState":
        return cls(task=AdamState.for_params(model.task_parameters()),
                   disc=AdamState.for_params(model.discriminator_parameters()))


# ---------------------------------------------------------------------------
# Step


@dataclass
class DomainBatch:
    x: np.ndarray
    y: np.ndarray
    x_unlabeled: np.ndarray | None = None


@dataclass
class StepMetrics:
    step: int
    epoch: int
    l_c: float
    l_d: float | None = None
    l_e: float | None = None
    l_uvt: float | None = None
    l_lvt: float | None = None
    disc_accuracy: float | None = None
    eval_accuracy: dict[str, float] | None = None
    eval_average: float | None = None

    def to_dict(self) -> dict:
        return {
            "step": self.step, "epoch": self.epoch,
            "l_c": self.l_c, "l_d": self.l_d, "l_e": self.l_e,
            "l_uvt": self.l_uvt, "l_lvt": self.l_lvt,
            "disc_accuracy": self.disc_accuracy,
            "eval_accuracy": self.eval_accuracy,
            "eval_average": self.eval_average,
        }


def pseudo_label(model: SharedPrivateModel, x: Tensor, domain: int) -> np.ndarray:
    """Hard labels from the classifier, eval mode, ties toward class 0,
    detached from any gradient path."""
    with ad.no_tape():
        probs = forward_classifier(model, x, domain)
    return np.argmax(probs.data, axis=1)


def _check_finite(name: str, value: float, step: int) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{name} is non-finite ({value}) at step {step}")
    return value


def _adversarial_labels(domain: int, sentiments: np.ndarray,
                        cfg: ModelConfig) -> np.ndarray:
    if cfg.joint_alignment:
        return joint_label_indices(domain, sentiments, cfg.num_domains)
    return np.full(len(sentiments), domain, dtype=np.int64)


def compute_pseudo_labels(model: SharedPrivateModel,
                          batches: list[DomainBatch]) -> list[np.ndarray | None]:
    out: list[np.ndarray | None] = [None] * len(batches)
    for d, b in enumerate(batches):
        if b.x_unlabeled is not None and b.x_unlabeled.shape[0] > 0:
            out[d] = pseudo_label(model, Tensor(b.x_unlabeled), d)
    return out


def _pooled_adversarial(model: SharedPrivateModel, d: int, b: DomainBatch,
                        pseudo: list[np.ndarray | None], training: bool,
                        rng: np.random.Generator | None):
    """Discriminator probabilities and adversarial targets over the pooled
    labeled + unlabeled batch of one domain."""
    mcfg = model.config
    xs, labels = [b.x], [_adversarial_labels(d, b.y, mcfg)]
    if b.x_unlabeled is not None and b.x_unlabeled.shape[0] > 0:
        sentiments = pseudo[d]
        if sentiments is None:
            sentiments = np.zeros(b.x_unlabeled.shape[0], dtype=np.int64)
        xs.append(b.x_unlabeled)
        labels.append(_adversarial_labels(d, sentiments, mcfg))
    x_all = np.concatenate(xs, axis=0)
    idx_all = np.concatenate(labels)
    dprobs = forward_discriminator(model, Tensor(x_all), training=training, rng=rng)
    return dprobs, idx_all


def discriminator_phase(model: SharedPrivateModel, batches: list[DomainBatch],
                        cfg: TrainConfig, opt: OptimizerState,
                        rng: np.random.Generator,
                        pseudo: list[np.ndarray | None],
                        step: int = 0) -> tuple[float, float]:
    """Phase A: one Adam step on the discriminator alone, descending L_d.
    Returns (L_d value, joint prediction accuracy)."""
    model.zero_grads()
    hits, total = 0, 0
    with ad.Tape() as tape:
        l_d = None
        for d, b in enumerate(batches):
            dprobs, idx_all = _pooled_adversarial(model, d, b, pseudo, True, rng)
            term = joint_adversarial_loss(dprobs, idx_all)
            l_d = term if l_d is None else l_d + term
            hits += int((np.argmax(dprobs.data, axis=1) == idx_all).sum())
            total += len(idx_all)
        ad.backward(l_d, tape)
    l_d_value = _check_finite("L_d", l_d.item(), step)
    disc_params = model.discriminator_parameters()
    adam_update(disc_params, [p.grad for p in disc_params], opt.disc,
                cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return l_d_value, hits / total


def task_phase(model: SharedPrivateModel, batches: list[DomainBatch],
               cfg: TrainConfig, opt: OptimizerState, rng: np.random.Generator,
               pseudo: list[np.ndarray | None], step: int = 0,
               ) -> dict[str, float | None]:
    """Phase B: one Adam step on shared/private extractors and classifier,
    descending L_c - lambda_d L_d + lambda_uvt (L_e + L_uvt) + lambda_lvt L_lvt.
    """
    weights = cfg.loss_weights

    # Perturbation search happens before the phase tape; it dirties
    # parameter grads, which the zero_grads below clears.
    r_unlabeled: list[Tensor | None] = [None] * len(batches)
    r_labeled: list[Tensor | None] = [None] * len(batches)
    for d, b in enumerate(batches):
        if weights.lambda_uvt > 0 and b.x_unlabeled is not None and b.x_unlabeled.shape[0] > 0:
            r_unlabeled[d] = vat_perturbation(model, Tensor(b.x_unlabeled), d, cfg.vat, rng)
        if weights.lambda_lvt > 0:
            r_labeled[d] = vat_perturbation(model, Tensor(b.x), d, cfg.vat, rng)

    model.zero_grads()
    values: dict[str, float | None] = {"l_e": None, "l_uvt": None, "l_lvt": None}
    with ad.Tape() as tape:
        l_c = None
        for d, b in enumerate(batches):
            probs = forward_classifier(model, Tensor(b.x), d, training=True, rng=rng)
            term = classification_loss(probs, b.y)
            l_c = term if l_c is None else l_c + term
        objective = l_c

        if weights.lambda_d > 0:
            l_d_b = None
            for d, b in enumerate(batches):
                dprobs, idx_all = _pooled_adversarial(model, d, b, pseudo, True, rng)
                term = joint_adversarial_loss(dprobs, idx_all)
                l_d_b = term if l_d_b is None else l_d_b + term
            objective = objective + ad.scale(l_d_b, -weights.lambda_d)

        if weights.lambda_uvt > 0:
            l_e = None
            l_uvt = None
            for d, b in enumerate(batches):
                if b.x_unlabeled is None or b.x_unlabeled.shape[0] == 0:
                    continue
                probs_u = forward_classifier(model, Tensor(b.x_unlabeled), d,
                                             training=True, rng=rng)
                e_term = entropy_loss(probs_u)
                l_e = e_term if l_e is None else l_e + e_term
                v_term = vat_loss(model, Tensor(b.x_unlabeled), d, r_unlabeled[d])
                l_uvt = v_term if l_uvt is None else l_uvt + v_term
            if l_e is not None:
                values["l_e"] = _check_finite("L_e", l_e.item(), step)
                values["l_uvt"] = _check_finite("L_uvt", l_uvt.item(), step)
                objective = objective + ad.scale(l_e + l_uvt, weights.lambda_uvt)

        if weights.lambda_lvt > 0:
            l_lvt = None
            for d, b in enumerate(batches):
                term = vat_loss(model, Tensor(b.x), d, r_labeled[d])
                l_lvt = term if l_lvt is None else l_lvt + term
            values["l_lvt"] = _check_finite("L_lvt", l_lvt.item(), step)
            objective = objective + ad.scale(l_lvt, weights.lambda_lvt)

        ad.backward(objective, tape)

    values["l_c"] = _check_finite("L_c", l_c.item(), step)
    _check_finite("objective", objective.item(), step)
    task_params = model.task_parameters()
    adam_update(task_params, [p.grad for p in task_params], opt.task,
                cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return values


def train_step(model: SharedPrivateModel, batches: list[DomainBatch],
               cfg: TrainConfig, opt: OptimizerState,
               rng: np.random.Generator, step: int = 0, epoch: int = 0) -> StepMetrics:
    mcfg = model.config
    if len(batches) != mcfg.num_domains:
        raise UsageError(f"expected {mcfg.num_domains} domain batches, got {len(batches)}")
    for d, b in enumerate(batches):
        if b.x.shape[0] == 0:
            raise UsageError(f"empty labeled batch for domain {d}")
    weights = cfg.loss_weights

    # Fresh pseudo-labels, fixed for both phases of this step. Marginal
    # alignment targets domains only, so it never needs them.
    if weights.lambda_d > 0 and mcfg.joint_alignment:
        pseudo = compute_pseudo_labels(model, batches)
    else:
        pseudo = [None] * mcfg.num_domains

    l_d_value = None
    disc_accuracy = None
    if weights.lambda_d > 0:
        l_d_value, disc_accuracy = discriminator_phase(
            model, batches, cfg, opt, rng, pseudo, step)

    values = task_phase(model, batches, cfg, opt, rng, pseudo, step)

    return StepMetrics(step=step, epoch=epoch, l_c=values["l_c"], l_d=l_d_value,
                       l_e=values["l_e"], l_uvt=values["l_uvt"],
                       l_lvt=values["l_lvt"], disc_accuracy=disc_accuracy)


# ---------------------------------------------------------------------------
# Batch scheduling


class _LabeledCycler:
    """Epoch-shuffled sampling without replacement; reshuffles on exhaustion
    so sets smaller than the longest domain recycle."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            grab = min(count - filled, self.n - self.pos)
            out[filled:filled + grab] = self.order[self.pos:self.pos + grab]
            self.pos += grab
            filled += grab
        return out


def _predict_in_chunks(model: SharedPrivateModel, x: np.ndarray, domain: int,
                       chunk: int = 512) -> np.ndarray:
    preds = []
    for start in range(0, x.shape[0], chunk):
        preds.append(pseudo_label(model, Tensor(x[start:start + chunk]), domain))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


@dataclass
class EvalReport:
    per_domain: dict[str, float]
    average: float

    def to_dict(self) -> dict:
        return {"per_domain": self.per_domain, "average": self.average}


def evaluate(model: SharedPrivateModel, datasets: list[DomainDataset],
             test_indices: list[np.ndarray] | None = None,
             log1p: bool = False) -> EvalReport:
    """Accuracy per domain on the given held-out indices (all labeled rows
    when omitted) and the unweighted mean across domains."""
    per_domain: dict[str, float] = {}
    for d, ds in enumerate(datasets):
        idx = None if test_indices is None else test_indices[d]
        x, y = ds.labeled_matrix(indices=idx, log1p=log1p)
        if x.shape[0] == 0:
            raise UsageError(f"empty test fold for domain {ds.name}")
        preds = _predict_in_chunks(model, x, d)
        per_domain[ds.name] = float((preds == y).mean())
    return EvalReport(per_domain=per_domain,
                      average=float(np.mean(list(per_domain.values()))))


def fit(datasets: list[DomainDataset], cfg: TrainConfig,
        eval_sets: list[DomainDataset] | None = None,
        on_epoch_end: Callable[[int, SharedPrivateModel], None] | None = None,
        ) -> tuple[SharedPrivateModel, list[StepMetrics]]:
    """Train for cfg.epochs, one pass per epoch over the largest labeled set.

    Per step every domain contributes one labeled batch (shuffled without
    replacement, recycled) and one unlabeled batch (uniform with
    replacement). Deterministic given cfg.seed.
    """
    if not datasets:
        raise ConfigError("fit needs at least one domain")
    for ds in datasets:
        if ds.num_labeled == 0:
            raise ConfigError(f"domain {ds.name} has no labeled data")
    input_dims = {ds.input_dim for ds in datasets}
    if len(input_dims) != 1:
        raise ConfigError(f"domains disagree on input_dim: {input_dims}")

    model_cfg = cfg.model or ModelConfig(num_domains=len(datasets),
                                         input_dim=input_dims.pop())
    if model_cfg.num_domains != len(datasets):
        raise ConfigError(f"model expects {model_cfg.num_domains} domains, "
                          f"got {len(datasets)}")
    if model_cfg.input_dim != datasets[0].input_dim:
        raise ConfigError(f"model input_dim {model_cfg.input_dim} != dataset "
                          f"input_dim {datasets[0].input_dim}")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(model_cfg, rng)
    opt = OptimizerState.for_model(model)

    dense = []
    for ds in datasets:
        x, y = ds.labeled_matrix(log1p=cfg.log1p_features)
        dense.append((x, y, ds.unlabeled_matrix(log1p=cfg.log1p_features)))
    cyclers = [_LabeledCycler(x.shape[0], rng) for x, _, _ in dense]
    steps_per_epoch = max(1, math.ceil(max(x.shape[0] for x, _, _ in dense)
                                       / cfg.batch_size))

    history: list[StepMetrics] = []
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            batches = []
            for d, (x, y, xu) in enumerate(dense):
                idx = cyclers[d].take(cfg.batch_size)
                xb, yb = x[idx], y[idx]
                xub = None
                if xu.shape[0] > 0:
                    u_idx = rng.integers(0, xu.shape[0], size=cfg.batch_size)
                    xub = xu[u_idx]
                batches.append(DomainBatch(x=xb, y=yb, x_unlabeled=xub))
            metrics = train_step(model, batches, cfg, opt, rng, step=step, epoch=epoch)
            history.append(metrics)
            step += 1
        if eval_sets is not None:
            report = evaluate(model, eval_sets, log1p=cfg.log1p_features)
            history[-1].eval_accuracy = report.per_domain
            history[-1].eval_average = report.average
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    return model, history
