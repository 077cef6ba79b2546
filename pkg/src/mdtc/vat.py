"""Virtual adversarial training: worst-case local perturbation search and
the smoothness penalty evaluated at it.

The inner maximization is approximated by power iteration on the gradient
of KL(anchor || prediction at a small probe offset). Dropout stays off in
every forward here so the KL measures response to the perturbation, not to
dropout noise, and the anchor prediction is always gradient-detached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .losses import kl_divergence
from .model import SharedPrivateModel, forward_classifier


@dataclass
class VatConfig:
    epsilon: float = 1.0
    xi: float = 0.1
    power_iterations: int = 1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.xi <= 0:
            raise ConfigError(f"xi must be positive, got {self.xi}")
        if self.power_iterations < 1:
            raise ConfigError(f"power_iterations must be >= 1, got {self.power_iterations}")


def _normalize_rows(d: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    """Unit L2 rows; rows with zero norm take the fallback row instead."""
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    safe = np.where(norms == 0.0, 1.0, norms)
    out = d / safe
    if np.any(zero):
        if fallback is None:
            out[zero] = 0.0
            out[zero, 0] = 1.0
        else:
            out[zero] = fallback[zero]
    return out


def vat_perturbation(model: SharedPrivateModel, x: Tensor, domain: int,
                     cfg: VatConfig, rng: np.random.Generator) -> Tensor:
    """Per-row perturbation of L2 norm epsilon approximating the direction
    that most changes the classifier output.

    Leaves gradient accumulators of the model parameters dirty; callers
    zero grads before their own backward pass.
    """
    with ad.no_tape():
        anchor = forward_classifier(model, x, domain)

    d = _normalize_rows(rng.standard_normal(x.shape))
    for _ in range(cfg.power_iterations):
        d_var = Tensor(d, requires_grad=True)
        with ad.Tape() as tape:
            probe = ad.add(x.detach(), ad.scale(d_var, cfg.xi))
            divergence = kl_divergence(anchor, forward_classifier(model, probe, domain))
            ad.backward(divergence, tape)
        grad = d_var.grad if d_var.grad is not None else np.zeros_like(d)
        d = _normalize_rows(grad, fallback=d)
    return Tensor(cfg.epsilon * d)


def vat_loss(model: SharedPrivateModel, x: Tensor, domain: int, r: Tensor) -> Tensor:
    """Mean KL between the detached clean prediction and the prediction at
    x + r; gradient reaches the parameters only through the perturbed branch.
    """
    with ad.no_tape():
        anchor = forward_classifier(model, x, domain)
    perturbed = Tensor(x.data + r.data)
    return kl_divergence(anchor, forward_classifier(model, perturbed, domain))
