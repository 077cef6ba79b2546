"""Loss terms: cross-entropy, joint adversarial labels and loss, entropy
minimization, and KL divergence.

Convention fixed project-wide: class 0 is positive sentiment, class 1 is
negative. Joint labels pack (class, domain) as domain for positive inputs
and num_domains + domain for negative ones, so the positive block comes
first. All logs are clamped at 1e-12 to keep losses finite under saturated
probabilities; batch reduction is the mean, summing across domains is the
caller's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, UsageError

POSITIVE, NEGATIVE = 0, 1


@dataclass(frozen=True)
class JointLabel:
    index: int


@dataclass
class LossWeights:
    lambda_d: float = 0.5
    lambda_uvt: float = 1.0
    lambda_lvt: float = 0.01

    def __post_init__(self):
        for name in ("lambda_d", "lambda_uvt", "lambda_lvt"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")


def build_joint_label(domain: int, sentiment: int, num_domains: int) -> JointLabel:
    """Bijection [0, M) x {0, 1} -> [0, 2M), positive block first."""
    if num_domains < 1:
        raise UsageError(f"num_domains must be positive, got {num_domains}")
    if not 0 <= domain < num_domains:
        raise UsageError(f"domain {domain} out of range [0, {num_domains})")
    if sentiment not in (POSITIVE, NEGATIVE):
        raise UsageError(f"sentiment must be 0 or 1, got {sentiment}")
    return JointLabel(domain if sentiment == POSITIVE else num_domains + domain)


def joint_label_indices(domain: int, sentiments, num_domains: int) -> np.ndarray:
    """Vectorized joint-label construction for one domain's batch."""
    s = np.asarray(sentiments, dtype=np.int64)
    return np.array([build_joint_label(domain, int(v), num_domains).index for v in s])


def _mean_nll(probs: Tensor, labels: np.ndarray) -> Tensor:
    picked = ad.pick(ad.clamped_log(probs), labels)
    return ad.scale(ad.tmean(picked), -1.0)


def classification_loss(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class over one batch."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2 or probs.shape[1] != 2:
        raise UsageError(f"classification_loss expects n x 2 probs, got {probs.shape}")
    if np.any((labels < 0) | (labels > 1)):
        raise UsageError("labels must lie in {0, 1}")
    return _mean_nll(probs, labels)


def joint_adversarial_loss(dprobs: Tensor, joint_labels) -> Tensor:
    """Mean cross-entropy of discriminator output against joint labels."""
    idx = np.asarray(
        [l.index if isinstance(l, JointLabel) else int(l) for l in joint_labels],
        dtype=np.int64)
    if np.any((idx < 0) | (idx >= dprobs.shape[1])):
        raise UsageError(f"joint label out of range [0, {dprobs.shape[1]})")
    return _mean_nll(dprobs, idx)


def entropy_loss(probs: Tensor) -> Tensor:
    """Mean Shannon entropy of the rows; in [0, ln 2] for two classes."""
    plogp = ad.mul(probs, ad.clamped_log(probs))
    n = probs.shape[0]
    return ad.scale(ad.tsum(plogp), -1.0 / n)


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """Mean rowwise KL(p || q) with clamped logs; >= 0, 0 iff p == q."""
    if p.shape != q.shape:
        raise UsageError(f"kl_divergence shape mismatch: {p.shape} vs {q.shape}")
    log_ratio = ad.clamped_log(p) - ad.clamped_log(q)
    n = p.shape[0]
    return ad.scale(ad.tsum(ad.mul(p, log_ratio)), 1.0 / n)
