"""Release-gate gradient checks: every differentiable op against central
finite differences, plus the composite losses through the live model.

Smooth primitive ops must match to 1e-6, composites through ReLU networks
to 1e-4 (seeded inputs keep activations away from the kink).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .losses import (classification_loss, entropy_loss, joint_adversarial_loss,
                     kl_divergence)
from .model import ModelConfig, forward_classifier, forward_discriminator, init_model
from .vat import VatConfig, vat_loss, vat_perturbation

SMOOTH_TOL = 1e-6
COMPOSITE_TOL = 1e-4


def _probe_model(seed: int = 0):
    cfg = ModelConfig(num_domains=2, input_dim=5, shared_dim=4, private_dim=3,
                      extractor_hidden=(6,), classifier_hidden=5,
                      discriminator_hidden=4, dropout_rate=0.0)
    return init_model(cfg, np.random.default_rng(seed))


def _positive_probs(rng, shape):
    raw = np.abs(rng.normal(size=shape)) + 0.1
    return raw / raw.sum(axis=1, keepdims=True)


def _param_space_vat_check(seed: int = 0, h: float = 1e-6) -> float:
    """Gradient of vat_loss w.r.t. parameters against finite differences of
    the frozen-anchor objective."""
    model = _probe_model(seed)
    rng = np.random.default_rng(seed + 1)
    x_data = rng.normal(size=(3, 5))
    x = Tensor(x_data)
    r = vat_perturbation(model, x, 0, VatConfig(epsilon=0.4), rng)
    model.zero_grads()
    with ad.Tape() as tape:
        ad.backward(vat_loss(model, x, 0, r), tape)

    with ad.no_tape():
        anchor = forward_classifier(model, x, 0).data.copy()

    def frozen_objective():
        with ad.no_tape():
            q = forward_classifier(model, Tensor(x_data + r.data), 0).data
        ratio = np.log(np.maximum(anchor, 1e-12)) - np.log(np.maximum(q, 1e-12))
        return float((anchor * ratio).sum() / anchor.shape[0])

    worst = 0.0
    for p in model.task_parameters():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = frozen_objective()
            flat[i] = orig - h
            f_minus = frozen_objective()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            auto = grad.reshape(-1)[i]
            denom = max(abs(auto), abs(numeric), 1e-8)
            worst = max(worst, abs(auto - numeric) / denom)
    return worst


def build_checks() -> list[tuple[str, float, float]]:
    """Returns (name, max_rel_err, tolerance) for every check."""
    rng = np.random.default_rng(97)
    results: list[tuple[str, float, float]] = []

    b = Tensor(rng.normal(size=(4, 3)))
    results.append(("matmul", grad_check(
        lambda t: ad.tsum(ad.matmul(t, b)), Tensor(rng.normal(size=(2, 4)))), SMOOTH_TOL))

    results.append(("relu", grad_check(
        lambda t: ad.tsum(ad.relu(t)),
        Tensor(rng.uniform(0.2, 1.0, size=(2, 5)) * rng.choice([-1.0, 1.0], size=(2, 5)))),
        SMOOTH_TOL))

    w = Tensor(rng.normal(size=(3, 4)))
    results.append(("log_softmax", grad_check(
        lambda t: ad.tsum(ad.mul(ad.log_softmax(t), w)),
        Tensor(rng.normal(size=(3, 4)))), SMOOTH_TOL))

    half = Tensor(rng.normal(size=(3, 2)))
    concat_weight = Tensor(rng.normal(size=(3, 4)))
    results.append(("concat", grad_check(
        lambda t: ad.tsum(ad.mul(ad.concat(t, half), concat_weight)),
        Tensor(rng.normal(size=(3, 2)))), SMOOTH_TOL))

    results.append(("exp", grad_check(
        lambda t: ad.tsum(ad.exp(t)), Tensor(rng.uniform(-1, 1, size=(2, 3)))), SMOOTH_TOL))

    results.append(("clamped_log", grad_check(
        lambda t: ad.tsum(ad.clamped_log(t)),
        Tensor(rng.uniform(0.1, 2.0, size=(2, 3)))), SMOOTH_TOL))

    bias = Tensor(rng.normal(size=4))
    results.append(("bias_add", grad_check(
        lambda t: ad.tsum(ad.add(t, bias)), Tensor(rng.normal(size=(3, 4)))), SMOOTH_TOL))

    other = Tensor(rng.normal(size=(2, 4)))
    results.append(("mul", grad_check(
        lambda t: ad.tsum(ad.mul(t, other)), Tensor(rng.normal(size=(2, 4)))), SMOOTH_TOL))

    labels = np.array([0, 2, 1])
    results.append(("pick", grad_check(
        lambda t: ad.tsum(ad.pick(t, labels)), Tensor(rng.normal(size=(3, 3)))), SMOOTH_TOL))

    results.append(("mean", grad_check(
        lambda t: ad.tmean(ad.mul(t, t)), Tensor(rng.normal(size=(3, 4)))), SMOOTH_TOL))

    # Composite losses on probability inputs.
    probs = _positive_probs(rng, (4, 2))
    y = np.array([0, 1, 1, 0])
    results.append(("classification_loss", grad_check(
        lambda t: classification_loss(t, y), Tensor(probs)), COMPOSITE_TOL))

    dprobs = _positive_probs(rng, (4, 6))
    results.append(("joint_adversarial_loss", grad_check(
        lambda t: joint_adversarial_loss(t, [0, 2, 4, 5]), Tensor(dprobs)), COMPOSITE_TOL))

    results.append(("entropy_loss", grad_check(
        lambda t: entropy_loss(t), Tensor(probs)), COMPOSITE_TOL))

    q = _positive_probs(rng, (4, 2))
    results.append(("kl_divergence_p", grad_check(
        lambda t: kl_divergence(t, Tensor(q)), Tensor(probs)), COMPOSITE_TOL))
    results.append(("kl_divergence_q", grad_check(
        lambda t: kl_divergence(Tensor(probs), t), Tensor(q)), COMPOSITE_TOL))

    # End-to-end losses through the model, gradient w.r.t. the input.
    model = _probe_model()
    x = Tensor(rng.normal(size=(2, 5)))
    results.append(("classifier_pipeline", grad_check(
        lambda t: classification_loss(forward_classifier(model, t, 0), [0, 1]),
        x), COMPOSITE_TOL))
    results.append(("discriminator_pipeline", grad_check(
        lambda t: joint_adversarial_loss(forward_discriminator(model, t), [1, 3]),
        x), COMPOSITE_TOL))
    results.append(("entropy_pipeline", grad_check(
        lambda t: entropy_loss(forward_classifier(model, t, 1)), x), COMPOSITE_TOL))

    results.append(("vat_loss_params", _param_space_vat_check(), COMPOSITE_TOL))

    return results


def run_gradient_checks(print_fn=print) -> bool:
    """Run the whole suite; returns True when every check passes."""
    ok = True
    for name, err, tol in build_checks():
        passed = err < tol
        ok = ok and passed
        print_fn(f"{name:26s} max_rel_err={err:.3e}  tol={tol:.0e}  "
                 f"{'PASS' if passed else 'FAIL'}")
    return ok
