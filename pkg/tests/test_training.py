import copy

import numpy as np
import pytest

from mdtc.autodiff import Tape, Tensor, backward
from mdtc.data import DomainDataset
from mdtc.errors import ConfigError, NumericError, UsageError
from mdtc.losses import LossWeights, classification_loss, joint_adversarial_loss
from mdtc.model import ModelConfig, forward_classifier, init_model
from mdtc.training import (AdamState, DomainBatch, OptimizerState, TrainConfig,
                           _pooled_adversarial, adam_update, compute_pseudo_labels,
                           discriminator_phase, evaluate, fit, pseudo_label,
                           task_phase, train_step)


def small_config(**overrides):
    base = dict(num_domains=2, input_dim=4, shared_dim=4, private_dim=3,
                extractor_hidden=(6,), classifier_hidden=5,
                discriminator_hidden=4, dropout_rate=0.2)
    base.update(overrides)
    return ModelConfig(**base)


def make_batches(rng, num_domains=2, dim=4, n=6, unlabeled=6):
    batches = []
    for _ in range(num_domains):
        x = rng.normal(size=(n, dim))
        y = rng.integers(0, 2, size=n)
        xu = rng.normal(size=(unlabeled, dim)) if unlabeled else None
        batches.append(DomainBatch(x=x, y=y, x_unlabeled=xu))
    return batches


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_hand_recurrence():
    # Step 1 with g=1: m_hat = v_hat = 1, so the update is -lr / (1 + eps).
    p = Tensor(np.array([[0.0]]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_update([p], [np.array([[1.0]])], state, lr=0.1)
    expected = -0.1 / (1.0 + 1e-8)
    assert abs(p.data[0, 0] - expected) < 1e-15
    assert state.t == 1


def test_adam_zero_gradient_leaves_parameters():
    p = Tensor(np.array([[1.5, -2.0]]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_update([p], [np.zeros((1, 2))], state, lr=0.1)
    assert np.array_equal(p.data, [[1.5, -2.0]])


def test_adam_equal_gradients_give_equal_updates():
    p = Tensor(np.array([[3.0, 3.0]]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_update([p], [np.array([[0.7, 0.7]])], state, lr=0.05)
    assert p.data[0, 0] == p.data[0, 1]


def test_adam_none_gradient_treated_as_zero():
    p = Tensor(np.array([[1.0]]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_update([p], [None], state, lr=0.1)
    assert np.array_equal(p.data, [[1.0]])


def test_adam_shape_mismatch_rejected():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    state = AdamState.for_params([p])
    with pytest.raises(UsageError):
        adam_update([p], [np.zeros((3, 3))], state, lr=0.1)


# ---------------------------------------------------------------------------
# Pseudo-labels


def test_pseudo_label_matches_argmax():
    model = init_model(small_config(), np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).normal(size=(8, 4)))
    probs = forward_classifier(model, x, 0)
    assert np.array_equal(pseudo_label(model, x, 0), np.argmax(probs.data, axis=1))


def test_pseudo_label_tie_breaks_to_class_zero():
    model = init_model(small_config(), np.random.default_rng(2))
    w_out, b_out = model.classifier[-1]
    w_out.data = np.zeros_like(w_out.data)
    b_out.data = np.zeros_like(b_out.data)
    x = Tensor(np.random.default_rng(3).normal(size=(5, 4)))
    assert np.array_equal(pseudo_label(model, x, 0), np.zeros(5, dtype=np.int64))


# ---------------------------------------------------------------------------
# Step phases


def test_phase_a_touches_only_discriminator():
    model = init_model(small_config(), np.random.default_rng(4))
    rng = np.random.default_rng(5)
    batches = make_batches(np.random.default_rng(6))
    cfg = TrainConfig(seed=0)
    opt = OptimizerState.for_model(model)
    pseudo = compute_pseudo_labels(model, batches)
    before = model.component_hashes()
    discriminator_phase(model, batches, cfg, opt, rng, pseudo)
    after = model.component_hashes()
    assert before["discriminator"] != after["discriminator"]
    for comp in before:
        if comp != "discriminator":
            assert before[comp] == after[comp]


def test_phase_b_touches_everything_but_discriminator():
    model = init_model(small_config(), np.random.default_rng(7))
    rng = np.random.default_rng(8)
    batches = make_batches(np.random.default_rng(9))
    cfg = TrainConfig(seed=0)
    opt = OptimizerState.for_model(model)
    pseudo = compute_pseudo_labels(model, batches)
    before = model.component_hashes()
    task_phase(model, batches, cfg, opt, rng, pseudo)
    after = model.component_hashes()
    assert before["discriminator"] == after["discriminator"]
    for comp in before:
        if comp != "discriminator":
            assert before[comp] != after[comp]


def test_adversarial_gradient_never_reaches_private_extractors():
    model = init_model(small_config(dropout_rate=0.0), np.random.default_rng(10))
    batches = make_batches(np.random.default_rng(11))
    pseudo = compute_pseudo_labels(model, batches)
    model.zero_grads()
    with Tape() as tape:
        total = None
        for d, b in enumerate(batches):
            dprobs, idx = _pooled_adversarial(model, d, b, pseudo, False, None)
            term = joint_adversarial_loss(dprobs, idx)
            total = term if total is None else total + term
        backward(total, tape)
    for d in range(2):
        for p in model.private_parameters(d):
            assert p.grad is None


def eval_l_d(model, batches, pseudo):
    total = None
    for d, b in enumerate(batches):
        dprobs, idx = _pooled_adversarial(model, d, b, pseudo, False, None)
        term = joint_adversarial_loss(dprobs, idx)
        total = term if total is None else total + term
    return total.item()


def test_phase_a_does_not_increase_l_d():
    model = init_model(small_config(dropout_rate=0.0), np.random.default_rng(12))
    batches = make_batches(np.random.default_rng(13), n=16, unlabeled=16)
    cfg = TrainConfig(learning_rate=0.001, seed=0)
    opt = OptimizerState.for_model(model)
    pseudo = compute_pseudo_labels(model, batches)
    before = eval_l_d(model, batches, pseudo)
    discriminator_phase(model, batches, cfg, opt, np.random.default_rng(14), pseudo)
    after = eval_l_d(model, batches, pseudo)
    assert after <= before + 1e-12


def test_zero_weights_reduce_to_plain_supervised_training():
    cfg_model = small_config()
    zero = LossWeights(lambda_d=0.0, lambda_uvt=0.0, lambda_lvt=0.0)
    cfg = TrainConfig(loss_weights=zero, learning_rate=0.01, seed=0)

    model_a = init_model(cfg_model, np.random.default_rng(20))
    model_b = copy.deepcopy(model_a)
    opt_a = OptimizerState.for_model(model_a)
    opt_b = OptimizerState.for_model(model_b)
    rng_a = np.random.default_rng(21)
    rng_b = np.random.default_rng(21)
    batch_rng = np.random.default_rng(22)

    for step in range(5):
        batches = make_batches(batch_rng)
        train_step(model_a, batches, cfg, opt_a, rng_a, step=step)

        # Plain supervised baseline built from the same components.
        model_b.zero_grads()
        with Tape() as tape:
            l_c = None
            for d, b in enumerate(batches):
                probs = forward_classifier(model_b, Tensor(b.x), d,
                                           training=True, rng=rng_b)
                term = classification_loss(probs, b.y)
                l_c = term if l_c is None else l_c + term
            backward(l_c, tape)
        params = model_b.task_parameters()
        adam_update(params, [p.grad for p in params], opt_b.task,
                    cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    assert model_a.parameter_hash() == model_b.parameter_hash()
    # Discriminator untouched when lambda_d is zero.
    assert model_a.component_hashes()["discriminator"] == \
        model_b.component_hashes()["discriminator"]


def test_train_step_deterministic_given_seed():
    cfg_model = small_config()
    cfg = TrainConfig(seed=0)
    batches = make_batches(np.random.default_rng(30))
    runs = []
    for _ in range(2):
        model = init_model(cfg_model, np.random.default_rng(31))
        opt = OptimizerState.for_model(model)
        metrics = train_step(model, batches, cfg, opt, np.random.default_rng(32))
        runs.append((metrics, model.parameter_hash()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_train_step_rejects_empty_batch():
    model = init_model(small_config(), np.random.default_rng(33))
    cfg = TrainConfig(seed=0)
    opt = OptimizerState.for_model(model)
    batches = [DomainBatch(x=np.zeros((0, 4)), y=np.zeros(0, dtype=np.int64)),
               DomainBatch(x=np.zeros((1, 4)), y=np.zeros(1, dtype=np.int64))]
    with pytest.raises(UsageError):
        train_step(model, batches, cfg, opt, np.random.default_rng(34))


def test_train_step_aborts_on_non_finite_loss():
    model = init_model(small_config(), np.random.default_rng(35))
    cfg = TrainConfig(seed=0)
    opt = OptimizerState.for_model(model)
    batches = make_batches(np.random.default_rng(36))
    batches[0].x[0, 0] = np.nan
    with pytest.raises(NumericError, match="L_"):
        train_step(model, batches, cfg, opt, np.random.default_rng(37))


# ---------------------------------------------------------------------------
# fit / evaluate


def separable_dataset(rng, n_per_class=100):
    rows = []
    for cls, center in ((0, -2.0), (1, 2.0)):
        draws = rng.normal(loc=(center, 0.0), scale=0.4, size=(n_per_class, 2))
        rows += [({0: float(a), 1: float(b)}, cls) for a, b in draws]
    return DomainDataset(name="toy", labeled=rows, unlabeled=[], input_dim=2)


def logistic_oracle_accuracy(x, y, iters=2000, lr=0.5):
    w = np.zeros(x.shape[1] + 1)
    xb = np.column_stack([x, np.ones(len(x))])
    for _ in range(iters):
        z = xb @ w
        p = 1.0 / (1.0 + np.exp(-z))
        w -= lr * xb.T @ (p - y) / len(y)
    return float(((xb @ w > 0).astype(int) == y).mean())


def test_supervised_sanity_beats_95_percent():
    ds = separable_dataset(np.random.default_rng(40))
    x, y = ds.labeled_matrix()
    assert logistic_oracle_accuracy(x, y) == 1.0  # confirms separability

    cfg = TrainConfig(
        loss_weights=LossWeights(0.0, 0.0, 0.0),
        learning_rate=0.01, batch_size=8, epochs=50, seed=7,
        model=ModelConfig(num_domains=1, input_dim=2, shared_dim=8,
                          private_dim=4, extractor_hidden=(16,),
                          classifier_hidden=12, discriminator_hidden=8,
                          dropout_rate=0.1))
    model, history = fit([ds], cfg)
    report = evaluate(model, [ds])
    assert report.per_domain["toy"] > 0.95
    assert len(history) == 50 * 25  # ceil(200 / 8) steps per epoch


def test_fit_deterministic_under_seed():
    ds = separable_dataset(np.random.default_rng(41), n_per_class=12)
    cfg = TrainConfig(
        loss_weights=LossWeights(0.0, 0.0, 0.0), learning_rate=0.01,
        batch_size=4, epochs=2, seed=3,
        model=ModelConfig(num_domains=1, input_dim=2, shared_dim=4,
                          private_dim=2, extractor_hidden=(6,),
                          classifier_hidden=4, discriminator_hidden=4,
                          dropout_rate=0.2))
    model1, hist1 = fit([ds], cfg)
    model2, hist2 = fit([ds], cfg)
    assert model1.parameter_hash() == model2.parameter_hash()
    assert [m.to_dict() for m in hist1] == [m.to_dict() for m in hist2]


def test_fit_rejects_domain_without_labels():
    empty = DomainDataset(name="empty", labeled=[], unlabeled=[{0: 1.0}], input_dim=2)
    with pytest.raises(ConfigError):
        fit([empty], TrainConfig(seed=0))


def test_evaluate_constant_predictor_on_balanced_data():
    model = init_model(small_config(num_domains=1, input_dim=2,
                                    extractor_hidden=(4,)), np.random.default_rng(50))
    w_out, b_out = model.classifier[-1]
    w_out.data = np.zeros_like(w_out.data)
    b_out.data = np.zeros_like(b_out.data)
    rows = [({0: float(i), 1: 0.0}, i % 2) for i in range(40)]
    ds = DomainDataset(name="bal", labeled=rows, unlabeled=[], input_dim=2)
    report = evaluate(model, [ds])
    assert report.per_domain["bal"] == 0.5


def test_evaluate_perfect_predictor_and_average():
    cfg = small_config(num_domains=2, input_dim=3, extractor_hidden=(4,))
    model = init_model(cfg, np.random.default_rng(51))
    rng = np.random.default_rng(52)
    datasets = []
    for d in range(2):
        x = rng.normal(size=(20, 3))
        preds = pseudo_label(model, Tensor(x), d)
        rows = [({j: float(v) for j, v in enumerate(row)}, int(p))
                for row, p in zip(x, preds)]
        datasets.append(DomainDataset(name=f"d{d}", labeled=rows,
                                      unlabeled=[], input_dim=3))
    report = evaluate(model, datasets)
    assert report.per_domain == {"d0": 1.0, "d1": 1.0}
    assert report.average == 1.0


def test_evaluate_rejects_empty_fold():
    model = init_model(small_config(num_domains=1, input_dim=2,
                                    extractor_hidden=(4,)), np.random.default_rng(53))
    ds = DomainDataset(name="x", labeled=[({0: 1.0}, 0)], unlabeled=[], input_dim=2)
    with pytest.raises(UsageError):
        evaluate(model, [ds], test_indices=[np.array([], dtype=np.int64)])
