import numpy as np
import pytest

from mdtc.autodiff import Tape, Tensor, backward, grad_check, tsum
from mdtc.errors import ConfigError, UsageError
from mdtc.losses import classification_loss, joint_adversarial_loss
from mdtc.model import (ModelConfig, forward_classifier, forward_discriminator,
                        init_model, load_checkpoint, save_checkpoint)


def small_config(**overrides):
    base = dict(num_domains=3, input_dim=6, shared_dim=5, private_dim=3,
                extractor_hidden=(8,), discriminator_hidden=7, dropout_rate=0.4)
    base.update(overrides)
    return ModelConfig(**base)


def test_init_deterministic_given_seed():
    cfg = small_config()
    m1 = init_model(cfg, np.random.default_rng(42))
    m2 = init_model(cfg, np.random.default_rng(42))
    assert m1.parameter_hash() == m2.parameter_hash()
    m3 = init_model(cfg, np.random.default_rng(43))
    assert m1.parameter_hash() != m3.parameter_hash()


def test_default_dimensions_match_contract():
    cfg = ModelConfig(num_domains=4, input_dim=5000)
    assert cfg.extractor_hidden == (1000, 500)
    assert cfg.shared_dim == 128 and cfg.private_dim == 64
    assert cfg.classifier_hidden == 192
    assert cfg.discriminator_classes == 8
    model = init_model(cfg, np.random.default_rng(0))
    w_out, _ = model.discriminator[-1]
    assert w_out.shape == (128, 8)
    w_cls, _ = model.classifier[0]
    assert w_cls.shape == (192, 192)


def test_biases_zero_at_init():
    model = init_model(small_config(), np.random.default_rng(1))
    for name, t in model.parameter_items():
        if name.endswith("/b"):
            assert np.all(t.data == 0.0), name


def test_init_bounds_follow_fan_rule():
    model = init_model(small_config(), np.random.default_rng(2))
    w, _ = model.shared[0]
    bound = np.sqrt(6.0 / (6 + 8))
    assert np.all(np.abs(w.data) <= bound)
    assert np.max(np.abs(w.data)) > 0.5 * bound


def test_classifier_rows_are_distributions():
    model = init_model(small_config(), np.random.default_rng(3))
    x = Tensor(np.random.default_rng(4).normal(size=(5, 6)))
    probs = forward_classifier(model, x, domain=1)
    assert probs.shape == (5, 2)
    assert np.max(np.abs(probs.data.sum(axis=1) - 1.0)) < 1e-12
    assert np.all(probs.data >= 0)


def test_eval_forward_is_deterministic():
    model = init_model(small_config(), np.random.default_rng(5))
    row = np.random.default_rng(6).normal(size=6)
    x = Tensor(np.stack([row, row]))
    probs = forward_classifier(model, x, domain=0)
    assert np.array_equal(probs.data[0], probs.data[1])


def test_domain_tag_changes_output():
    model = init_model(small_config(), np.random.default_rng(7))
    x = Tensor(np.random.default_rng(8).normal(size=(1, 6)))
    p0 = forward_classifier(model, x, domain=0)
    p1 = forward_classifier(model, x, domain=1)
    assert not np.allclose(p0.data, p1.data)


def test_domain_out_of_range():
    model = init_model(small_config(), np.random.default_rng(9))
    with pytest.raises(UsageError):
        forward_classifier(model, Tensor(np.zeros((1, 6))), domain=3)


def test_discriminator_width_and_rows():
    model = init_model(small_config(), np.random.default_rng(10))
    dprobs = forward_discriminator(model, Tensor(np.random.default_rng(11).normal(size=(4, 6))))
    assert dprobs.shape == (4, 6)  # 2M with M=3
    assert np.max(np.abs(dprobs.data.sum(axis=1) - 1.0)) < 1e-12


def test_discriminator_ignores_private_parameters():
    model = init_model(small_config(), np.random.default_rng(12))
    x = Tensor(np.random.default_rng(13).normal(size=(4, 6)))
    before = forward_discriminator(model, x).data.copy()
    for layers in model.private:
        for w, b in layers:
            w.data = w.data + 100.0
    after = forward_discriminator(model, x).data
    assert np.array_equal(before, after)


def test_adversarial_loss_gradient_skips_private_and_classifier():
    model = init_model(small_config(), np.random.default_rng(14))
    x = Tensor(np.random.default_rng(15).normal(size=(4, 6)))
    with Tape() as tape:
        dprobs = forward_discriminator(model, x)
        loss = joint_adversarial_loss(dprobs, [0, 1, 4, 5])
        backward(loss, tape)
    for d in range(3):
        for p in model.private_parameters(d):
            assert p.grad is None
    for w, b in model.classifier:
        assert w.grad is None and b.grad is None
    assert all(p.grad is not None for p in model.discriminator_parameters())


def test_classification_gradient_skips_other_domains():
    model = init_model(small_config(), np.random.default_rng(16))
    x = Tensor(np.random.default_rng(17).normal(size=(4, 6)))
    with Tape() as tape:
        probs = forward_classifier(model, x, domain=1)
        backward(classification_loss(probs, [0, 1, 0, 1]), tape)
    assert all(p.grad is not None for p in model.private_parameters(1))
    for d in (0, 2):
        for p in model.private_parameters(d):
            assert p.grad is None


def test_full_classifier_loss_gradient_check():
    model = init_model(small_config(dropout_rate=0.0), np.random.default_rng(18))
    x = Tensor(np.random.default_rng(19).normal(size=(1, 6)))

    def loss_of_input(t):
        return tsum(classification_loss(forward_classifier(model, t, domain=0), [1]))

    assert grad_check(loss_of_input, x) < 1e-4


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(num_domains=0, input_dim=10)
    with pytest.raises(ConfigError):
        ModelConfig(num_domains=2, input_dim=10, dropout_rate=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(num_domains=2, input_dim=10, extractor_hidden=(0,))


def test_marginal_variant_shares_non_discriminator_init():
    joint = init_model(small_config(), np.random.default_rng(20))
    marginal = init_model(small_config(joint_alignment=False), np.random.default_rng(20))
    hj, hm = joint.component_hashes(), marginal.component_hashes()
    for comp in ("shared", "private0", "private1", "private2", "classifier"):
        assert hj[comp] == hm[comp]
    assert hj["discriminator"] != hm["discriminator"]
    w_out, _ = marginal.discriminator[-1]
    assert w_out.shape[1] == 3  # M-way


def test_checkpoint_round_trip_is_bit_reproducible(tmp_path):
    model = init_model(small_config(), np.random.default_rng(21))
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.parameter_hash() == model.parameter_hash()
    x = Tensor(np.random.default_rng(22).normal(size=(3, 6)))
    assert np.array_equal(forward_classifier(model, x, 2).data,
                          forward_classifier(loaded, x, 2).data)
