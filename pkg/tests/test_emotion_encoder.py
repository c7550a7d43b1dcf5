"""Emotion encoder: softmax identities, Gumbel sampling, straight-through, GRL."""

import math

import numpy as np
import pytest
import torch

from emoxfer.config import ModelConfig
from emoxfer.errors import LabelError, ShortInputError
from emoxfer.models import (
    EmotionEncoder,
    FeatureExtractor,
    grad_reverse,
    gumbel_softmax_sample,
    modified_softmax,
    softmax_posterior,
    straight_through,
)

from fdcheck import max_relative_gradient_error, micro_config

torch.manual_seed(0)


# ---------------------------------------------------------------- softmax math


def test_softmax_uniform_on_zero_logits():
    z = torch.zeros(10)
    np.testing.assert_allclose(softmax_posterior(z).numpy(), 0.1, atol=1e-12)


def test_softmax_two_class_hand_value():
    z = torch.tensor([math.log(2.0), 0.0], dtype=torch.float64)
    np.testing.assert_allclose(
        softmax_posterior(z).numpy(), [2.0 / 3.0, 1.0 / 3.0], atol=1e-12
    )


def test_softmax_shift_invariance():
    z = torch.randn(10, dtype=torch.float64)
    np.testing.assert_allclose(
        softmax_posterior(z).numpy(), softmax_posterior(z + 123.4).numpy(), atol=1e-12
    )


def test_modified_softmax_hand_value():
    z = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    np.testing.assert_allclose(
        modified_softmax(z, 2.0).numpy(), [0.4, 0.2, 0.2, 0.2], atol=1e-12
    )


def test_modified_softmax_at_base_e_is_softmax():
    z = torch.randn(10, dtype=torch.float64) * 3
    np.testing.assert_allclose(
        modified_softmax(z, math.e).numpy(), softmax_posterior(z).numpy(), atol=1e-9
    )


def test_modified_softmax_alpha_near_one_is_uniform():
    z = torch.randn(10, dtype=torch.float64) * 5
    out = modified_softmax(z, 1.0 + 1e-9)
    np.testing.assert_allclose(out.numpy(), 0.1, atol=1e-6)


def test_modified_softmax_rejects_alpha_at_most_one():
    z = torch.zeros(4)
    for alpha in [1.0, 0.5, -2.0]:
        with pytest.raises(ValueError):
            modified_softmax(z, alpha)


def test_modified_softmax_sums_to_one_and_argmax_stable():
    rng = np.random.default_rng(9)
    for _ in range(50):
        z = torch.tensor(rng.normal(scale=4, size=10))
        for alpha in [1.01, 1.2, 2.0, 10.0]:
            out = modified_softmax(z, alpha)
            assert abs(float(out.sum()) - 1.0) < 1e-9
            assert int(out.argmax()) == int(z.argmax())
            assert int(out.argmax()) == int(softmax_posterior(z).argmax())


def test_modified_softmax_monotone_in_alpha_at_argmax():
    rng = np.random.default_rng(21)
    for _ in range(20):
        z = torch.tensor(rng.normal(scale=2, size=10))
        top = int(z.argmax())
        values = [float(modified_softmax(z, a)[top]) for a in (1.01, 1.2, 2.0)]
        assert values[0] < values[1] < values[2]


# ------------------------------------------------------------------ Gumbel path


def test_gumbel_zero_noise_is_softmax():
    z = torch.randn(6, dtype=torch.float64)
    y = gumbel_softmax_sample(z, tau=1.0, noise=torch.zeros_like(z))
    np.testing.assert_allclose(y.numpy(), softmax_posterior(z).numpy(), atol=1e-12)


def test_gumbel_low_temperature_is_nearly_one_hot():
    z = torch.tensor([0.3, 1.7, -0.2, 0.9], dtype=torch.float64)
    y = gumbel_softmax_sample(z, tau=1e-4, noise=torch.zeros_like(z))
    assert float(y.max()) > 0.999
    assert int(y.argmax()) == int(z.argmax())


def test_gumbel_sample_distribution_matches_softmax():
    z = torch.tensor([0.5, -0.3, 1.2, 0.0, -1.0, 0.8, 0.1, -0.6, 0.4, -0.2],
                     dtype=torch.float64)
    gen = torch.Generator().manual_seed(123)
    n = 20000
    y = gumbel_softmax_sample(z.expand(n, -1), tau=0.7, generator=gen)
    counts = torch.bincount(y.argmax(dim=-1), minlength=10).double() / n
    tv = 0.5 * float((counts - softmax_posterior(z)).abs().sum())
    assert tv < 0.03


def test_straight_through_forward_is_argmax_one_hot():
    y = torch.tensor([0.1, 0.7, 0.2])
    np.testing.assert_allclose(straight_through(y).numpy(), [0.0, 1.0, 0.0])


def test_straight_through_jacobian_is_identity():
    y = torch.tensor([0.1, 0.7, 0.2, 0.0], dtype=torch.float64, requires_grad=True)
    out = straight_through(y)
    jac = torch.zeros(4, 4, dtype=torch.float64)
    for i in range(4):
        grad = torch.zeros(4, dtype=torch.float64)
        grad[i] = 1.0
        jac[i] = torch.autograd.grad(out, y, grad_outputs=grad, retain_graph=True)[0]
    assert torch.equal(jac, torch.eye(4, dtype=torch.float64))


def test_straight_through_passes_upstream_gradient_exactly():
    y = torch.tensor([0.2, 0.5, 0.3], dtype=torch.float64, requires_grad=True)
    upstream = torch.tensor([3.0, -1.5, 0.25], dtype=torch.float64)
    out = straight_through(y)
    (grad,) = torch.autograd.grad(out, y, grad_outputs=upstream)
    assert torch.equal(grad, upstream)


def test_composite_gradient_matches_soft_path():
    """d(loss o ST o gumbel)/dz == d(loss o gumbel)/dz for linear loss, frozen noise."""
    z = torch.randn(5, dtype=torch.float64, requires_grad=True)
    noise = torch.randn(5, dtype=torch.float64)
    w = torch.randn(5, dtype=torch.float64)

    soft = gumbel_softmax_sample(z, tau=0.8, noise=noise)
    (grad_hard,) = torch.autograd.grad((w * straight_through(soft)).sum(), z,
                                       retain_graph=True)
    (grad_soft,) = torch.autograd.grad(
        (w * gumbel_softmax_sample(z, tau=0.8, noise=noise)).sum(), z
    )
    np.testing.assert_allclose(grad_hard.numpy(), grad_soft.numpy(), atol=1e-12)

    # and the soft-path gradient itself agrees with central finite differences
    eps = 1e-6
    fd = np.zeros(5)
    with torch.no_grad():
        for i in range(5):
            zp, zm = z.detach().clone(), z.detach().clone()
            zp[i] += eps
            zm[i] -= eps
            up = float((w * gumbel_softmax_sample(zp, tau=0.8, noise=noise)).sum())
            down = float((w * gumbel_softmax_sample(zm, tau=0.8, noise=noise)).sum())
            fd[i] = (up - down) / (2 * eps)
    np.testing.assert_allclose(grad_hard.numpy(), fd, atol=1e-8)


# -------------------------------------------------------------- gradient reversal


def test_grad_reverse_flips_sign_exactly():
    x = torch.randn(4, dtype=torch.float64, requires_grad=True)
    loss_on = (grad_reverse(x) ** 2).sum()
    (g_on,) = torch.autograd.grad(loss_on, x)
    loss_off = (x**2).sum()
    (g_off,) = torch.autograd.grad(loss_off, x)
    assert torch.equal(g_on, -g_off)


def test_classifier_gradients_unaffected_by_reversal():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double().eval()
    hidden = torch.randn(4, cfg.emotion_hidden, dtype=torch.float64)
    speakers = torch.tensor([0, 1, 2, 0])

    def head_grads(reverse):
        enc.zero_grad()
        enc.adversarial_speaker_loss(hidden, speakers, reverse=reverse).backward()
        return [p.grad.clone() for p in enc.speaker_head.parameters()]

    for g_on, g_off in zip(head_grads(True), head_grads(False)):
        assert torch.equal(g_on, g_off)


def test_uniform_classifier_loss_is_log_n_speakers():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double()
    torch.nn.init.zeros_(enc.speaker_head.weight)
    torch.nn.init.zeros_(enc.speaker_head.bias)
    hidden = torch.randn(5, cfg.emotion_hidden, dtype=torch.float64)
    loss = enc.adversarial_speaker_loss(hidden, torch.tensor([0, 1, 2, 1, 0]))
    assert abs(loss.item() - math.log(cfg.n_speakers)) < 1e-9


# ------------------------------------------------------------- extractor contract


def test_extract_hidden_shape_and_determinism():
    cfg = ModelConfig(n_speakers=2)
    extractor = FeatureExtractor(cfg).eval()
    mel = torch.randn(1, 64, 80)
    with torch.no_grad():
        a = extractor(mel)
        b = extractor(mel)
    assert a.shape == (1, 128)
    assert torch.equal(a, b)


def test_extract_hidden_rejects_short_input():
    cfg = micro_config()
    extractor = FeatureExtractor(cfg)
    with pytest.raises(ShortInputError, match="8"):
        extractor(torch.randn(1, 4, cfg.n_mels))


def test_project_logits_affine_identity_and_linearity():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double()
    with torch.no_grad():
        enc.logit_head.weight.zero_()
    bias = enc.logit_head.bias.detach().clone()
    z = enc.project_logits(torch.zeros(1, cfg.emotion_hidden, dtype=torch.float64))
    np.testing.assert_allclose(z.detach().numpy()[0], bias.numpy(), atol=1e-12)

    torch.nn.init.normal_(enc.logit_head.weight)
    h1 = torch.randn(1, cfg.emotion_hidden, dtype=torch.float64)
    h2 = torch.randn(1, cfg.emotion_hidden, dtype=torch.float64)
    lhs = enc.project_logits(h1 + h2)
    rhs = enc.project_logits(h1) + enc.project_logits(h2) - enc.logit_head.bias
    np.testing.assert_allclose(lhs.detach().numpy(), rhs.detach().numpy(), atol=1e-9)


def test_extractor_gradients_match_finite_differences():
    cfg = micro_config(n_mels=80)
    extractor = FeatureExtractor(cfg).double().eval()
    mel = torch.randn(1, 16, 80, dtype=torch.float64) * 0.5
    w = torch.randn(cfg.emotion_hidden, dtype=torch.float64)

    err = max_relative_gradient_error(extractor, lambda: (extractor(mel) * w).sum())
    assert err < 1e-4


def test_logit_head_gradients_match_finite_differences():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double().eval()
    hidden = torch.randn(2, cfg.emotion_hidden, dtype=torch.float64)
    w = torch.randn(2, cfg.n_logits, dtype=torch.float64)

    err = max_relative_gradient_error(
        enc.logit_head, lambda: (enc.project_logits(hidden) * w).sum()
    )
    assert err < 1e-4


# --------------------------------------------------------------- forward contract


def _forward_batch(cfg, labels):
    enc = EmotionEncoder(cfg).double()
    mel = torch.randn(3, 16, cfg.n_mels, dtype=torch.float64)
    lengths = torch.tensor([16, 12, 9])
    speakers = torch.tensor([0, 1, 2])
    gen = torch.Generator().manual_seed(7)
    return enc, enc(mel, lengths, speakers, labels, tau=1.0, alpha=1.2, generator=gen)


def test_unlabeled_batch_has_zero_emotion_loss_and_gradient():
    cfg = micro_config()
    enc, (outcome, emo_loss, adv_loss) = _forward_batch(cfg, torch.tensor([-1, -1, -1]))
    assert float(emo_loss) == 0.0
    assert emo_loss.grad_fn is None  # constant zero: no gradient contribution
    assert adv_loss.item() > 0.0


def test_labeled_confident_logits_give_small_loss():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double()
    logits = torch.full((2, cfg.n_logits), -10.0, dtype=torch.float64)
    logits[0, 1] = 10.0
    logits[1, 0] = 10.0
    loss = enc.emotion_loss(logits, torch.tensor([1, 0]))
    assert float(loss) < 0.01


def test_label_out_of_range_raises():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double()
    with pytest.raises(LabelError):
        enc.emotion_loss(torch.zeros(1, cfg.n_logits, dtype=torch.float64),
                         torch.tensor([cfg.n_emotions]))


def test_intensity_equals_modified_softmax_at_sampled_index():
    cfg = micro_config()
    enc = EmotionEncoder(cfg).double()
    logits = torch.randn(6, cfg.n_logits, dtype=torch.float64)
    for seed in range(5):
        gen = torch.Generator().manual_seed(seed)
        outcome = enc.sample(logits, tau=0.9, alpha=1.2, generator=gen)
        expected = modified_softmax(logits, 1.2)[
            torch.arange(6), outcome.type_ids
        ]
        np.testing.assert_allclose(outcome.intensity.detach().numpy(),
                                   expected.detach().numpy(), atol=1e-12)
        np.testing.assert_allclose(outcome.soft.sum(dim=-1).detach().numpy(), 1.0,
                                   atol=1e-9)
        assert torch.equal(outcome.one_hot.argmax(dim=-1), outcome.type_ids)
        assert np.all((outcome.intensity.detach().numpy() > 0)
                      & (outcome.intensity.detach().numpy() < 1))
