import numpy as np
import pytest
import torch

from diffpace.network import (ArchDescriptor, channels_to_complex,
                              complex_to_channels, denoiser_forward, new_model,
                              score_from_denoiser)

torch.set_num_threads(1)

ARCH = ArchDescriptor(grid_shape=(4, 6), hidden=8, kernel=3, embed_dim=16, pe_dim=8)


def small_model(seed=0, randomize_last=False):
    model = new_model(ARCH, np.random.default_rng(seed))
    if randomize_last:
        rng = np.random.default_rng(seed + 1)
        with torch.no_grad():
            for p in model.net.parameters():
                p.add_(torch.from_numpy(0.05 * rng.standard_normal(tuple(p.shape))))
        model.ema.load_state_dict(model.net.state_dict())
    return model


def test_residual_identity_at_init():
    model = small_model()
    x = np.random.default_rng(1).standard_normal((2, 4, 6))
    np.testing.assert_array_equal(denoiser_forward(model, x, 0.5), x)
    np.testing.assert_array_equal(denoiser_forward(model, x, 0.0), x)


def test_forward_bitwise_deterministic():
    model = small_model(randomize_last=True)
    x = np.random.default_rng(2).standard_normal((2, 4, 6))
    a = denoiser_forward(model, x, 0.3)
    b = denoiser_forward(model, x, 0.3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, x)  # randomized net actually transforms


def test_parameter_count_matches_formula():
    for arch in (ARCH, ArchDescriptor(grid_shape=(16, 32)),
                 ArchDescriptor(grid_shape=(8, 8), hidden=12, kernel=5,
                                embed_dim=20, pe_dim=10)):
        model = new_model(arch, np.random.default_rng(0))
        assert model.parameter_count == arch.parameter_count()


def test_default_arch_parameter_count_value():
    # hand-computed layer-by-layer sum for width 32, kernel 3x3,
    # embed 64, positional encoding 32, depth 4+4:
    #   trunk 2112 + 4160, films 4*4160, enc 608 + 3*9248, dec 3*9248 + 578
    arch = ArchDescriptor(grid_shape=(16, 32))
    assert arch.parameter_count() == (2112 + 4160) + 4 * 4160 + \
        (608 + 3 * 9248) + (3 * 9248 + 578)


def test_forward_shape_and_batching():
    model = small_model(randomize_last=True)
    single = np.random.default_rng(3).standard_normal((2, 4, 6))
    batch = np.stack([single, 2 * single])
    out_single = denoiser_forward(model, single, 0.4)
    out_batch = denoiser_forward(model, batch, 0.4)
    assert out_single.shape == (2, 4, 6)
    assert out_batch.shape == (2, 2, 4, 6)
    np.testing.assert_allclose(out_batch[0], out_single, atol=1e-12)


def test_forward_rejects_bad_shape_and_sigma():
    model = small_model()
    with pytest.raises(ValueError):
        denoiser_forward(model, np.zeros((3, 4, 6)), 0.5)
    with pytest.raises(ValueError):
        denoiser_forward(model, np.zeros((2, 5, 6)), 0.5)
    with pytest.raises(ValueError):
        denoiser_forward(model, np.zeros((2, 4, 6)), model.sigma_max * 1.2)
    with pytest.raises(ValueError):
        denoiser_forward(model, np.zeros((2, 4, 6)), -0.1)


def test_sigma_conditioning_changes_output():
    model = small_model(randomize_last=True)
    x = np.random.default_rng(4).standard_normal((2, 4, 6))
    a = denoiser_forward(model, x, 0.1)
    b = denoiser_forward(model, x, 1.5)
    assert np.abs(a - b).max() > 1e-8


def test_score_zero_when_denoiser_is_identity():
    model = small_model()  # zero-initialised final layer: D(x, sigma) = x
    x = np.random.default_rng(5).standard_normal((2, 4, 6))
    np.testing.assert_array_equal(score_from_denoiser(model, x, 0.5),
                                  np.zeros_like(x))


def test_score_requires_positive_sigma():
    model = small_model()
    with pytest.raises(ValueError):
        score_from_denoiser(model, np.zeros((2, 4, 6)), 0.0)


def test_score_matches_point_prior_closed_form():
    # a denoiser that returns the true clean signal yields -(h_t - h)/sigma^2
    from dataclasses import replace

    rng = np.random.default_rng(6)
    h = rng.standard_normal((2, 4, 6))
    h_t = h + 0.3 * rng.standard_normal((2, 4, 6))

    class IdealDenoiser(torch.nn.Module):
        def forward(self, x, sigma):
            return torch.from_numpy(h)[None].expand(x.shape[0], -1, -1, -1)

    model = replace(small_model(), ema=IdealDenoiser())
    score = score_from_denoiser(model, h_t, 0.3)
    np.testing.assert_allclose(score, -(h_t - h) / 0.3 ** 2, atol=1e-12)


def test_complex_channel_conversion_roundtrip():
    rng = np.random.default_rng(7)
    h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    x = complex_to_channels(h)
    assert x.shape == (2, 4, 6)
    np.testing.assert_array_equal(channels_to_complex(x), h)
