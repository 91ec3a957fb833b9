import numpy as np
import pytest
import torch

import oracles
from lcgnet.saliency import (
    minmax_normalize,
    resize_saliency,
    save_saliency_png,
    spectral_residual_saliency,
)


class TestSpectralResidual:
    def test_matches_direct_dft_oracle_single_channel(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            feat = rng.random((1, 8, 8))
            got = spectral_residual_saliency(torch.from_numpy(feat), window=3).numpy()
            want = oracles.spectral_residual_oracle(feat, window=3)
            scale = max(np.abs(want).max(), 1e-12)
            assert np.abs(got - want).max() / scale < 1e-5

    def test_matches_oracle_multi_channel(self):
        rng = np.random.default_rng(1)
        feat = rng.random((3, 6, 6))
        got = spectral_residual_saliency(torch.from_numpy(feat), window=3).numpy()
        want = oracles.spectral_residual_oracle(feat, window=3)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-8)

    def test_window_5(self):
        rng = np.random.default_rng(2)
        feat = rng.random((2, 8, 8))
        got = spectral_residual_saliency(torch.from_numpy(feat), window=5).numpy()
        want = oracles.spectral_residual_oracle(feat, window=5)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-8)

    def test_nonnegative_and_normalized(self):
        feat = torch.rand(4, 8, 8, generator=torch.Generator().manual_seed(3))
        out = spectral_residual_saliency(feat)
        assert (out >= 0).all()
        assert out.min() == 0.0
        assert out.max() == 1.0

    def test_constant_channel_normalizes_to_zeros(self):
        out = spectral_residual_saliency(torch.full((1, 8, 8), 2.5))
        assert torch.equal(out, torch.zeros(8, 8))

    def test_scale_invariance(self):
        feat = torch.rand(2, 8, 8, generator=torch.Generator().manual_seed(4)).double() + 0.1
        base = spectral_residual_saliency(feat)
        for a in (0.5, 3.0, 40.0):
            scaled = spectral_residual_saliency(a * feat)
            assert torch.allclose(base, scaled, atol=1e-4)

    def test_no_nan_on_zero_input(self):
        out = spectral_residual_saliency(torch.zeros(2, 8, 8))
        assert torch.isfinite(out).all()
        out2 = spectral_residual_saliency(torch.cat([torch.zeros(1, 8, 8), torch.rand(1, 8, 8)]))
        assert torch.isfinite(out2).all()

    def test_channel_permutation_bit_exact(self):
        feat = torch.rand(6, 8, 8, generator=torch.Generator().manual_seed(5))
        perm = torch.randperm(6, generator=torch.Generator().manual_seed(6))
        assert torch.equal(
            spectral_residual_saliency(feat), spectral_residual_saliency(feat[perm])
        )

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            spectral_residual_saliency(torch.rand(1, 8, 8), window=4)

    def test_batched_matches_per_sample(self):
        feat = torch.rand(2, 3, 8, 8, generator=torch.Generator().manual_seed(7))
        batched = spectral_residual_saliency(feat)
        for b in range(2):
            assert torch.allclose(batched[b], spectral_residual_saliency(feat[b]), atol=1e-6)


class TestResizeSaliency:
    def test_same_size_unchanged(self):
        s = minmax_normalize(torch.rand(6, 6, generator=torch.Generator().manual_seed(8))[None])[0]
        assert torch.allclose(resize_saliency(s, (6, 6)), s, atol=1e-6)

    def test_constant_map_stays_constant(self):
        s = torch.full((4, 4), 0.25)
        out = resize_saliency(s, (8, 8))
        assert torch.allclose(out, torch.full((8, 8), 0.25), atol=1e-6)

    def test_upsample_matches_bilinear_oracle(self):
        src = np.array([[0.0, 1.0], [0.5, 0.25]])
        got = resize_saliency(torch.from_numpy(src), (4, 4)).numpy()
        want = oracles.bilinear_resize_oracle(src, 4, 4)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_downsample_matches_oracle(self):
        rng = np.random.default_rng(9)
        src = rng.random((6, 8))
        got = resize_saliency(torch.from_numpy(src), (3, 4)).numpy()
        want = oracles.bilinear_resize_oracle(src, 3, 4)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError):
            resize_saliency(torch.rand(4, 4), (0, 4))

    def test_values_stay_in_unit_interval(self):
        s = minmax_normalize(torch.rand(5, 5, generator=torch.Generator().manual_seed(10))[None])[0]
        out = resize_saliency(s, (13, 11))
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_save_saliency_png(tmp_path):
    s = minmax_normalize(torch.rand(8, 8, generator=torch.Generator().manual_seed(11))[None])[0]
    p = tmp_path / "sal.png"
    save_saliency_png(s, p)
    from PIL import Image as PILImage

    with PILImage.open(p) as im:
        assert im.size == (8, 8)
        assert im.mode == "L"
