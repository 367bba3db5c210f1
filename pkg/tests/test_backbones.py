import numpy as np
import pytest

from jmtfusion import tensor as T
from jmtfusion.backbones import (
    Phys1DCNN,
    SpectrogramBackbone,
    SpectrogramConfig,
    TemporalConvBackbone,
    extract_clip_features,
    frame_count,
    spectrogram,
)
from jmtfusion.errors import ConfigError, InputError, ShapeError


@pytest.fixture(scope="module")
def phys():
    return Phys1DCNN(rng=0)


class TestPhys1DCNN:
    def test_zero_input_gives_zero_features(self, phys):
        with T.no_grad():
            out = phys(np.zeros((2816, 1)))
        assert out.shape == (512,)
        assert not out.data.any()

    def test_batched_and_logits(self, phys, rng):
        with T.no_grad():
            assert phys(rng.standard_normal((3, 2816, 1)), mode="logits").shape == (3, 2)

    @pytest.mark.parametrize("shape", [(2815, 1), (2816, 2), (2816,)])
    def test_wrong_shape(self, phys, shape):
        with pytest.raises(ShapeError):
            phys(np.zeros(shape))

    def test_unknown_mode(self, phys):
        with pytest.raises(ConfigError):
            phys(np.zeros((2816, 1)), mode="embedding")

    def test_sampled_gradient_check(self, rng):
        net = Phys1DCNN(rng=1, input_length=64, feature_dim=8)
        x = T.tensor(rng.standard_normal((64, 1)))
        w = T.Tensor(rng.standard_normal(2))
        rep = T.gradient_check_report(lambda v: T.sum(net(v, mode="logits") * w), x,
                                      coords=rng.choice(64, 24, replace=False), skip_kinks=True)
        assert rep.checked > 0
        assert rep.max_relative_error < 1e-4


class TestTemporalConv:
    def test_shape(self, rng):
        bb = TemporalConvBackbone(4, 8, out_dim=12, filters=(6, 5), rng=0)
        with T.no_grad():
            assert bb(rng.standard_normal((7, 8, 4))).shape == (7, 12)

    def test_rejects_wrong_clip(self, rng):
        bb = TemporalConvBackbone(4, 8, out_dim=12, rng=0)
        with pytest.raises(ShapeError):
            bb(rng.standard_normal((7, 9, 4)))

    def test_too_short_clip(self):
        with pytest.raises(ConfigError):
            TemporalConvBackbone(2, 2, kernel_size=3, rng=0)


class TestClipFeatures:
    @pytest.fixture
    def backbone(self):
        return TemporalConvBackbone(3, 8, out_dim=6, rng=2)

    @pytest.mark.parametrize("frames, clips", [(64, 8), (65, 8), (71, 8), (8, 1)])
    def test_clip_count_drops_partial(self, backbone, rng, frames, clips):
        assert extract_clip_features(rng.standard_normal((frames, 3)), backbone, 8).shape == (clips, 6)

    def test_clips_are_in_time_order(self, backbone, rng):
        stream = rng.standard_normal((32, 3))
        feats = extract_clip_features(stream, backbone, 8).data
        with T.no_grad():
            third = backbone(stream[16:24][None]).data[0]
        np.testing.assert_allclose(feats[2], third, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("frames", [0, 7])
    def test_too_few_frames(self, backbone, frames):
        with pytest.raises(InputError):
            extract_clip_features(np.zeros((frames, 3)), backbone, 8)

    def test_repeatable(self, backbone, rng):
        stream = rng.standard_normal((40, 3))
        a = extract_clip_features(stream, backbone, 8).data
        b = extract_clip_features(stream, backbone, 8).data
        assert a.tobytes() == b.tobytes()

    def test_no_graph(self, backbone, rng):
        out = extract_clip_features(rng.standard_normal((16, 3)), backbone, 8)
        assert out.node is None


class TestSpectrogram:
    def test_window_and_hop_samples(self):
        cfg = SpectrogramConfig()
        assert (cfg.win_samples, cfg.hop_samples, cfg.freq_bins) == (882, 441, 513)

    def test_clip_frame_count(self):
        cfg = SpectrogramConfig()
        n = int(0.64 * cfg.sample_rate)
        assert frame_count(n, cfg) == 63
        assert spectrogram(np.random.default_rng(0).standard_normal(n), cfg).shape == (513, 63)

    def test_silence_is_finite(self):
        out = spectrogram(np.zeros(4410)).data
        assert np.all(np.isfinite(out))

    def test_normalised(self, rng):
        out = spectrogram(rng.standard_normal(8820)).data
        assert abs(out.mean()) < 1e-10
        assert out.std() == pytest.approx(1.0, abs=1e-10)

    def test_shorter_than_window(self):
        with pytest.raises(InputError):
            spectrogram(np.zeros(881))

    def test_bands(self, rng):
        cfg = SpectrogramConfig(sample_rate=8000, dft_length=256, n_bands=16)
        assert spectrogram(rng.standard_normal(800), cfg).shape[0] == 16

    def test_tone_peak(self):
        cfg = SpectrogramConfig(sample_rate=8000, dft_length=256)
        t = np.arange(8000) / 8000
        spec = spectrogram(np.sin(2 * np.pi * 1000 * t), cfg).data
        assert np.all(spec.argmax(axis=0) == 32)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            SpectrogramConfig(hop=0.03, window=0.02)

    def test_backbone(self, rng):
        cfg = SpectrogramConfig(sample_rate=8000, dft_length=128, n_bands=8)
        bb = SpectrogramBackbone(1600, cfg, out_dim=5, rng=0)
        with T.no_grad():
            assert bb(rng.standard_normal((3, 1600))).shape == (3, 5)
