import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import lag1_autocorrelation, lstsq_decode_mse

from jmtfusion.data import (
    DatasetConfig,
    LatentEmotionProcess,
    ModalityStream,
    NoiseSpec,
    dumps_dataset,
    generate_dataset,
    generate_sequence,
    load_dataset,
    loads_dataset,
    make_folds,
    make_mixing,
    render_audio,
    render_modality,
    sample_blackout,
    save_dataset,
)
from jmtfusion.errors import ConfigError, InputError


class TestLatentProcess:
    def test_near_unit_smoothness_is_almost_constant(self):
        y = generate_sequence(LatentEmotionProcess(200, smoothness=0.9999, seed=3))
        assert np.abs(np.diff(y, axis=0)).max() < 0.05

    def test_smoothness_orders_autocorrelation(self):
        smooth = [lag1_autocorrelation(generate_sequence(LatentEmotionProcess(256, 0.9, 1, seed=s, clamp=False))[:, 0])
                  for s in range(100)]
        rough = [lag1_autocorrelation(generate_sequence(LatentEmotionProcess(256, 0.1, 1, seed=s, clamp=False))[:, 0])
                 for s in range(100)]
        assert all(a > b for a, b in zip(smooth, rough))
        assert np.mean(smooth) == pytest.approx(0.9, abs=0.05)

    def test_unit_marginal_variance(self):
        y = np.concatenate([generate_sequence(LatentEmotionProcess(64, 0.8, 1, seed=s, scale=1.0, clamp=False))
                            for s in range(400)])
        assert y.var() == pytest.approx(1.0, abs=0.05)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99), st.floats(0.1, 3.0))
    def test_seeded_and_bounded(self, seed, s, scale):
        proc = LatentEmotionProcess(50, s, 2, seed=seed, scale=scale)
        y = generate_sequence(proc)
        assert y.shape == (50, 2)
        assert y.tobytes() == generate_sequence(proc).tobytes()
        assert np.all(np.abs(y) <= 1.0)

    @pytest.mark.parametrize("s", [-0.1, 1.0, 1.5])
    def test_invalid_smoothness(self, s):
        with pytest.raises(ConfigError):
            generate_sequence(LatentEmotionProcess(10, s))


class TestRendering:
    def test_joint_decode_is_exact_without_noise(self):
        ds = generate_dataset(DatasetConfig(n_subjects=2, sequences_per_subject=4, k_folds=2, seed=1))
        a = np.concatenate([s.stream_a.frames for s in ds.samples])
        b = np.concatenate([s.stream_b.frames for s in ds.samples])
        y = np.concatenate([s.targets for s in ds.samples])
        assert lstsq_decode_mse(np.hstack([a, b]), y) < 1e-6

    def test_one_modality_is_not_enough(self):
        for seed in range(20):
            ds = generate_dataset(DatasetConfig(n_subjects=2, sequences_per_subject=4, k_folds=2, seed=seed))
            a = np.concatenate([s.stream_a.frames for s in ds.samples])
            b = np.concatenate([s.stream_b.frames for s in ds.samples])
            y = np.concatenate([s.targets for s in ds.samples])
            joint = lstsq_decode_mse(np.hstack([a, b]), y)
            assert lstsq_decode_mse(a, y) > joint + 1e-3
            assert lstsq_decode_mse(b, y) > joint + 1e-3

    def test_full_blackout_zeroes_frames(self, rng):
        mix = make_mixing("A", 4, 2, rng)
        stream = render_modality(rng.standard_normal((30, 2)) * 0.3, "A", mix, NoiseSpec(sigma_a=1.0, blackout_a=1.0),
                                 rng)
        assert not stream.frames.any()

    @pytest.mark.parametrize("p_a, p_both, burst", [(0.2, 0.0, 1), (0.1, 0.15, 1), (0.3, 0.0, 4)])
    def test_blackout_rate(self, p_a, p_both, burst):
        noise = NoiseSpec(blackout_a=p_a, blackout_b=0.05, correlated_blackout=p_both, burst_length=burst)
        length = 40_000
        mask_a, mask_b = sample_blackout(length, noise, np.random.default_rng(5))
        p = 1 - (1 - p_a) * (1 - p_both)
        blocks = length // burst
        se = np.sqrt(p * (1 - p) / blocks)
        assert abs(mask_a.mean() - p) < 3 * se
        both = (mask_a & mask_b).mean()
        assert both >= p_both - 3 * np.sqrt(p_both * (1 - p_both) / blocks + 1e-12)

    def test_burst_blocks_are_contiguous(self):
        mask, _ = sample_blackout(64, NoiseSpec(blackout_a=0.5, burst_length=8), np.random.default_rng(0))
        assert all(len(set(block)) == 1 for block in mask.reshape(8, 8))

    def test_modality_sign_flip(self, rng):
        a, b = make_mixing("A", 2, 2, rng), make_mixing("B", 2, 2, rng)
        assert (a.sign, b.sign) == (1.0, -1.0)
        np.testing.assert_allclose(a.linear @ a.linear.T, np.eye(2), atol=1e-12)

    def test_too_few_channels(self, rng):
        with pytest.raises(ConfigError):
            make_mixing("A", 1, 2, rng)

    @pytest.mark.parametrize("kwargs", [{"blackout_a": 1.5}, {"sigma_b": -1.0}, {"burst_length": 0},
                                        {"correlated_blackout": -0.1}])
    def test_invalid_noise(self, kwargs):
        with pytest.raises(ConfigError):
            NoiseSpec(**kwargs)

    def test_audio_length(self, rng):
        wave = render_audio(ModalityStream("A", rng.standard_normal((5, 4))), 441)
        assert wave.shape == (5 * 441,)
        assert np.all(np.isfinite(wave))


class TestFolds:
    def test_even_split(self):
        folds = make_folds(np.arange(10), 5, seed=0)
        assert [len(f) for f in folds] == [2] * 5

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 1000), st.data())
    def test_partition(self, n, seed, data):
        k = data.draw(st.integers(2, n))
        folds = make_folds(np.repeat(np.arange(n), 3), k, seed)
        flat = sorted(s for f in folds for s in f)
        assert flat == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
        assert folds == make_folds(np.arange(n), k, seed)

    @pytest.mark.parametrize("k", [1, 11, 2.5])
    def test_invalid_k(self, k):
        with pytest.raises(ConfigError):
            make_folds(np.arange(10), k)

    def test_split_is_subject_disjoint(self, tiny_dataset):
        subj = tiny_dataset.subject_ids
        for fold in range(len(tiny_dataset.folds)):
            tr, va, te = tiny_dataset.split(fold)
            assert len(tr) + len(va) + len(te) == len(tiny_dataset)
            groups = [set(subj[i]) for i in (tr, va, te)]
            assert not (groups[0] & groups[1]) and not (groups[0] & groups[2]) and not (groups[1] & groups[2])


class TestDataset:
    def test_shapes(self, tiny_dataset, tiny_data_config):
        assert len(tiny_dataset) == 24
        s = tiny_dataset.samples[0]
        assert s.stream_a.frames.shape == (32, tiny_data_config.channels)
        assert s.targets.shape == (32, 2)
        assert s.label in (0, 1)

    def test_bitwise_reproducible(self, tiny_data_config):
        assert dumps_dataset(generate_dataset(tiny_data_config)) == dumps_dataset(generate_dataset(tiny_data_config))

    def test_seed_changes_data(self, tiny_data_config):
        other = DatasetConfig.from_dict({**tiny_data_config.to_dict(), "seed": 8})
        assert dumps_dataset(generate_dataset(other)) != dumps_dataset(generate_dataset(tiny_data_config))

    def test_samples_do_not_depend_on_dataset_size(self, tiny_data_config):
        bigger = DatasetConfig.from_dict({**tiny_data_config.to_dict(), "sequences_per_subject": 9})
        a = generate_dataset(tiny_data_config).samples[0]
        b = generate_dataset(bigger).samples[0]
        assert a.stream_a.frames.tobytes() == b.stream_a.frames.tobytes()

    def test_file_round_trip(self, tiny_dataset, tmp_path):
        path = tmp_path / "d.bin"
        save_dataset(tiny_dataset, path)
        back = load_dataset(path)
        assert back.config == tiny_dataset.config
        assert back.folds == tiny_dataset.folds
        assert dumps_dataset(back) == path.read_bytes()

    def test_truncated_file(self, tiny_dataset):
        buf = dumps_dataset(tiny_dataset)
        for cut in (4, 50, len(buf) // 2, len(buf) - 1):
            with pytest.raises(InputError, match="offset"):
                loads_dataset(buf[:cut])

    def test_bad_magic_and_trailing_bytes(self, tiny_dataset):
        buf = dumps_dataset(tiny_dataset)
        with pytest.raises(InputError):
            loads_dataset(b"X" + buf[1:])
        with pytest.raises(InputError):
            loads_dataset(buf + b"\0")

    @pytest.mark.parametrize("kwargs", [{"n_subjects": 0}, {"num_targets": 3}, {"k_folds": 1},
                                        {"n_subjects": 3, "k_folds": 4}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            DatasetConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            DatasetConfig.from_dict({"subjects": 4})
