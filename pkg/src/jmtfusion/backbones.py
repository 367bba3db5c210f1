"""
Modality-specific feature extractors.

``Phys1DCNN`` is the physiological-signal network (two conv/pool stages and
two fully connected layers). ``TemporalConvBackbone`` is a small conv stack
that turns one clip of a synthetic modality stream into an embedding, and
``SpectrogramBackbone`` prefixes it with a log-power spectrogram for waveform
streams. Backbones are used frozen: :func:`extract_clip_features` runs them
without building a graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, InputError, ShapeError
from .nn import Conv1d, Linear, MaxPool1d, Module, _rng
from .tensor import Tensor

PHYS_INPUT_LENGTH = 2816


class Phys1DCNN(Module):
    """Conv(32, k5, s2) -> ReLU -> MaxPool(2) -> Conv(64, k5, s1) -> ReLU -> MaxPool(2) -> FC 512 -> ReLU -> FC 2.

    Input is ``(2816, 1)`` or batched ``(B, 2816, 1)``. ``mode="features"``
    stops after the first FC + ReLU and returns the 512-d embedding. When a
    list is passed as ``trace``, ``(layer, per-sample shape)`` pairs are
    appended to it as the forward pass runs.
    """

    def __init__(self, rng=None, input_length: int = PHYS_INPUT_LENGTH, feature_dim: int = 512, num_classes: int = 2):
        rng = _rng(rng)
        self.input_length = input_length
        self.conv1 = Conv1d(1, 32, 5, stride=2, rng=rng)
        self.pool1 = MaxPool1d(2)
        self.conv2 = Conv1d(32, 64, 5, stride=1, rng=rng)
        self.pool2 = MaxPool1d(2)
        flat = self.pool2.out_length(self.conv2.out_length(self.pool1.out_length(self.conv1.out_length(input_length))))
        self.flat_dim = flat * 64
        self.fc1 = Linear(self.flat_dim, feature_dim, rng)
        self.fc2 = Linear(feature_dim, num_classes, rng)

    def forward(self, signal, mode: str = "features", trace: list | None = None) -> Tensor:
        if mode not in ("features", "logits"):
            raise ConfigError(f"mode must be 'features' or 'logits', got {mode!r}")
        x = T._as_tensor(signal)
        if x.shape[-2:] != (self.input_length, 1) or x.ndim not in (2, 3):
            raise ShapeError(f"expected input ({self.input_length}, 1) or (B, {self.input_length}, 1), got {x.shape}")

        def log(name, t):
            if trace is not None:
                trace.append((name, t.shape[1:] if x.ndim == 3 else t.shape))
            return t

        log("input", x)
        h = log("relu", T.relu(log("conv1", self.conv1(x))))
        h = log("pool1", self.pool1(h))
        h = log("relu", T.relu(log("conv2", self.conv2(h))))
        h = log("pool2", self.pool2(h))
        h = T.reshape(h, h.shape[:-2] + (self.flat_dim,))
        h = log("relu", T.relu(log("fc1", self.fc1(h))))
        if mode == "features":
            return h
        return log("fc2", self.fc2(h))


class TemporalConvBackbone(Module):
    """Per-clip encoder: ``[Conv1d -> ReLU -> MaxPool]*`` then a Linear projection.

    Takes ``(N, clip_length, channels)`` and returns ``(N, out_dim)``.
    """

    def __init__(self, in_channels: int, clip_length: int, out_dim: int = 512, filters=(16,),
                 kernel_size: int = 3, pool: int = 2, rng=None):
        rng = _rng(rng)
        self.in_channels, self.clip_length, self.out_dim = in_channels, clip_length, out_dim
        self.convs, self.pools = [], []
        length, channels = clip_length, in_channels
        for f in filters:
            conv = Conv1d(channels, f, kernel_size, rng=rng)
            length = conv.out_length(length)
            pl = MaxPool1d(pool) if length >= pool else MaxPool1d(1)
            length = pl.out_length(length)
            if length < 1:
                raise ConfigError(f"clip_length {clip_length} is too short for the conv stack")
            self.convs.append(conv)
            self.pools.append(pl)
            channels = f
        self.flat_dim = length * channels
        self.proj = Linear(self.flat_dim, out_dim, rng)

    def forward(self, clips) -> Tensor:
        x = T._as_tensor(clips)
        if x.ndim != 3 or x.shape[1:] != (self.clip_length, self.in_channels):
            raise ShapeError(f"expected (N, {self.clip_length}, {self.in_channels}), got {x.shape}")
        for conv, pl in zip(self.convs, self.pools):
            x = pl(T.relu(conv(x)))
        return self.proj(T.reshape(x, (x.shape[0], self.flat_dim)))


@dataclass(frozen=True)
class SpectrogramConfig:
    sample_rate: int = 44100
    dft_length: int = 1024
    hop: float = 0.010
    window: float = 0.020
    n_bands: int | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.window < self.hop:
            raise ConfigError("window must be at least as long as hop")
        if self.hop <= 0 or self.sample_rate <= 0 or self.dft_length <= 0:
            raise ConfigError("sample_rate, dft_length and hop must be positive")

    @property
    def win_samples(self) -> int:
        return int(round(self.window * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate))

    @property
    def freq_bins(self) -> int:
        return self.n_bands or self.dft_length // 2 + 1


def frame_count(n_samples: int, cfg: SpectrogramConfig) -> int:
    return (n_samples - cfg.win_samples) // cfg.hop_samples + 1


def hann(n: int) -> np.ndarray:
    # periodic form, the usual choice for STFT analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def spectrogram(signal, cfg: SpectrogramConfig = SpectrogramConfig()) -> Tensor:
    """Normalised log-power spectrogram, shape ``(freq_bins, frames)``.

    Frames are Hann-windowed, zero-padded (or truncated) to ``dft_length``
    and transformed with a real FFT. The log of the floored power is
    standardised to zero mean and unit variance over the whole spectrogram.
    With ``cfg.n_bands`` set, adjacent bins are averaged into that many
    linear bands before the log.
    """
    x = signal.data if isinstance(signal, Tensor) else np.asarray(signal, dtype=np.float64)
    x = x.reshape(-1)
    win, hop = cfg.win_samples, cfg.hop_samples
    if x.size < win:
        raise InputError(f"signal of {x.size} samples is shorter than one window ({win})")
    n_frames = frame_count(x.size, cfg)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames] * hann(win)
    if win > cfg.dft_length:
        frames = frames[:, : cfg.dft_length]
    power = np.abs(np.fft.rfft(frames, n=cfg.dft_length, axis=1)) ** 2
    if cfg.n_bands:
        power = np.stack([b.mean(axis=1) for b in np.array_split(power, cfg.n_bands, axis=1)], axis=1)
    logp = np.log(np.maximum(power, cfg.log_floor))
    logp = logp - logp.mean()
    std = logp.std()
    if std > 0:
        logp = logp / std
    return T.Tensor(logp.T)


class SpectrogramBackbone(Module):
    """Waveform clip -> spectrogram (frames x bins) -> :class:`TemporalConvBackbone`."""

    def __init__(self, clip_samples: int, cfg: SpectrogramConfig, out_dim: int = 512, filters=(16,), rng=None):
        self.cfg = cfg
        self.clip_samples = clip_samples
        n_frames = frame_count(clip_samples, cfg)
        self.conv = TemporalConvBackbone(cfg.freq_bins, n_frames, out_dim, filters, rng=rng)

    def forward(self, clips) -> Tensor:
        x = clips.data if isinstance(clips, Tensor) else np.asarray(clips, dtype=np.float64)
        specs = np.stack([spectrogram(c.reshape(-1), self.cfg).data.T for c in x])
        return self.conv(specs)


def extract_clip_features(stream, backbone, clip_length: int) -> Tensor:
    """Split a stream of frames into consecutive clips and embed each clip.

    ``stream`` is a :class:`~jmtfusion.data.ModalityStream` or a
    ``(frames, channels)`` array. A trailing partial clip is dropped.
    Returns ``(num_clips, out_dim)`` in time order.
    """
    frames = getattr(stream, "frames", stream)
    frames = frames.data if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    if frames.shape[0] == 0:
        raise InputError("cannot extract features from an empty stream")
    n = frames.shape[0] // clip_length
    if n == 0:
        raise InputError(f"stream of {frames.shape[0]} frames is shorter than one clip ({clip_length})")
    clips = frames[: n * clip_length].reshape(n, clip_length, frames.shape[1])
    with T.no_grad():
        return backbone(clips)
