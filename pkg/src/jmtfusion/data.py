"""
Seeded synthetic two-modality corpus.

Each sequence has a smooth latent target series ``y`` (valence/arousal-like,
in [-1, 1]) and a rougher nuisance series ``u`` of the same width. Modality A
observes a mix of ``y + u`` and modality B a mix of ``y - u``. Either
modality alone confounds target and nuisance, while the two together
determine ``y`` linearly. On top of that come Gaussian noise and blackouts
(frames replaced by zeros), which can hit one modality or both at once.

Everything derives from ``DatasetConfig.seed`` through per-sample
``SeedSequence`` keys, so regeneration is bit-exact and samples may be
produced in any order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError

MAGIC = b"JMTDSET\x00"
FORMAT_VERSION = 1


@dataclass
class LatentEmotionProcess:
    """First-order low-pass (AR(1)) noise, scaled and optionally clamped to [-1, 1]."""

    length: int
    smoothness: float = 0.9
    num_targets: int = 2
    seed: int = 0
    scale: float = 0.5
    offset: float = 0.0
    clamp: bool = True


def generate_sequence(proc: LatentEmotionProcess, rng=None) -> np.ndarray:
    """Return a ``(length, num_targets)`` series.

    ``x_t = s x_{t-1} + sqrt(1 - s^2) e_t`` with ``x_0 ~ N(0, 1)`` keeps unit
    marginal variance for every smoothness ``s``; the output is
    ``offset + scale * x``.
    """
    if proc.length < 1:
        raise ConfigError("length must be >= 1")
    if not 0.0 <= proc.smoothness < 1.0:
        raise ConfigError(f"smoothness must lie in [0, 1), got {proc.smoothness}")
    rng = np.random.default_rng(proc.seed) if rng is None else rng
    s = proc.smoothness
    e = rng.standard_normal((proc.length, proc.num_targets))
    x = np.empty_like(e)
    x[0] = e[0]
    c = np.sqrt(1.0 - s * s)
    for t in range(1, proc.length):
        x[t] = s * x[t - 1] + c * e[t]
    y = proc.offset + proc.scale * x
    return np.clip(y, -1.0, 1.0) if proc.clamp else y


@dataclass
class NoiseSpec:
    """Per-modality Gaussian noise and blackout probabilities.

    Blackouts are drawn per block of ``burst_length`` frames. A block in
    modality A goes dark with probability ``blackout_a`` independently of B,
    and both modalities go dark together with probability
    ``correlated_blackout``.
    """

    sigma_a: float = 0.0
    sigma_b: float = 0.0
    blackout_a: float = 0.0
    blackout_b: float = 0.0
    correlated_blackout: float = 0.0
    burst_length: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("blackout_a", "blackout_b", "correlated_blackout"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if self.sigma_a < 0 or self.sigma_b < 0:
            raise ConfigError("noise sigma must be non-negative")
        if self.burst_length < 1:
            raise ConfigError("burst_length must be >= 1")

    def sigma(self, modality: str) -> float:
        return self.sigma_a if modality == "A" else self.sigma_b

    def blackout(self, modality: str) -> float:
        return self.blackout_a if modality == "A" else self.blackout_b


@dataclass
class ModalityMixing:
    """How a modality turns the latent state into observed channels.

    The latent seen by the modality is ``y + sign * u``. Channels are
    ``latent @ linear.T`` followed by ``tanh(gain * latent @ nonlinear.T)``.
    """

    sign: float
    linear: np.ndarray
    nonlinear: np.ndarray
    gain: float = 1.5

    @property
    def channels(self) -> int:
        return self.linear.shape[0] + self.nonlinear.shape[0]


def make_mixing(modality_id: str, channels: int, num_targets: int, rng) -> ModalityMixing:
    """Random mixing with a full-rank linear part of ``num_targets`` channels."""
    if channels < num_targets:
        raise ConfigError(f"need at least {num_targets} channels per modality, got {channels}")
    q, _ = np.linalg.qr(rng.standard_normal((num_targets, num_targets)))
    nonlinear = rng.standard_normal((channels - num_targets, num_targets)) / np.sqrt(num_targets)
    return ModalityMixing(1.0 if modality_id == "A" else -1.0, q, nonlinear)


@dataclass
class ModalityStream:
    modality_id: str
    frames: np.ndarray  # (T, channels)
    subject_id: int = 0
    sequence_id: int = 0

    def __len__(self):
        return self.frames.shape[0]


def sample_blackout(length: int, noise: NoiseSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Boolean frame masks (True = blacked out) for modalities A and B."""
    n_blocks = -(-length // noise.burst_length)
    u = rng.random((3, n_blocks))
    both = u[2] < noise.correlated_blackout
    a = (u[0] < noise.blackout_a) | both
    b = (u[1] < noise.blackout_b) | both

    def expand(m):
        return np.repeat(m, noise.burst_length)[:length]

    return expand(a), expand(b)


def render_modality(targets: np.ndarray, modality_id: str, mixing: ModalityMixing, noise: NoiseSpec,
                    rng=None, nuisance: np.ndarray | None = None, blackout: np.ndarray | None = None,
                    subject_id: int = 0, sequence_id: int = 0) -> ModalityStream:
    """Observe ``targets`` (plus ``nuisance``) through one modality.

    If ``blackout`` is not given, an independent mask is drawn from
    ``noise.blackout(modality_id)``.
    """
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    targets = np.asarray(targets, dtype=np.float64)
    latent = targets if nuisance is None else targets + mixing.sign * nuisance
    frames = np.concatenate([latent @ mixing.linear.T, np.tanh(mixing.gain * latent @ mixing.nonlinear.T)], axis=1)
    sigma = noise.sigma(modality_id)
    if sigma > 0:
        frames = frames + sigma * rng.standard_normal(frames.shape)
    if blackout is None:
        n_blocks = -(-len(frames) // noise.burst_length)
        blackout = np.repeat(rng.random(n_blocks) < noise.blackout(modality_id), noise.burst_length)[: len(frames)]
    frames[blackout] = 0.0
    return ModalityStream(modality_id, frames, subject_id, sequence_id)


@dataclass
class DatasetConfig:
    n_subjects: int = 10
    sequences_per_subject: int = 24
    frames: int = 64
    channels: int = 4
    num_targets: int = 2
    smoothness: float = 0.95
    nuisance_smoothness: float = 0.5
    nuisance_scale: float = 0.5
    target_scale: float = 0.5
    subject_offset: float = 0.2
    k_folds: int = 5
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.sequences_per_subject < 1 or self.frames < 1:
            raise ConfigError("n_subjects, sequences_per_subject and frames must be >= 1")
        if self.num_targets not in (1, 2):
            raise ConfigError(f"num_targets must be 1 or 2, got {self.num_targets}")
        if not 2 <= self.k_folds <= self.n_subjects:
            raise ConfigError(f"k_folds must lie in [2, n_subjects={self.n_subjects}], got {self.k_folds}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        noise = NoiseSpec(**d.pop("noise", {}))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
        return cls(noise=noise, **d)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Sample:
    stream_a: ModalityStream
    stream_b: ModalityStream
    targets: np.ndarray  # (T, num_targets)
    subject_id: int
    sequence_id: int

    @property
    def label(self) -> int:
        """Binary label: 1 when the first target averages above zero."""
        return int(self.targets[:, 0].mean() > 0.0)


@dataclass
class SyntheticDataset:
    samples: list[Sample]
    folds: list[list[int]]
    config: DatasetConfig

    def __len__(self):
        return len(self.samples)

    @property
    def subject_ids(self) -> np.ndarray:
        return np.array([s.subject_id for s in self.samples])

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.isin(self.subject_ids, self.folds[fold]))

    def split(self, test_fold: int = 0, val_fold: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(train, val, test) sample indices; validation defaults to the fold after ``test_fold``."""
        k = len(self.folds)
        val_fold = (test_fold + 1) % k if val_fold is None else val_fold
        test = self.fold_indices(test_fold)
        val = self.fold_indices(val_fold)
        train = np.setdiff1d(np.arange(len(self)), np.concatenate([test, val]))
        return train, val, test


def make_folds(subjects, k: int, seed: int = 0) -> list[list[int]]:
    """Shuffle unique subjects and cut them into ``k`` groups whose sizes differ by at most one."""
    if isinstance(subjects, SyntheticDataset):
        subjects = subjects.subject_ids
    uniq = np.unique(np.asarray(subjects))
    if not isinstance(k, (int, np.integer)) or k < 2 or k > uniq.size:
        raise ConfigError(f"k must be an integer in [2, {uniq.size}], got {k}")
    order = np.random.default_rng([seed, 0xF01D]).permutation(uniq)
    return [sorted(int(s) for s in part) for part in np.array_split(order, k)]


def generate_dataset(cfg: DatasetConfig) -> SyntheticDataset:
    mix_rng = np.random.default_rng([cfg.seed, 0x313])
    mixing = {m: make_mixing(m, cfg.channels, cfg.num_targets, mix_rng) for m in ("A", "B")}
    offsets = np.random.default_rng([cfg.seed, 0x5B]).normal(0.0, cfg.subject_offset, (cfg.n_subjects, cfg.num_targets))
    samples = []
    for subj in range(cfg.n_subjects):
        for seq in range(cfg.sequences_per_subject):
            rng = np.random.default_rng([cfg.seed, subj, seq])
            y = generate_sequence(LatentEmotionProcess(cfg.frames, cfg.smoothness, cfg.num_targets,
                                                       scale=cfg.target_scale), rng)
            y = np.clip(y + offsets[subj], -1.0, 1.0)
            u = generate_sequence(LatentEmotionProcess(cfg.frames, cfg.nuisance_smoothness, cfg.num_targets,
                                                       scale=cfg.nuisance_scale, clamp=False), rng)
            mask_a, mask_b = sample_blackout(cfg.frames, cfg.noise, rng)
            sa = render_modality(y, "A", mixing["A"], cfg.noise, rng, u, mask_a, subj, seq)
            sb = render_modality(y, "B", mixing["B"], cfg.noise, rng, u, mask_b, subj, seq)
            samples.append(Sample(sa, sb, y, subj, seq))
    folds = make_folds(np.arange(cfg.n_subjects), cfg.k_folds, cfg.seed)
    return SyntheticDataset(samples, folds, cfg)


# ----------------------------------------------------------------------------
# binary container
#
#   magic "JMTDSET\0" | u32 version | 32-byte sha256 of the config JSON
#   u32 config length | config JSON (utf-8) | u32 sample count
#   per sample: u32 subject | u32 sequence | 3 arrays (A frames, B frames, targets)
#   per array: u8 ndim | u32 dims[ndim] | float64 payload
#   all integers and floats little-endian


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def dumps_dataset(ds: SyntheticDataset) -> bytes:
    cfg_json = json.dumps(ds.config.to_dict(), sort_keys=True).encode()
    fh = io.BytesIO()
    fh.write(MAGIC)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    fh.write(hashlib.sha256(cfg_json).digest())
    fh.write(struct.pack("<I", len(cfg_json)))
    fh.write(cfg_json)
    fh.write(struct.pack("<I", len(ds.samples)))
    for s in ds.samples:
        fh.write(struct.pack("<II", s.subject_id, s.sequence_id))
        for arr in (s.stream_a.frames, s.stream_b.frames, s.targets):
            _write_array(fh, arr)
    return fh.getvalue()


def save_dataset(ds: SyntheticDataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise InputError(f"dataset file truncated: need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_dataset(buf: bytes) -> SyntheticDataset:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise InputError("not a dataset file (bad magic at offset 0)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported dataset version {version} at offset {len(MAGIC)}")
    digest = r.take(32)
    (n,) = r.unpack("<I")
    cfg_json = r.take(n)
    if hashlib.sha256(cfg_json).digest() != digest:
        raise InputError("dataset config hash mismatch")
    cfg = DatasetConfig.from_dict(json.loads(cfg_json))
    (count,) = r.unpack("<I")
    samples = []
    for _ in range(count):
        subj, seq = r.unpack("<II")
        arrays = []
        for _ in range(3):
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            size = int(np.prod(shape))
            arrays.append(np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape))
        a, b, y = arrays
        samples.append(Sample(ModalityStream("A", a, subj, seq), ModalityStream("B", b, subj, seq), y, subj, seq))
    if r.pos != len(buf):
        raise InputError(f"trailing bytes after offset {r.pos}")
    folds = make_folds(np.arange(cfg.n_subjects), cfg.k_folds, cfg.seed)
    return SyntheticDataset(samples, folds, cfg)


def load_dataset(path) -> SyntheticDataset:
    return loads_dataset(Path(path).read_bytes())


def render_audio(stream: ModalityStream, frame_samples: int, sample_rate: int = 44100,
                 carriers: tuple = (440.0, 880.0, 1760.0, 3520.0)) -> np.ndarray:
    """Waveform whose carrier amplitudes follow the stream's channels frame by frame.

    Channel ``c`` modulates a sinusoid at ``carriers[c % len(carriers)]``;
    amplitudes are ``exp(value)`` so silence (a blacked-out frame) still maps
    to a fixed tone level rather than to zero.
    """
    frames = stream.frames
    t = np.arange(frames.shape[0] * frame_samples) / sample_rate
    env = np.repeat(np.exp(frames), frame_samples, axis=0)
    wave = np.zeros_like(t)
    for c in range(frames.shape[1]):
        wave += env[:, c] * np.sin(2 * np.pi * carriers[c % len(carriers)] * t)
    return wave
