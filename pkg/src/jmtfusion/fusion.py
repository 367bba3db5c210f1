"""
Transformer fusion of two modality feature sequences.

:class:`JointFusionModel` runs three branches: modality A, modality B, and
their joint representation ``J = FC([F_B ; F_A])``. Each branch has its own
self-attention encoder. Six cross-attention blocks then combine every ordered
pair of branches. Block ``X<-Y`` takes queries from X and keys/values from Y.
The six block outputs are stacked as a length-6 sequence. An aggregating
self-attention block runs over that sequence, and a linear head reads the
flattened result.

:class:`VanillaFusionModel` is the same network without the joint branch
(two cross blocks), and :class:`ConcatBaseline` is an MLP on the
concatenated features. :class:`UnimodalModel` sees one modality only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import AlignmentError, ConfigError, ShapeError
from .nn import SCALING_VARIANTS, EncoderBlock, Linear, Module, _rng, sinusoidal_positions
from .tensor import Tensor

AGGREGATION_MODES = ("self_attention_stack", "concat_fc")
POOLING_MODES = ("mean", "none")
JMT_BLOCKS = (("A", "B"), ("A", "J"), ("B", "A"), ("B", "J"), ("J", "A"), ("J", "B"))
VANILLA_BLOCKS = (("A", "B"), ("B", "A"))
MODEL_KINDS = ("jmt", "vanilla", "concat", "unimodal_A", "unimodal_B")


def block_name(query: str, source: str) -> str:
    return f"{query}<-{source}"


@dataclass
class FusionConfig:
    model_dim: int = 64
    num_heads: int = 8
    encoder_depth: int = 1
    aggregation_mode: str = "self_attention_stack"
    scaling_variant: str = "sqrt_dk"
    dropout_rate: float = 0.0
    head_output_dim: int = 2
    feature_dim: int | None = None  # backbone embedding size; defaults to model_dim
    ff_dim: int | None = None  # encoder feed-forward width; defaults to 2 * model_dim
    temporal_pooling: str = "mean"  # "none" predicts one output per clip
    positional_encoding: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model_dim <= 0 or self.num_heads <= 0 or self.model_dim % self.num_heads:
            raise ConfigError(f"model_dim {self.model_dim} must be a positive multiple of num_heads {self.num_heads}")
        if self.encoder_depth < 0:
            raise ConfigError("encoder_depth must be >= 0")
        if self.aggregation_mode not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation_mode must be one of {AGGREGATION_MODES}")
        if self.scaling_variant not in SCALING_VARIANTS:
            raise ConfigError(f"scaling_variant must be one of {SCALING_VARIANTS}")
        if self.temporal_pooling not in POOLING_MODES:
            raise ConfigError(f"temporal_pooling must be one of {POOLING_MODES}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.head_output_dim <= 0:
            raise ConfigError("head_output_dim must be positive")

    @property
    def feat_dim(self) -> int:
        return self.feature_dim or self.model_dim

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _block(cfg: FusionConfig, rng) -> EncoderBlock:
    return EncoderBlock(cfg.model_dim, cfg.num_heads, cfg.ff_dim, rng, cfg.scaling_variant, cfg.dropout_rate)


def _batched(fa, fb) -> tuple[Tensor, Tensor, bool]:
    fa, fb = T._as_tensor(fa), T._as_tensor(fb)
    if fa.ndim != fb.ndim or fa.ndim not in (2, 3):
        raise ShapeError(f"expected (T, D) or (B, T, D) features, got {fa.shape} and {fb.shape}")
    if fa.shape != fb.shape:
        raise AlignmentError(f"modality features are not aligned: {fa.shape} vs {fb.shape}")
    if fa.ndim == 2:
        return T.reshape(fa, (1,) + fa.shape), T.reshape(fb, (1,) + fb.shape), True
    return fa, fb, False


def joint_representation(F_A, F_B, joint_fc: Linear) -> Tensor:
    """Per clip, concatenate ``[F_B ; F_A]`` and project with ``joint_fc``."""
    F_A, F_B = T._as_tensor(F_A), T._as_tensor(F_B)
    if F_A.shape[:-1] != F_B.shape[:-1]:
        raise AlignmentError(f"clip counts differ: {F_A.shape} vs {F_B.shape}")
    if F_A.shape[-1] != F_B.shape[-1]:
        raise AlignmentError(f"feature sizes differ: {F_A.shape} vs {F_B.shape}")
    return joint_fc(T.concat([F_B, F_A], axis=-1))


@dataclass
class AttentionReport:
    """Aggregator attention over the stacked block outputs.

    ``weights`` has shape ``(N, heads, n_blocks, n_blocks)``; each row sums
    to one. ``block_mass`` averages the attention each block receives over
    samples, heads and queries. ``branch_mass`` sums that over blocks grouped
    by their query branch.
    """

    blocks: list[str]
    weights: np.ndarray
    block_mass: dict[str, float] = field(default_factory=dict)
    branch_mass: dict[str, float] = field(default_factory=dict)


class CrossModalFusion(Module):
    """Shared machinery for the joint and vanilla transformer fusion models."""

    pairs: tuple = ()

    def __init__(self, config: FusionConfig, rng=None):
        config.validate()
        rng = _rng(rng)
        self.config = config
        d, fd = config.model_dim, config.feat_dim
        branches = sorted({b for pair in self.pairs for b in pair})
        self.branches = branches
        self.joint_fc = Linear(2 * fd, d, rng) if "J" in branches else None
        self.input_proj = {m: Linear(fd, d, rng) for m in ("A", "B")} if fd != d else {}
        self.encoders = {b: [_block(config, rng) for _ in range(config.encoder_depth)] for b in branches}
        self.cross = {block_name(q, s): _block(config, rng) for q, s in self.pairs}
        self.aggregator = _block(config, rng) if config.aggregation_mode == "self_attention_stack" else None
        self.head = Linear(len(self.pairs) * d, config.head_output_dim, rng)

    @property
    def block_names(self) -> list[str]:
        return [block_name(q, s) for q, s in self.pairs]

    def forward(self, F_A, F_B, training: bool = False, rng=None) -> Tensor:
        return self.forward_detail(F_A, F_B, training, rng)[0]

    def forward_detail(self, F_A, F_B, training: bool = False, rng=None):
        """Forward pass that also returns intermediate block outputs and aggregator weights."""
        cfg = self.config
        if training:
            rng = _rng(rng)
        fa, fb, unbatched = _batched(F_A, F_B)
        if fa.shape[-1] != cfg.feat_dim:
            raise ShapeError(f"expected feature size {cfg.feat_dim}, got {fa.shape[-1]}")
        b, t, _ = fa.shape
        d = cfg.model_dim

        streams = {}
        if self.joint_fc is not None:
            streams["J"] = joint_representation(fa, fb, self.joint_fc)
        streams["A"] = self.input_proj["A"](fa) if self.input_proj else fa
        streams["B"] = self.input_proj["B"](fb) if self.input_proj else fb
        if cfg.positional_encoding:
            pos = T.Tensor(np.broadcast_to(sinusoidal_positions(t, d), (b, t, d)))
            streams = {k: v + pos for k, v in streams.items()}

        encoded = {}
        for br in self.branches:
            x = streams[br]
            for blk in self.encoders[br]:
                x = blk(x, training=training, rng=rng)
            encoded[br] = x

        outputs = []
        for q, s in self.pairs:
            y = self.cross[block_name(q, s)](encoded[q], encoded[s], training=training, rng=rng)
            if cfg.temporal_pooling == "mean":
                y = T.mean(y, axis=1)
            outputs.append(y)

        n = len(outputs)
        seq = T.stack(outputs, axis=-2)  # (B, n, D) or (B, T, n, D)
        lead = seq.shape[:-2]
        seq = T.reshape(seq, (-1, n, d))
        weights = None
        if self.aggregator is not None:
            seq, weights = self.aggregator(seq, training=training, rng=rng, return_weights=True)
        flat = T.dropout(T.reshape(seq, lead + (n * d,)), cfg.dropout_rate, training, rng)
        out = self.head(flat)
        if unbatched:
            out = T.reshape(out, out.shape[1:])
        detail = {"blocks": dict(zip(self.block_names, outputs)), "encoded": encoded, "aggregator_weights": weights}
        return out, detail


class JointFusionModel(CrossModalFusion):
    pairs = JMT_BLOCKS


class VanillaFusionModel(CrossModalFusion):
    pairs = VANILLA_BLOCKS


class ConcatBaseline(Module):
    """``[F_B ; F_A]`` -> FC -> ReLU -> FC head, per clip or on time-averaged features."""

    def __init__(self, config: FusionConfig, rng=None):
        config.validate()
        rng = _rng(rng)
        self.config = config
        self.hidden = Linear(2 * config.feat_dim, config.model_dim, rng)
        self.head = Linear(config.model_dim, config.head_output_dim, rng)

    def forward(self, F_A, F_B, training: bool = False, rng=None) -> Tensor:
        if training:
            rng = _rng(rng)
        fa, fb, unbatched = _batched(F_A, F_B)
        x = T.concat([fb, fa], axis=-1)
        if self.config.temporal_pooling == "mean":
            x = T.mean(x, axis=1)
        h = T.dropout(T.relu(self.hidden(x)), self.config.dropout_rate, training, rng)
        out = self.head(h)
        return T.reshape(out, out.shape[1:]) if unbatched else out


class UnimodalModel(Module):
    """Self-attention encoder and head over a single modality."""

    def __init__(self, config: FusionConfig, modality: str, rng=None):
        if modality not in ("A", "B"):
            raise ConfigError(f"modality must be 'A' or 'B', got {modality!r}")
        config.validate()
        rng = _rng(rng)
        self.config = config
        self.modality = modality
        d = config.model_dim
        self.input_proj = Linear(config.feat_dim, d, rng) if config.feat_dim != d else None
        self.encoders = [_block(config, rng) for _ in range(max(1, config.encoder_depth))]
        self.head = Linear(d, config.head_output_dim, rng)

    def forward(self, F_A, F_B, training: bool = False, rng=None) -> Tensor:
        if training:
            rng = _rng(rng)
        fa, fb, unbatched = _batched(F_A, F_B)
        x = fa if self.modality == "A" else fb
        if self.input_proj is not None:
            x = self.input_proj(x)
        for blk in self.encoders:
            x = blk(x, training=training, rng=rng)
        if self.config.temporal_pooling == "mean":
            x = T.mean(x, axis=1)
        out = self.head(T.dropout(x, self.config.dropout_rate, training, rng))
        return T.reshape(out, out.shape[1:]) if unbatched else out


def build_model(kind: str, config: FusionConfig, rng=None) -> Module:
    if kind == "jmt":
        return JointFusionModel(config, rng)
    if kind == "vanilla":
        return VanillaFusionModel(config, rng)
    if kind == "concat":
        return ConcatBaseline(config, rng)
    if kind in ("unimodal_A", "unimodal_B"):
        return UnimodalModel(config, kind[-1], rng)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def jmt_forward(F_A, F_B, model: JointFusionModel, training: bool = False, rng=None) -> Tensor:
    return model(F_A, F_B, training, rng)


def vanilla_forward(F_A, F_B, model: VanillaFusionModel, training: bool = False, rng=None) -> Tensor:
    return model(F_A, F_B, training, rng)


def attention_weights_report(model: CrossModalFusion, F_A, F_B) -> AttentionReport:
    """Aggregator attention mass per stacked block (evaluation mode, no graph)."""
    if getattr(model, "aggregator", None) is None:
        raise ConfigError("attention report needs aggregation_mode='self_attention_stack'")
    with T.no_grad():
        _, detail = model.forward_detail(F_A, F_B, training=False)
    w = detail["aggregator_weights"]
    mass = w.mean(axis=(0, 1, 2))
    names = model.block_names
    block_mass = {n: float(m) for n, m in zip(names, mass)}
    branch_mass = {}
    for (q, _), m in zip(model.pairs, mass):
        branch_mass[q] = branch_mass.get(q, 0.0) + float(m)
    return AttentionReport(names, w, block_mass, branch_mass)
