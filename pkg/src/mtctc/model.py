"""The multi-talker model: a shared encoder feeding count-specific branch
encoders, per-branch stream separators for CTC, an attention-decoder teacher
used only at training time, and a talker-count head for routing at inference.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ctc as ctc_mod
from .ctc import LogProbLattice, greedy_decode, prefix_beam_decode
from .layers import (
    Embedding,
    FrameStackProjector,
    LayerNorm,
    Linear,
    LstmStack,
    Module,
    TransformerDecoderBlock,
    TransformerEncoderBlock,
    sinusoidal_positions,
)
from .sot import SotTarget, Vocabulary
from .tch import ActivityMask, TalkerCountHead, predict_count
from .tensor import Tensor, apply_op, log_softmax_rows, mean_, pick, relu

BRANCH_COUNTS = (2, 3)


@dataclass
class ModelConfig:
    feature_dim: int = 16
    model_dim: int = 32
    num_heads: int = 2
    ff_dim: int = 64
    shared_depth: int = 2
    branch_depth: int = 2
    separator_layers: int = 1
    separator_hidden: int = 64
    separator_bidirectional: bool = False
    decoder_depth: int = 2
    projector_stack: int = 2
    content_size: int = 16
    input_projection: bool = True
    positional_encoding: bool = True
    # talker-count head
    tch_attn_dim: int = 16
    tch_hidden: int = 32
    tch_dropout: float = 0.1
    # None: full shared stack; integer k: stop after k shared blocks
    tch_layers: int | None = None
    # teacher cross-attention memory: branch output or separator trunk
    teacher_memory: str = "branch"
    seed: int = 7

    def __post_init__(self):
        if self.teacher_memory not in ("branch", "separator"):
            raise ValueError(f"unknown teacher memory source {self.teacher_memory!r}")
        if not self.input_projection and self.feature_dim != self.model_dim:
            raise ValueError("input projection can only be skipped when dims match")
        if self.tch_layers is not None and not 0 <= self.tch_layers <= self.shared_depth:
            raise ValueError("tch_layers must lie within the shared stack")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.alphabetic(self.content_size)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


class Separator(Module):
    """Recurrent trunk with per-stream projections onto log distributions."""

    def __init__(self, rng, in_dim, hidden, layers, streams, vocab_size, bidirectional):
        self.lstm = LstmStack(
            rng, in_dim, hidden, num_layers=layers, bidirectional=bidirectional
        )
        width = hidden * (2 if bidirectional else 1)
        self.norm = LayerNorm(width)
        self.stream_mixers = [Linear(rng, width, width) for _ in range(streams)]
        self.stream_outputs = [Linear(rng, width, vocab_size) for _ in range(streams)]

    def forward(self, x: Tensor):
        trunk = self.norm(self.lstm(x))
        streams = [
            log_softmax_rows(out(relu(mix(trunk))))
            for mix, out in zip(self.stream_mixers, self.stream_outputs)
        ]
        return streams, trunk

    __call__ = forward


class TeacherDecoder(Module):
    """Autoregressive attention decoder over a frame-stacked memory."""

    def __init__(self, rng, memory_dim, model_dim, num_heads, ff_dim, depth, stack, vocab_size):
        self.model_dim = model_dim
        self.projector = FrameStackProjector(rng, stack, memory_dim, model_dim)
        self.embedding = Embedding(rng, vocab_size, model_dim)
        self.blocks = [
            TransformerDecoderBlock(rng, model_dim, num_heads, ff_dim) for _ in range(depth)
        ]
        self.final_norm = LayerNorm(model_dim)
        self.out = Linear(rng, model_dim, vocab_size)

    def project_memory(self, frames: Tensor) -> Tensor:
        return self.projector(frames)

    def decode(self, memory: Tensor, token_ids) -> Tensor:
        """Logits for each position of `token_ids`, causally masked."""
        x = self.embedding(token_ids) + sinusoidal_positions(len(token_ids), self.model_dim)
        for block in self.blocks:
            x = block(x, memory)
        return self.out(self.final_norm(x))

    def forward(self, frames: Tensor, token_ids) -> Tensor:
        return self.decode(self.project_memory(frames), token_ids)

    __call__ = forward


def ctc_loss_op(log_probs: Tensor, target, blank: int = 0) -> Tensor:
    """Bridge the framework-free CTC kernel onto the tape."""
    value, grad = ctc_mod.ctc_loss(LogProbLattice(log_probs.data, blank=blank), target)

    def rule(g):
        return (g * grad,)

    return apply_op(np.float64(value), (log_probs,), rule)


@dataclass
class RoutedDecode:
    talker_count: int
    streams: list
    routed_by: str = "oracle"


class MtModel(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        self.vocab = config.vocabulary()
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x4D4F444C]))
        dim = config.model_dim

        self.input_proj = (
            Linear(rng, config.feature_dim, dim) if config.input_projection else None
        )
        self.shared_blocks = [
            TransformerEncoderBlock(rng, dim, config.num_heads, config.ff_dim)
            for _ in range(config.shared_depth)
        ]
        self.branch_blocks = {
            count: [
                TransformerEncoderBlock(rng, dim, config.num_heads, config.ff_dim)
                for _ in range(config.branch_depth)
            ]
            for count in BRANCH_COUNTS
        }
        self.branch_norms = {count: LayerNorm(dim) for count in BRANCH_COUNTS}
        self.separators = {
            count: Separator(
                rng,
                dim,
                config.separator_hidden,
                config.separator_layers,
                count,
                self.vocab.size,
                config.separator_bidirectional,
            )
            for count in BRANCH_COUNTS
        }
        sep_width = config.separator_hidden * (2 if config.separator_bidirectional else 1)
        memory_dim = dim if config.teacher_memory == "branch" else sep_width
        self.teacher = TeacherDecoder(
            rng,
            memory_dim,
            dim,
            config.num_heads,
            config.ff_dim,
            config.decoder_depth,
            config.projector_stack,
            self.vocab.size,
        )
        self.count_head = TalkerCountHead(
            rng,
            dim,
            attn_dim=config.tch_attn_dim,
            hidden=config.tch_hidden,
            dropout_rate=config.tch_dropout,
        )
        self.phase = "init"
        self.reset_counters()

    # counters let tests pin down which components actually ran
    def reset_counters(self) -> None:
        self.branch_calls = {count: 0 for count in BRANCH_COUNTS}
        self.teacher_calls = 0
        self.count_head_calls = 0

    def embed_features(self, features: Tensor) -> Tensor:
        x = features
        if self.input_proj is not None:
            x = self.input_proj(x)
        if self.config.positional_encoding:
            x = x + sinusoidal_positions(x.shape[0], x.shape[1])
        return x

    def encode_shared(self, features: Tensor) -> Tensor:
        if features.shape[1] != self.config.feature_dim:
            raise ValueError(
                f"expected {self.config.feature_dim} feature channels, got {features.shape[1]}"
            )
        x = self.embed_features(features)
        for block in self.shared_blocks:
            x = block(x)
        return x

    def tch_representation(self, features: Tensor) -> Tensor:
        """Frames fed to the talker-count head, per the tch_layers knob."""
        depth = self.config.tch_layers
        if depth is None:
            return self.encode_shared(features)
        x = self.embed_features(features)
        for block in self.shared_blocks[:depth]:
            x = block(x)
        return x

    def branch_encode(self, shared_out: Tensor, count: int) -> Tensor:
        if count not in BRANCH_COUNTS:
            raise ValueError(f"no branch for talker count {count}")
        self.branch_calls[count] += 1
        x = shared_out
        for block in self.branch_blocks[count]:
            x = block(x)
        return self.branch_norms[count](x)

    def branch_forward(self, shared_out: Tensor, count: int, return_trunk: bool = False):
        """Count-specific encoding plus per-stream log-prob lattices."""
        branch_out = self.branch_encode(shared_out, count)
        streams, trunk = self.separators[count](branch_out)
        if return_trunk:
            return streams, branch_out, trunk
        return streams, branch_out

    def serialized_ctc_loss(self, streams, stream_targets) -> Tensor:
        if len(streams) != len(stream_targets):
            raise ValueError(
                f"{len(streams)} streams vs {len(stream_targets)} targets"
            )
        total = None
        for lattice, target in zip(streams, stream_targets):
            term = ctc_loss_op(lattice, target, blank=self.vocab.BLANK)
            total = term if total is None else total + term
        return total

    def sot_teacher_loss(self, memory_frames: Tensor, target: SotTarget) -> Tensor:
        self.teacher_calls += 1
        tokens = target.tokens
        if len(tokens) < 2:
            raise ValueError("serialized target needs at least <sos> and <eos>")
        logits = self.teacher(memory_frames, tokens[:-1])
        logp = log_softmax_rows(logits)
        wanted = np.asarray(tokens[1:])
        keep = wanted != self.vocab.PAD
        picked = pick(logp, np.flatnonzero(keep), wanted[keep])
        return -mean_(picked)

    def hybrid_loss(
        self,
        features: Tensor,
        stream_targets,
        sot_target: SotTarget,
        count: int,
        alpha: float,
    ) -> Tensor:
        """alpha-weighted serialized CTC plus teacher cross-entropy, both on
        the same branch output."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        shared_out = self.encode_shared(features)
        streams, branch_out, trunk = self.branch_forward(shared_out, count, return_trunk=True)
        if alpha == 0.0:
            ctc_part = None
        else:
            ctc_part = self.serialized_ctc_loss(streams, stream_targets)
        if alpha == 1.0:
            return ctc_part
        memory = branch_out if self.config.teacher_memory == "branch" else trunk
        sot_part = self.sot_teacher_loss(memory, sot_target)
        if alpha == 0.0:
            return sot_part
        return ctc_part * alpha + sot_part * (1.0 - alpha)

    def predict_talker_count(self, features: Tensor, mask: ActivityMask | None = None) -> int:
        self.count_head_calls += 1
        frames = self.tch_representation(features)
        return predict_count(self.count_head(frames, mask))

    def infer_routed(
        self,
        features: Tensor,
        oracle_count: int | None = None,
        decode: str = "greedy",
        beam_width: int = 8,
        mask: ActivityMask | None = None,
    ) -> RoutedDecode:
        """Route through a branch (predicted count unless an oracle count is
        given) and decode every stream."""
        shared_out = self.encode_shared(features)
        if oracle_count is not None:
            count, routed_by = oracle_count, "oracle"
        else:
            self.count_head_calls += 1
            if self.config.tch_layers is None:
                frames = shared_out
            else:
                frames = self.tch_representation(features)
            count = predict_count(self.count_head(frames, mask))
            routed_by = "count_head"
        streams, _ = self.branch_forward(shared_out, count)
        decoded = []
        for stream in streams:
            lattice = LogProbLattice(stream.data, blank=self.vocab.BLANK)
            if decode == "greedy":
                decoded.append(greedy_decode(lattice))
            elif decode == "beam":
                decoded.append(prefix_beam_decode(lattice, beam_width))
            else:
                raise ValueError(f"unknown decode mode {decode!r}")
        return RoutedDecode(talker_count=count, streams=decoded, routed_by=routed_by)

    def teacher_greedy_decode(self, features: Tensor, count: int, max_tokens: int):
        """Token-by-token decode through the teacher; the memory is computed
        once, every step re-runs the decoder stack on the whole prefix."""
        shared_out = self.encode_shared(features)
        branch_out = self.branch_encode(shared_out, count)
        if self.config.teacher_memory == "branch":
            memory_frames = branch_out
        else:
            _, memory_frames = self.separators[count](branch_out)
        memory = self.teacher.project_memory(memory_frames)
        tokens = [self.vocab.BOS]
        for _ in range(max_tokens):
            logits = self.teacher.decode(memory, tokens)
            next_token = int(np.argmax(logits.data[-1]))
            if next_token == self.vocab.EOS:
                break
            tokens.append(next_token)
        return tokens[1:]
