"""Two-phase training and the count-head fit.

Phase 1 trains encoder, branches, and teacher on the serialized teacher
cross-entropy alone. Phase 2 starts from a phase-1 model and optimizes the
hybrid objective over encoder, branches, and separators while the teacher
stays frozen. The count head is fit separately on frozen encoder output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MtModel
from .sot import build_sot_target, build_stream_targets
from .tch import count_loss
from .tensor import Tape, Tensor, backward, zero_grads


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    batch_size: int = 8
    phase1_steps: int = 1200
    phase2_steps: int = 1200
    tch_steps: int = 400
    tch_batch_size: int = 16
    alpha: float = 0.3
    seed: int = 0
    log_every: int = 50

    def to_dict(self) -> dict:
        return dict(vars(self))

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        return cls(**payload)


class MissingPhase1Error(RuntimeError):
    pass


class Adam:
    """Adam with global-norm gradient clipping; parameters that received no
    gradient in a step are left untouched."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip: float = 5.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip = clip
        self.steps = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def clip_gradients(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float((p.grad * p.grad).sum())
        norm = np.sqrt(total)
        if self.clip and norm > self.clip:
            scale = self.clip / norm
            for p in self.params:
                if p.grad is not None:
                    p.grad *= scale
        return float(norm)

    def step(self) -> None:
        self.clip_gradients()
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def _param_subset(model: MtModel, prefixes) -> list:
    chosen = []
    for name, tensor in model.named_parameters():
        if any(name.startswith(prefix) for prefix in prefixes):
            chosen.append(tensor)
    return chosen


ENCODER_PREFIXES = ("input_proj.", "shared_blocks.")
BRANCH_PREFIXES = ("branch_blocks.", "branch_norms.")
SEPARATOR_PREFIXES = ("separators.",)
TEACHER_PREFIXES = ("teacher.",)
COUNT_HEAD_PREFIXES = ("count_head.",)


def _batches(samples, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield `steps` minibatches, reshuffling each epoch."""
    order = rng.permutation(len(samples))
    cursor = 0
    for _ in range(steps):
        if cursor + batch_size > len(order):
            order = rng.permutation(len(samples))
            cursor = 0
        take = order[cursor : cursor + batch_size]
        cursor += batch_size
        yield [samples[i] for i in take]


def _targets(sample, vocab):
    streams = build_stream_targets(sample.utterances, vocab).streams
    serialized = build_sot_target(sample.utterances, vocab)
    return streams, serialized


def train_phase1(model: MtModel, samples, config: TrainConfig, progress=None) -> list:
    """Serialized teacher-only pretraining; returns the per-step loss curve."""
    params = _param_subset(model, ENCODER_PREFIXES + BRANCH_PREFIXES + TEACHER_PREFIXES)
    optimizer = Adam(params, lr=config.learning_rate, clip=config.grad_clip)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    history = []
    for step, batch in enumerate(_batches(samples, config.batch_size, config.phase1_steps, rng)):
        optimizer.zero_grad()
        with Tape():
            total = None
            scale = 1.0 / len(batch)
            for sample in batch:
                streams, serialized = _targets(sample, model.vocab)
                term = model.hybrid_loss(
                    Tensor(sample.features), streams, serialized, sample.talker_count, alpha=0.0
                ) * scale
                total = term if total is None else total + term
            backward(total)
        optimizer.step()
        history.append(total.item())
        if progress and (step + 1) % config.log_every == 0:
            progress(step + 1, history[-1])
    model.phase = "phase1"
    return history


def train_phase2(
    model: MtModel,
    samples,
    config: TrainConfig,
    alpha: float | None = None,
    freeze_shared: bool = False,
    progress=None,
) -> list:
    """Hybrid objective on top of a phase-1 model; teacher parameters frozen.

    A phase-2 model may continue training (e.g. at a lower learning rate)."""
    if model.phase not in ("phase1", "phase2"):
        raise MissingPhase1Error(
            f"phase 2 must start from a phase-1 model, got phase {model.phase!r}"
        )
    alpha = config.alpha if alpha is None else alpha
    prefixes = BRANCH_PREFIXES + SEPARATOR_PREFIXES
    if not freeze_shared:
        prefixes = ENCODER_PREFIXES + prefixes
    params = _param_subset(model, prefixes)
    optimizer = Adam(params, lr=config.learning_rate, clip=config.grad_clip)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    history = []
    for step, batch in enumerate(_batches(samples, config.batch_size, config.phase2_steps, rng)):
        optimizer.zero_grad()
        with Tape():
            total = None
            scale = 1.0 / len(batch)
            for sample in batch:
                streams, serialized = _targets(sample, model.vocab)
                term = model.hybrid_loss(
                    Tensor(sample.features), streams, serialized, sample.talker_count, alpha=alpha
                ) * scale
                total = term if total is None else total + term
            backward(total)
        optimizer.step()
        history.append(total.item())
        if progress and (step + 1) % config.log_every == 0:
            progress(step + 1, history[-1])
    model.phase = "phase2"
    return history


def train_count_head(model: MtModel, samples, config: TrainConfig, progress=None) -> list:
    """Fit the talker-count head on frozen encoder representations."""
    cached = []
    for sample in samples:
        frames = model.tch_representation(Tensor(sample.features))
        cached.append((Tensor(frames.data), sample.talker_count))
    params = _param_subset(model, COUNT_HEAD_PREFIXES)
    optimizer = Adam(params, lr=config.learning_rate, clip=config.grad_clip)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
    history = []
    for step, batch in enumerate(
        _batches(cached, config.tch_batch_size, config.tch_steps, rng)
    ):
        optimizer.zero_grad()
        with Tape():
            rows = [
                model.count_head(frames, training=True, rng=drop_rng)
                for frames, _ in batch
            ]
            loss = count_loss(rows, [count for _, count in batch])
            backward(loss)
        optimizer.step()
        history.append(loss.item())
        if progress and (step + 1) % config.log_every == 0:
            progress(step + 1, history[-1])
    # the count head is orthogonal to the encoder phases, so `phase` is untouched
    return history


def parameter_fingerprint(model: MtModel, prefixes) -> bytes:
    """Stable byte digest of a parameter subset, for freeze checks."""
    import hashlib

    digest = hashlib.sha256()
    for name, tensor in sorted(model.named_parameters()):
        if any(name.startswith(prefix) for prefix in prefixes):
            digest.update(name.encode())
            digest.update(tensor.data.tobytes())
    return digest.digest()
