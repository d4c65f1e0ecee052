"""CTC in log space: exact loss with analytic gradients, greedy and prefix
beam decoding, and a brute-force path-enumeration oracle for cross-checks.

The kernel is framework-free: it consumes plain float64 log-probability
arrays and returns the gradient with respect to them, so callers can attach
it to any autodiff graph (see model.ctc_loss_op).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf

# A label sequence is a plain list of non-blank token ids.
LabelSequence = list


class CtcInfeasibleError(ValueError):
    """Target needs more frames than the lattice provides."""

    def __init__(self, frames: int, required: int):
        super().__init__(
            f"target needs at least {required} frames, lattice has {frames}"
        )
        self.frames = frames
        self.required = required


@dataclass
class LogProbLattice:
    """Per-frame log distributions over the vocabulary, shape (frames, vocab)."""

    log_probs: np.ndarray
    blank: int = 0

    def __post_init__(self):
        self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
        if self.log_probs.ndim != 2:
            raise ValueError(f"lattice must be 2-d, got shape {self.log_probs.shape}")

    @property
    def frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[1]

    def validate(self, tol: float = 1e-8) -> None:
        row_mass = np.logaddexp.reduce(self.log_probs, axis=1)
        if not np.all(np.abs(row_mass) < tol):
            raise ValueError("lattice rows are not normalized log-distributions")


def min_frames(target) -> int:
    """Fewest frames that can emit `target`: its length plus one blank
    between each adjacent repeated pair."""
    dupes = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + dupes


def _extended_labels(target, blank: int) -> np.ndarray:
    ext = np.full(2 * len(target) + 1, blank, dtype=np.intp)
    ext[1::2] = target
    return ext


def ctc_forward_backward(lattice: LogProbLattice, target):
    """Log-space alpha/beta over the blank-extended label sequence.

    alpha[t, s] includes the emission at frame t; beta[t, s] covers frames
    t+1 onward, so logsumexp(alpha[t] + beta[t]) equals the total
    log-likelihood at every frame t.
    """
    lp = lattice.log_probs
    frames = lattice.frames
    labels = _extended_labels(target, lattice.blank)
    states = labels.size

    required = min_frames(target)
    if frames < required:
        raise CtcInfeasibleError(frames, required)
    for token in target:
        if token == lattice.blank:
            raise ValueError("target must not contain the blank id")
        if not 0 <= token < lattice.vocab_size:
            raise ValueError(f"token {token} outside vocabulary of {lattice.vocab_size}")

    # states reachable via a skip: non-blank and different from two back
    skip = np.zeros(states, dtype=bool)
    if states > 2:
        skip[2:] = (labels[2:] != lattice.blank) & (labels[2:] != labels[:-2])

    skip_fwd = np.zeros(states, dtype=bool)
    if states > 2:
        skip_fwd[:-2] = skip[2:]

    alpha = np.full((frames, states), NEG_INF)
    alpha[0, 0] = lp[0, labels[0]]
    if states > 1:
        alpha[0, 1] = lp[0, labels[1]]
    for t in range(1, frames):
        prev = alpha[t - 1]
        step = np.concatenate(([NEG_INF], prev[:-1]))
        acc = np.logaddexp(prev, step)
        if states > 2:
            jump = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
            acc = np.where(skip, np.logaddexp(acc, jump), acc)
        alpha[t] = acc + lp[t, labels]

    beta = np.full((frames, states), NEG_INF)
    beta[frames - 1, states - 1] = 0.0
    if states > 1:
        beta[frames - 1, states - 2] = 0.0
    for t in range(frames - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, labels]
        step = np.concatenate((nxt[1:], [NEG_INF]))
        acc = np.logaddexp(nxt, step)
        if states > 2:
            jump = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
            acc = np.where(skip_fwd, np.logaddexp(acc, jump), acc)
        beta[t] = acc

    tail = alpha[frames - 1, states - 1]
    if states > 1:
        tail = np.logaddexp(tail, alpha[frames - 1, states - 2])
    return alpha, beta, labels, float(tail)


def ctc_loss(lattice: LogProbLattice, target):
    """Negative log-likelihood of `target` and its gradient w.r.t. the
    log-probabilities, shape (frames, vocab)."""
    alpha, beta, labels, loglik = ctc_forward_backward(lattice, target)
    frames, vocab = lattice.log_probs.shape
    occupancy = np.exp(alpha + beta - loglik)  # (frames, states)
    grad = np.zeros((frames, vocab))
    for s, label in enumerate(labels):
        grad[:, label] -= occupancy[:, s]
    return -loglik, grad


def collapse_path(path, blank: int):
    """Merge repeats, then remove blanks."""
    out = []
    prev = None
    for token in path:
        if token != prev and token != blank:
            out.append(token)
        prev = token
    return out


MAX_BRUTE_FORCE_PATHS = 10**6


def brute_force_ctc(lattice: LogProbLattice, target) -> float:
    """Loss by explicit enumeration of all vocab^frames alignment paths.

    Independent of the forward-backward recursion; returns +inf when no
    path collapses to the target. Guarded to a million paths.
    """
    frames, vocab = lattice.log_probs.shape
    if vocab**frames > MAX_BRUTE_FORCE_PATHS:
        raise ValueError(
            f"refusing to enumerate {vocab}**{frames} paths (limit {MAX_BRUTE_FORCE_PATHS})"
        )
    probs = np.exp(lattice.log_probs)
    wanted = list(target)
    total = 0.0
    for path in itertools.product(range(vocab), repeat=frames):
        if collapse_path(path, lattice.blank) != wanted:
            continue
        p = 1.0
        for t, token in enumerate(path):
            p *= probs[t, token]
        total += p
    if total == 0.0:
        return math.inf
    return -math.log(total)


def greedy_decode(lattice: LogProbLattice):
    """Best token per frame (ties to the lowest index), collapsed."""
    best = np.argmax(lattice.log_probs, axis=1)
    return collapse_path(best.tolist(), lattice.blank)


def _grow_prefixes(beams, row, blank: int, vocab: int):
    grown: dict[tuple, list[float]] = {}

    def bump(prefix, which, amount):
        entry = grown.get(prefix)
        if entry is None:
            entry = [NEG_INF, NEG_INF]
            grown[prefix] = entry
        entry[which] = np.logaddexp(entry[which], amount)

    for prefix, (blank_mass, label_mass) in beams.items():
        total = np.logaddexp(blank_mass, label_mass)
        bump(prefix, 0, total + row[blank])
        if prefix:
            # re-emitting the final label without an intervening blank
            bump(prefix, 1, label_mass + row[prefix[-1]])
        for token in range(vocab):
            if token == blank:
                continue
            extended = prefix + (token,)
            if prefix and token == prefix[-1]:
                bump(extended, 1, blank_mass + row[token])
            else:
                bump(extended, 1, total + row[token])
    return grown


def _rank(item):
    prefix, masses = item
    return (-np.logaddexp(masses[0], masses[1]), prefix)


def prefix_beam_decode(lattice: LogProbLattice, beam_width: int):
    """Prefix beam search over collapsed sequences.

    Tracks blank-ending and label-ending mass per prefix; pruning and the
    final pick break ties by lexicographic prefix order, so the result is
    deterministic. With a beam at least as wide as the number of live
    prefixes the search is exhaustive and returns the posterior argmax.
    """
    if beam_width < 1:
        raise ValueError(f"beam width must be >= 1, got {beam_width}")
    beams: dict[tuple, tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(lattice.frames):
        grown = _grow_prefixes(beams, lattice.log_probs[t], lattice.blank, lattice.vocab_size)
        ranked = sorted(grown.items(), key=_rank)
        beams = {prefix: tuple(masses) for prefix, masses in ranked[:beam_width]}
    best = min(beams.items(), key=_rank)
    return list(best[0])


def prefix_posteriors(lattice: LogProbLattice) -> dict[tuple, float]:
    """Exact posterior log-probability of every collapsed sequence, via an
    unpruned prefix search. Exponential; for tiny lattices only."""
    beams: dict[tuple, tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(lattice.frames):
        grown = _grow_prefixes(beams, lattice.log_probs[t], lattice.blank, lattice.vocab_size)
        beams = {prefix: tuple(masses) for prefix, masses in grown.items()}
    return {p: float(np.logaddexp(m[0], m[1])) for p, m in beams.items()}
