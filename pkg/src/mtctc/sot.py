"""Shared vocabulary and serialized-output-training target construction.

Reserved ids are fixed repo-wide: blank 0, speaker change 1, sequence start
2, sequence end 3, padding 4. Content tokens start at 5. Talker utterances
are serialized in onset order (ties broken by talker id), matching the
order used for per-stream CTC targets, so the two views are position-paired.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Vocabulary:
    """Ordered symbol table with fixed reserved entries."""

    content_symbols: tuple

    BLANK = 0
    SPEAKER_CHANGE = 1
    BOS = 2
    EOS = 3
    PAD = 4
    RESERVED = ("<blank>", "<sc>", "<sos>", "<eos>", "<pad>")

    def __post_init__(self):
        object.__setattr__(self, "content_symbols", tuple(self.content_symbols))
        if len(set(self.content_symbols)) != len(self.content_symbols):
            raise ValueError("duplicate content symbols")
        if set(self.content_symbols) & set(self.RESERVED):
            raise ValueError("content symbols collide with reserved names")

    @property
    def size(self) -> int:
        return len(self.RESERVED) + len(self.content_symbols)

    @property
    def content_ids(self) -> range:
        return range(len(self.RESERVED), self.size)

    def symbol(self, token: int) -> str:
        if token < len(self.RESERVED):
            return self.RESERVED[token]
        return self.content_symbols[token - len(self.RESERVED)]

    def token(self, symbol: str) -> int:
        if symbol in self.RESERVED:
            return self.RESERVED.index(symbol)
        return len(self.RESERVED) + self.content_symbols.index(symbol)

    def is_content(self, token: int) -> bool:
        return len(self.RESERVED) <= token < self.size

    @classmethod
    def alphabetic(cls, count: int) -> "Vocabulary":
        """Convenience table of `count` single-letter-ish symbols."""
        names = []
        for i in range(count):
            name = chr(ord("a") + i % 26)
            if i >= 26:
                name += str(i // 26)
            names.append(name)
        return cls(tuple(names))

    def to_dict(self) -> dict:
        return {"content_symbols": list(self.content_symbols)}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        return cls(tuple(payload["content_symbols"]))


@dataclass
class TalkerUtterance:
    """One talker's token sequence with its mixture onset frame."""

    tokens: list
    onset: int
    talker_id: int

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("utterance must contain at least one token")
        if self.onset < 0:
            raise ValueError(f"onset must be non-negative, got {self.onset}")


def _serial_order(utterances):
    ordered = sorted(utterances, key=lambda u: (u.onset, u.talker_id))
    if not ordered:
        raise ValueError("need at least one utterance")
    return ordered


def _check_content(tokens, vocab: Vocabulary):
    for token in tokens:
        if not vocab.is_content(token):
            raise ValueError(f"token {token} is not a content token")


@dataclass
class SotTarget:
    """Single serialized token stream: <sos> u1 <sc> u2 ... <eos>."""

    tokens: list

    def __len__(self) -> int:
        return len(self.tokens)


def build_sot_target(utterances, vocab: Vocabulary) -> SotTarget:
    ordered = _serial_order(utterances)
    tokens = [Vocabulary.BOS]
    for i, utt in enumerate(ordered):
        _check_content(utt.tokens, vocab)
        if i:
            tokens.append(Vocabulary.SPEAKER_CHANGE)
        tokens.extend(utt.tokens)
    tokens.append(Vocabulary.EOS)
    return SotTarget(tokens)


@dataclass
class StreamTargets:
    """Per-stream CTC label sequences in serialized (onset) order."""

    streams: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.streams)


def build_stream_targets(utterances, vocab: Vocabulary) -> StreamTargets:
    ordered = _serial_order(utterances)
    for utt in ordered:
        _check_content(utt.tokens, vocab)
    return StreamTargets([list(utt.tokens) for utt in ordered])


def split_sot_target(target: SotTarget, vocab: Vocabulary) -> StreamTargets:
    """Invert serialization: strip markers, split on speaker changes."""
    tokens = target.tokens
    if not tokens or tokens[0] != Vocabulary.BOS or tokens[-1] != Vocabulary.EOS:
        raise ValueError("serialized target must be delimited by <sos> ... <eos>")
    streams = [[]]
    for token in tokens[1:-1]:
        if token == Vocabulary.SPEAKER_CHANGE:
            streams.append([])
        elif vocab.is_content(token):
            streams[-1].append(token)
        else:
            raise ValueError(f"unexpected token {token} inside serialized body")
    if any(not s for s in streams):
        raise ValueError("serialized target contains an empty stream")
    return StreamTargets(streams)
