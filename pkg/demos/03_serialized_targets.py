"""Serialized targets: one token stream for all talkers, ordered by onset.

The same utterance set feeds two supervision styles: a single serialized
sequence with change-of-talker markers (for the attention teacher) and
per-stream label lists (for multi-stream CTC). They are mutually invertible.
"""

from mtctc.sot import (
    TalkerUtterance,
    Vocabulary,
    build_sot_target,
    build_stream_targets,
    split_sot_target,
)

vocab = Vocabulary.alphabetic(6)
print("vocabulary:", [vocab.symbol(i) for i in range(vocab.size)])

utterances = [
    TalkerUtterance(tokens=[7, 5, 9], onset=0, talker_id=0),
    TalkerUtterance(tokens=[6, 6], onset=4, talker_id=1),
    TalkerUtterance(tokens=[10, 8], onset=9, talker_id=2),
]

serialized = build_sot_target(utterances, vocab)
print("\nserialized:", " ".join(vocab.symbol(t) for t in serialized.tokens))

streams = build_stream_targets(utterances, vocab)
for i, stream in enumerate(streams.streams):
    print(f"stream {i}:", " ".join(vocab.symbol(t) for t in stream))

# Round trip: the serialized form carries exactly the per-stream content.
recovered = split_sot_target(serialized, vocab)
print("\nround trip intact:", recovered.streams == streams.streams)

# Onset order decides serialization, not talker ids.
shuffled = [utterances[2], utterances[0], utterances[1]]
print(
    "order is by onset, not list position:",
    build_sot_target(shuffled, vocab).tokens == serialized.tokens,
)
