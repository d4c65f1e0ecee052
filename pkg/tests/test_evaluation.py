import numpy as np
import pytest

from mtctc.evaluation import (
    FRAME_PERIOD_SECONDS,
    CountAccuracyReport,
    evaluate_count_accuracy,
    evaluate_error_rates,
    measure_rtf,
    parse_decode_mode,
    strip_specials,
)
from mtctc.model import ModelConfig, MtModel, RoutedDecode
from mtctc.sot import TalkerUtterance, Vocabulary


def test_parse_decode_mode():
    assert parse_decode_mode("greedy") == ("greedy", 0)
    assert parse_decode_mode("beam:4") == ("beam", 4)
    with pytest.raises(ValueError, match="beam width"):
        parse_decode_mode("beam:0")
    with pytest.raises(ValueError, match="unknown decode mode"):
        parse_decode_mode("viterbi")


def test_strip_specials_keeps_content_only():
    vocab = Vocabulary.alphabetic(4)
    tokens = [vocab.BOS, 5, vocab.SPEAKER_CHANGE, 6, 7, vocab.EOS, vocab.PAD]
    assert strip_specials(tokens, vocab) == [5, 6, 7]


class Sample:
    def __init__(self, count, condition, utterances, frames=20):
        self.talker_count = count
        self.condition = condition
        self.utterances = utterances
        self.features = np.zeros((frames, 4))
        self.frames = frames


class StubModel:
    """Fixed decode output, for exercising the scoring path alone."""

    def __init__(self, vocab, streams_by_count):
        self.vocab = vocab
        self.streams_by_count = streams_by_count
        self.oracle_seen = []

    def infer_routed(self, features, oracle_count=None, decode="greedy", beam_width=0):
        self.oracle_seen.append(oracle_count)
        count = oracle_count if oracle_count is not None else 2
        return RoutedDecode(
            talker_count=count,
            streams=self.streams_by_count[count],
            routed_by="oracle" if oracle_count is not None else "count_head",
        )


def test_error_rate_report_counts_reference_tokens():
    vocab = Vocabulary.alphabetic(6)
    refs2 = [
        TalkerUtterance(tokens=[5, 6, 7], onset=0, talker_id=0),
        TalkerUtterance(tokens=[8, 9], onset=4, talker_id=1),
    ]
    # one substitution in stream 0, stream 1 exact: 1 error over 5 tokens
    stub = StubModel(vocab, {2: [[5, 6, 10], [8, 9]]})
    report = evaluate_error_rates(stub, [Sample(2, "clean", refs2)], oracle_count=True)
    assert stub.oracle_seen == [2]
    assert report.rate() == pytest.approx(1 / 5)
    (row,) = report.rows()
    assert row["talker_count"] == 2
    assert row["condition"] == "clean"
    assert row["reference_tokens"] == 5
    assert row["substitutions"] == 1


def test_error_rates_without_oracle_use_predicted_count():
    vocab = Vocabulary.alphabetic(6)
    refs3 = [
        TalkerUtterance(tokens=[5], onset=0, talker_id=0),
        TalkerUtterance(tokens=[6], onset=2, talker_id=1),
        TalkerUtterance(tokens=[7], onset=4, talker_id=2),
    ]
    # the stub routes everything to the 2-branch when no oracle is given, so
    # the third reference stream is scored against an empty hypothesis
    stub = StubModel(vocab, {2: [[5], [6]]})
    report = evaluate_error_rates(stub, [Sample(3, "noisy", refs3)], oracle_count=False)
    assert stub.oracle_seen == [None]
    assert report.rate() == pytest.approx(1 / 3)
    (row,) = report.rows()
    assert row["deletions"] == 1


def test_count_accuracy_report_math():
    report = CountAccuracyReport()
    report.add(2, "clean", True)
    report.add(2, "clean", True)
    report.add(2, "noisy", False)
    report.add(3, "clean", True)
    assert report.accuracy() == pytest.approx(3 / 4)
    assert report.accuracy(talker_count=2) == pytest.approx(2 / 3)
    assert report.accuracy(condition="clean") == pytest.approx(1.0)
    csv = report.to_csv()
    assert csv.splitlines()[0] == "talker_count,condition,samples,correct,accuracy"
    assert len(csv.splitlines()) == 4


def small_model():
    return MtModel(
        ModelConfig(
            feature_dim=4,
            model_dim=8,
            num_heads=2,
            ff_dim=12,
            shared_depth=1,
            branch_depth=1,
            separator_hidden=10,
            decoder_depth=1,
            content_size=5,
            tch_attn_dim=4,
            tch_hidden=8,
            seed=2,
        )
    )


def real_samples(rng, vocab, n=8):
    out = []
    for i in range(n):
        count = 2 if i % 2 == 0 else 3
        utts = [
            TalkerUtterance(
                tokens=[int(x) for x in rng.choice(vocab.content_ids, size=2)],
                onset=3 * t,
                talker_id=t,
            )
            for t in range(count)
        ]
        sample = Sample(count, "clean" if i % 4 < 2 else "noisy", utts, frames=16)
        sample.features = rng.normal(size=(16, 4))
        out.append(sample)
    return out


def test_count_accuracy_on_model_structure(rng):
    model = small_model()
    samples = real_samples(rng, model.vocab)
    report = evaluate_count_accuracy(model, samples)
    assert sum(report.total.values()) == len(samples)
    assert 0.0 <= report.accuracy() <= 1.0


def test_rtf_excludes_warmup_and_measures_audio_seconds(rng):
    model = small_model()
    samples = real_samples(rng, model.vocab, n=9)
    report = measure_rtf(model, samples, mode="ctc_greedy", warmup=5)
    assert report.warmup_skipped == 5
    assert sum(report.samples.values()) == 4
    measured = samples[5:]
    expected_audio = sum(s.frames * FRAME_PERIOD_SECONDS for s in measured)
    assert sum(report.audio.values()) == pytest.approx(expected_audio)
    assert report.rtf() > 0.0
    csv = report.to_csv()
    assert csv.splitlines()[0] == "mode,talker_count,samples,compute_seconds,audio_seconds,rtf"


def test_rtf_autoregressive_mode_runs(rng):
    model = small_model()
    samples = real_samples(rng, model.vocab, n=3)
    report = measure_rtf(model, samples, mode="teacher_autoregressive", warmup=1)
    assert report.mode == "teacher_autoregressive"
    assert sum(report.samples.values()) == 2
    assert report.rtf() > 0.0


def test_rtf_rejects_unknown_mode(rng):
    model = small_model()
    with pytest.raises(ValueError, match="rtf mode"):
        measure_rtf(model, [], mode="streaming")
