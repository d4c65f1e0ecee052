"""Evaluation harness: routed decoding with error-rate reports, count
accuracy, and real-time-factor measurement at batch size one."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import EditCounts, ErrorRateReport, score_multistream
from .model import MtModel
from .sot import Vocabulary, build_sot_target, build_stream_targets
from .tensor import Tensor

FRAME_PERIOD_SECONDS = 0.02
RTF_WARMUP_SAMPLES = 5


def strip_specials(tokens, vocab: Vocabulary):
    """Scoring compares content tokens only."""
    return [t for t in tokens if vocab.is_content(t)]


def parse_decode_mode(mode: str):
    """'greedy' or 'beam:K' -> (kind, beam_width)."""
    if mode == "greedy":
        return "greedy", 0
    if mode.startswith("beam:"):
        width = int(mode.split(":", 1)[1])
        if width < 1:
            raise ValueError(f"beam width must be positive, got {width}")
        return "beam", width
    raise ValueError(f"unknown decode mode {mode!r} (expected greedy or beam:K)")


def evaluate_error_rates(
    model: MtModel,
    samples,
    oracle_count: bool = False,
    decode_mode: str = "greedy",
) -> ErrorRateReport:
    kind, width = parse_decode_mode(decode_mode)
    report = ErrorRateReport()
    vocab = model.vocab
    for sample in samples:
        routed = model.infer_routed(
            Tensor(sample.features),
            oracle_count=sample.talker_count if oracle_count else None,
            decode=kind,
            beam_width=width,
        )
        refs = build_stream_targets(sample.utterances, vocab).streams
        hyps = [strip_specials(stream, vocab) for stream in routed.streams]
        counts = score_multistream(refs, hyps)
        report.add(
            sample.talker_count,
            sample.condition,
            counts,
            sum(len(r) for r in refs),
        )
    return report


@dataclass
class CountAccuracyReport:
    correct: dict = field(default_factory=dict)
    total: dict = field(default_factory=dict)

    def add(self, talker_count: int, condition: str, hit: bool) -> None:
        key = (talker_count, condition)
        self.correct[key] = self.correct.get(key, 0) + int(hit)
        self.total[key] = self.total.get(key, 0) + 1

    def accuracy(self, talker_count=None, condition=None) -> float:
        hits = 0
        seen = 0
        for (count_key, cond_key), n in self.total.items():
            if talker_count is not None and count_key != talker_count:
                continue
            if condition is not None and cond_key != condition:
                continue
            hits += self.correct[(count_key, cond_key)]
            seen += n
        return hits / seen if seen else 0.0

    def rows(self) -> list:
        out = []
        for key in sorted(self.total):
            count, condition = key
            out.append(
                {
                    "talker_count": count,
                    "condition": condition,
                    "samples": self.total[key],
                    "correct": self.correct[key],
                    "accuracy": self.correct[key] / self.total[key],
                }
            )
        return out

    def to_csv(self) -> str:
        lines = ["talker_count,condition,samples,correct,accuracy"]
        for row in self.rows():
            lines.append(
                f"{row['talker_count']},{row['condition']},{row['samples']},"
                f"{row['correct']},{row['accuracy']:.6f}"
            )
        return "\n".join(lines) + "\n"


def evaluate_count_accuracy(model: MtModel, samples) -> CountAccuracyReport:
    report = CountAccuracyReport()
    for sample in samples:
        predicted = model.predict_talker_count(Tensor(sample.features))
        report.add(sample.talker_count, sample.condition, predicted == sample.talker_count)
    return report


@dataclass
class RtfReport:
    mode: str
    seconds: dict = field(default_factory=dict)  # talker_count -> compute time
    audio: dict = field(default_factory=dict)  # talker_count -> audio seconds
    samples: dict = field(default_factory=dict)
    warmup_skipped: int = 0
    hardware: str = field(default_factory=lambda: f"{platform.machine()} {platform.python_implementation()}")

    def add(self, talker_count: int, compute: float, duration: float) -> None:
        self.seconds[talker_count] = self.seconds.get(talker_count, 0.0) + compute
        self.audio[talker_count] = self.audio.get(talker_count, 0.0) + duration
        self.samples[talker_count] = self.samples.get(talker_count, 0) + 1

    def rtf(self, talker_count=None) -> float:
        if talker_count is None:
            compute = sum(self.seconds.values())
            duration = sum(self.audio.values())
        else:
            compute = self.seconds.get(talker_count, 0.0)
            duration = self.audio.get(talker_count, 0.0)
        return compute / duration if duration else 0.0

    def rows(self) -> list:
        return [
            {
                "mode": self.mode,
                "talker_count": count,
                "samples": self.samples[count],
                "compute_seconds": self.seconds[count],
                "audio_seconds": self.audio[count],
                "rtf": self.rtf(count),
            }
            for count in sorted(self.samples)
        ]

    def to_csv(self) -> str:
        lines = ["mode,talker_count,samples,compute_seconds,audio_seconds,rtf"]
        for row in self.rows():
            lines.append(
                f"{row['mode']},{row['talker_count']},{row['samples']},"
                f"{row['compute_seconds']:.6f},{row['audio_seconds']:.6f},{row['rtf']:.6f}"
            )
        return "\n".join(lines) + "\n"


def measure_rtf(
    model: MtModel,
    samples,
    mode: str = "ctc_greedy",
    decode_mode: str = "greedy",
    frame_period: float = FRAME_PERIOD_SECONDS,
    warmup: int = RTF_WARMUP_SAMPLES,
) -> RtfReport:
    """Wall-clock decode time over nominal audio duration, batch size one.

    The first `warmup` utterances run but are excluded from the totals. The
    autoregressive mode decodes through the teacher, capped at four times
    the reference length.
    """
    if mode not in ("ctc_greedy", "teacher_autoregressive"):
        raise ValueError(f"unknown rtf mode {mode!r}")
    kind, width = parse_decode_mode(decode_mode)
    report = RtfReport(mode=mode)
    for index, sample in enumerate(samples):
        features = Tensor(sample.features)
        if mode == "ctc_greedy":
            start = time.perf_counter()
            model.infer_routed(
                features,
                oracle_count=sample.talker_count,
                decode=kind,
                beam_width=width,
            )
            elapsed = time.perf_counter() - start
        else:
            reference = build_sot_target(sample.utterances, model.vocab)
            cap = 4 * len(reference.tokens)
            start = time.perf_counter()
            model.teacher_greedy_decode(features, sample.talker_count, max_tokens=cap)
            elapsed = time.perf_counter() - start
        if index < warmup:
            report.warmup_skipped += 1
            continue
        report.add(sample.talker_count, elapsed, sample.frames * frame_period)
    return report
