"""Deterministic synthetic mixture corpus.

Each content token renders as a run of frames around a fixed unit-norm
prototype vector; talkers get per-sample signature offsets, and utterances
are overlapped at 30-80% to force multi-talker frames. Every sample is a
pure function of (manifest seed, sample id), and clean/noisy twins of the
same id share all content draws.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .ctc import min_frames
from .sot import TalkerUtterance, Vocabulary

SPLITS = ("train", "dev", "eval")
CONDITIONS = ("clean", "noisy")

_RENDER_STREAM = 0x52454E44  # distinct entropy stream for prototypes
MIN_PROTOTYPE_DISTANCE = 0.5


@dataclass
class RendererSpec:
    content_size: int = 16
    feature_dim: int = 16
    frames_per_symbol: int = 4
    signature_scale: float = 0.5
    noise_sigma: float = 0.1

    def to_dict(self) -> dict:
        return dict(vars(self))

    @classmethod
    def from_dict(cls, payload: dict) -> "RendererSpec":
        return cls(**payload)


class SymbolRenderer:
    """Maps content tokens to frame prototypes; deterministic in the seed."""

    def __init__(self, spec: RendererSpec, seed: int):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, _RENDER_STREAM]))
        for _ in range(100):
            raw = rng.normal(size=(spec.content_size, spec.feature_dim))
            protos = raw / np.linalg.norm(raw, axis=1, keepdims=True)
            gaps = np.linalg.norm(protos[:, None] - protos[None, :], axis=2)
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() > MIN_PROTOTYPE_DISTANCE:
                self.prototypes = protos
                return
        raise RuntimeError("could not draw well-separated prototypes")

    def render(self, tokens, signature: np.ndarray) -> np.ndarray:
        """(frames_per_symbol * len(tokens), feature_dim) rendering."""
        offsets = np.asarray(tokens) - len(Vocabulary.RESERVED)
        if offsets.min() < 0 or offsets.max() >= self.spec.content_size:
            raise ValueError("tokens outside the content range")
        frames = np.repeat(self.prototypes[offsets], self.spec.frames_per_symbol, axis=0)
        return frames + signature


@dataclass
class MixtureSample:
    sample_id: int
    split: str
    condition: str
    talker_count: int
    utterances: list
    features: np.ndarray

    @property
    def frames(self) -> int:
        return self.features.shape[0]


@dataclass
class DatasetManifest:
    seed: int = 7
    renderer: RendererSpec = field(default_factory=RendererSpec)
    tokens_per_utterance: tuple = (4, 8)
    overlap_range: tuple = (0.3, 0.8)
    min_onset_gap: int = 1
    # split -> talker count -> condition -> sample count
    splits: dict = field(
        default_factory=lambda: {
            "train": {2: {"clean": 1000, "noisy": 1000}, 3: {"clean": 1000, "noisy": 1000}},
            "dev": {2: {"clean": 100, "noisy": 100}, 3: {"clean": 100, "noisy": 100}},
            "eval": {2: {"clean": 100, "noisy": 100}, 3: {"clean": 100, "noisy": 100}},
        }
    )

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.alphabetic(self.renderer.content_size)

    def plan(self):
        """Deterministic (sample_id, split, talker_count, condition) schedule."""
        entries = []
        next_id = 0
        for split in SPLITS:
            for count in sorted(self.splits.get(split, {})):
                for condition in CONDITIONS:
                    total = self.splits[split][count].get(condition, 0)
                    for _ in range(total):
                        entries.append((next_id, split, count, condition))
                        next_id += 1
        return entries

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "seed": self.seed,
            "renderer": self.renderer.to_dict(),
            "tokens_per_utterance": list(self.tokens_per_utterance),
            "overlap_range": list(self.overlap_range),
            "min_onset_gap": self.min_onset_gap,
            "splits": {
                split: {str(count): dict(conds) for count, conds in by_count.items()}
                for split, by_count in self.splits.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetManifest":
        if payload.get("format_version") != 1:
            raise ValueError(f"unsupported manifest version {payload.get('format_version')}")
        return cls(
            seed=payload["seed"],
            renderer=RendererSpec.from_dict(payload["renderer"]),
            tokens_per_utterance=tuple(payload["tokens_per_utterance"]),
            overlap_range=tuple(payload["overlap_range"]),
            min_onset_gap=payload["min_onset_gap"],
            splits={
                split: {int(count): dict(conds) for count, conds in by_count.items()}
                for split, by_count in payload["splits"].items()
            },
        )


def write_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as handle:
        return DatasetManifest.from_dict(json.load(handle))


def _sample_rngs(seed: int, sample_id: int):
    content_seq, noise_seq = np.random.SeedSequence([seed, sample_id]).spawn(2)
    return np.random.default_rng(content_seq), np.random.default_rng(noise_seq)


def generate_sample(
    manifest: DatasetManifest,
    renderer: SymbolRenderer,
    sample_id: int,
    split: str,
    talker_count: int,
    condition: str,
) -> MixtureSample:
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    spec = manifest.renderer
    content_rng, noise_rng = _sample_rngs(manifest.seed, sample_id)
    vocab = manifest.vocabulary()
    lo, hi = manifest.tokens_per_utterance

    utterances = []
    renderings = []
    onset = 0
    prev_frames = 0
    for talker in range(talker_count):
        length = int(content_rng.integers(lo, hi + 1))
        tokens = [int(t) for t in content_rng.choice(list(vocab.content_ids), size=length)]
        if talker:
            ratio = content_rng.uniform(*manifest.overlap_range)
            gap = int(round((1.0 - ratio) * prev_frames))
            gap = max(manifest.min_onset_gap, min(gap, prev_frames - 1))
            onset += gap
        direction = content_rng.normal(size=spec.feature_dim)
        signature = spec.signature_scale * direction / np.linalg.norm(direction)
        utterances.append(TalkerUtterance(tokens=tokens, onset=onset, talker_id=talker))
        renderings.append(renderer.render(tokens, signature))
        prev_frames = renderings[-1].shape[0]

    total = max(u.onset + r.shape[0] for u, r in zip(utterances, renderings))
    features = np.zeros((total, spec.feature_dim))
    for utt, rendering in zip(utterances, renderings):
        features[utt.onset : utt.onset + rendering.shape[0]] += rendering
    if condition == "noisy":
        features = features + noise_rng.normal(0.0, spec.noise_sigma, size=features.shape)

    onsets = [u.onset for u in utterances]
    assert all(b > a for a, b in zip(onsets, onsets[1:])), "onsets must strictly increase"
    return MixtureSample(
        sample_id=sample_id,
        split=split,
        condition=condition,
        talker_count=talker_count,
        utterances=utterances,
        features=features,
    )


def generate_split(manifest: DatasetManifest, split: str) -> list:
    renderer = SymbolRenderer(manifest.renderer, manifest.seed)
    return [
        generate_sample(manifest, renderer, sample_id, entry_split, count, condition)
        for sample_id, entry_split, count, condition in manifest.plan()
        if entry_split == split
    ]


def achieved_overlaps(sample: MixtureSample, frames_per_symbol: int) -> list:
    """Realized overlap ratio of each utterance with its predecessor."""
    ratios = []
    for prev, cur in zip(sample.utterances, sample.utterances[1:]):
        prev_frames = len(prev.tokens) * frames_per_symbol
        ratios.append((prev.onset + prev_frames - cur.onset) / prev_frames)
    return ratios


def validate_feasibility(sample: MixtureSample, stack_factor: int) -> None:
    """Every stream target must fit a CTC alignment after downsampling."""
    reduced = -(-sample.frames // stack_factor)
    for utt in sample.utterances:
        needed = min_frames(utt.tokens)
        if reduced < needed:
            raise ValueError(
                f"sample {sample.sample_id}: stream needs {needed} frames, "
                f"only {reduced} after stacking by {stack_factor}"
            )


_MAGIC = b"MTXD"
_VERSION = 1


def write_records(path, samples) -> None:
    """Binary record file: magic, version, count, then length-prefixed
    JSON headers followed by little-endian float64 feature frames."""
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<II", _VERSION, len(samples)))
        for sample in samples:
            header = {
                "id": sample.sample_id,
                "split": sample.split,
                "condition": sample.condition,
                "talker_count": sample.talker_count,
                "utterances": [
                    {"tokens": u.tokens, "onset": u.onset, "talker_id": u.talker_id}
                    for u in sample.utterances
                ],
                "frames": sample.features.shape[0],
                "dim": sample.features.shape[1],
            }
            blob = json.dumps(header, sort_keys=True).encode("utf-8")
            handle.write(struct.pack("<I", len(blob)))
            handle.write(blob)
            handle.write(np.ascontiguousarray(sample.features, dtype="<f8").tobytes())


def read_records(path) -> list:
    with open(path, "rb") as handle:
        if handle.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a mixture record file")
        version, count = struct.unpack("<II", handle.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported record version {version}")
        samples = []
        for _ in range(count):
            (header_len,) = struct.unpack("<I", handle.read(4))
            header = json.loads(handle.read(header_len).decode("utf-8"))
            size = header["frames"] * header["dim"]
            raw = handle.read(size * 8)
            features = np.frombuffer(raw, dtype="<f8").reshape(
                header["frames"], header["dim"]
            ).copy()
            utterances = [
                TalkerUtterance(tokens=list(u["tokens"]), onset=u["onset"], talker_id=u["talker_id"])
                for u in header["utterances"]
            ]
            samples.append(
                MixtureSample(
                    sample_id=header["id"],
                    split=header["split"],
                    condition=header["condition"],
                    talker_count=header["talker_count"],
                    utterances=utterances,
                    features=features,
                )
            )
    return samples
