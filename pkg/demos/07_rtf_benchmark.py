"""Real-time-factor comparison: greedy CTC versus autoregressive decoding.

Both paths run the same encoder and branch. The CTC path decodes all
streams from one forward pass; the teacher path re-runs its decoder stack
for every generated token. RTF is compute seconds over nominal audio
seconds at batch size one, warm-up samples excluded.
"""

import numpy as np

from mtctc.evaluation import measure_rtf
from mtctc.mixtures import DatasetManifest, RendererSpec, generate_split
from mtctc.model import ModelConfig, MtModel
from mtctc.training import TrainConfig, train_phase1

manifest = DatasetManifest(
    seed=9,
    renderer=RendererSpec(content_size=8, feature_dim=10),
    splits={
        "train": {2: {"clean": 60, "noisy": 60}, 3: {"clean": 60, "noisy": 60}},
        "eval": {2: {"clean": 10, "noisy": 10}, 3: {"clean": 10, "noisy": 10}},
    },
)
samples = generate_split(manifest, "eval")

model = MtModel(ModelConfig(feature_dim=10, content_size=8, seed=1))

# an untrained decoder stops at arbitrary points, so its measured cost is
# init noise; a short teacher-only phase makes the stopping length realistic
train = generate_split(manifest, "train")
train_phase1(model, train, TrainConfig(phase1_steps=400, seed=1, log_every=200))

greedy = measure_rtf(model, samples, mode="ctc_greedy")
teacher = measure_rtf(model, samples, mode="teacher_autoregressive")

print(f"measured {sum(greedy.samples.values())} samples "
      f"({greedy.warmup_skipped} warm-up excluded)\n")
print(greedy.to_csv())
print(teacher.to_csv())
for count in (2, 3):
    ratio = teacher.rtf(count) / greedy.rtf(count)
    print(f"{count}-mix: teacher decode is {ratio:.1f}x the greedy CTC cost")
