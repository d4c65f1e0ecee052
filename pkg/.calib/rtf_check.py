"""Repeat RTF measurement on a saved checkpoint to gauge run-to-run spread."""
import argparse

from mtctc.checkpoint import load_checkpoint
from mtctc.evaluation import measure_rtf
from mtctc.mixtures import DatasetManifest, generate_split

p = argparse.ArgumentParser()
p.add_argument("ckpt")
p.add_argument("--rounds", type=int, default=3)
args = p.parse_args()

model = load_checkpoint(args.ckpt)
pool = generate_split(DatasetManifest(), "eval")
subset = [s for s in pool if s.talker_count == 2][:55]
subset += [s for s in pool if s.talker_count == 3][:55]

for r in range(args.rounds):
    g = measure_rtf(model, subset, mode="ctc_greedy")
    a = measure_rtf(model, subset, mode="teacher_autoregressive")
    for c in (2, 3):
        print(f"round {r} count {c}: greedy {g.rtf(c):.5f} ar {a.rtf(c):.5f} "
              f"ratio {a.rtf(c)/g.rtf(c):.2f}x", flush=True)
