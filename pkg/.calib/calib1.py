import sys, time, json
import numpy as np
from mtctc.mixtures import DatasetManifest, generate_split
from mtctc.model import ModelConfig, MtModel
from mtctc.training import TrainConfig, train_phase1, train_phase2, train_count_head
from mtctc.evaluation import evaluate_error_rates, evaluate_count_accuracy, measure_rtf

t0 = time.time()
manifest = DatasetManifest()
train = generate_split(manifest, "train")
dev = generate_split(manifest, "dev")
print(f"data: {len(train)} train / {len(dev)} dev in {time.time()-t0:.0f}s", flush=True)

def run(seed, alpha, p1, p2, tag):
    t0 = time.time()
    model = MtModel(ModelConfig(seed=seed))
    tc = TrainConfig(phase1_steps=p1, phase2_steps=p2, seed=seed, log_every=200)
    prog = lambda s, l: print(f"  [{tag} s{seed}] {s}: {l:.3f}", flush=True)
    train_phase1(model, train, tc, progress=prog)
    train_phase2(model, train, tc, alpha=alpha, progress=prog)
    report = evaluate_error_rates(model, dev, oracle_count=True)
    ter2, ter3 = report.rate(talker_count=2), report.rate(talker_count=3)
    print(f"[{tag} s{seed}] dev TER 2mix {ter2:.4f} 3mix {ter3:.4f} overall {report.rate():.4f} ({time.time()-t0:.0f}s)", flush=True)
    return model, report

model_d, rep_d = run(0, 0.3, 1200, 1200, "distilled")
model_c, rep_c = run(0, 1.0, 0, 2400, "ctc-only")
rel = (rep_c.rate() - rep_d.rate()) / rep_c.rate() if rep_c.rate() else 0.0
print(f"relative improvement: {rel:.3f}", flush=True)

tch_hist = train_count_head(model_d, train, TrainConfig(seed=0, log_every=10**9))
acc = evaluate_count_accuracy(model_d, dev)
print(f"TCH dev acc: 2mix {acc.accuracy(talker_count=2):.4f} 3mix {acc.accuracy(talker_count=3):.4f}", flush=True)

evalset = generate_split(manifest, "eval")[:55]
r_ctc = measure_rtf(model_d, evalset, mode="ctc_greedy")
r_ar = measure_rtf(model_d, evalset, mode="teacher_autoregressive")
for c in (2, 3):
    print(f"RTF count {c}: ctc {r_ctc.rtf(c):.5f} ar {r_ar.rtf(c):.5f} ratio {r_ar.rtf(c)/r_ctc.rtf(c):.1f}x", flush=True)
print(f"total {time.time()-t0:.0f}s", flush=True)
