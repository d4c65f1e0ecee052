import argparse, time
import numpy as np
from mtctc.mixtures import DatasetManifest, generate_split
from mtctc.model import ModelConfig, MtModel
from mtctc.training import TrainConfig, train_phase1, train_phase2, train_count_head
from mtctc.evaluation import evaluate_error_rates, evaluate_count_accuracy

p = argparse.ArgumentParser()
p.add_argument("--dim", type=int, default=32)
p.add_argument("--ff", type=int, default=64)
p.add_argument("--sep", type=int, default=64)
p.add_argument("--heads", type=int, default=2)
p.add_argument("--shared", type=int, default=2)
p.add_argument("--branch", type=int, default=2)
p.add_argument("--p1", type=int, default=1200)
p.add_argument("--p2", type=int, default=2400)
p.add_argument("--p2b", type=int, default=0)
p.add_argument("--lr", type=float, default=1e-3)
p.add_argument("--alpha", type=float, default=0.3)
p.add_argument("--alpha2", type=float, default=None)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--tch", type=int, default=1200)
p.add_argument("--bisep", action="store_true")
p.add_argument("--dec", type=int, default=2)
p.add_argument("--seplayers", type=int, default=1)
p.add_argument("--save", default="")
p.add_argument("--rtf", action="store_true")
p.add_argument("--tag", default="job")
args = p.parse_args()

t0 = time.time()
manifest = DatasetManifest()
train = generate_split(manifest, "train")
dev = generate_split(manifest, "dev")

mc = ModelConfig(model_dim=args.dim, ff_dim=args.ff, separator_hidden=args.sep,
                 num_heads=args.heads, shared_depth=args.shared, branch_depth=args.branch,
                 separator_bidirectional=args.bisep, decoder_depth=args.dec,
                 separator_layers=args.seplayers, seed=args.seed)
model = MtModel(mc)
tc = TrainConfig(phase1_steps=args.p1, phase2_steps=args.p2, learning_rate=args.lr,
                 seed=args.seed, log_every=400)
prog = lambda s, l: print(f"[{args.tag}] {s}: {l:.3f}", flush=True)
train_phase1(model, train, tc, progress=prog)
train_phase2(model, train, tc, alpha=args.alpha, progress=prog)
if args.p2b:
    tc2 = TrainConfig(phase2_steps=args.p2b, learning_rate=args.lr / 4,
                      seed=args.seed + 100, log_every=400)
    a2 = args.alpha if args.alpha2 is None else args.alpha2
    train_phase2(model, train, tc2, alpha=a2, progress=prog)
rep = evaluate_error_rates(model, dev, oracle_count=True)
print(f"[{args.tag}] dev TER 2mix {rep.rate(talker_count=2):.4f} 3mix {rep.rate(talker_count=3):.4f} overall {rep.rate():.4f}", flush=True)
for row in rep.rows():
    print(f"[{args.tag}]   {row}", flush=True)
train_count_head(model, train, TrainConfig(tch_steps=args.tch, seed=args.seed, log_every=10**9))
acc = evaluate_count_accuracy(model, dev)
print(f"[{args.tag}] TCH acc 2mix {acc.accuracy(talker_count=2):.4f} 3mix {acc.accuracy(talker_count=3):.4f}", flush=True)
if args.save:
    from mtctc.checkpoint import save_checkpoint
    save_checkpoint(model, args.save, step=0)
    print(f"[{args.tag}] saved {args.save}", flush=True)
if args.rtf:
    from mtctc.evaluation import measure_rtf
    pool = generate_split(manifest, "eval")
    subset = [s for s in pool if s.talker_count == 2][:40]
    subset += [s for s in pool if s.talker_count == 3][:40]
    g = measure_rtf(model, subset, mode="ctc_greedy")
    a = measure_rtf(model, subset, mode="teacher_autoregressive")
    for c in (2, 3):
        print(f"[{args.tag}] rtf count {c}: greedy {g.rtf(c):.5f} ar {a.rtf(c):.5f} "
              f"ratio {a.rtf(c)/g.rtf(c):.2f}x", flush=True)
print(f"[{args.tag}] done in {time.time()-t0:.0f}s", flush=True)
