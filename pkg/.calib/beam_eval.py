"""Compare decode modes on a saved checkpoint (dev split, oracle count)."""
import argparse
from mtctc.checkpoint import load_checkpoint
from mtctc.evaluation import evaluate_error_rates
from mtctc.mixtures import DatasetManifest, generate_split

p = argparse.ArgumentParser()
p.add_argument("ckpt")
p.add_argument("--modes", default="greedy,beam:4,beam:8")
args = p.parse_args()

model = load_checkpoint(args.ckpt)
dev = generate_split(DatasetManifest(), "dev")
for mode in args.modes.split(","):
    rep = evaluate_error_rates(model, dev, oracle_count=True, decode_mode=mode)
    print(f"{mode:8s} dev TER 2mix {rep.rate(talker_count=2):.4f} "
          f"3mix {rep.rate(talker_count=3):.4f} overall {rep.rate():.4f}", flush=True)
