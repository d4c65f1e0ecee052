"""Architecture-only RTF probe: times both decode paths on fresh weights.

AR generation length is forced to the reference SOT length to mimic a
converged teacher (untrained teachers never emit EOS and hit the 4x cap,
overstating AR cost). Run this alone on the box; timings are wall clock.
"""
import argparse, time
import numpy as np
from mtctc.mixtures import DatasetManifest, generate_split
from mtctc.model import ModelConfig, MtModel
from mtctc.sot import build_sot_target
from mtctc.tensor import Tensor

p = argparse.ArgumentParser()
p.add_argument("--dim", type=int, default=32)
p.add_argument("--ff", type=int, default=64)
p.add_argument("--sep", type=int, default=64)
p.add_argument("--seplayers", type=int, default=1)
p.add_argument("--bisep", action="store_true")
p.add_argument("--dec", type=int, default=2)
p.add_argument("--per-count", type=int, default=12)
p.add_argument("--tag", default="rtf")
args = p.parse_args()

manifest = DatasetManifest()
pool = generate_split(manifest, "eval")
samples = [s for s in pool if s.talker_count == 2][: args.per_count]
samples += [s for s in pool if s.talker_count == 3][: args.per_count]

mc = ModelConfig(model_dim=args.dim, ff_dim=args.ff, separator_hidden=args.sep,
                 separator_layers=args.seplayers, separator_bidirectional=args.bisep,
                 decoder_depth=args.dec, seed=0)
model = MtModel(mc)
vocab = model.vocab

# warm caches
for s in samples[:3]:
    model.infer_routed(Tensor(s.features), oracle_count=s.talker_count)

greedy_sec = {2: 0.0, 3: 0.0}
ar_sec = {2: 0.0, 3: 0.0}
audio = {2: 0.0, 3: 0.0}
for s in samples:
    feats = Tensor(s.features)
    t0 = time.perf_counter()
    model.infer_routed(feats, oracle_count=s.talker_count)
    greedy_sec[s.talker_count] += time.perf_counter() - t0

    # replicate the AR loop but ignore EOS: fresh weights can stop
    # immediately, which would understate the cost of a converged teacher
    ref_len = len(build_sot_target(s.utterances, vocab).tokens)
    t0 = time.perf_counter()
    shared = model.encode_shared(feats)
    branch_out = model.branch_encode(shared, s.talker_count)
    memory = model.teacher.project_memory(branch_out)
    tokens = [vocab.BOS]
    for _ in range(ref_len):
        logits = model.teacher.decode(memory, tokens)
        tokens.append(int(np.argmax(logits.data[-1])) % vocab.size)
        tokens[-1] = max(tokens[-1], 5)
    ar_sec[s.talker_count] += time.perf_counter() - t0
    audio[s.talker_count] += s.frames * 0.02

for count in (2, 3):
    g = greedy_sec[count] / audio[count]
    a = ar_sec[count] / audio[count]
    print(f"[{args.tag}] count {count}: greedy rtf {g:.5f}  ar rtf {a:.5f}  ratio {a / g:.2f}x",
          flush=True)
