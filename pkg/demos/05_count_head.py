"""The talker-count head: attention pooling, masking, and a small fit.

The head scores each frame, pools mean and spread statistics under the
attention weights, and classifies 2 vs 3 talkers. Masked frames get exactly
zero weight.
"""

import numpy as np

from mtctc.tch import ActivityMask, TalkerCountHead, count_loss, predict_count
from mtctc.tensor import Tape, Tensor, backward, zero_grads

rng = np.random.default_rng(4)
head = TalkerCountHead(rng, dim=8, attn_dim=6, hidden=12, dropout_rate=0.0)

frames = Tensor(rng.normal(size=(10, 8)))
mask = ActivityMask(np.array([1, 1, 1, 0, 0, 1, 1, 1, 1, 0], dtype=bool))

weights = head.attention_weights(frames, mask)
print("attention weights:", np.round(weights.data, 4))
print("masked entries exactly zero:", np.all(weights.data[~mask.active] == 0.0))
print("active entries sum to:", weights.data.sum())

print("\nuntrained prediction:", predict_count(head(frames, mask)))

# A linearly separable toy task: class decided by the mean of channel 0.
def make_batch(n):
    items = []
    for _ in range(n):
        count = int(rng.integers(2, 4))
        shift = -1.0 if count == 2 else 1.0
        x = rng.normal(size=(12, 8))
        x[:, 0] += shift
        items.append((Tensor(x), count))
    return items

params = [p for _, p in head.named_parameters() if p.requires_grad]
from mtctc.training import Adam

opt = Adam(params, lr=3e-3)
for step in range(150):
    batch = make_batch(8)
    opt.zero_grad()
    with Tape():
        logits = [head(x) for x, _ in batch]
        loss = count_loss(logits, [c for _, c in batch])
        backward(loss)
    opt.step()
    if (step + 1) % 50 == 0:
        print(f"step {step + 1}: loss {loss.item():.4f}")

test = make_batch(100)
hits = sum(predict_count(head(x)) == c for x, c in test)
print(f"\naccuracy on fresh samples: {hits}/100")
