"""
A network that cannot tell projection dimensions apart
======================================================

Each node gets a D x (N+1) matrix: one row per random direction, one column
per walk length.  The network applies the same small transform to every
row and averages, so no weight can latch onto a particular random
direction.  Shuffling the rows leaves the output unchanged.
"""

import numpy as np

from rpgraph import (ProjectionConfig, SbmSpec, TrainConfig, convnet, convnet_inputs,
                     generate_sbm, propagate, train, transition_matrix)
from rpgraph.neuralnet import evaluate_model

# blocks of different density: the node role is visible in walk statistics
g, labels = generate_sbm(SbmSpec((120, 120), (0.15, 0.04), 0.01, seed=3))
ps = propagate(transition_matrix(g), ProjectionConfig(dim=64, max_power=6, seed=1))
x = convnet_inputs(ps, np.arange(g.node_count))
print("input shape", x.shape)

model = convnet(x.shape[-1], 2, channels=32, head=(32,), seed=0)
model, history = train(model, x, labels, TrainConfig(epochs=15, lr=3e-3, batch_size=32))
for h in history[::3]:
    print(f"epoch {h['epoch']:2d}  train {h['train_loss']:.3f}  val {h['val_loss']:.3f}  "
          f"acc {h['metric']:.3f}")

perm = np.random.default_rng(0).permutation(x.shape[1])
same = model.forward(x).tobytes() == model.forward(x[:, perm]).tobytes()
print("logits identical after shuffling dimensions:", same)
print("accuracy on all nodes:", evaluate_model(model, x, labels, "cross-entropy")[1])
