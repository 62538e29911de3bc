"""
Hand-built invariant features
=============================

Seven classical node statistics, and the Gram matrix of a few embedding
vectors.  Both are unchanged when nodes are renamed; the Gram features are
also unchanged when the embedding space is rotated.
"""

import numpy as np

from rpgraph import IGF_NAMES, ExternalEmbeddings, SparseGraph, igf_table, ri_gram_features

# K4 plus a pendant path: 0-1-2-3 complete, 3-4-5
src = [0, 0, 0, 1, 1, 2, 3, 4]
dst = [1, 2, 3, 2, 3, 3, 4, 5]
g = SparseGraph.from_edges(6, src, dst)
table = igf_table(g)
print("node " + " ".join(f"{n:>15}" for n in IGF_NAMES))
for i, row in enumerate(table.values):
    print(f"{i:4d} " + " ".join(f"{v:15.4f}" for v in row))

# rotate every embedding vector; the Gram features stay put
rng = np.random.default_rng(0)
vecs = {v: rng.standard_normal(8) for v in range(4)}
emb = ExternalEmbeddings({0: vecs[0], 1: vecs[1]}, {0: vecs[2], 1: vecs[3]})
q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
rot = ExternalEmbeddings({0: q @ vecs[0], 1: q @ vecs[1]}, {0: q @ vecs[2], 1: q @ vecs[3]})
a, b = ri_gram_features(emb, 0, 1), ri_gram_features(rot, 0, 1)
print("pair Gram features:", a.round(3))
print("max change after rotation:", np.abs(a - b).max())
