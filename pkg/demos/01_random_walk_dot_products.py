"""
Random-walk overlaps from random projections
=============================================

Two walkers start at nodes i and j and take k and s steps.  The chance they
land on the same node is the dot product of row i of A^k with row j of A^s.
Projecting the rows onto D random directions gives an unbiased estimate
that only needs sparse matrix products.
"""

import numpy as np

from rpgraph import (ProjectionConfig, SparseGraph, oracle_features, pair_feature_names,
                     propagate, rp_pair_features, transition_matrix)

# a 6-cycle with one chord
g = SparseGraph.from_edges(6, [0, 1, 2, 3, 4, 5, 0], [1, 2, 3, 4, 5, 0, 3])
t = transition_matrix(g)
print(t.dense().round(3))

# with R = I the "estimate" is exact
exact = propagate(t, ProjectionConfig(max_power=3), initial=np.eye(6), dtype=np.float64)
names = pair_feature_names(3)
f = dict(zip(names, rp_pair_features(exact, 0, 3)))
print("P(1-step walks from 0 and 3 meet) =", f["ij_k1_s1"])

# random directions: error shrinks like 1/sqrt(D)
truth = oracle_features(t, 0, 3, 3)
for dim in (16, 128, 1024):
    errs = []
    for seed in range(20):
        ps = propagate(t, ProjectionConfig(dim=dim, max_power=3, seed=seed))
        errs.append(np.abs(rp_pair_features(ps, 0, 3) - truth).mean())
    print(f"D={dim:5d}  mean |error| {np.mean(errs):.4f}")

# sparse +-sqrt(s) entries work too, after rescaling
ps = propagate(t, ProjectionConfig(dim=1024, max_power=3, init="sparse", seed=1))
print("sparse init error", np.abs(rp_pair_features(ps, 0, 3) - truth).mean().round(4))
