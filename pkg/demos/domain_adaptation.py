"""Three labeled source domains, one unlabeled target: does adapting per source help?

The domains are two-moons point clouds that differ by rotation and scale.
We compare one source at a time, all sources pooled into one, and the
multi-source model with one branch per source. Then we cluster the learned
features per source and prune the merged centroid set on the target.
"""

import numpy as np

from foodchain.adapt import evaluate_losses, train_multisource
from foodchain.clustering import CentroidSet, kmeans_fit, nearest_accuracy, prune_adapt
from foodchain.numerics import SgdConfig
from foodchain.synthetic import moons_domains

sources, (Xt, yt) = moons_domains(seed=0)
sgd = SgdConfig(0.3, 32, 60, seed=0)

multi = train_multisource(sources, Xt, sgd, yt)
pooled = train_multisource([(np.concatenate([X for X, _ in sources]), np.concatenate([y for _, y in sources]))],
                           Xt, sgd, yt)
single = [train_multisource([s], Xt, sgd, yt).target_accuracy for s in sources]
print(f"target accuracy  single (mean of 3): {100 * np.mean(single):.1f}%")
print(f"                 pooled sources:     {100 * pooled.target_accuracy:.1f}%")
print(f"                 multi-source:       {100 * multi.target_accuracy:.1f}%")

rep = evaluate_losses(multi.model, sources, Xt)
print("final losses:", {k: round(v, 4) for k, v in rep.row().items()})

# Latent-space clustering: 4 centroids per source, merged, then pruned on the target.
sets = [kmeans_fit(multi.model.latent(X), y, 4, seed=k, origin=f"source{k}") for k, (X, y) in enumerate(sources)]
merged = CentroidSet.merge(*sets)
Zt = multi.model.latent(Xt)
pruned, trace = prune_adapt(merged, Zt, yt)
print(f"centroids {len(merged)} -> {len(pruned)}; nearest-centroid accuracy "
      f"{trace.initial_accuracy:.3f} -> {nearest_accuracy(pruned, Zt, yt):.3f}")
print(trace.to_csv())
