"""Compare model variants on the synthetic fixture.

Trains each variant on the same graphs and prints the median test AUROC.
Takes a few minutes per variant with the default 2000-epoch budget.

    python3 demos/ablation.py [num_seeds] [max_epochs]
"""
import sys

import numpy as np

from mhetgl import VARIANTS, TrainConfig, auroc, inject_mixed, refine_topology, sbm_fixture, score_nodes, split_nodes, train

num_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
max_epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 2000

data = []
for seed in range(num_seeds):
    graph = sbm_fixture(seed)
    graph, labels, _ = inject_mixed(graph, 0.05, 8, 50, seed=seed)
    data.append((graph, labels, refine_topology(graph), split_nodes(graph, (6, 1, 3), seed=seed)))

for variant in VARIANTS:
    values = []
    for seed, (graph, labels, topo, splits) in enumerate(data):
        config = TrainConfig(seed=seed, variant=variant, max_epochs=max_epochs, patience=min(1000, max_epochs))
        result = train(graph, topo, splits, config)
        scores = score_nodes(graph, topo, result.params, result.center, config)
        values.append(auroc(scores[splits.test_ids], labels[splits.test_ids]))
    print(f"{variant:12s} median AUROC {np.median(values):.3f}  per seed {np.round(values, 3).tolist()}")
