"""Model-level explanation: the recurrent subgraph pattern behind one class.

A mask generator shared across the class subset proposes per-instance top-K
subgraphs; the modal pattern under graph canonical form is returned as the
class's explanation, together with its support count.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..gnn import GnnModel, predict
from ..graphs import Dataset, Graph, canonical_form, subgraph_from_edges
from .common import ExplainerConfig
from .maskgen import MaskGenerator, explain_maskgen, train_maskgen


@dataclass
class ModelLevelExplanation:
    pattern: Graph
    support: int
    num_instances: int
    predicted_label: int
    generator: MaskGenerator


def model_level_generate(
    model: GnnModel,
    dataset: Dataset,
    target_class: int,
    cfg: ExplainerConfig,
    k: int = 6,
) -> ModelLevelExplanation:
    """Modal top-``k`` subgraph across the class subset.

    The generator is trained on the class's training instances with the
    class itself as the factual target; voting runs over every instance of
    the class in the train split.
    """
    class_idx = [i for i in dataset.indices("train")
                 if dataset.graphs[i].label == target_class]
    if not class_idx:
        raise DomainError(f"no training instances with class {target_class}")

    subset = Dataset(
        [dataset.graphs[i] for i in class_idx],
        [dataset.annotations[i] for i in class_idx],
        dataset.num_classes,
        ["train"] * len(class_idx),
    )
    gen, _ = train_maskgen(model, subset, cfg, target_fn=lambda g, i: target_class)

    votes: Counter = Counter()
    rep: dict[tuple, Graph] = {}
    for g in subset.graphs:
        mask = explain_maskgen(gen, model, g, k)
        sub = subgraph_from_edges(g, mask.hard_indices())
        try:
            key = canonical_form(sub.num_nodes, sub.edges)
        except DomainError:
            # above the exact canonical-form cap: vote by degree signature
            deg = np.bincount(np.asarray(sub.edges).reshape(-1), minlength=sub.num_nodes)
            key = (sub.num_nodes, tuple(sorted(deg.tolist(), reverse=True)), None)
        votes[key] += 1
        rep.setdefault(key, sub)

    key, support = votes.most_common(1)[0]
    pattern = rep[key]
    y, _ = predict(model, pattern)
    return ModelLevelExplanation(pattern, support, len(subset.graphs), y, gen)
