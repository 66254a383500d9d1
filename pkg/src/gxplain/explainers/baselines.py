"""Non-generative baselines: gradient saliency and uniform-random masks."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..constraints import hard_size_select
from ..gnn import GnnModel, forward, predict
from ..graphs import Graph
from ..tensor import Tensor
from .common import ExplanationMask


def explain_saliency(model: GnnModel, graph: Graph, k: int) -> ExplanationMask:
    """|d logit[Y_f] / d edge_weight| at the all-ones mask, min-max normalized.

    All-zero gradients fall back to uniform weights.
    """
    target, _ = predict(model, graph)
    w = Tensor(np.ones(graph.num_edges), requires_grad=True)
    with T.Tape() as tape:
        logits = forward(model, graph, w)
        onehot = np.zeros(logits.shape)
        onehot[target] = 1.0
        picked = T.tsum(T.mul(logits, Tensor(onehot)))
    grads = T.backward(tape, picked)
    g = np.abs(grads.wrt(w))
    if g.max() <= 0.0:
        weights = np.full(graph.num_edges, 0.5)
    else:
        lo, hi = g.min(), g.max()
        weights = (g - lo) / (hi - lo) if hi > lo else np.ones_like(g)
    return ExplanationMask(weights, target, hard_size_select(weights, k))


def explain_random(graph: Graph, k: int, seed: int, model: GnnModel | None = None) -> ExplanationMask:
    """Uniform-random weights; the control every method must beat."""
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.0, 1.0, size=graph.num_edges)
    target = predict(model, graph)[0] if model is not None else (graph.label or 0)
    return ExplanationMask(weights, target, hard_size_select(weights, k))
