"""Counterfactual explainer: learn which few edges to delete to flip the
prediction.

A mask generator scores each edge with a deletion probability; training
keeps the complement (the retained graph) and pushes the frozen model's
prediction on it toward the runner-up class, while the information
constraint keeps the deleted part small. Inference searches deletion
prefixes of increasing size up to the budget and returns the first flip.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..constraints import SoftSize, Variational, budget, soft_size_loss, variational_loss
from ..errors import DomainError
from ..gnn import GnnModel, cross_entropy, forward, predict
from ..graphs import Dataset, Graph
from ..optim import AdamState, adam_step
from ..tensor import Tensor
from .common import ExplainerConfig, ExplanationMask, gumbel_sample
from .maskgen import MaskGenerator, TrainLog, _NamedGrads, _grad_accumulate, init_maskgen


def runner_up(probs: np.ndarray) -> int:
    """Second-ranked class; the counterfactual target label."""
    if probs.size < 2:
        raise DomainError("counterfactual explanation needs at least two classes")
    order = np.argsort(-probs, kind="stable")
    return int(order[1])


def _deletion_info_loss(cfg: ExplainerConfig, graph: Graph, retained: Tensor, del_probs: Tensor):
    # The constraint restricts the deleted part: soft size penalizes the
    # deleted volume ||1 - retained||, variational pulls deletion
    # probabilities toward a small prior.
    c = cfg.constraint
    if isinstance(c, SoftSize):
        return soft_size_loss(graph, retained, c.metric, c.weight)
    if isinstance(c, Variational):
        return variational_loss(del_probs, c.prior, c.weight)
    return None


def train_counterfactual(
    model: GnnModel,
    dataset: Dataset,
    cfg: ExplainerConfig,
) -> tuple[MaskGenerator, TrainLog]:
    """Fit the deletion-probability generator on the train split."""
    train_idx = dataset.indices("train")
    if not train_idx:
        raise DomainError("dataset has no train split")
    if model.config.num_classes < 2:
        raise DomainError("counterfactual explanation needs at least two classes")
    rng = np.random.default_rng(cfg.seed)
    d_n = dataset.graphs[train_idx[0]].node_features.shape[1]
    gen = init_maskgen(d_n, cfg, rng)
    state = AdamState()

    targets = {}
    for i in train_idx:
        _, probs = predict(model, dataset.graphs[i])
        targets[i] = runner_up(probs)

    log = TrainLog([], [])
    for epoch in range(cfg.epochs):
        tau = cfg.tau_at(epoch)
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        attr_sum = 0.0
        info_sum = 0.0
        for s0 in range(0, len(order), cfg.batch_size):
            batch = order[s0:s0 + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                g = dataset.graphs[i]
                with T.Tape() as tape:
                    del_probs = gen.edge_prob_tensor(g)
                    del_mask = gumbel_sample(del_probs, tau, rng)
                    retained = T.sub(Tensor(np.ones(g.num_edges)), del_mask)
                    logits = forward(model, g, retained)
                    attr = cross_entropy(logits, targets[i])
                    info = _deletion_info_loss(cfg, g, retained, del_probs)
                    loss = attr if info is None else T.add(attr, info)
                grads = T.backward(tape, loss)
                _grad_accumulate(acc, gen.params, grads)
                attr_sum += attr.item()
                info_sum += 0.0 if info is None else info.item()
            adam_step(gen.params, _NamedGrads(acc, gen.params, 1.0 / len(batch)), state, lr=cfg.lr)
        log.attr.append(attr_sum / len(order))
        log.info.append(info_sum / len(order))
    return gen, log


def explain_counterfactual(
    gen: MaskGenerator,
    model: GnnModel,
    graph: Graph,
    k: int,
) -> tuple[ExplanationMask, list[tuple[int, int]]]:
    """Minimal flipping deletion within budget ``k``.

    Returns the retained-graph mask (weights are retention scores, hard
    edges are the kept subgraph) and the deleted edge pairs. Deletion
    prefixes are tried smallest-first; if none flips, the full budget is
    deleted. The deleted and retained sets always partition the edges.
    """
    k = budget(gen.config.constraint, graph, k)
    y0, probs = predict(model, graph)
    target = runner_up(probs)
    del_probs = gen.edge_probs(graph)
    order = np.argsort(-del_probs, kind="stable")

    chosen = list(order[:min(k, graph.num_edges)])
    for size in range(1, min(k, graph.num_edges) + 1):
        trial = list(order[:size])
        w = np.ones(graph.num_edges)
        w[trial] = 0.0
        y, _ = predict(model, graph, w)
        if y != y0:
            chosen = trial
            break

    retained_weights = 1.0 - del_probs
    hard = np.ones(graph.num_edges)
    hard[chosen] = 0.0
    mask = ExplanationMask(retained_weights, target, hard)
    deleted_pairs = [graph.edges[int(i)] for i in sorted(chosen)]
    return mask, deleted_pairs
