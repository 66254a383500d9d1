"""Mask-generation explainer: a shared edge-scoring network trained across
the dataset to minimize attribution loss plus the information constraint.

Each edge gets a sampling probability from an encoder + pair-MLP head; a
relaxed Bernoulli (Gumbel-Softmax) sample of that probability masks the
graph before it re-enters the frozen classifier. Inference skips sampling
and uses the probabilities directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..constraints import budget, training_loss
from ..errors import DomainError
from ..gnn import GnnModel, cross_entropy, forward, predict
from ..graphs import Dataset, Graph
from ..optim import AdamState, adam_step
from ..tensor import Tensor
from .common import ExplainerConfig, ExplanationMask, encoder_forward, encoder_init, gumbel_sample, mlp_pair_init, mlp_pair_forward


@dataclass
class MaskGenerator:
    """Edge-probability network applicable to unseen graphs."""

    params: dict[str, Tensor]
    config: ExplainerConfig

    def edge_prob_tensor(self, graph: Graph) -> Tensor:
        h = encoder_forward(self.params, graph, self.config.encoder_layers)
        pairs = graph.pairs
        logits = mlp_pair_forward(self.params, h, pairs[:, 0], pairs[:, 1])
        return T.sigmoid(T.reshape(logits, (graph.num_edges,)))

    def edge_probs(self, graph: Graph) -> np.ndarray:
        return self.edge_prob_tensor(graph).data


def init_maskgen(d_n: int, cfg: ExplainerConfig, rng: np.random.Generator) -> MaskGenerator:
    params = encoder_init(d_n, cfg.hidden_dim, cfg.encoder_layers, rng)
    params.update(mlp_pair_init(cfg.hidden_dim, 1, rng))
    return MaskGenerator(params, cfg)


@dataclass
class TrainLog:
    """Per-epoch attribution/constraint decomposition; total is their sum."""

    attr: list[float]
    info: list[float]

    @property
    def total(self) -> list[float]:
        return [a + i for a, i in zip(self.attr, self.info)]


def _grad_accumulate(acc: dict[str, np.ndarray], params: dict[str, Tensor], grads) -> None:
    for name, p in params.items():
        g = grads.wrt(p)
        if name in acc:
            acc[name] += g
        else:
            acc[name] = g


class _NamedGrads:
    def __init__(self, by_name: dict[str, np.ndarray], params: dict[str, Tensor], scale: float):
        self._by_id = {params[n].node_id: g * scale for n, g in by_name.items()}

    def wrt(self, t: Tensor) -> np.ndarray:
        g = self._by_id.get(t.node_id)
        return g if g is not None else np.zeros(t.shape)


def train_maskgen(
    model: GnnModel,
    dataset: Dataset,
    cfg: ExplainerConfig,
    target_fn=None,
) -> tuple[MaskGenerator, TrainLog]:
    """Fit the generator on the train split against the frozen model.

    ``target_fn(graph, index) -> int`` overrides the factual target; the
    default is the model's own prediction on the full graph.
    """
    train_idx = dataset.indices("train")
    if not train_idx:
        raise DomainError("dataset has no train split")
    rng = np.random.default_rng(cfg.seed)
    d_n = dataset.graphs[train_idx[0]].node_features.shape[1]
    gen = init_maskgen(d_n, cfg, rng)
    state = AdamState()

    targets = {}
    for i in train_idx:
        g = dataset.graphs[i]
        targets[i] = target_fn(g, i) if target_fn else predict(model, g)[0]

    log = TrainLog([], [])
    for epoch in range(cfg.epochs):
        tau = cfg.tau_at(epoch)
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        attr_sum = 0.0
        info_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                g = dataset.graphs[i]
                with T.Tape() as tape:
                    probs = gen.edge_prob_tensor(g)
                    mask = gumbel_sample(probs, tau, rng)
                    logits = forward(model, g, mask)
                    attr = cross_entropy(logits, targets[i])
                    info = training_loss(cfg.constraint, g, mask, probs)
                    loss = attr if info is None else T.add(attr, info)
                grads = T.backward(tape, loss)
                _grad_accumulate(acc, gen.params, grads)
                attr_sum += attr.item()
                info_sum += 0.0 if info is None else info.item()
            adam_step(gen.params, _NamedGrads(acc, gen.params, 1.0 / len(batch)), state, lr=cfg.lr)
        log.attr.append(attr_sum / len(order))
        log.info.append(info_sum / len(order))
    return gen, log


def explain_maskgen(
    gen: MaskGenerator,
    model: GnnModel,
    graph: Graph,
    k: int,
    rng: np.random.Generator | None = None,
) -> ExplanationMask:
    """Deterministic soft weights plus the hard top-k extraction."""
    if gen.config.sample_at_inference:
        if rng is None:
            raise DomainError("sampling at inference needs an rng")
        p = gumbel_sample(gen.edge_prob_tensor(graph), gen.config.tau_end, rng).data
    else:
        p = gen.edge_probs(graph)
    k = budget(gen.config.constraint, graph, k)
    target, _ = predict(model, graph)
    return ExplanationMask(p, target).with_hard(k)
