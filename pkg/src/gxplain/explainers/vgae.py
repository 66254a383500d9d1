"""Variational graph autoencoder explainer.

The encoder maps each node to a Gaussian over the latent space; the decoder
scores every existing edge by the sigmoid of the endpoint latents' dot
product, and those scores mask the graph before it re-enters the frozen
classifier. Training adds the closed-form latent KL to the attribution and
information terms; inference uses the posterior means.
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
from .common import ExplainerConfig, ExplanationMask, encoder_forward, encoder_init
from .maskgen import TrainLog, _NamedGrads, _grad_accumulate


@dataclass
class VgaeExplainer:
    params: dict[str, Tensor]
    config: ExplainerConfig

    def encode(self, graph: Graph) -> tuple[Tensor, Tensor]:
        """Per-node posterior (mu, log variance)."""
        h = encoder_forward(self.params, graph, self.config.encoder_layers)
        rows = Tensor(np.ones((graph.num_nodes, 1)))
        mu = T.add(T.matmul(h, self.params["mu.w"]), T.matmul(rows, self.params["mu.b"]))
        logvar = T.add(T.matmul(h, self.params["logvar.w"]), T.matmul(rows, self.params["logvar.b"]))
        return mu, logvar

    def decode(self, z: Tensor, graph: Graph) -> Tensor:
        """Sigmoid(z_u . z_v) for each existing edge, in canonical order."""
        pairs = graph.pairs
        zu = T.take_rows(z, pairs[:, 0])
        zv = T.take_rows(z, pairs[:, 1])
        return T.sigmoid(T.tsum(T.mul(zu, zv), axis=1))

    def edge_scores(self, graph: Graph) -> np.ndarray:
        mu, _ = self.encode(graph)
        return self.decode(mu, graph).data


def init_vgae(d_n: int, cfg: ExplainerConfig, rng: np.random.Generator) -> VgaeExplainer:
    params = encoder_init(d_n, cfg.hidden_dim, cfg.encoder_layers, rng)
    params["mu.w"] = T.glorot((cfg.hidden_dim, cfg.latent_dim), rng)
    params["mu.b"] = T.zeros_param((1, cfg.latent_dim))
    params["logvar.w"] = T.glorot((cfg.hidden_dim, cfg.latent_dim), rng)
    params["logvar.b"] = T.zeros_param((1, cfg.latent_dim))
    return VgaeExplainer(params, cfg)


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over nodes and dims."""
    var = T.exp(T.clamp(logvar, -20.0, 20.0))
    term = T.sub(T.add(T.mul(mu, mu), var), T.add(logvar, 1.0))
    return T.mul(T.tsum(term), 0.5)


def train_vgae(
    model: GnnModel,
    dataset: Dataset,
    cfg: ExplainerConfig,
) -> tuple[VgaeExplainer, TrainLog]:
    train_idx = dataset.indices("train")
    if not train_idx:
        raise DomainError("dataset has no train split")
    rng = np.random.default_rng(cfg.seed)
    d_n = dataset.graphs[train_idx[0]].node_features.shape[1]
    vgae = init_vgae(d_n, cfg, rng)
    state = AdamState()
    targets = {i: predict(model, dataset.graphs[i])[0] for i in train_idx}

    log = TrainLog([], [])
    for _epoch in range(cfg.epochs):
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        attr_sum = 0.0
        info_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                g = dataset.graphs[i]
                noise = rng.standard_normal((g.num_nodes, cfg.latent_dim))
                with T.Tape() as tape:
                    mu, logvar = vgae.encode(g)
                    std = T.exp(T.mul(T.clamp(logvar, -20.0, 20.0), 0.5))
                    z = T.add(mu, T.mul(std, Tensor(noise)))
                    scores = vgae.decode(z, g)
                    logits = forward(model, g, scores)
                    attr = cross_entropy(logits, targets[i])
                    kl = T.mul(gaussian_kl(mu, logvar), cfg.kl_weight)
                    loss = T.add(attr, kl)
                    info = training_loss(cfg.constraint, g, scores, scores)
                    if info is not None:
                        loss = T.add(loss, info)
                grads = T.backward(tape, loss)
                _grad_accumulate(acc, vgae.params, grads)
                attr_sum += attr.item()
                info_sum += kl.item() + (0.0 if info is None else info.item())
            adam_step(vgae.params, _NamedGrads(acc, vgae.params, 1.0 / len(batch)), state, lr=cfg.lr)
        log.attr.append(attr_sum / len(order))
        log.info.append(info_sum / len(order))
    return vgae, log


def explain_vgae(vgae: VgaeExplainer, model: GnnModel, graph: Graph, k: int) -> ExplanationMask:
    scores = vgae.edge_scores(graph)
    k = budget(vgae.config.constraint, graph, k)
    target, _ = predict(model, graph)
    return ExplanationMask(scores, target).with_hard(k)
