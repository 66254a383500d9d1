"""Information constraints restricting how much of a graph an explanation keeps.

Four variants: a hard top-K edge budget, a sparsity fraction that converts
to a budget per graph, a soft size penalty on the relaxed mask, and a
variational Bernoulli-KL bound on the edge-sampling distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DomainError
from .graphs import Graph
from .tensor import Tensor

PROB_EPS = 1e-6  # probabilities clamped to [PROB_EPS, 1 - PROB_EPS] before logs


@dataclass(frozen=True)
class HardSize:
    k: int = 6

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("hard size budget must be >= 1")


@dataclass(frozen=True)
class Sparsity:
    fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise DomainError("sparsity fraction must lie in (0, 1)")


@dataclass(frozen=True)
class SoftSize:
    metric: str = "l1"
    weight: float = 0.005

    def __post_init__(self):
        if self.metric not in ("l1", "l2"):
            raise DomainError(f"unknown soft size metric {self.metric!r}")
        if self.weight < 0:
            raise DomainError("weight must be >= 0")


@dataclass(frozen=True)
class Variational:
    prior: float = 0.3
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.prior < 1.0:
            raise DomainError("prior must lie in (0, 1)")
        if self.weight < 0:
            raise DomainError("weight must be >= 0")


InfoConstraint = HardSize | Sparsity | SoftSize | Variational


def hard_size_select(weights: np.ndarray, k: int) -> np.ndarray:
    """0/1 vector keeping the top-k weights; ties go to the lowest edge index."""
    if k < 1:
        raise DomainError("k must be >= 1")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    keep = min(k, w.size)
    order = np.argsort(-w, kind="stable")
    hard = np.zeros(w.size)
    hard[order[:keep]] = 1.0
    return hard


def sparsity_to_size(graph: Graph, fraction: float) -> int:
    if not 0.0 < fraction < 1.0:
        raise DomainError("sparsity fraction must lie in (0, 1)")
    return max(1, math.ceil(fraction * graph.num_edges))


def soft_size_loss(graph: Graph, mask, metric: str = "l1", weight: float = 1.0) -> Tensor:
    """weight * ||1 - mask||_metric over existing edges (absent edges agree)."""
    m = mask if isinstance(mask, Tensor) else Tensor(np.asarray(mask, dtype=np.float64))
    if m.shape != (graph.num_edges,):
        raise DomainError(f"mask shape {m.shape} does not match {graph.num_edges} edges")
    gap = T.sub(Tensor(np.ones(graph.num_edges)), m)
    if metric == "l1":
        norm = T.tsum(gap)
    elif metric == "l2":
        norm = T.power(T.tsum(T.mul(gap, gap)), 0.5)
    else:
        raise DomainError(f"unknown soft size metric {metric!r}")
    return T.mul(norm, float(weight))


def variational_loss(edge_probs, prior: float, weight: float = 1.0) -> Tensor:
    """weight * sum_i KL(Bern(p_i) || Bern(prior)), probabilities clamped."""
    if not 0.0 < prior < 1.0:
        raise DomainError("prior must lie in (0, 1)")
    p = edge_probs if isinstance(edge_probs, Tensor) else Tensor(np.asarray(edge_probs, dtype=np.float64))
    p = T.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    one = Tensor(np.ones(p.shape))
    q = T.sub(one, p)
    log_prior = math.log(prior)
    log_prior_c = math.log(1.0 - prior)
    kl = T.add(
        T.mul(p, T.sub(T.log(p), Tensor(np.full(p.shape, log_prior)))),
        T.mul(q, T.sub(T.log(q), Tensor(np.full(p.shape, log_prior_c)))),
    )
    return T.mul(T.tsum(kl), float(weight))


def bernoulli_kl(p: float, prior: float) -> float:
    """Closed-form scalar KL(Bern(p) || Bern(prior)) after clamping."""
    p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
    return p * math.log(p / prior) + (1.0 - p) * math.log((1.0 - p) / (1.0 - prior))


def training_loss(constraint: InfoConstraint, graph: Graph, mask: Tensor, probs: Tensor) -> Tensor | None:
    """The constraint's differentiable loss term, or None for selection-only
    constraints (hard size, sparsity), which act at extraction time instead."""
    if isinstance(constraint, SoftSize):
        return soft_size_loss(graph, mask, constraint.metric, constraint.weight)
    if isinstance(constraint, Variational):
        return variational_loss(probs, constraint.prior, constraint.weight)
    return None


def budget(constraint: InfoConstraint, graph: Graph, default_k: int) -> int:
    """Top-K extraction budget implied by the constraint."""
    if isinstance(constraint, HardSize):
        return constraint.k
    if isinstance(constraint, Sparsity):
        return sparsity_to_size(graph, constraint.fraction)
    return default_k


def constraint_from_config(cfg: dict) -> InfoConstraint:
    """Parse config keys: constraint = hard_size|sparsity|soft_size|variational."""
    kind = cfg.get("constraint", "variational")
    if kind == "hard_size":
        return HardSize(k=int(cfg.get("size_k", 6)))
    if kind == "sparsity":
        return Sparsity(fraction=float(cfg.get("sparsity_fraction", 0.1)))
    if kind == "soft_size":
        return SoftSize(metric=cfg.get("metric", "l1"), weight=float(cfg.get("weight", 0.005)))
    if kind == "variational":
        return Variational(prior=float(cfg.get("prior", 0.3)), weight=float(cfg.get("weight", 1.0)))
    raise DomainError(f"unknown constraint kind {kind!r}")


def constraint_to_config(constraint: InfoConstraint) -> dict:
    if isinstance(constraint, HardSize):
        return {"constraint": "hard_size", "size_k": constraint.k}
    if isinstance(constraint, Sparsity):
        return {"constraint": "sparsity", "sparsity_fraction": constraint.fraction}
    if isinstance(constraint, SoftSize):
        return {"constraint": "soft_size", "metric": constraint.metric, "weight": constraint.weight}
    return {"constraint": "variational", "prior": constraint.prior, "weight": constraint.weight}
