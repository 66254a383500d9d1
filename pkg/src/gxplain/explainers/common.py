"""Shared machinery for the generative explainers.

Houses the explainer configuration, the explanation mask type, the
Gumbel-Softmax edge relaxation, and the small message-passing encoder the
generators use to embed nodes before scoring edges or actions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .. import tensor as T
from ..constraints import InfoConstraint, Variational, budget, constraint_from_config, constraint_to_config, hard_size_select
from ..errors import DomainError
from ..graphs import Graph
from ..tensor import Tensor

FAMILIES = ("maskgen", "vgae", "rl_mdp", "flow_dag", "counterfactual",
            "model_level", "saliency", "random")


@dataclass
class ExplainerConfig:
    family: str = "maskgen"
    constraint: InfoConstraint = field(default_factory=Variational)
    tau_start: float = 5.0
    tau_end: float = 1.0
    epochs: int = 20
    lr: float = 0.005
    hidden_dim: int = 16       # generator encoder width
    encoder_layers: int = 3
    latent_dim: int = 8        # VGAE latent width
    kl_weight: float = 1.0     # VGAE latent KL, independent of the size term
    max_steps: int = 6         # RL episode length / default extraction budget
    batch_size: int = 32
    seed: int = 0
    sample_at_inference: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown explainer family {self.family!r}")
        if not self.tau_start >= self.tau_end > 0:
            raise DomainError("temperature schedule needs tau_start >= tau_end > 0")

    def tau_at(self, epoch: int) -> float:
        """Geometric anneal from tau_start to tau_end across the epochs."""
        if self.epochs <= 1:
            return self.tau_end
        frac = epoch / (self.epochs - 1)
        return float(self.tau_start * (self.tau_end / self.tau_start) ** frac)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("constraint")
        d.update(constraint_to_config(self.constraint))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExplainerConfig":
        d = dict(d)
        constraint = constraint_from_config(d)
        for key in ("constraint", "size_k", "sparsity_fraction", "metric", "weight", "prior"):
            d.pop(key, None)
        return cls(constraint=constraint, **d)


@dataclass
class ExplanationMask:
    """Per-edge importance in [0, 1] plus an optional hard top-K subgraph."""

    edge_weights: np.ndarray
    target_label: int
    hard_edges: np.ndarray | None = None

    def __post_init__(self):
        self.edge_weights = np.asarray(self.edge_weights, dtype=np.float64).reshape(-1)
        if np.any(self.edge_weights < 0) or np.any(self.edge_weights > 1):
            raise DomainError("edge weights must lie in [0, 1]")
        if self.hard_edges is not None:
            self.hard_edges = np.asarray(self.hard_edges, dtype=np.float64).reshape(-1)

    def with_hard(self, k: int) -> "ExplanationMask":
        return ExplanationMask(self.edge_weights, self.target_label,
                               hard_size_select(self.edge_weights, k))

    def hard_pairs(self, graph: Graph) -> list[tuple[int, int]]:
        if self.hard_edges is None:
            return []
        return [graph.edges[i] for i in np.flatnonzero(self.hard_edges > 0.5)]

    def hard_indices(self) -> list[int]:
        if self.hard_edges is None:
            return []
        return [int(i) for i in np.flatnonzero(self.hard_edges > 0.5)]


def logit(x: float) -> float:
    return float(np.log(x) - np.log1p(-x))


def gumbel_sample(p, tau: float, rng: np.random.Generator | None = None, eps=None):
    """Binary-concrete edge sample m = sigma((logit(eps) + logit(p)) / tau).

    ``p`` may be a float (returns float) or a Tensor (returns Tensor whose
    gradient treats the uniform noise as constant). At p = eps = 0.5 the
    sample is exactly 0.5 for any temperature; as tau -> 0 the sample
    distribution approaches Bernoulli(p).
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    if isinstance(p, Tensor):
        if eps is None:
            if rng is None:
                raise DomainError("tensor gumbel_sample needs rng or explicit eps")
            eps = rng.uniform(0.0, 1.0, size=p.shape)
        eps = np.clip(np.asarray(eps, dtype=np.float64), 1e-12, 1.0 - 1e-12)
        noise = Tensor(np.log(eps) - np.log1p(-eps))
        pc = T.clamp(p, 1e-6, 1.0 - 1e-6)
        p_logit = T.sub(T.log(pc), T.log(T.sub(Tensor(np.ones(p.shape)), pc)))
        return T.sigmoid(T.mul(T.add(noise, p_logit), 1.0 / tau))
    if eps is None:
        if rng is None:
            raise DomainError("gumbel_sample needs rng or explicit eps")
        eps = float(rng.uniform(0.0, 1.0))
    z = (logit(float(eps)) + logit(float(np.clip(p, 1e-6, 1 - 1e-6)))) / tau
    return float(1.0 / (1.0 + np.exp(-z)))


# ---------------------------------------------------------------------------
# generator-side node encoder
# ---------------------------------------------------------------------------

def encoder_init(d_n: int, hidden: int, layers: int, rng: np.random.Generator,
                 prefix: str = "enc") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    dim = d_n
    for i in range(layers):
        params[f"{prefix}{i}.w"] = T.glorot((dim, hidden), rng)
        params[f"{prefix}{i}.b"] = T.zeros_param((1, hidden))
        dim = hidden
    return params


def encoder_forward(params: dict[str, Tensor], graph: Graph, layers: int,
                    prefix: str = "enc") -> Tensor:
    """Sum-aggregation message passing over the unmasked graph."""
    n = graph.num_nodes
    ones = np.ones(graph.num_edges)
    a = (T.edge_adjacency(Tensor(ones), graph.pairs, n).data
         if graph.num_edges else np.zeros((n, n)))
    agg_const = Tensor(a + np.eye(n))
    h: Tensor = Tensor(graph.node_features)
    rows = Tensor(np.ones((n, 1)))
    for i in range(layers):
        msg = T.matmul(agg_const, h)
        h = T.relu(T.add(T.matmul(msg, params[f"{prefix}{i}.w"]),
                         T.matmul(rows, params[f"{prefix}{i}.b"])))
    return h


def mlp_pair_init(hidden: int, out: int, rng: np.random.Generator,
                  prefix: str = "head") -> dict[str, Tensor]:
    """Two-layer head over concatenated endpoint embeddings, stored as the
    split weights (W_u, W_v) so no concat op is needed."""
    return {
        f"{prefix}.wu": T.glorot((hidden, hidden), rng),
        f"{prefix}.wv": T.glorot((hidden, hidden), rng),
        f"{prefix}.b1": T.zeros_param((1, hidden)),
        f"{prefix}.w2": T.glorot((hidden, out), rng),
        f"{prefix}.b2": T.zeros_param((1, out)),
    }


def mlp_pair_forward(params: dict[str, Tensor], h: Tensor, u_idx: np.ndarray,
                     v_idx: np.ndarray, prefix: str = "head") -> Tensor:
    rows = Tensor(np.ones((len(u_idx), 1)))
    z = T.add(T.add(T.matmul(T.take_rows(h, u_idx), params[f"{prefix}.wu"]),
                    T.matmul(T.take_rows(h, v_idx), params[f"{prefix}.wv"])),
              T.matmul(rows, params[f"{prefix}.b1"]))
    z = T.relu(z)
    return T.add(T.matmul(z, params[f"{prefix}.w2"]), T.matmul(rows, params[f"{prefix}.b2"]))


def now_ms() -> float:
    return time.perf_counter() * 1000.0
