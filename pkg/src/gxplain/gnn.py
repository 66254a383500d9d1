"""Base graph classifiers: weighted GCN/GIN layers, max-pool readout, training.

The forward pass takes optional per-edge weights in [0, 1] so a relaxed or
hard edge mask enters the model differentiably: each undirected edge
contributes its weight to both message directions. With weights absent the
model sees the plain graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .container import atomic_write_bytes, load_tensors, save_tensors
from .errors import DomainError, NumericalError
from .graphs import Dataset, Graph
from .optim import AdamState, adam_step
from .tensor import Tensor


@dataclass
class GnnConfig:
    layer_kind: str = "gin"          # "gcn" | "gin"
    hidden_dim: int = 32
    num_layers: int = 3
    readout: str = "max"
    num_classes: int = 2
    lr: float = 0.001
    max_epochs: int = 200
    patience: int = 20
    batch_size: int = 64

    def __post_init__(self):
        if self.layer_kind not in ("gcn", "gin"):
            raise DomainError(f"unknown layer kind {self.layer_kind!r}")
        if self.readout != "max":
            raise DomainError("only max readout is supported")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise DomainError("num_layers and hidden_dim must be >= 1")


@dataclass
class GnnModel:
    """Frozen parameters of a trained classifier."""

    config: GnnConfig
    params: dict[str, Tensor]
    feature_dims: tuple[int, int]    # (d_n, d_e)

    def freeze(self) -> "GnnModel":
        for p in self.params.values():
            p.requires_grad = False
        return self

    def checksum(self) -> float:
        return float(sum(np.sum(np.abs(p.data)) for p in self.params.values()))


def init_params(config: GnnConfig, d_n: int, d_e: int, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    dim_in = d_n
    h = config.hidden_dim
    for i in range(config.num_layers):
        if config.layer_kind == "gin":
            params[f"layer{i}.lin1_w"] = T.glorot((dim_in, h), rng)
            params[f"layer{i}.lin1_b"] = T.zeros_param((1, h))
            params[f"layer{i}.lin2_w"] = T.glorot((h, h), rng)
            params[f"layer{i}.lin2_b"] = T.zeros_param((1, h))
            params[f"layer{i}.eps"] = T.zeros_param((1,))
            params[f"layer{i}.edge_w"] = T.glorot((d_e, dim_in), rng)
            params[f"layer{i}.edge_b"] = T.zeros_param((1, dim_in))
        else:
            params[f"layer{i}.w"] = T.glorot((dim_in, h), rng)
            params[f"layer{i}.b"] = T.zeros_param((1, h))
        dim_in = h
    params["head.w"] = T.glorot((h, config.num_classes), rng)
    params["head.b"] = T.zeros_param((1, config.num_classes))
    return params


def _row_standardize(x: Tensor) -> Tensor:
    """Zero-mean unit-variance per row; keeps sum aggregation from blowing
    activations up with node degree (the usual normalization inside a GIN
    layer MLP, without learnable affine)."""
    mu = T.tmean(x, axis=1)
    centered = T.shift_rows(x, T.neg(mu))
    var = T.tmean(T.mul(centered, centered), axis=1)
    inv = T.power(T.add(var, 1e-5), -0.5)
    return T.scale_rows(centered, inv)


def forward(model: GnnModel, graph: Graph, edge_weights=None) -> Tensor:
    """Class logits for ``graph`` under an optional per-edge mask."""
    n = graph.num_nodes
    e = graph.num_edges
    cfg = model.config
    p = model.params

    if edge_weights is None:
        w = Tensor(np.ones(e))
    elif isinstance(edge_weights, Tensor):
        w = edge_weights
    else:
        w = Tensor(np.asarray(edge_weights, dtype=np.float64))
    if w.shape != (e,):
        raise DomainError(f"edge_weights shape {w.shape} does not match {e} edges")
    if np.any(w.data < -1e-12) or np.any(w.data > 1.0 + 1e-12):
        raise DomainError("edge_weights must lie in [0, 1]")

    adj = T.edge_adjacency(w, graph.pairs, n) if e else Tensor(np.zeros((n, n)))
    h: Tensor = Tensor(graph.node_features)

    if cfg.layer_kind == "gcn":
        eye = Tensor(np.eye(n))
        a_tilde = T.add(adj, eye)
        deg = T.tsum(a_tilde, axis=1)
        d_inv = T.power(deg, -0.5)
        norm = T.diag(d_inv)
        a_hat = T.matmul(T.matmul(norm, a_tilde), norm)
        for i in range(cfg.num_layers):
            agg = T.matmul(a_hat, h)
            h = T.relu(_row_broadcast_add(T.matmul(agg, p[f"layer{i}.w"]), p[f"layer{i}.b"]))
    else:
        inc = T.edge_incidence(w, graph.pairs, n) if e else None
        ef = Tensor(graph.edge_features)
        for i in range(cfg.num_layers):
            msg = T.matmul(adj, h)
            if inc is not None:
                proj = _row_broadcast_add(T.matmul(ef, p[f"layer{i}.edge_w"]), p[f"layer{i}.edge_b"])
                msg = T.add(msg, T.matmul(inc, proj))
            scaled = T.mul(h, T.add(p[f"layer{i}.eps"], 1.0))
            u = T.add(scaled, msg)
            z = _row_standardize(_row_broadcast_add(T.matmul(u, p[f"layer{i}.lin1_w"]), p[f"layer{i}.lin1_b"]))
            z = T.relu(z)
            h = T.relu(_row_broadcast_add(T.matmul(z, p[f"layer{i}.lin2_w"]), p[f"layer{i}.lin2_b"]))

    pooled = T.reshape(T.tmax(h, axis=0), (1, cfg.hidden_dim))
    logits = T.add(T.matmul(pooled, p["head.w"]), p["head.b"])
    return T.reshape(logits, (cfg.num_classes,))


def log_softmax(logits: Tensor) -> Tensor:
    shift = T.sub(logits, T.tmax(logits))
    lse = T.log(T.tsum(T.exp(shift)))
    return T.sub(shift, lse)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    onehot = np.zeros(logits.shape)
    onehot[label] = 1.0
    return T.neg(T.tsum(T.mul(log_softmax(logits), Tensor(onehot))))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def predict(model: GnnModel, graph: Graph, edge_weights=None) -> tuple[int, np.ndarray]:
    """(predicted class, probability vector); argmax breaks ties low."""
    logits = forward(model, graph, edge_weights)
    probs = softmax_np(logits.data)
    return int(np.argmax(probs)), probs


def accuracy(model: GnnModel, dataset: Dataset, split_name: str) -> float:
    idx = dataset.indices(split_name)
    if not idx:
        raise DomainError(f"split {split_name!r} is empty")
    hits = 0
    for i in idx:
        g = dataset.graphs[i]
        y, _ = predict(model, g)
        hits += int(y == g.label)
    return hits / len(idx)


def _loss_and_grads(model: GnnModel, graphs: list[Graph]) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch plus accumulated parameter gradients."""
    total = 0.0
    acc: dict[str, np.ndarray] = {}
    for g in graphs:
        with T.Tape() as tape:
            loss = cross_entropy(forward(model, g), g.label)
        total += loss.item()
        grads = T.backward(tape, loss)
        for name, p in model.params.items():
            acc_g = grads.wrt(p)
            if name in acc:
                acc[name] += acc_g
            else:
                acc[name] = acc_g
    k = len(graphs)
    return total / k, {name: g / k for name, g in acc.items()}


class _DictGrads:
    def __init__(self, by_name: dict[str, np.ndarray], params: dict[str, Tensor]):
        self._by_id = {params[n].node_id: g for n, g in by_name.items()}

    def wrt(self, t: Tensor) -> np.ndarray:
        g = self._by_id.get(t.node_id)
        return g if g is not None else np.zeros(t.shape)


def train_base(
    dataset: Dataset,
    config: GnnConfig,
    seed: int,
) -> tuple[GnnModel, list[dict[str, float]]]:
    """Train with Adam and early stopping on validation loss.

    Returns the best-validation checkpoint and the per-epoch history
    (epoch, train_loss, val_loss, val_acc).
    """
    if dataset.num_classes < 2:
        raise DomainError("training needs at least two classes")
    train_idx = dataset.indices("train")
    val_idx = dataset.indices("val")
    if not train_idx or not val_idx:
        raise DomainError("dataset must carry non-empty train and val splits")

    g0 = dataset.graphs[train_idx[0]]
    d_n, d_e = g0.node_features.shape[1], g0.edge_features.shape[1]
    rng = np.random.default_rng(seed)
    params = init_params(config, d_n, d_e, rng)
    model = GnnModel(config, params, (d_n, d_e))
    state = AdamState()

    best_val = np.inf
    best_params: dict[str, np.ndarray] = {}
    bad_epochs = 0
    history: list[dict[str, float]] = []

    for epoch in range(config.max_epochs):
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [dataset.graphs[i] for i in order[start:start + config.batch_size]]
            loss, grads = _loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            epoch_loss += loss * len(batch)
            adam_step(params, _DictGrads(grads, params), state, lr=config.lr)
        epoch_loss /= len(order)

        val_loss = 0.0
        val_hits = 0
        for i in val_idx:
            g = dataset.graphs[i]
            logits = forward(model, g)
            val_loss += cross_entropy(logits, g.label).item()
            val_hits += int(np.argmax(logits.data) == g.label)
        val_loss /= len(val_idx)
        val_acc = val_hits / len(val_idx)
        history.append({"epoch": epoch, "train_loss": epoch_loss,
                        "val_loss": val_loss, "val_acc": val_acc})

        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_params = {n: p.data.copy() for n, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    for name, data in best_params.items():
        params[name].data = data
    return model.freeze(), history


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: GnnModel, path: str | Path) -> None:
    """Binary parameter container plus a JSON config sidecar."""
    path = Path(path)
    save_tensors(path, model.params)
    sidecar = {"config": asdict(model.config),
               "feature_dims": list(model.feature_dims)}
    text = json.dumps(sidecar, sort_keys=True, indent=2)
    atomic_write_bytes(path.with_suffix(path.suffix + ".json"),
                       lambda fh: fh.write(text.encode("utf-8")))


def load_model(path: str | Path) -> GnnModel:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    config = GnnConfig(**sidecar["config"])
    params = load_tensors(path)
    return GnnModel(config, params, tuple(sidecar["feature_dims"])).freeze()


def write_history_csv(history: list[dict[str, float]], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss,val_acc"]
    for row in history:
        lines.append(f"{int(row['epoch'])},{row['train_loss']:.8f},{row['val_loss']:.8f},{row['val_acc']:.6f}")
    text = "\n".join(lines) + "\n"
    atomic_write_bytes(path, lambda fh: fh.write(text.encode("utf-8")))
