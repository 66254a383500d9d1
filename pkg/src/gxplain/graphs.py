"""Graph data model, synthetic motif datasets, splits, and file I/O.

Graphs store each undirected edge once in canonical (min, max) order,
lexicographically sorted. Synthetic generators plant a motif on a
preferential-attachment base and record the motif edges as ground truth;
the bridge edge joining motif to base is deliberately not ground truth.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes
from .errors import DomainError, GraphValidationError, ParseError

SPLITS = ("train", "val", "test", "unseen")


@dataclass
class Graph:
    """An undirected graph with node/edge features and an optional label."""

    num_nodes: int
    edges: list[tuple[int, int]]
    node_features: np.ndarray
    edge_features: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        self.edge_features = np.asarray(self.edge_features, dtype=np.float64)
        self.edges = [(int(u), int(v)) for u, v in self.edges]
        self._validate()
        self._pairs: np.ndarray | None = None
        self._incident: list[list[int]] | None = None

    def _validate(self) -> None:
        n = self.num_nodes
        if n <= 0:
            raise GraphValidationError("num_nodes must be positive")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphValidationError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphValidationError(f"edge ({u},{v}) endpoint out of range for {n} nodes")
            if u > v:
                raise GraphValidationError(f"edge ({u},{v}) not in canonical (min,max) order")
            if (u, v) in seen:
                raise GraphValidationError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if self.node_features.ndim != 2 or self.node_features.shape[0] != n:
            raise GraphValidationError(
                f"node_features rows {self.node_features.shape} do not match {n} nodes")
        if self.edge_features.ndim != 2 or self.edge_features.shape[0] != len(self.edges):
            raise GraphValidationError(
                f"edge_features rows {self.edge_features.shape} do not match {len(self.edges)} edges")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def pairs(self) -> np.ndarray:
        """Edges as an (E, 2) int array, cached."""
        if self._pairs is None:
            self._pairs = (np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
                           if self.edges else np.zeros((0, 2), dtype=np.intp))
        return self._pairs

    @property
    def incident(self) -> list[list[int]]:
        """node -> indices of incident edges, cached."""
        if self._incident is None:
            inc: list[list[int]] = [[] for _ in range(self.num_nodes)]
            for i, (u, v) in enumerate(self.edges):
                inc[u].append(i)
                inc[v].append(i)
            self._incident = inc
        return self._incident

    def edge_index(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        return self.edges.index(key)


@dataclass
class MotifAnnotation:
    """Ground-truth explanation edges for one graph."""

    ground_truth_edges: set[tuple[int, int]]
    motif_names: list[str] = field(default_factory=list)
    # Per-motif edge groups; generation-time convenience, not serialized.
    motif_edges: list[list[tuple[int, int]]] | None = None

    def edge_labels(self, graph: Graph) -> np.ndarray:
        """0/1 vector over the graph's canonical edge order."""
        return np.array([1.0 if e in self.ground_truth_edges else 0.0 for e in graph.edges])


@dataclass
class Dataset:
    """Graphs with parallel annotations, class count, and split assignment."""

    graphs: list[Graph]
    annotations: list[MotifAnnotation | None]
    num_classes: int
    split: list[str | None]

    def __post_init__(self):
        if not (len(self.graphs) == len(self.annotations) == len(self.split)):
            raise GraphValidationError("graphs/annotations/split lengths differ")
        for i, (g, ann) in enumerate(zip(self.graphs, self.annotations)):
            if g.label is not None and not (0 <= g.label < self.num_classes):
                raise GraphValidationError(f"label {g.label} outside [0,{self.num_classes})", i)
            if ann is not None:
                missing = ann.ground_truth_edges - set(g.edges)
                if missing:
                    raise GraphValidationError(f"ground-truth edges {sorted(missing)} not in edge list", i)
            if self.split[i] is not None and self.split[i] not in SPLITS:
                raise GraphValidationError(f"unknown split {self.split[i]!r}", i)

    def __len__(self) -> int:
        return len(self.graphs)

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == split]

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.intp)


# ---------------------------------------------------------------------------
# motif topologies
# ---------------------------------------------------------------------------

# node-local edge lists; node 0.. within the motif
MOTIFS: dict[str, tuple[int, list[tuple[int, int]]]] = {
    # 4-cycle 1-2-3-4 plus apex 0 joined to 1 and 2
    "house": (5, [(0, 1), (0, 2), (1, 2), (1, 4), (2, 3), (3, 4)]),
    "cycle": (5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]),
    # 3x3 lattice, row-major nodes
    "grid": (9, [(0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8),
                 (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8)]),
    # hub 0 joined to every vertex of the 5-cycle 1..5
    "wheel": (6, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5),
                  (0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]),
}


def _canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_ba(num_nodes: int, attach: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Barabási–Albert preferential attachment; returns a sorted edge list.

    Starts from a seed clique on ``attach + 1`` nodes; every later node
    attaches to ``attach`` distinct existing nodes sampled proportionally
    to current degree.
    """
    if attach < 1 or num_nodes < attach + 1:
        raise DomainError(f"gen_ba requires num_nodes >= attach + 1 >= 2, got {num_nodes}, {attach}")
    edges: set[tuple[int, int]] = set()
    degree = np.zeros(num_nodes)
    for u, v in itertools.combinations(range(attach + 1), 2):
        edges.add((u, v))
        degree[u] += 1
        degree[v] += 1
    for new in range(attach + 1, num_nodes):
        targets: set[int] = set()
        while len(targets) < attach:
            probs = degree[:new] / degree[:new].sum()
            pick = int(rng.choice(new, p=probs))
            targets.add(pick)
        for t in targets:
            edges.add(_canon(new, t))
            degree[new] += 1
            degree[t] += 1
    return sorted(edges)


def _attach_motif(
    base_edges: list[tuple[int, int]],
    base_nodes: int,
    motif: str,
    rng: np.random.Generator,
) -> tuple[list[tuple[int, int]], int, list[tuple[int, int]]]:
    """Append a motif after the base nodes plus one random bridge edge.

    Returns (all edges, total node count, motif edges). The bridge is not
    part of the returned motif edges.
    """
    size, local = MOTIFS[motif]
    offset = base_nodes
    motif_edges = [(u + offset, v + offset) for u, v in local]
    bridge = _canon(int(rng.integers(base_nodes)), offset + int(rng.integers(size)))
    edges = sorted(set(base_edges) | set(motif_edges) | {bridge})
    return edges, base_nodes + size, motif_edges


def _const_features(num_nodes: int, num_edges: int, d_n: int, d_e: int) -> tuple[np.ndarray, np.ndarray]:
    return np.ones((num_nodes, d_n)), np.ones((num_edges, d_e))


def gen_ba2motifs(count: int, seed: int) -> Dataset:
    """House-vs-cycle binary dataset: 20-node BA tree base plus one motif.

    Even indices get the 5-cycle (label 0), odd indices the house (label 1),
    so any prefix is near-balanced and the full set is exactly balanced for
    even ``count``.
    """
    if count < 2:
        raise DomainError("gen_ba2motifs needs count >= 2")
    rngs = [np.random.default_rng(s) for s in _child_seeds(seed, count)]
    graphs, annotations = [], []
    for i in range(count):
        rng = rngs[i]
        motif = "cycle" if i % 2 == 0 else "house"
        base = gen_ba(20, 1, rng)
        edges, n, motif_edges = _attach_motif(base, 20, motif, rng)
        nf, ef = _const_features(n, len(edges), 1, 1)
        graphs.append(Graph(n, edges, nf, ef, label=0 if motif == "cycle" else 1))
        annotations.append(MotifAnnotation(set(motif_edges), [motif], [motif_edges]))
    return Dataset(graphs, annotations, 2, [None] * count)


# class 0 carries zero, one, or all three motifs; class 1 exactly two
_BAMS_CLASS0 = [[], ["house"], ["grid"], ["wheel"], ["house", "grid", "wheel"]]
_BAMS_CLASS1 = [["house", "grid"], ["house", "wheel"], ["grid", "wheel"]]
_BAMS_TOTAL_NODES = 40


def gen_ba_multishapes(count: int, seed: int) -> Dataset:
    """Two-of-three-motifs dataset; every graph has exactly 40 nodes.

    The BA base shrinks to make room for the planted motifs, keeping node
    counts constant so the classifier must read structure, not size.
    """
    if count < 2:
        raise DomainError("gen_ba_multishapes needs count >= 2")
    rngs = [np.random.default_rng(s) for s in _child_seeds(seed, count)]
    graphs, annotations = [], []
    for i in range(count):
        rng = rngs[i]
        if i % 2 == 0:
            motifs = _BAMS_CLASS0[(i // 2) % len(_BAMS_CLASS0)]
            label = 0
        else:
            motifs = _BAMS_CLASS1[(i // 2) % len(_BAMS_CLASS1)]
            label = 1
        base_nodes = _BAMS_TOTAL_NODES - sum(MOTIFS[m][0] for m in motifs)
        edges = gen_ba(base_nodes, 1, rng)
        total = base_nodes
        groups: list[list[tuple[int, int]]] = []
        for m in motifs:
            edges, total, m_edges = _attach_motif(edges, total, m, rng)
            groups.append(m_edges)
        nf, ef = _const_features(total, len(edges), 10, 1)
        graphs.append(Graph(total, edges, nf, ef, label=label))
        gt = set(e for grp in groups for e in grp)
        annotations.append(MotifAnnotation(gt, list(motifs), groups))
    return Dataset(graphs, annotations, 2, [None] * count)


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split(
    dataset: Dataset,
    ratios: dict[str, float],
    seed: int,
    unseen: float = 0.0,
) -> Dataset:
    """Stratified-by-label random split, deterministic given ``seed``.

    ``ratios`` maps train/val/test to fractions summing to 1. A nonzero
    ``unseen`` fraction is carved out first (per class), and the ratios
    then apply within the remaining seen portion.
    """
    names = ("train", "val", "test")
    if set(ratios) != set(names):
        raise DomainError(f"ratios must name exactly {names}")
    total = sum(ratios.values())
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise DomainError(f"ratios sum to {total}, expected 1")
    if not 0.0 <= unseen < 1.0:
        raise DomainError("unseen fraction must be in [0, 1)")

    rng = np.random.default_rng(seed)
    assignment: list[str | None] = [None] * len(dataset)
    labels = dataset.labels()
    parts = [n for n in names if ratios[n] > 0]
    for cls in sorted(set(int(x) for x in labels)):
        idx = np.flatnonzero(labels == cls)
        needed = len(parts) + (1 if unseen > 0 else 0)
        if len(idx) < needed:
            raise DomainError(f"class {cls} has {len(idx)} instances, fewer than {needed} splits")
        idx = idx[rng.permutation(len(idx))]
        n_unseen = int(round(unseen * len(idx)))
        for i in idx[:n_unseen]:
            assignment[int(i)] = "unseen"
        seen = idx[n_unseen:]
        counts = _largest_remainder([ratios[p] for p in parts], len(seen))
        start = 0
        for part, c in zip(parts, counts):
            for i in seen[start:start + c]:
                assignment[int(i)] = part
            start += c
    return Dataset(dataset.graphs, dataset.annotations, dataset.num_classes, assignment)


def _largest_remainder(fractions: list[float], total: int) -> list[int]:
    raw = [f * total for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def write_graphs(dataset: Dataset, path: str | Path) -> None:
    """Serialize to the canonical JSON schema; byte-stable given the dataset."""
    payload = {"num_classes": dataset.num_classes, "graphs": []}
    for g, ann, part in zip(dataset.graphs, dataset.annotations, dataset.split):
        rec = {
            "num_nodes": g.num_nodes,
            "edges": [list(e) for e in g.edges],
            "node_features": g.node_features.tolist(),
            "edge_features": g.edge_features.tolist(),
            "label": g.label,
        }
        if ann is not None:
            rec["ground_truth_edges"] = [list(e) for e in sorted(ann.ground_truth_edges)]
        if part is not None:
            rec["split"] = part
        payload["graphs"].append(rec)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    atomic_write_bytes(path, lambda fh: fh.write(text.encode("utf-8")))


def read_graphs(path: str | Path) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict) or "graphs" not in payload or "num_classes" not in payload:
        raise ParseError(f"{path}: top level must carry num_classes and graphs")
    graphs, annotations, parts = [], [], []
    for i, rec in enumerate(payload["graphs"]):
        try:
            g = Graph(
                num_nodes=int(rec["num_nodes"]),
                edges=[tuple(e) for e in rec["edges"]],
                node_features=rec["node_features"],
                edge_features=rec["edge_features"],
                label=None if rec.get("label") is None else int(rec["label"]),
            )
        except KeyError as exc:
            raise ParseError(f"{path}: graph record {i} missing field {exc}") from exc
        except GraphValidationError as exc:
            raise GraphValidationError(str(exc), i) from exc
        ann = None
        if "ground_truth_edges" in rec:
            ann = MotifAnnotation(set(tuple(e) for e in rec["ground_truth_edges"]))
        graphs.append(g)
        annotations.append(ann)
        parts.append(rec.get("split"))
    return Dataset(graphs, annotations, int(payload["num_classes"]), parts)


# ---------------------------------------------------------------------------
# structure utilities
# ---------------------------------------------------------------------------

def edges_connected(edges: list[tuple[int, int]]) -> bool:
    """True when the edge set forms one connected component (or is empty)."""
    if not edges:
        return True
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(adj)


def subgraph_from_edges(graph: Graph, edge_indices: list[int]) -> Graph:
    """Materialize the node-relabelled subgraph on the given edges."""
    chosen = [(graph.edges[i], i) for i in edge_indices]
    nodes = sorted(set(n for (u, v), _ in chosen for n in (u, v)))
    relabel = {n: i for i, n in enumerate(nodes)}
    relabelled = sorted((_canon(relabel[u], relabel[v]), i) for (u, v), i in chosen)
    edges = [e for e, _ in relabelled]
    nf = graph.node_features[nodes] if nodes else np.zeros((0, graph.node_features.shape[1]))
    ef = (graph.edge_features[[i for _, i in relabelled]]
          if relabelled else np.zeros((0, graph.edge_features.shape[1])))
    return Graph(max(len(nodes), 1), edges, nf if nodes else np.ones((1, graph.node_features.shape[1])), ef,
                 label=graph.label)


def canonical_form(num_nodes: int, edges: list[tuple[int, int]]) -> tuple:
    """Canonical key for isomorphism classes of small graphs.

    Brute force over node permutations, refined by degree sequence so the
    search only permutes within degree classes. Intended for motif-sized
    graphs (<= 9 nodes).
    """
    if num_nodes > 9:
        raise DomainError("canonical_form is capped at 9 nodes")
    deg = [0] * num_nodes
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    # group nodes by degree; permute only within groups
    groups: dict[int, list[int]] = {}
    for n, d in enumerate(deg):
        groups.setdefault(d, []).append(n)
    ordered_degrees = sorted(groups, reverse=True)
    slots: list[list[int]] = [groups[d] for d in ordered_degrees]
    best: tuple | None = None
    for perm_parts in itertools.product(*[itertools.permutations(s) for s in slots]):
        mapping = {}
        pos = 0
        for part in perm_parts:
            for n in part:
                mapping[n] = pos
                pos += 1
        key = tuple(sorted(_canon(mapping[u], mapping[v]) for u, v in edges))
        if best is None or key < best:
            best = key
    return (num_nodes, tuple(sorted(deg, reverse=True)), best)


def is_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Exact isomorphism test for motif-sized graphs (structure only)."""
    if g1.num_nodes != g2.num_nodes or g1.num_edges != g2.num_edges:
        return False
    return canonical_form(g1.num_nodes, g1.edges) == canonical_form(g2.num_nodes, g2.edges)


def motif_graph(name: str, d_n: int = 1, d_e: int = 1, label: int | None = None) -> Graph:
    """The bare motif as a standalone graph with constant features."""
    size, edges = MOTIFS[name]
    nf, ef = _const_features(size, len(edges), d_n, d_e)
    return Graph(size, sorted(edges), nf, ef, label=label)


def dataset_stats(dataset: Dataset) -> dict[str, float]:
    """Corpus statistics; edge counts are doubled (both directions)."""
    n = len(dataset)
    return {
        "num_graphs": n,
        "avg_nodes": float(np.mean([g.num_nodes for g in dataset.graphs])),
        "avg_edges": float(np.mean([2 * g.num_edges for g in dataset.graphs])),
        "avg_degree": float(np.mean([2 * g.num_edges / g.num_nodes for g in dataset.graphs])),
        "num_classes": dataset.num_classes,
    }
