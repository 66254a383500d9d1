"""Evaluation protocol: fidelity/faithfulness, sparsity filtering, timing,
seen/unseen generalization, ground-truth agreement, and a brute-force
subgraph oracle for small instances.

Fidelity compares correctness indicators against the dataset label before
and after masking; faithfulness is its complement. Hard masks are applied
as 0/1 edge weights on the original graph, so nodes keep their features
and only edges disappear.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .container import atomic_write_bytes
from .errors import DomainError, OracleCapError
from .gnn import GnnModel, predict
from .graphs import Dataset, Graph, MotifAnnotation, edges_connected
from .explainers.common import ExplanationMask

ORACLE_EDGE_CAP = 12
SPARSITY_MAX_EDGES = 20


@dataclass
class EvalRecord:
    graph_index: int
    initial_correct: bool
    explanation_correct: bool
    num_hard_edges: int
    gt_jaccard: float | None
    wall_time_ms: float

    def __post_init__(self):
        if self.num_hard_edges < 0 or self.wall_time_ms < 0:
            raise DomainError("record counts and times must be non-negative")


@dataclass
class EvalReport:
    records: list[EvalRecord]
    fidelity_acc: float
    faithfulness: float
    mean_inference_ms: float
    generalization_discrepancy: float | None
    seeds: list[int]

    @classmethod
    def from_records(cls, records: list[EvalRecord], seeds: list[int],
                     generalization: float | None = None) -> "EvalReport":
        fid = fidelity_from_records(records)
        mean_ms = float(np.mean([r.wall_time_ms for r in records])) if records else 0.0
        return cls(records, fid, 1.0 - fid, mean_ms, generalization, seeds)


def fidelity_from_records(records: list[EvalRecord]) -> float:
    if not records:
        raise DomainError("fidelity over an empty record list")
    diffs = [abs(int(r.initial_correct) - int(r.explanation_correct)) for r in records]
    return float(np.mean(diffs))


def fidelity_acc(model: GnnModel, graphs: list[Graph], explanations: list[ExplanationMask]) -> float:
    """(1/N) sum |1(Y_f(G)=Y) - 1(Y_f(G_e)=Y)| with hard masks as weights."""
    if not graphs:
        raise DomainError("fidelity over an empty instance list")
    if len(graphs) != len(explanations):
        raise DomainError("graphs and explanations must align")
    total = 0.0
    for g, mask in zip(graphs, explanations):
        y_full, _ = predict(model, g)
        hard = mask.hard_edges if mask.hard_edges is not None else np.ones(g.num_edges)
        y_masked, _ = predict(model, g, hard)
        total += abs(int(y_full == g.label) - int(y_masked == g.label))
    return total / len(graphs)


def build_records(
    model: GnnModel,
    dataset: Dataset,
    indices: list[int],
    explanations: dict[int, ExplanationMask],
    times_ms: dict[int, float] | None = None,
) -> list[EvalRecord]:
    records = []
    for i in indices:
        g = dataset.graphs[i]
        mask = explanations[i]
        y_full, _ = predict(model, g)
        hard = mask.hard_edges if mask.hard_edges is not None else np.ones(g.num_edges)
        y_masked, _ = predict(model, g, hard)
        ann = dataset.annotations[i]
        jac = None
        if ann is not None:
            jac = jaccard(set(mask.hard_pairs(g)), ann.ground_truth_edges)
        records.append(EvalRecord(
            graph_index=i,
            initial_correct=bool(y_full == g.label),
            explanation_correct=bool(y_masked == g.label),
            num_hard_edges=int(np.sum(hard > 0.5)),
            gt_jaccard=jac,
            wall_time_ms=0.0 if times_ms is None else times_ms.get(i, 0.0),
        ))
    return records


def sparsity_filter(records: list[EvalRecord], max_edges: int = SPARSITY_MAX_EDGES,
                    ) -> tuple[list[EvalRecord], float]:
    """Keep records with strictly fewer than ``max_edges`` hard edges."""
    kept = [r for r in records if r.num_hard_edges < max_edges]
    frac = len(kept) / len(records) if records else 0.0
    return kept, frac


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def ground_truth_agreement(
    graphs: list[Graph],
    explanations: list[ExplanationMask],
    annotations: list[MotifAnnotation | None],
) -> tuple[list[float], float, int]:
    """Per-instance hard-mask Jaccard plus corpus AUC of the soft weights.

    Instances without annotations are skipped and counted. AUC ranks every
    edge of every annotated graph by its soft weight against the 0/1
    ground-truth edge label.
    """
    jaccards: list[float] = []
    scores: list[float] = []
    labels: list[float] = []
    skipped = 0
    for g, mask, ann in zip(graphs, explanations, annotations):
        if ann is None:
            skipped += 1
            continue
        jaccards.append(jaccard(set(mask.hard_pairs(g)), ann.ground_truth_edges))
        scores.extend(mask.edge_weights.tolist())
        labels.extend(ann.edge_labels(g).tolist())
    auc = rank_auc(np.asarray(scores), np.asarray(labels)) if scores else float("nan")
    return jaccards, auc, skipped


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    pos = labels > 0.5
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUC needs both positive and negative edges")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    rank_pos = 1.0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i:j + 1]] = avg
        i = j + 1
    pos_rank_sum = float(ranks[pos].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def time_inference(
    explain_fn,
    graphs: list[Graph],
    seeds: list[int],
) -> tuple[float, float, list[float]]:
    """Per-instance wall time of ``explain_fn(graph, seed)``.

    Each seed pass runs one untimed warm-up call, then times every graph
    once with the monotonic clock, sequentially. Returns (mean ms,
    stderr ms, all samples).
    """
    if not graphs:
        raise DomainError("timing needs at least one graph")
    samples: list[float] = []
    for seed in seeds:
        explain_fn(graphs[0], seed)  # warm-up, excluded
        for g in graphs:
            t0 = time.perf_counter()
            explain_fn(g, seed)
            samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(samples)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr, samples


def generalization_gap(
    model: GnnModel,
    dataset: Dataset,
    explain_fn,
) -> tuple[float, float, float]:
    """faithfulness(seen test) - faithfulness(unseen) for one explainer.

    The explainer must have been trained on seen data only; returns
    (gap, seen faithfulness, unseen faithfulness).
    """
    seen_idx = dataset.indices("test")
    unseen_idx = dataset.indices("unseen")
    if not unseen_idx:
        raise DomainError("dataset has no unseen split")
    if not seen_idx:
        raise DomainError("dataset has no seen test split")

    def faithfulness_on(indices: list[int]) -> float:
        graphs = [dataset.graphs[i] for i in indices]
        masks = [explain_fn(g) for g in graphs]
        return 1.0 - fidelity_acc(model, graphs, masks)

    seen = faithfulness_on(seen_idx)
    unseen = faithfulness_on(unseen_idx)
    return seen - unseen, seen, unseen


def brute_force_best_subgraph(
    model: GnnModel,
    graph: Graph,
    k: int,
    target: int,
    connected_only: bool = True,
) -> tuple[tuple[int, ...], float]:
    """Exhaustive search for the probability-maximizing small subgraph.

    Enumerates connected edge subsets of size <= k (all subsets when
    ``connected_only`` is false), applies each as a hard mask, and returns
    the edge-index tuple maximizing P_f[target], ties broken by
    lexicographically smallest edge set. Refuses graphs above the cap.
    """
    if graph.num_edges > ORACLE_EDGE_CAP:
        raise OracleCapError(
            f"oracle capped at {ORACLE_EDGE_CAP} edges, graph has {graph.num_edges}")
    if k < 1:
        raise DomainError("k must be >= 1")
    best_edges: tuple[int, ...] | None = None
    best_prob = -1.0
    for size in range(1, min(k, graph.num_edges) + 1):
        for combo in itertools.combinations(range(graph.num_edges), size):
            if connected_only and not edges_connected([graph.edges[i] for i in combo]):
                continue
            w = np.zeros(graph.num_edges)
            w[list(combo)] = 1.0
            _, probs = predict(model, graph, w)
            p = float(probs[target])
            if p > best_prob or (p == best_prob and (best_edges is None or combo < best_edges)):
                best_prob = p
                best_edges = combo
    if best_edges is None:
        raise DomainError("no feasible subgraph found")
    return best_edges, best_prob


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

CSV_HEADER = ["graph_index", "family", "dataset", "seed", "initial_correct",
              "explanation_correct", "num_hard_edges", "gt_jaccard", "wall_time_ms"]


def write_report_csv(records: list[EvalRecord], path: str | Path, family: str,
                     dataset_name: str, seed: int) -> None:
    rows = [",".join(CSV_HEADER)]
    for r in records:
        jac = "" if r.gt_jaccard is None else f"{r.gt_jaccard:.6f}"
        rows.append(
            f"{r.graph_index},{family},{dataset_name},{seed},{int(r.initial_correct)},"
            f"{int(r.explanation_correct)},{r.num_hard_edges},{jac},{r.wall_time_ms:.4f}")
    atomic_write_bytes(path, lambda fh: fh.write(("\n".join(rows) + "\n").encode("utf-8")))


def read_report_csv(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(EvalRecord(
                graph_index=int(row["graph_index"]),
                initial_correct=bool(int(row["initial_correct"])),
                explanation_correct=bool(int(row["explanation_correct"])),
                num_hard_edges=int(row["num_hard_edges"]),
                gt_jaccard=float(row["gt_jaccard"]) if row["gt_jaccard"] else None,
                wall_time_ms=float(row["wall_time_ms"]),
            ))
    return records


def write_report_json(report: EvalReport, path: str | Path, family: str,
                      dataset_name: str, seed: int, extras: dict | None = None) -> None:
    payload = {
        "family": family,
        "dataset": dataset_name,
        "seed": seed,
        "fidelity_acc": report.fidelity_acc,
        "faithfulness": report.faithfulness,
        "mean_inference_ms": report.mean_inference_ms,
        "generalization_discrepancy": report.generalization_discrepancy,
        "seeds": report.seeds,
        "num_records": len(report.records),
    }
    if extras:
        payload.update(extras)
    text = json.dumps(payload, sort_keys=True, indent=2)
    atomic_write_bytes(path, lambda fh: fh.write(text.encode("utf-8")))
