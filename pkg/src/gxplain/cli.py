"""Operator entry point: data generation, training, explanation, evaluation,
and report emission.

Exit codes: 0 success, 2 usage/validation, 3 artifact integrity, 4 numerical
failure. Every command is deterministic given identical inputs and seeds,
and writes a resolved-config snapshot next to its outputs. The environment
variable GXPLAIN_OUTPUT_ROOT, when set, prefixes relative output paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constraints import constraint_from_config
from .container import atomic_write_bytes, load_tensors, save_tensors
from .errors import GxError, IntegrityError, NumericalError, ParseError
from .evaluation import (EvalReport, brute_force_best_subgraph, build_records,
                         generalization_gap, ground_truth_agreement,
                         sparsity_filter, time_inference, write_report_csv,
                         write_report_json, read_report_csv, fidelity_from_records,
                         ORACLE_EDGE_CAP)
from .explainers import (ExplainerConfig, ExplanationMask, MaskGenerator,
                         explain_counterfactual, explain_flow, explain_maskgen,
                         explain_random, explain_rl_mdp, explain_saliency,
                         explain_vgae, model_level_generate, train_counterfactual,
                         train_flow_dag, train_maskgen, train_rl_mdp, train_vgae)
from .explainers.maskgen import MaskGenerator
from .explainers.rl import FlowNetwork, PolicyAgent
from .explainers.vgae import VgaeExplainer
from .explainers.common import now_ms
from .gnn import GnnConfig, load_model, save_model, train_base, accuracy, write_history_csv
from .graphs import (Dataset, dataset_stats, gen_ba2motifs, gen_ba_multishapes,
                     read_graphs, split, write_graphs)
from .report import bar_chart_svg, summary_table, write_svg

GENERATORS = {"ba2motifs": gen_ba2motifs, "bamultishapes": gen_ba_multishapes}


def _out_path(raw: str) -> Path:
    root = os.environ.get("GXPLAIN_OUTPUT_ROOT")
    p = Path(raw)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_snapshot(out: Path, args: argparse.Namespace, command: str) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in vars(args).items() if k != "func"}
    resolved["command"] = command
    resolved["version"] = __version__
    text = json.dumps(resolved, sort_keys=True, indent=2)
    atomic_write_bytes(out.parent / (out.name + ".config.json"),
                       lambda fh: fh.write(text.encode("utf-8")))


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.count < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return 2
    gen = GENERATORS.get(args.dataset)
    if gen is None:
        print(f"error: unknown generator {args.dataset!r} (choose from {sorted(GENERATORS)})",
              file=sys.stderr)
        return 2
    dataset = gen(args.count, args.seed)
    ratios = {"train": args.split[0], "val": args.split[1], "test": args.split[2]}
    dataset = split(dataset, ratios, seed=args.seed, unseen=args.unseen)
    out = _out_path(args.out)
    write_graphs(dataset, out)
    _write_snapshot(out, args, "gen-data")
    stats = dataset_stats(dataset)
    print(f"wrote {out}")
    print(f"graphs={stats['num_graphs']} avg_nodes={stats['avg_nodes']:.1f} "
          f"avg_edges={stats['avg_edges']:.1f} avg_degree={stats['avg_degree']:.2f} "
          f"classes={stats['num_classes']}")
    return 0


def cmd_train_gnn(args) -> int:
    data_path = Path(args.data)
    if not data_path.exists():
        print(f"error: dataset file not found: {data_path}", file=sys.stderr)
        return 2
    dataset = read_graphs(data_path)
    config = GnnConfig(layer_kind=args.layer, hidden_dim=args.hidden,
                       num_layers=args.layers, num_classes=dataset.num_classes,
                       lr=args.lr, max_epochs=args.epochs, patience=args.patience)
    model, history = train_base(dataset, config, seed=args.seed)
    out = _out_path(args.out)
    save_model(model, out)
    write_history_csv(history, out.parent / (out.stem + "_history.csv"))
    _write_snapshot(out, args, "train-gnn")
    test_acc = accuracy(model, dataset, "test")
    print(f"wrote {out}")
    print(f"test_accuracy={test_acc:.4f} epochs_run={len(history)}")
    return 0


def _explainer_config(args, dataset: Dataset) -> ExplainerConfig:
    base = _load_config_file(args.config)
    cfg_dict = dict(base)
    overrides = {
        "family": args.family,
        "epochs": args.epochs,
        "lr": args.lr,
        "seed": args.seed,
    }
    for key, val in overrides.items():
        if val is not None:
            cfg_dict[key] = val
    if args.constraint is not None:
        cfg_dict["constraint"] = args.constraint
    defaults = ExplainerConfig(family=cfg_dict.get("family", "maskgen"))
    known = {f for f in defaults.__dataclass_fields__} - {"constraint"}
    constraint = constraint_from_config(cfg_dict)
    kwargs = {k: v for k, v in cfg_dict.items() if k in known}
    return ExplainerConfig(constraint=constraint, **kwargs)


TRAINERS = {
    "maskgen": train_maskgen,
    "vgae": train_vgae,
    "rl_mdp": train_rl_mdp,
    "flow_dag": train_flow_dag,
    "counterfactual": train_counterfactual,
}


def cmd_train_explainer(args) -> int:
    data_path, model_path = Path(args.data), Path(args.model)
    for p in (data_path, model_path):
        if not p.exists():
            print(f"error: file not found: {p}", file=sys.stderr)
            return 2
    dataset = read_graphs(data_path)
    model = load_model(model_path)
    cfg = _explainer_config(args, dataset)
    out = _out_path(args.out)

    if cfg.family in TRAINERS:
        artifact, _log = TRAINERS[cfg.family](model, dataset, cfg)
        save_tensors(out, artifact.params)
    elif cfg.family in ("saliency", "random", "model_level"):
        save_tensors(out, {})  # nothing to train; checkpoint is the sidecar
    else:
        print(f"error: unknown family {cfg.family!r}", file=sys.stderr)
        return 2

    sidecar = {
        "explainer_config": cfg.to_dict(),
        "model_sha256": _sha256(model_path),
        "dataset_sha256": _sha256(data_path),
    }
    text = json.dumps(sidecar, sort_keys=True, indent=2)
    atomic_write_bytes(out.parent / (out.name + ".json"),
                       lambda fh: fh.write(text.encode("utf-8")))
    _write_snapshot(out, args, "train-explainer")
    print(f"wrote {out}")
    return 0


def _load_explainer(path: Path):
    with open(path.parent / (path.name + ".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    cfg = ExplainerConfig.from_dict(sidecar["explainer_config"])
    params = load_tensors(path, requires_grad=True)
    return cfg, params, sidecar


def _instantiate(cfg: ExplainerConfig, params, model):
    if cfg.family in ("maskgen", "counterfactual", "model_level"):
        return MaskGenerator(params, cfg)
    if cfg.family == "vgae":
        return VgaeExplainer(params, cfg)
    if cfg.family == "rl_mdp":
        return PolicyAgent(params, cfg)
    if cfg.family == "flow_dag":
        return FlowNetwork(params, cfg)
    return None


def make_explain_fn(cfg: ExplainerConfig, artifact, model, k: int):
    """Uniform (graph, seed) -> ExplanationMask closure for every family."""
    fam = cfg.family
    if fam == "maskgen":
        return lambda g, seed=0: explain_maskgen(artifact, model, g, k)
    if fam == "vgae":
        return lambda g, seed=0: explain_vgae(artifact, model, g, k)
    if fam == "rl_mdp":
        return lambda g, seed=0: explain_rl_mdp(artifact, model, g, k)
    if fam == "flow_dag":
        return lambda g, seed=0: explain_flow(artifact, model, g, k)
    if fam == "counterfactual":
        return lambda g, seed=0: explain_counterfactual(artifact, model, g, k)[0]
    if fam == "saliency":
        return lambda g, seed=0: explain_saliency(model, g, k)
    if fam == "random":
        return lambda g, seed=0: explain_random(g, k, seed, model)
    raise GxError(f"family {fam!r} has no per-instance explain")


def cmd_explain(args) -> int:
    expl_path, data_path, model_path = Path(args.explainer), Path(args.data), Path(args.model)
    for p in (expl_path, data_path, model_path):
        if not p.exists():
            print(f"error: file not found: {p}", file=sys.stderr)
            return 2
    cfg, params, sidecar = _load_explainer(expl_path)
    model_hash, data_hash = _sha256(model_path), _sha256(data_path)
    if sidecar["model_sha256"] != model_hash:
        raise IntegrityError(f"model hash mismatch: checkpoint records "
                             f"{sidecar['model_sha256']}, file has {model_hash}")
    if sidecar["dataset_sha256"] != data_hash:
        raise IntegrityError(f"dataset hash mismatch: checkpoint records "
                             f"{sidecar['dataset_sha256']}, file has {data_hash}")
    dataset = read_graphs(data_path)
    model = load_model(model_path)
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.family == "model_level":
        for cls in range(dataset.num_classes):
            expl = model_level_generate(model, dataset, cls, cfg, k=args.topk)
            payload = {
                "target_class": cls,
                "pattern_edges": [list(e) for e in expl.pattern.edges],
                "pattern_nodes": expl.pattern.num_nodes,
                "support": expl.support,
                "num_instances": expl.num_instances,
                "predicted_label": expl.predicted_label,
                "family": cfg.family,
            }
            text = json.dumps(payload, sort_keys=True, indent=2)
            atomic_write_bytes(out_dir / f"model_level_class{cls}.json",
                               lambda fh, t=text: fh.write(t.encode("utf-8")))
        _write_snapshot(out_dir / "explain", args, "explain")
        print(f"wrote model-level explanations to {out_dir}")
        return 0

    artifact = _instantiate(cfg, params, model)
    fn = make_explain_fn(cfg, artifact, model, args.topk)
    indices = dataset.indices(args.split)
    if not indices:
        print(f"error: split {args.split!r} is empty", file=sys.stderr)
        return 2
    for i in indices:
        g = dataset.graphs[i]
        t0 = now_ms()
        mask: ExplanationMask = fn(g, args.seed)
        elapsed = now_ms() - t0
        payload = {
            "graph_index": i,
            "target_label": mask.target_label,
            "edge_weights": [round(float(w), 8) for w in mask.edge_weights],
            "hard_edges": [list(e) for e in mask.hard_pairs(g)],
            "family": cfg.family,
            "wall_time_ms": round(elapsed, 4),
        }
        text = json.dumps(payload, sort_keys=True)
        atomic_write_bytes(out_dir / f"expl_{i:06d}.json",
                           lambda fh, t=text: fh.write(t.encode("utf-8")))
    _write_snapshot(out_dir / "explain", args, "explain")
    print(f"wrote {len(indices)} explanations to {out_dir}")
    return 0


def _read_explanations(dir_path: Path, dataset: Dataset) -> tuple[dict[int, ExplanationMask], dict[int, float], str]:
    masks: dict[int, ExplanationMask] = {}
    times: dict[int, float] = {}
    family = "unknown"
    for f in sorted(dir_path.glob("expl_*.json")):
        with open(f, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        i = payload["graph_index"]
        g = dataset.graphs[i]
        hard = np.zeros(g.num_edges)
        for u, v in payload["hard_edges"]:
            hard[g.edge_index(u, v)] = 1.0
        masks[i] = ExplanationMask(np.asarray(payload["edge_weights"]),
                                   payload["target_label"], hard)
        times[i] = payload["wall_time_ms"]
        family = payload["family"]
    return masks, times, family


def cmd_evaluate(args) -> int:
    data_path, model_path = Path(args.data), Path(args.model)
    expl_dir = Path(args.explanations)
    for p in (data_path, model_path, expl_dir):
        if not p.exists():
            print(f"error: not found: {p}", file=sys.stderr)
            return 2
    dataset = read_graphs(data_path)
    model = load_model(model_path)
    masks, times, family = _read_explanations(expl_dir, dataset)
    if not masks:
        print(f"error: no explanation files in {expl_dir}", file=sys.stderr)
        return 2

    indices = sorted(masks)
    records = build_records(model, dataset, indices, masks, times)
    kept, kept_frac = sparsity_filter(records, args.max_edges)
    report = EvalReport.from_records(kept if kept else records, [args.seed])

    graphs = [dataset.graphs[i] for i in indices]
    anns = [dataset.annotations[i] for i in indices]
    jaccards, auc, skipped = ground_truth_agreement(graphs, [masks[i] for i in indices], anns)
    extras = {
        "kept_fraction": kept_frac,
        "gt_auc": None if np.isnan(auc) else auc,
        "gt_jaccard_mean": float(np.mean(jaccards)) if jaccards else None,
        "skipped_no_annotation": skipped,
    }

    if args.generalization:
        cfg_path = expl_dir / "explain.config.json"
        gap = None
        try:
            unseen_idx = dataset.indices("unseen")
            if unseen_idx and all(i in masks for i in unseen_idx):
                seen_idx = [i for i in dataset.indices("test") if i in masks]
                seen_records = build_records(model, dataset, seen_idx, masks, times)
                unseen_records = build_records(model, dataset, unseen_idx, masks, times)
                gap = ((1.0 - fidelity_from_records(seen_records))
                       - (1.0 - fidelity_from_records(unseen_records)))
        except GxError:
            gap = None
        report.generalization_discrepancy = gap
        extras["generalization_gap"] = gap
        _ = cfg_path

    if args.oracle:
        dominance_ok = 0
        dominance_total = 0
        for i in indices:
            g = dataset.graphs[i]
            if g.num_edges > ORACLE_EDGE_CAP:
                continue
            target = masks[i].target_label
            _, best = brute_force_best_subgraph(model, g, args.topk, target)
            hard = masks[i].hard_edges
            w = hard if hard is not None else np.ones(g.num_edges)
            from .gnn import predict as _predict
            _, probs = _predict(model, g, w)
            dominance_total += 1
            dominance_ok += int(probs[target] <= best + 1e-12)
        extras["oracle_dominance"] = {"checked": dominance_total, "held": dominance_ok}

    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(records, out_dir / "records.csv", family, data_path.stem, args.seed)
    write_report_json(report, out_dir / "aggregate.json", family, data_path.stem,
                      args.seed, extras)
    _write_snapshot(out_dir / "evaluate", args, "evaluate")
    print(f"faithfulness={report.faithfulness:.4f} fidelity_acc={report.fidelity_acc:.4f} "
          f"kept_fraction={kept_frac:.3f}")
    return 0


def cmd_report(args) -> int:
    payloads = []
    for raw in args.inputs:
        p = Path(raw)
        if not p.exists():
            print(f"error: not found: {p}", file=sys.stderr)
            return 2
        with open(p, "r", encoding="utf-8") as fh:
            payloads.append(json.load(fh))
    datasets = {p["dataset"] for p in payloads}
    if len(datasets) > 1:
        print(f"error: reports span multiple datasets {sorted(datasets)}; merge refused",
              file=sys.stderr)
        return 2
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    labels = [p["family"] for p in payloads]
    write_svg(bar_chart_svg(labels, [p["faithfulness"] for p in payloads],
                            title=f"Faithfulness ({next(iter(datasets))})",
                            ylabel="faithfulness"),
              out_dir / "faithfulness.svg")
    timing = [max(p.get("mean_inference_ms") or 1e-3, 1e-3) for p in payloads]
    write_svg(bar_chart_svg(labels, timing, title="Inference time per graph",
                            ylabel="log10 ms", log_scale=True),
              out_dir / "timing.svg")
    gaps = [p.get("generalization_gap") for p in payloads]
    if any(g is not None for g in gaps):
        vals = [abs(g) if g is not None else 0.0 for g in gaps]
        errs = [p.get("generalization_stderr") or 0.0 for p in payloads]
        write_svg(bar_chart_svg(labels, vals, errors=errs,
                                title="Seen/unseen faithfulness gap",
                                ylabel="|gap|"),
                  out_dir / "generalization.svg")

    columns = ["family", "faithfulness", "fidelity_acc", "mean_inference_ms",
               "gt_auc", "generalization_gap"]
    table = summary_table(payloads, columns)
    atomic_write_bytes(out_dir / "summary.txt", lambda fh: fh.write(table.encode("utf-8")))
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gxplain",
                                     description="Train and evaluate generative GNN explainers.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic motif dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, nargs=3, default=[0.8, 0.1, 0.1],
                   metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--unseen", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-gnn", help="train the base classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--layer", choices=["gcn", "gin"], default="gin")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_gnn)

    p = sub.add_parser("train-explainer", help="train a generative explainer")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--family", default=None)
    p.add_argument("--constraint", default=None,
                   choices=["hard_size", "sparsity", "soft_size", "variational"])
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file; flags override")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_explainer)

    p = sub.add_parser("explain", help="emit per-instance explanation JSONs")
    p.add_argument("--explainer", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--topk", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="score explanations against the model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--explanations", required=True)
    p.add_argument("--max-edges", type=int, default=20)
    p.add_argument("--topk", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generalization", action="store_true")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge aggregate JSONs into charts")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except GxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
