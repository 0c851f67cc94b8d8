"""``kgneeds`` command line: ingest, extract-paths, train, predict, eval, explain.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .concept_link import LabelSet, load_instances
from .features import EmbeddingTable, load_embeddings
from .kg_store import CACHE_FORMAT, EmptyGraphError, KnowledgeGraph, load_cache, load_graph, save_cache
from .metrics import micro_prf
from .model import ConfigError, ModelConfig, load_model, save_model
from .pipeline import (
    PipelineConfig,
    PipelineConfigError,
    extract_all,
    file_digest,
    read_ranked_paths,
    require_file,
    settings_from_config,
    write_manifest,
    write_ranked_paths,
)
from .train import build_examples, predict, train

logger = logging.getLogger("kgneeds")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


# --------------------------------------------------------------------------
# helpers


def _graph_cache_path(cfg: PipelineConfig) -> Path:
    return cfg.out_path("graph.pkl")


def _load_graph(cfg: PipelineConfig) -> KnowledgeGraph:
    src = require_file(cfg.graph, "graph")
    return load_graph(src, cfg.language, cfg.min_weight)


def _embedding_dim(path: Path) -> int:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) > 1:
                return len(parts) - 1
    raise ConfigError(f"{path}: cannot infer embedding dimension")


def _load_embeddings(cfg: PipelineConfig, expect_dim: int | None = None) -> EmbeddingTable:
    path = require_file(cfg.embeddings, "embeddings")
    dim = cfg.embedding_dim or expect_dim or _embedding_dim(path)
    if expect_dim is not None and dim != expect_dim:
        raise ConfigError(f"embedding dimension {dim} does not match the model's {expect_dim}")
    return load_embeddings(path, dim)


def _paths_file(cfg: PipelineConfig) -> Path:
    return Path(cfg.paths) if cfg.paths else cfg.out_path("paths.jsonl")


def _model_file(cfg: PipelineConfig) -> Path:
    return Path(cfg.model) if cfg.model else cfg.out_path("model.bin")


def _predictions_file(cfg: PipelineConfig) -> Path:
    return Path(cfg.predictions) if cfg.predictions else cfg.out_path("predictions.jsonl")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: PipelineConfig) -> int:
    src = require_file(cfg.graph, "graph")
    cache = _graph_cache_path(cfg)
    digest = file_digest(src)
    graph = None
    meta_path = cache.with_suffix(".json")
    if cache.is_file() and meta_path.is_file():
        meta = json.loads(meta_path.read_text())
        if meta.get("source_sha256") == digest and meta.get("format") == CACHE_FORMAT:
            graph = load_cache(cache)
            logger.info("loaded graph cache %s", cache)
    if graph is None:
        graph = load_graph(src, cfg.language, cfg.min_weight)
        save_cache(graph, cache)
        _dump_json(meta_path, {"format": CACHE_FORMAT, "source": str(src), "source_sha256": digest})
    stats = graph.stats()
    print(f"vertices: {stats['vertices']}")
    print(f"edges: {stats['edges']}")
    print(f"relations: {stats['relations']}")
    _dump_json(cfg.out_path("graph_stats.json"), stats)
    write_manifest(cfg, "ingest", [src], [cache, cfg.out_path("graph_stats.json")])
    return EXIT_OK


def cmd_extract_paths(cfg: PipelineConfig) -> int:
    graph = _load_graph(cfg)
    inst_file, instances = _read_instances(cfg)
    label_set = cfg.label_set()
    settings = settings_from_config(cfg, graph)
    results = extract_all(graph, instances, settings, cfg.workers)
    out = _paths_file(cfg)
    write_ranked_paths((r.ranked for r in results), out)
    outputs = [out]
    if cfg.dump_subgraphs:
        sub_dir = cfg.out_path("subgraphs")
        sub_dir.mkdir(exist_ok=True)
        for r in results:
            if r.subgraph is not None:
                p = sub_dir / f"{r.ranked.instance_id}.json"
                _dump_json(p, r.subgraph.to_json())
                outputs.append(p)
    unlinked = sum(1 for r in results if r.linked == 0)
    n_paths = sum(len(r.ranked.flat()) for r in results)
    summary = {
        "instances": len(instances),
        "paths": n_paths,
        "unlinked_instances": unlinked,
        "labels": list(label_set.labels),
        "missing_label_concepts": settings.label_map.missing,
        "strategy": cfg.strategy,
        "path_types": cfg.path_types,
    }
    _dump_json(cfg.out_path("paths_summary.json"), summary)
    print(f"instances: {len(instances)}  paths: {n_paths}  warnings (no linked concepts): {unlinked}")
    write_manifest(cfg, "extract-paths", [cfg.graph, inst_file], outputs + [cfg.out_path("paths_summary.json")])
    return EXIT_OK


def _read_instances(cfg: PipelineConfig):
    inst_file = require_file(cfg.instances, "instances")
    full = LabelSet.named(cfg.label_theory, cfg.labels)
    return inst_file, load_instances(inst_file, full, cfg.drop_labels)


def _examples(cfg: PipelineConfig, label_set, embeddings, use_paths: bool):
    inst_file, instances = _read_instances(cfg)
    paths = {}
    paths_file = None
    if use_paths:
        paths_file = require_file(str(_paths_file(cfg)), "ranked-path")
        paths = read_ranked_paths(paths_file)
    return instances, build_examples(instances, paths, embeddings, label_set), [inst_file, paths_file]


def cmd_train(cfg: PipelineConfig) -> int:
    label_set = cfg.label_set()
    embeddings = _load_embeddings(cfg)
    model_cfg = ModelConfig(
        labels=label_set.labels,
        embedding_dim=embeddings.dim,
        hidden_size=cfg.hidden_size,
        gate_size=cfg.gate_size,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        dropout=cfg.dropout,
        l2=cfg.l2_value(),
        epochs=cfg.epochs,
        seed=cfg.seed,
        k=cfg.k,
        threshold=cfg.threshold,
        negative_weighting=cfg.negative_weighting,
        use_knowledge=cfg.use_knowledge,
    )
    _, examples, inputs = _examples(cfg, label_set, embeddings, cfg.use_knowledge)
    params, log = train(model_cfg, examples)
    model_path = _model_file(cfg)
    save_model(model_path, params, model_cfg, {"label_theory": cfg.label_theory})
    log_path = cfg.out_path("loss_log.json")
    _dump_json(log_path, log)
    print(f"trained {model_cfg.epochs} epochs; loss {log[0]['loss']:.6f} -> {log[-1]['loss']:.6f}")
    write_manifest(cfg, "train", [cfg.embeddings, *inputs], [model_path, log_path])
    return EXIT_OK


def _load_model_for(cfg: PipelineConfig):
    model_path = require_file(str(_model_file(cfg)), "model")
    params, model_cfg, _ = load_model(model_path)
    embeddings = _load_embeddings(cfg, expect_dim=model_cfg.embedding_dim)
    label_set = cfg.label_set()
    if tuple(label_set.labels) != model_cfg.labels:
        raise ConfigError(
            f"label set {list(label_set.labels)} does not match the model's {list(model_cfg.labels)}"
        )
    return model_path, params, model_cfg, embeddings, label_set


def cmd_predict(cfg: PipelineConfig) -> int:
    model_path, params, model_cfg, embeddings, label_set = _load_model_for(cfg)
    _, examples, inputs = _examples(cfg, label_set, embeddings, model_cfg.use_knowledge)
    preds, _ = predict(params, model_cfg, examples)
    out = _predictions_file(cfg)
    with open(out, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_json()) + "\n")
    print(f"wrote {len(preds)} predictions to {out}")
    write_manifest(cfg, "predict", [model_path, cfg.embeddings, *inputs], [out])
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig) -> int:
    label_set = cfg.label_set()
    pred_file = require_file(str(_predictions_file(cfg)), "predictions")
    inst_file, instances = _read_instances(cfg)
    golds = {i.instance_id: set(i.gold_labels) for i in instances}
    preds = {}
    with open(pred_file, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                preds[rec["instance_id"]] = set(rec["labels"])
    report = micro_prf(preds, golds, label_set.labels)
    json_path = cfg.out_path("metrics.json")
    txt_path = cfg.out_path("metrics.txt")
    _dump_json(json_path, report.to_json())
    table = report.table()
    txt_path.write_text(table + "\n", encoding="utf-8")
    print(table)
    write_manifest(cfg, "eval", [pred_file, inst_file], [json_path, txt_path])
    return EXIT_OK


def cmd_explain(cfg: PipelineConfig, instance_id: str) -> int:
    model_path, params, model_cfg, embeddings, label_set = _load_model_for(cfg)
    instances, examples, _ = _examples(cfg, label_set, embeddings, model_cfg.use_knowledge)
    idx = {inst.instance_id: i for i, inst in enumerate(instances)}
    if instance_id not in idx:
        raise LookupError(f"unknown instance id {instance_id!r}")
    ex = examples[idx[instance_id]]
    preds, traces = predict(params, model_cfg, [ex])
    pred, trace = preds[0], traces[0]
    lines = [f"instance {instance_id}", f"predicted: {', '.join(pred.labels) or '(none)'}"]
    lines.append("sentence tokens (attention):")
    for tok, w in sorted(trace.sentence, key=lambda t: -t[1]):
        lines.append(f"  {w:.4f}  {tok}")
    if trace.context:
        lines.append("context tokens (attention):")
        for tok, w in sorted(trace.context, key=lambda t: -t[1]):
            lines.append(f"  {w:.4f}  {tok}")
    if trace.paths:
        lines.append("knowledge paths (attention):")
        for text, w in sorted(trace.paths, key=lambda t: -t[1]):
            lines.append(f"  {w:.4f}  {text}")
    else:
        lines.append("no knowledge paths: knowledge-free mode")
    sub_file = cfg.out_path("subgraphs") / f"{instance_id}.json"
    if sub_file.is_file():
        sub = json.loads(sub_file.read_text())
        lines.append(f"sub-graph: {len(sub['vertices'])} vertices, {len(sub['edges'])} edges")
    print("\n".join(lines))
    trace_obj = trace.to_json()
    trace_obj["probabilities"] = pred.probabilities
    _dump_json(cfg.out_path(f"explain_{instance_id}.json"), trace_obj)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--verbose", action="store_true")


def _flag(p, name, **kw):
    p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgneeds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        return p

    graph_flags = lambda p: (
        _flag(p, "graph", help="edge dump (.csv, .tsv, .gz) or graph.pkl cache"),
        _flag(p, "language"),
        _flag(p, "min_weight", type=float),
    )
    label_flags = lambda p: (
        _flag(p, "label_theory", help="maslow | reiss | custom (with --labels)"),
        _flag(p, "labels", nargs="+"),
        _flag(p, "drop_labels", nargs="+"),
    )

    p = stage("ingest", "parse an edge dump into a graph cache")
    graph_flags(p)

    p = stage("extract-paths", "link, induce, rank and select knowledge paths")
    graph_flags(p)
    label_flags(p)
    _flag(p, "instances")
    _flag(p, "label_overrides")
    _flag(p, "label_preset", choices=["label-to-concept", "concept-to-label"])
    _flag(p, "strategy", choices=["CC", "PR", "PPR", "CC+PPR", "Random", "None"])
    p.add_argument("--paths", dest="paths_mode", default=None, choices=["cz", "cc", "cz+cc"], help="path types to extract")
    _flag(p, "k", type=int)
    _flag(p, "alpha", type=float)
    _flag(p, "max_hops", type=int)
    _flag(p, "max_len", type=int)
    _flag(p, "max_paths_per_pair", type=int)
    _flag(p, "neighbor_cap", type=int)
    _flag(p, "enumeration_cap", type=int)
    _flag(p, "max_ngram", type=int)
    _flag(p, "workers", type=int)
    _flag(p, "paths_out", help="ranked-path output file (default OUT/paths.jsonl)")
    p.add_argument("--dump-subgraphs", dest="dump_subgraphs", action="store_const", const=True, default=None)

    for name, help_text in (("train", "train the classifier"), ("predict", "predict labels"), ("explain", "attention report for one instance")):
        p = stage(name, help_text)
        label_flags(p)
        _flag(p, "instances")
        _flag(p, "paths", help="ranked-path file")
        _flag(p, "embeddings")
        _flag(p, "embedding_dim", type=int)
        _flag(p, "model")
        if name == "train":
            for f, t in (("hidden_size", int), ("gate_size", int), ("learning_rate", float), ("batch_size", int),
                         ("dropout", float), ("l2", float), ("epochs", int), ("threshold", float)):
                _flag(p, f, type=t)
            _flag(p, "negative_weighting", choices=["unit", "as_written"])
            p.add_argument("--no-knowledge", dest="use_knowledge", action="store_const", const=False, default=None)
        if name == "predict":
            _flag(p, "predictions", help="output file (default OUT/predictions.jsonl)")
        if name == "explain":
            p.add_argument("instance_id")

    p = stage("eval", "score predictions against gold labels")
    label_flags(p)
    _flag(p, "instances")
    _flag(p, "predictions")
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    file_values = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        try:
            file_values = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise PipelineConfigError(f"{cfg_path}: invalid JSON ({exc})") from None
    skip = {"command", "config", "verbose", "instance_id", "paths_mode", "paths_out"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if getattr(args, "paths_mode", None):
        overrides["path_types"] = args.paths_mode
    if getattr(args, "paths_out", None):
        overrides["paths"] = args.paths_out
    return PipelineConfig.from_sources(file_values, overrides)


COMMANDS = {
    "ingest": cmd_ingest,
    "extract-paths": cmd_extract_paths,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        if args.command == "explain":
            return cmd_explain(cfg, args.instance_id)
        return COMMANDS[args.command](cfg)
    except (FileNotFoundError, PipelineConfigError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmptyGraphError, LookupError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
