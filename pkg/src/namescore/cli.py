"""Command-line surface for the name-scoring pipeline.

Subcommands: synth, ingest, stats, train, score, eval, baseline-lookup,
cluster. Every flag can also be supplied through a JSON config file
(--config); explicit flags win. The fully resolved configuration is echoed
into every output artifact as a provenance header, and all randomness flows
from --seed, so identical invocations produce byte-identical outputs.

Output conventions: JSON documents carry a top-level "provenance" key;
JSONL outputs start with a {"_provenance": ...} line; CSVs start with a
"# provenance: ..." comment. Corpus JSONL files stay pure (one record per
line) and get a sidecar <out>.meta.json instead.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, charcnn, cluster, evaluate, fusion, linear
from .corpus import (
    Corpus,
    FilterPolicy,
    Label,
    SplitTag,
    SynthConfig,
    apply_filter_policy,
    compute_stats,
    drop_unlabeled,
    generate_synthetic,
    ingest_csv,
    ingest_jsonl,
)
from .features import NgramIndex, build_ngram_index, build_vocabulary, vectorize_ngrams

MODEL_CHOICES = ("linear-l1", "linear-l2", "charcnn", "mlp-ember", "mlp-fused")


class CliError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config resolution and provenance
# --------------------------------------------------------------------------


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge precedence: explicit flag > config file entry > default."""
    config_path = getattr(args, "config", None)
    file_cfg = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _provenance(command: str, resolved: dict) -> dict:
    return {"tool": "namescore", "version": __version__, "command": command, "config": resolved}


def _provenance_line(command: str, resolved: dict) -> str:
    return json.dumps({"_provenance": _provenance(command, resolved)}, sort_keys=True, ensure_ascii=False)


@contextmanager
def _atomic_open(path: str | Path):
    """Write to <path>.tmp and rename on success; a failed command never
    leaves a partial file at the final path."""
    tmp = str(path) + ".tmp"
    fh = open(tmp, "w", encoding="utf-8", newline="")
    try:
        yield fh
    except BaseException:
        fh.close()
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    fh.close()
    os.replace(tmp, path)


def _write_json_doc(path: str, doc: dict) -> None:
    with _atomic_open(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _thread_count() -> int:
    raw = os.environ.get("NAMESCORE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"NAMESCORE_THREADS must be an integer, got {raw!r}") from None


def _read_corpus(path: str, fmt: str):
    if fmt == "jsonl":
        return ingest_jsonl(path)
    if fmt == "csv":
        return ingest_csv(path)
    raise CliError(f"unknown corpus format {fmt!r}")


# --------------------------------------------------------------------------
# synth / ingest / stats
# --------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "out": None,
    "n_benign": 1000,
    "n_malicious": 1000,
    "families": "",
    "seed": 0,
}


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, SYNTH_DEFAULTS)
    if not cfg["out"]:
        raise CliError("--out is required")
    families = tuple(f for f in (cfg["families"] or "").split(",") if f)
    synth_cfg = SynthConfig(
        n_benign=int(cfg["n_benign"]),
        n_malicious=int(cfg["n_malicious"]),
        pattern_families=families or SynthConfig().pattern_families,
        seed=int(cfg["seed"]),
    )
    corpus = generate_synthetic(synth_cfg)
    with _atomic_open(cfg["out"]) as fh:
        for rec in corpus:
            obj = {"sha256": rec.sha256, "name": rec.name, "label": {"benign": 0, "malicious": 1}[rec.label.value]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    _write_json_doc(
        cfg["out"] + ".meta.json",
        {"provenance": _provenance("synth", cfg), "n_records": len(corpus)},
    )
    print(f"wrote {len(corpus)} records to {cfg['out']}")
    return 0


INGEST_DEFAULTS = {
    "input": None,
    "format": "jsonl",
    "filter_banned": "vir,mal,hack",
    "drop_unlabeled": False,
    "out": None,
}


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _resolve(args, INGEST_DEFAULTS)
    if not cfg["input"] or not cfg["out"]:
        raise CliError("--input and --out are required")
    result = _read_corpus(cfg["input"], cfg["format"])
    corpus = result.corpus
    accounting = {
        "lines_read": result.n_lines,
        "rejected_empty_name": result.n_rejected_empty_name,
    }
    banned = tuple(s for s in (cfg["filter_banned"] or "").split(",") if s)
    if banned:
        policy = FilterPolicy(banned_substrings=banned)
        before = len(corpus)
        corpus = apply_filter_policy(corpus, policy)
        accounting["filtered_banned_substring"] = before - len(corpus)
        for sub in banned:
            sub_policy = FilterPolicy(banned_substrings=(sub,))
            accounting[f"matched_{sub}"] = sum(
                1 for r in result.corpus if sub_policy.matches(r.name)
            )
    if cfg["drop_unlabeled"]:
        before = len(corpus)
        corpus = drop_unlabeled(corpus)
        accounting["dropped_unlabeled"] = before - len(corpus)
    accounting["records_out"] = len(corpus)
    with _atomic_open(cfg["out"]) as fh:
        for rec in corpus:
            obj = {
                "sha256": rec.sha256,
                "name": rec.name,
                "label": {"benign": 0, "malicious": 1, "unlabeled": -1}[rec.label.value],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    _write_json_doc(
        cfg["out"] + ".meta.json",
        {"provenance": _provenance("ingest", cfg), "accounting": accounting},
    )
    for key, val in accounting.items():
        print(f"{key}: {val}")
    return 0


STATS_DEFAULTS = {"input": None, "format": "jsonl", "out": None}


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _resolve(args, STATS_DEFAULTS)
    if not cfg["input"]:
        raise CliError("--input is required")
    corpus = _read_corpus(cfg["input"], cfg["format"]).corpus
    stats = compute_stats(corpus)
    doc = {"provenance": _provenance("stats", cfg), **stats.to_json_dict()}
    if cfg["out"]:
        _write_json_doc(cfg["out"], doc)
        print(f"wrote stats to {cfg['out']}")
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True, ensure_ascii=False)
        print()
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "model": None,
    "train": None,
    "format": "jsonl",
    "out": None,
    "seed": 0,
    # linear
    "C": 1.0,
    "tol": 1e-8,
    "max_iter": 5000,
    "ngram": 3,
    # charcnn
    "v_size": 300,
    "window": 100,
    "embed_dim": 300,
    "channels": 256,
    "fc_width": 1024,
    "dropout_p": 0.5,
    "epochs": 10,
    "lr": 1e-3,
    "batch_size": 64,
    # mlp
    "features": None,
    "charcnn_model": None,
}


def _load_labeled_corpus(path: str, fmt: str) -> Corpus:
    corpus = _read_corpus(path, fmt).corpus
    before = len(corpus)
    corpus = drop_unlabeled(corpus)
    if len(corpus) != before:
        print(f"dropped {before - len(corpus)} unlabeled records")
    if len(corpus) == 0:
        raise CliError("no labeled records to train on")
    return corpus.retag(SplitTag.TRAIN)


def _join_dense_features(
    corpus: Corpus, table: list[fusion.DenseFeatureVec]
) -> tuple[np.ndarray, np.ndarray]:
    by_sha = {f.sha256: f for f in table}
    rows = []
    y = []
    for rec in corpus:
        feat = by_sha.get(rec.sha256)
        if feat is None:
            raise CliError(f"no dense features for sha256 {rec.sha256[:12]}...")
        rows.append(feat.values)
        y.append(charcnn.CLASS_INDEX[rec.label.value])
    return np.stack(rows), np.asarray(y, dtype=np.int64)


def _fused_matrix(
    corpus: Corpus, table: list[fusion.DenseFeatureVec], cnn: charcnn.CnnModel, vocab
) -> np.ndarray:
    by_sha = {f.sha256: f for f in table}
    emb = charcnn.embed_batch(cnn, corpus.names(), vocab)
    rows = []
    for i, rec in enumerate(corpus):
        feat = by_sha.get(rec.sha256)
        if feat is None:
            raise CliError(f"no dense features for sha256 {rec.sha256[:12]}...")
        fused = fusion.concat_features(
            feat, fusion.DenseFeatureVec(rec.sha256, emb[i].astype(np.float64))
        )
        rows.append(fused.values)
    return np.stack(rows)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args, TRAIN_DEFAULTS)
    model_name = cfg["model"]
    if model_name not in MODEL_CHOICES:
        raise CliError(f"--model must be one of {MODEL_CHOICES}")
    if not cfg["train"] or not cfg["out"]:
        raise CliError("--train and --out are required")
    corpus = _load_labeled_corpus(cfg["train"], cfg["format"])
    out = cfg["out"]
    log_doc: dict = {"provenance": _provenance("train", cfg), "model": model_name}

    if model_name.startswith("linear-"):
        index = build_ngram_index(corpus, n=int(cfg["ngram"]))
        rows = [vectorize_ngrams(name, index) for name in corpus.names()]
        train_cfg = linear.TrainConfig(
            reg=model_name.removeprefix("linear-"),
            C=float(cfg["C"]),
            tol=float(cfg["tol"]),
            max_iter=int(cfg["max_iter"]),
            seed=int(cfg["seed"]),
        )
        model = linear.train_logreg(rows, corpus.labels(), train_cfg, dim=index.dim)
        index_path = out + ".index.json"
        with _atomic_open(index_path) as fh:
            json.dump(index.to_json_dict(), fh, ensure_ascii=False)
            fh.write("\n")
        linear.save_linear_model(model, index, out)
        log_doc.update(
            {
                "C": train_cfg.C,
                "reg": train_cfg.reg,
                "converged": model.converged,
                "n_features": index.dim,
                "objective_log": list(model.objective_log),
                "index_file": index_path,
            }
        )
    elif model_name == "charcnn":
        vocab = build_vocabulary(corpus, v_size=int(cfg["v_size"]))
        cnn_cfg = charcnn.CnnConfig(
            vocab_size=int(cfg["v_size"]),
            embed_dim=int(cfg["embed_dim"]),
            window=int(cfg["window"]),
            conv_channels=int(cfg["channels"]),
            fc_widths=(int(cfg["fc_width"]), int(cfg["fc_width"]), 2),
            dropout_p=float(cfg["dropout_p"]),
        )
        model = charcnn.build_model(cnn_cfg, seed=int(cfg["seed"]))
        losses = charcnn.train(
            model,
            corpus,
            vocab,
            epochs=int(cfg["epochs"]),
            lr=float(cfg["lr"]),
            batch_size=int(cfg["batch_size"]),
            seed=int(cfg["seed"]),
        )
        charcnn.save_cnn_model(model, vocab, out)
        log_doc.update(
            {"epochs": int(cfg["epochs"]), "lr": float(cfg["lr"]), "epoch_loss": losses}
        )
    else:  # mlp-ember / mlp-fused
        if not cfg["features"]:
            raise CliError(f"--features is required for {model_name}")
        table = fusion.load_dense_csv(cfg["features"])
        if model_name == "mlp-fused":
            if not cfg["charcnn_model"]:
                raise CliError("--charcnn-model is required for mlp-fused")
            cnn, vocab = charcnn.load_cnn_model(cfg["charcnn_model"])
            X = _fused_matrix(corpus, table, cnn, vocab)
            y = np.asarray(
                [charcnn.CLASS_INDEX[r.label.value] for r in corpus], dtype=np.int64
            )
        else:
            X, y = _join_dense_features(corpus, table)
        mlp_cfg = fusion.MlpTrainConfig(
            epochs=int(cfg["epochs"]),
            lr=float(cfg["lr"]),
            batch_size=int(cfg["batch_size"]),
            seed=int(cfg["seed"]),
        )
        model, losses = fusion.train_mlp(X, y, mlp_cfg)
        feature_kind = "fused" if model_name == "mlp-fused" else "ember"
        fusion.save_mlp_model(model, out, feature_kind)
        log_doc.update(
            {
                "epochs": mlp_cfg.epochs,
                "lr": mlp_cfg.lr,
                "input_dim": model.input_dim,
                "epoch_loss": losses,
            }
        )
    _write_json_doc(out + ".log.json", log_doc)
    print(f"trained {model_name} -> {out}")
    return 0


# --------------------------------------------------------------------------
# score
# --------------------------------------------------------------------------

SCORE_DEFAULTS = {
    "model_file": None,
    "input": None,
    "format": "jsonl",
    "out": None,
    "index": None,
    "features": None,
    "charcnn_model": None,
    "ranked": False,
}


def _model_kind(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh).get("kind", "")


def _chunked(seq, size):
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def _map_chunks(fn, chunks):
    threads = _thread_count()
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _resolve(args, SCORE_DEFAULTS)
    if not cfg["model_file"] or not cfg["input"] or not cfg["out"]:
        raise CliError("--model-file, --input, and --out are required")
    records = list(_read_corpus(cfg["input"], cfg["format"]).corpus)
    kind = _model_kind(cfg["model_file"])

    if kind == "linear":
        model, index_ref = linear.load_linear_model(cfg["model_file"])
        if not cfg["index"]:
            raise CliError("--index is required for linear models")
        with open(cfg["index"], "r", encoding="utf-8") as fh:
            index = NgramIndex.from_json_dict(json.load(fh))
        linear.check_index_ref(index_ref, index)

        def score_chunk(chunk):
            rows = [vectorize_ngrams(r.name, index) for r in chunk]
            return linear.predict_proba_many(model, linear.rows_to_csr(rows, index.dim))

    elif kind == "charcnn":
        cnn, vocab = charcnn.load_cnn_model(cfg["model_file"])

        def score_chunk(chunk):
            return charcnn.predict_proba_batch(cnn, [r.name for r in chunk], vocab)

    elif kind == "mlp":
        mlp, feature_kind = fusion.load_mlp_model(cfg["model_file"])
        if not cfg["features"]:
            raise CliError("--features is required for mlp models")
        by_sha = {f.sha256: f for f in fusion.load_dense_csv(cfg["features"])}
        cnn = vocab = None
        if feature_kind == "fused":
            if not cfg["charcnn_model"]:
                raise CliError("--charcnn-model is required to score with a fused model")
            cnn, vocab = charcnn.load_cnn_model(cfg["charcnn_model"])

        def score_chunk(chunk):
            rows = []
            for r in chunk:
                feat = by_sha.get(r.sha256)
                if feat is None:
                    raise CliError(f"no dense features for sha256 {r.sha256[:12]}...")
                rows.append(feat.values)
            X = np.stack(rows)
            if feature_kind == "fused":
                emb = charcnn.embed_batch(cnn, [r.name for r in chunk], vocab)
                X = np.concatenate([X, emb.astype(np.float64)], axis=1)
            return fusion.predict_proba_many(mlp, X)

    else:
        raise CliError(f"unrecognized model kind {kind!r} in {cfg['model_file']}")

    chunks = _chunked(records, 512)
    scores = [p for chunk_scores in _map_chunks(score_chunk, chunks) for p in chunk_scores]
    scored = list(zip(records, scores))
    if cfg["ranked"]:
        scored.sort(key=lambda pair: -pair[1])  # stable: ties keep input order
    with _atomic_open(cfg["out"]) as fh:
        fh.write(_provenance_line("score", cfg) + "\n")
        for rec, p in scored:
            fh.write(
                json.dumps(
                    {"sha256": rec.sha256, "name": rec.name, "p_malicious": float(p)},
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"scored {len(scored)} records -> {cfg['out']}")
    return 0


# --------------------------------------------------------------------------
# eval / baseline-lookup / cluster
# --------------------------------------------------------------------------

EVAL_DEFAULTS = {
    "scores": None,
    "labels": None,
    "format": "jsonl",
    "threshold": 0.5,
    "out": None,
    "roc_out": None,
}


def read_scores_jsonl(path: str) -> list[dict]:
    """Read a scores file, skipping the provenance line if present."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_provenance" in obj:
                continue
            out.append(obj)
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args, EVAL_DEFAULTS)
    if not cfg["scores"] or not cfg["labels"] or not cfg["out"]:
        raise CliError("--scores, --labels, and --out are required")
    rows = read_scores_jsonl(cfg["scores"])
    label_corpus = _read_corpus(cfg["labels"], cfg["format"]).corpus
    by_sha = {r.sha256: r.label for r in label_corpus}
    scores = []
    labels = []
    n_unlabeled = 0
    for row in rows:
        label = by_sha.get(row["sha256"])
        if label is None:
            raise CliError(f"no label for scored sha256 {row['sha256'][:12]}...")
        if label is Label.UNLABELED:
            n_unlabeled += 1
            continue
        scores.append(float(row["p_malicious"]))
        labels.append(label)
    if n_unlabeled:
        print(f"skipped {n_unlabeled} unlabeled records", file=sys.stderr)
    report = evaluate.classification_report(scores, labels, threshold=float(cfg["threshold"]))
    curve = evaluate.roc_auc(scores, labels)
    doc = {
        "provenance": _provenance("eval", cfg),
        "report": report.to_json_dict(),
        "auc": curve.auc,
        "n_scored": len(scores),
    }
    _write_json_doc(cfg["out"], doc)
    if cfg["roc_out"]:
        with _atomic_open(cfg["roc_out"]) as fh:
            fh.write("# provenance: " + json.dumps(_provenance("eval", cfg), sort_keys=True) + "\n")
            evaluate.roc_to_csv(curve, fh)
    print(f"auc: {curve.auc:.6f}  (report -> {cfg['out']})")
    return 0


LOOKUP_DEFAULTS = {"train": None, "test": None, "format": "jsonl", "out": None}


def cmd_baseline_lookup(args: argparse.Namespace) -> int:
    cfg = _resolve(args, LOOKUP_DEFAULTS)
    if not cfg["train"] or not cfg["test"] or not cfg["out"]:
        raise CliError("--train, --test, and --out are required")
    train_corpus = drop_unlabeled(_read_corpus(cfg["train"], cfg["format"]).corpus)
    test_corpus = drop_unlabeled(_read_corpus(cfg["test"], cfg["format"]).corpus)
    model = evaluate.lookup_train(train_corpus)
    report = evaluate.lookup_report(model, test_corpus)
    doc = {
        "provenance": _provenance("baseline-lookup", cfg),
        "report": report.to_json_dict(),
        "n_train_names": len(model.name_to_label),
        "n_collisions": model.n_collisions,
        "collision_policy": model.collision_policy,
    }
    _write_json_doc(cfg["out"], doc)
    print(f"lookup baseline report -> {cfg['out']}")
    return 0


CLUSTER_DEFAULTS = {
    "model_file": None,
    "input": None,
    "format": "jsonl",
    "eps": 0.5,
    "min_pts": 5,
    "seed": 0,
    "out_prefix": None,
}


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = _resolve(args, CLUSTER_DEFAULTS)
    if not cfg["model_file"] or not cfg["input"] or not cfg["out_prefix"]:
        raise CliError("--model-file, --input, and --out-prefix are required")
    corpus = drop_unlabeled(_read_corpus(cfg["input"], cfg["format"]).corpus)
    if len(corpus) == 0:
        raise CliError("no labeled records to cluster")
    cnn, vocab = charcnn.load_cnn_model(cfg["model_file"])
    matrix = charcnn.embed_batch(cnn, corpus.names(), vocab)
    emb = cluster.EmbeddingSet(
        matrix=matrix,
        sha256s=tuple(r.sha256 for r in corpus),
        names=tuple(corpus.names()),
        labels=tuple(corpus.labels()),
    )
    assignment = cluster.cluster_density(emb, eps=float(cfg["eps"]), min_pts=int(cfg["min_pts"]))
    stats = cluster.cluster_stats(assignment, emb)
    coords = cluster.project_2d(emb, seed=int(cfg["seed"]))

    header = "# provenance: " + json.dumps(_provenance("cluster", cfg), sort_keys=True) + "\n"
    prefix = cfg["out_prefix"]
    with _atomic_open(prefix + ".assignments.csv") as fh:
        fh.write(header)
        cluster.write_assignments_csv(emb, assignment, fh)
    with _atomic_open(prefix + ".stats.csv") as fh:
        fh.write(header)
        cluster.write_stats_csv(stats, fh)
    with _atomic_open(prefix + ".projection.csv") as fh:
        fh.write(header)
        cluster.write_projection_csv(emb, coords, fh)

    summary: dict = {
        "provenance": _provenance("cluster", cfg),
        "n_clusters": assignment.n_clusters,
        "noise_fraction": assignment.noise_fraction,
    }
    if assignment.n_clusters > 0 and bool(np.any(assignment.labels != cluster.NOISE)):
        hom = cluster.homogeneity(assignment, corpus.labels(), exclude_noise=True)
        summary["homogeneity"] = {
            "h": hom.h,
            "class_entropy": hom.class_entropy,
            "conditional_entropy": hom.conditional_entropy,
            "noise_excluded": hom.noise_excluded,
        }
    _write_json_doc(prefix + ".summary.json", summary)
    print(
        f"clusters: {assignment.n_clusters}, noise fraction: {assignment.noise_fraction:.3f}"
        f" -> {prefix}.*"
    )
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="namescore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--n-benign", dest="n_benign", type=int)
    p.add_argument("--n-malicious", dest="n_malicious", type=int)
    p.add_argument("--families", help="comma-separated pattern family names")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="read, filter, and normalize a corpus")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--filter-banned", dest="filter_banned",
                   help='comma-separated banned substrings; "" disables filtering')
    p.add_argument("--drop-unlabeled", dest="drop_unlabeled",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="corpus length/character statistics as JSON")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model variant")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_CHOICES)
    p.add_argument("--train")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--ngram", type=int)
    p.add_argument("--v-size", dest="v_size", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--fc-width", dest="fc_width", type=int)
    p.add_argument("--dropout-p", dest="dropout_p", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--features", help="dense feature CSV (mlp models)")
    p.add_argument("--charcnn-model", dest="charcnn_model", help="trained charcnn file (mlp-fused)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a corpus with a trained model")
    _add_common(p)
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--input")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--out")
    p.add_argument("--index", help="ngram index JSON (linear models)")
    p.add_argument("--features", help="dense feature CSV (mlp models)")
    p.add_argument("--charcnn-model", dest="charcnn_model")
    p.add_argument("--ranked", action=argparse.BooleanOptionalAction,
                   help="sort output by descending score")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="classification report + ROC/AUC from scores")
    _add_common(p)
    p.add_argument("--scores")
    p.add_argument("--labels")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.add_argument("--roc-out", dest="roc_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline-lookup", help="exact-name memorization baseline")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline_lookup)

    p = sub.add_parser("cluster", help="cluster CNN name embeddings")
    _add_common(p)
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--input")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", dest="min_pts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-prefix", dest="out_prefix")
    p.set_defaults(func=cmd_cluster)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
