"""Command-line pipeline: ingest -> embed -> pca -> cluster/purity -> select -> evaluate.

Every subcommand validates its full configuration before doing any real
work, honors ``--config`` (JSON defaults, overridden by explicit flags),
writes a machine-readable JSON result to stdout or ``--out``, and keeps
all randomness behind ``--seed``/``--seeds``. Exit codes: 0 success,
1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import clustering, evaluation, ngram, plotting, selection
from . import embeddings as emb_mod


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the pipeline treats flag and
    # config problems uniformly as validation failures (exit 1).
    def error(self, message):
        raise ValidationError(message)


def _positive(kind, name, value, minimum):
    if value is None:
        return
    if value < minimum:
        raise ValidationError(f"{name}: must be >= {minimum}, got {value}")


def _require_file(name, value):
    if value is None:
        raise ValidationError(f"{name}: required")
    if not Path(value).exists():
        raise ValidationError(f"{name}: no such file {value}")


def _parse_seeds(text) -> list[int]:
    try:
        return [int(s) for s in str(text).split(",") if s.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"seeds: expected comma-separated ints, got {text!r}") from exc


def _merge_config(args: argparse.Namespace, parser_dests: set[str]) -> argparse.Namespace:
    """Fill unset (None) flags from the JSON config; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise ValidationError(f"config: no such file {path}")
    with open(path, encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config: top level must be an object")
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in parser_dests:
            raise ValidationError(f"config: unknown field {key!r}")
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    return args


def _emit(result: dict, out: str | None) -> None:
    payload = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)


def _d(value, default):
    return default if value is None else value


# ---------------------------------------------------------------- subcommands

def cmd_ingest(args) -> dict:
    _require_file("--manifest", args.manifest)
    if args.out_dir is None:
        raise ValidationError("--out-dir: required")
    caps = {}
    for spec in args.cap or []:
        if "=" not in spec:
            raise ValidationError(f"--cap: expected NAME=N, got {spec!r}")
        name, _, num = spec.partition("=")
        try:
            caps[name] = int(num)
        except ValueError:
            raise ValidationError(f"--cap: size must be an int, got {num!r}")
        _positive(int, "--cap", caps[name], 0)
    seed = _d(args.seed, 0)

    corpora = corpus_mod.load_domain_corpus(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = {}
    processed = []
    for c in corpora:
        original = len(c)
        deduped, removed = corpus_mod.dedup_pairs(c)
        capped = deduped
        if c.domain in caps:
            capped = corpus_mod.cap_corpus(deduped, caps[c.domain], seed)
        has_tgt = any(p.tgt is not None for p in capped.pairs)
        corpus_mod.write_corpus_files(
            capped,
            out_dir / f"{c.domain}.src.txt",
            out_dir / f"{c.domain}.tgt.txt" if has_tgt else None,
        )
        processed.append(capped)
        stats[c.domain] = {
            "original": original,
            "removed_duplicates": removed,
            "after_dedup": len(deduped),
            "final": len(capped),
        }
    pool = corpus_mod.build_general_pool(processed)
    pool_files = corpus_mod.write_pool_files(pool, out_dir)
    return {"domains": stats, "pool": pool_files}


def cmd_audit_split(args) -> dict:
    for flag in ("train_manifest", "dev_manifest", "test_manifest"):
        _require_file("--" + flag.replace("_", "-"), getattr(args, flag))
    train = {c.domain: c for c in corpus_mod.load_domain_corpus(args.train_manifest)}
    dev = {c.domain: c for c in corpus_mod.load_domain_corpus(args.dev_manifest)}
    test = {c.domain: c for c in corpus_mod.load_domain_corpus(args.test_manifest)}
    if not (train.keys() == dev.keys() == test.keys()):
        raise ValidationError(
            f"manifests must list the same domains: train={sorted(train)}, "
            f"dev={sorted(dev)}, test={sorted(test)}"
        )
    report = {}
    for domain in sorted(train):
        overlap = corpus_mod.check_split_overlap(train[domain], dev[domain], test[domain])
        report[domain] = overlap.to_dict()
    return report


def cmd_embed(args) -> dict:
    _require_file("--texts", args.texts)
    if not args.provider_url:
        raise ValidationError("--provider-url: required")
    if not args.model:
        raise ValidationError("--model: required")
    if args.emb_out is None:
        raise ValidationError("--emb-out: required")
    batch_size = _d(args.batch_size, 256)
    _positive(int, "--batch-size", batch_size, 1)

    records = _load_texts(args.texts)
    matrix = emb_mod.fetch_embeddings(
        args.provider_url, args.model, records, batch_size, layer=args.layer
    )
    emb_mod.write_embeddings(matrix, args.emb_out)
    return {"count": matrix.count, "dim": matrix.dim, "path": str(args.emb_out)}


def cmd_pca(args) -> dict:
    _require_file("--emb-in", args.emb_in)
    if args.emb_out is None:
        raise ValidationError("--emb-out: required")
    n_components = _d(args.n_components, 50)
    _positive(int, "--n-components", n_components, 1)

    matrix = emb_mod.read_embeddings(args.emb_in)
    model = emb_mod.fit_pca(matrix, n_components)
    projected = emb_mod.apply_pca(model, matrix)
    emb_mod.write_embeddings(projected, args.emb_out)
    return {"count": projected.count, "dim": projected.dim, "path": str(args.emb_out)}


def cmd_cluster(args) -> dict:
    _require_file("--emb-in", args.emb_in)
    k = args.k
    if k is None:
        raise ValidationError("--k: required")
    _positive(int, "--k", k, 1)
    seed = _d(args.seed, 0)
    max_iter = _d(args.max_iter, 150)
    tol = _d(args.tol, 1e-3)
    _positive(int, "--max-iter", max_iter, 1)

    matrix = emb_mod.read_embeddings(args.emb_in)
    model = clustering.fit_gmm(matrix, k, seed, max_iter=max_iter, tol=tol)
    assignment = clustering.assign(model, matrix)
    result = {
        "k": k,
        "seed": seed,
        "iterations": len(model.log_likelihood_trace),
        "final_log_likelihood": model.log_likelihood_trace[-1],
    }
    if args.model_out:
        result["model_files"] = clustering.save_gmm(model, args.model_out)
    if args.assign_out:
        with open(args.assign_out, "w", encoding="utf-8") as f:
            f.write("id\tcluster\n")
            for sid, label in zip(matrix.ids, assignment.hard_labels):
                f.write(f"{sid}\t{int(label)}\n")
        result["assignments"] = str(args.assign_out)
    return result


def cmd_purity(args) -> dict:
    _require_file("--emb-in", args.emb_in)
    _require_file("--labels", args.labels)
    if args.k is None:
        raise ValidationError("--k: required")
    _positive(int, "--k", args.k, 1)
    seeds = _parse_seeds(_d(args.seeds, "0"))
    if not seeds:
        raise ValidationError("--seeds: need at least one seed")
    max_iter = _d(args.max_iter, 150)
    tol = _d(args.tol, 1e-3)

    matrix = emb_mod.read_embeddings(args.emb_in)
    labels = corpus_mod.read_labels(args.labels)
    if len(labels) != matrix.count:
        raise ValidationError(
            f"--labels: {len(labels)} labels for {matrix.count} embedding rows"
        )
    if args.pca_components is not None:
        pca = emb_mod.fit_pca(matrix, args.pca_components)
        matrix = emb_mod.apply_pca(pca, matrix)

    sweep = clustering.run_seed_sweep(matrix, args.k, seeds, labels,
                                      max_iter=max_iter, tol=tol)
    result = dict(sweep)
    result.update({"k": args.k, "seeds": seeds})
    if args.report_out or args.confusion_csv:
        model = clustering.fit_gmm(matrix, args.k, seeds[0], max_iter=max_iter, tol=tol)
        report = clustering.purity(clustering.assign(model, matrix), labels)
        if args.report_out:
            Path(args.report_out).write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8")
            result["report"] = str(args.report_out)
        if args.confusion_csv:
            clustering.write_confusion_csv(report, args.confusion_csv)
            result["confusion_csv"] = str(args.confusion_csv)
    return result


def _load_texts(path) -> list[corpus_mod.SentenceRecord]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    records = []
    for i, text in enumerate(lines):
        try:
            records.append(corpus_mod.SentenceRecord(id=i, text=text))
        except ValueError as exc:
            raise ValueError(f"{path}, line {i + 1}: {exc}") from exc
    return records


def cmd_select(args) -> dict:
    method = args.method
    if method not in {"cosine", "classifier", "moore-lewis", "random"}:
        raise ValidationError(f"--method: unknown method {method!r}")
    top_k = args.top_k
    if top_k is not None:
        _positive(int, "--top-k", top_k, 0)
    seed = _d(args.seed, 0)
    if args.ranking_out is None and args.selection_out is None:
        raise ValidationError("need --ranking-out and/or --selection-out")

    if method in ("cosine", "classifier"):
        _require_file("--pool-emb", args.pool_emb)
        _require_file("--in-emb", args.in_emb)
    if method == "moore-lewis":
        _require_file("--pool-texts", args.pool_texts)
        _require_file("--in-texts", args.in_texts)
    if method == "random":
        if args.pool_emb:
            _require_file("--pool-emb", args.pool_emb)
        elif args.pool_texts:
            _require_file("--pool-texts", args.pool_texts)
        else:
            raise ValidationError("random method needs --pool-emb or --pool-texts for ids")

    if method == "cosine":
        pool = emb_mod.read_embeddings(args.pool_emb)
        in_domain = emb_mod.read_embeddings(args.in_emb)
        ranking = selection.rank_cosine(in_domain, pool)
    elif method == "classifier":
        pool = emb_mod.read_embeddings(args.pool_emb)
        in_domain = emb_mod.read_embeddings(args.in_emb)
        pre = selection.rank_cosine(in_domain, pool)
        n_neg = int(round(_d(args.neg_ratio, 1.0) * in_domain.count))
        neg_ids = selection.sample_negatives_preranked(pre, n_neg, seed)
        negatives = pool.take_ids(sorted(neg_ids))
        model = selection.train_pu_classifier(
            in_domain, negatives, epochs=_d(args.epochs, 20),
            lr=_d(args.lr, 0.1), seed=seed)
        if args.positive_only:
            ids = selection.select_positive(model, pool)
            ranking = selection.rank_classifier(model, pool)
            if args.ranking_out:
                selection.write_ranking_tsv(ranking, args.ranking_out)
            if args.selection_out:
                selection.write_selection(ids, args.selection_out)
            return {"method": method, "positive_only": True,
                    "selected": len(ids), "pool": pool.count}
        ranking = selection.rank_classifier(model, pool)
    elif method == "moore-lewis":
        pool_records = _load_texts(args.pool_texts)
        in_records = _load_texts(args.in_texts)
        order = _d(args.order, 4)
        min_count = _d(args.min_count, 2)
        discount = _d(args.discount, 0.75)
        lm_in = ngram.train_lm([r.text for r in in_records], order,
                               min_count=min_count, discount=discount)
        gen_records = pool_records
        cap = _d(args.lm_sample_cap, 200_000)
        if len(gen_records) > cap:
            rng = random.Random(seed)
            gen_records = [pool_records[i]
                           for i in sorted(rng.sample(range(len(pool_records)), cap))]
        lm_gen = ngram.train_lm([r.text for r in gen_records], order,
                                min_count=min_count, discount=discount)
        ranking = selection.rank_moore_lewis(lm_in, lm_gen, pool_records)
    else:  # random
        if args.pool_emb:
            ids = emb_mod.read_embeddings(args.pool_emb).ids
        else:
            ids = [r.id for r in _load_texts(args.pool_texts)]
        ranking = selection.rank_random(ids, seed)

    result = {"method": method, "pool": len(ranking)}
    if args.ranking_out:
        selection.write_ranking_tsv(ranking, args.ranking_out)
        result["ranking"] = str(args.ranking_out)
    if args.selection_out:
        if top_k is None:
            raise ValidationError("--top-k: required with --selection-out")
        ids = selection.select_top_k(ranking, top_k)
        selection.write_selection(ids, args.selection_out)
        result["selection"] = str(args.selection_out)
        result["selected"] = len(ids)
    return result


def cmd_eval_selection(args) -> dict:
    _require_file("--selection", args.selection)
    _require_file("--pool-labels", args.pool_labels)
    if not args.target_domain:
        raise ValidationError("--target-domain: required")

    selected = selection.read_selection(args.selection)
    labels = corpus_mod.read_labels(args.pool_labels)
    pool_labels = {i: d for i, d in enumerate(labels)}
    reports = {}
    for domain in args.target_domain.split(","):
        domain = domain.strip()
        report = evaluation.selection_pr(selected, pool_labels, domain)
        reports[domain] = report.to_dict()
    return reports


def cmd_correlate(args) -> dict:
    _require_file("--emb-in", args.emb_in)
    _require_file("--labels", args.labels)
    _require_file("--bleu-fixture", args.bleu_fixture)

    matrix = emb_mod.read_embeddings(args.emb_in)
    labels = corpus_mod.read_labels(args.labels)
    if len(labels) != matrix.count:
        raise ValidationError(
            f"--labels: {len(labels)} labels for {matrix.count} embedding rows"
        )
    bleu = evaluation.load_bleu_fixture(args.bleu_fixture)

    by_domain: dict[str, list[int]] = {}
    for sid, domain in zip(matrix.ids, labels):
        by_domain.setdefault(domain, []).append(sid)
    centroids = {d: clustering.centroid(matrix, ids) for d, ids in by_domain.items()}
    report = evaluation.correlate_centroids_bleu(centroids, bleu)

    result = report.to_dict()
    if args.csv_out:
        evaluation.emit_plot_data("correlation", {"report": report}, args.csv_out)
        result["csv"] = str(args.csv_out)
    if args.png_out:
        plotting.plot_correlation(report, args.png_out)
        result["png"] = str(args.png_out)
    return result


def cmd_emit_plots(args) -> dict:
    kind = args.kind
    if kind not in {"scatter2d", "confusion", "correlation"}:
        raise ValidationError(f"--kind: unknown kind {kind!r}")
    if args.csv_out is None:
        raise ValidationError("--csv-out: required")
    result = {"kind": kind, "csv": str(args.csv_out)}

    if kind == "scatter2d":
        _require_file("--emb-in", args.emb_in)
        _require_file("--labels", args.labels)
        matrix = emb_mod.read_embeddings(args.emb_in)
        labels = corpus_mod.read_labels(args.labels)
        if len(labels) != matrix.count:
            raise ValidationError(
                f"--labels: {len(labels)} labels for {matrix.count} rows")
        clusters = None
        if args.clusters:
            _require_file("--clusters", args.clusters)
            with open(args.clusters, encoding="utf-8") as f:
                rows = f.read().splitlines()[1:]  # skip header
            clusters = [int(r.split("\t")[1]) for r in rows if r.strip()]
            if len(clusters) != matrix.count:
                raise ValidationError(
                    f"--clusters: {len(clusters)} rows for {matrix.count} embeddings")
        evaluation.emit_plot_data(
            "scatter2d",
            {"matrix": matrix, "domains": labels, "clusters": clusters},
            args.csv_out)
        if args.png_out:
            plotting.plot_scatter2d(matrix, labels, args.png_out, clusters=clusters)
            result["png"] = str(args.png_out)
    elif kind == "confusion":
        _require_file("--report", args.report)
        with open(args.report, encoding="utf-8") as f:
            data = json.load(f)
        report = clustering.PurityReport(
            purity=data["purity"],
            cluster_to_domain=data["cluster_to_domain"],
            domains=data["domains"],
            confusion=np.asarray(data["confusion"], dtype=int),
        )
        evaluation.emit_plot_data("confusion", {"report": report}, args.csv_out)
        if args.png_out:
            plotting.plot_confusion(report, args.png_out)
            result["png"] = str(args.png_out)
    else:
        _require_file("--report", args.report)
        with open(args.report, encoding="utf-8") as f:
            data = json.load(f)
        report = evaluation.CorrelationReport(
            pairs=[tuple(p) for p in data["pairs"]],
            pearson_r=data["pearson_r"],
        )
        evaluation.emit_plot_data("correlation", {"report": report}, args.csv_out)
        if args.png_out:
            plotting.plot_correlation(report, args.png_out)
            result["png"] = str(args.png_out)
    return result


# ------------------------------------------------------------------- wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="domainkit",
                     description="Domain clustering and data selection pipeline")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.add_argument("--out", help="write the JSON result here instead of stdout")

    p = sub.add_parser("ingest", help="load, dedup, cap, and pool corpora")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--out-dir")
    p.add_argument("--cap", action="append", metavar="NAME=N")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("audit-split", help="report dev/test overlap with train")
    common(p)
    p.add_argument("--train-manifest")
    p.add_argument("--dev-manifest")
    p.add_argument("--test-manifest")
    p.set_defaults(func=cmd_audit_split)

    p = sub.add_parser("embed", help="fetch embeddings from a provider")
    common(p)
    p.add_argument("--texts")
    p.add_argument("--provider-url")
    p.add_argument("--model")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--layer", type=int)
    p.add_argument("--emb-out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("pca", help="fit and apply PCA to an embedding file")
    common(p)
    p.add_argument("--emb-in")
    p.add_argument("--n-components", type=int)
    p.add_argument("--emb-out")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("cluster", help="fit a GMM and assign clusters")
    common(p)
    p.add_argument("--emb-in")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--model-out")
    p.add_argument("--assign-out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("purity", help="purity sweep over seeds")
    common(p)
    p.add_argument("--emb-in")
    p.add_argument("--labels")
    p.add_argument("--k", type=int)
    p.add_argument("--seeds")
    p.add_argument("--pca-components", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--report-out")
    p.add_argument("--confusion-csv")
    p.set_defaults(func=cmd_purity)

    p = sub.add_parser("select", help="rank the pool and select sentences")
    common(p)
    p.add_argument("--method")
    p.add_argument("--pool-emb")
    p.add_argument("--in-emb")
    p.add_argument("--pool-texts")
    p.add_argument("--in-texts")
    p.add_argument("--top-k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--discount", type=float)
    p.add_argument("--lm-sample-cap", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--neg-ratio", type=float)
    p.add_argument("--positive-only", action="store_true", default=None)
    p.add_argument("--ranking-out")
    p.add_argument("--selection-out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval-selection", help="precision/recall vs the oracle")
    common(p)
    p.add_argument("--selection")
    p.add_argument("--pool-labels")
    p.add_argument("--target-domain")
    p.set_defaults(func=cmd_eval_selection)

    p = sub.add_parser("correlate", help="centroid similarity vs BLEU fixture")
    common(p)
    p.add_argument("--emb-in")
    p.add_argument("--labels")
    p.add_argument("--bleu-fixture")
    p.add_argument("--csv-out")
    p.add_argument("--png-out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("emit-plots", help="write plot CSVs and figures")
    common(p)
    p.add_argument("--kind")
    p.add_argument("--emb-in")
    p.add_argument("--labels")
    p.add_argument("--clusters")
    p.add_argument("--report")
    p.add_argument("--csv-out")
    p.add_argument("--png-out")
    p.set_defaults(func=cmd_emit_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        dests = {a for a in vars(args) if a not in ("func", "command")}
        args = _merge_config(args, dests)
        result = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure after validation
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _emit(result, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
