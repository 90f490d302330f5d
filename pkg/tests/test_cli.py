import json
from pathlib import Path

import numpy as np
import pytest

from domainkit.cli import main
from domainkit.corpus import SentenceRecord
from domainkit.embeddings import EmbeddingMatrix, read_embeddings, write_embeddings

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_lines(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def toy_manifest(tmp_path, name="manifest.json",
                 domains=(("med", ["dose one", "dose two", "dose one"]),
                          ("film", ["scene one", "scene two"]))):
    entries = []
    for domain, lines in domains:
        src = tmp_path / f"{domain}.src"
        tgt = tmp_path / f"{domain}.tgt"
        write_lines(src, lines)
        write_lines(tgt, [f"t {l}" for l in lines])
        entries.append({"name": domain, "src": src.name, "tgt": tgt.name})
    manifest = tmp_path / name
    manifest.write_text(json.dumps({"domains": entries}), encoding="utf-8")
    return manifest


def write_matrix(path, data, ids=None):
    data = np.asarray(data, dtype=np.float32)
    m = EmbeddingMatrix(ids=ids or list(range(data.shape[0])), data=data)
    write_embeddings(m, path)
    return m


class TestEntryPoints:
    def test_no_arguments_usage_exit_1(self, capsys):
        code, out, err = run(capsys)
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_flag_exit_1(self, capsys):
        code, _, err = run(capsys, "pca", "--bogus")
        assert code == 1
        assert "bogus" in err

    def test_unknown_subcommand_exit_1(self, capsys):
        code, _, _ = run(capsys, "frobnicate")
        assert code == 1

    def test_validation_before_work(self, capsys, tmp_path):
        code, _, err = run(capsys, "pca", "--emb-in", str(tmp_path / "absent.emb"),
                           "--emb-out", str(tmp_path / "o.emb"))
        assert code == 1
        assert "no such file" in err


class TestIngest:
    def test_dedup_cap_and_pool(self, capsys, tmp_path):
        manifest = toy_manifest(tmp_path)
        out_dir = tmp_path / "out"
        code, out, _ = run(capsys, "ingest", "--manifest", str(manifest),
                           "--out-dir", str(out_dir), "--cap", "film=1",
                           "--seed", "3")
        assert code == 0
        result = json.loads(out)
        assert result["domains"]["med"]["removed_duplicates"] == 1
        assert result["domains"]["med"]["final"] == 2
        assert result["domains"]["film"]["final"] == 1
        assert result["pool"]["size"] == 3
        labels = (out_dir / "pool.labels.txt").read_text().splitlines()
        assert labels == ["med", "med", "film"]
        srcs = (out_dir / "pool.src.txt").read_text().splitlines()
        assert len(srcs) == 3

    def test_bad_cap_spec(self, capsys, tmp_path):
        manifest = toy_manifest(tmp_path)
        code, _, err = run(capsys, "ingest", "--manifest", str(manifest),
                           "--out-dir", str(tmp_path / "o"), "--cap", "filmX")
        assert code == 1 and "NAME=N" in err


class TestAuditSplit:
    def test_overlap_json(self, capsys, tmp_path):
        train_dir, dev_dir, test_dir = tmp_path / "tr", tmp_path / "de", tmp_path / "te"
        for d in (train_dir, dev_dir, test_dir):
            d.mkdir()
        m_train = toy_manifest(train_dir, domains=(("med", ["a", "b", "c"]),))
        m_dev = toy_manifest(dev_dir, domains=(("med", ["a", "x", "b", "y"]),))
        m_test = toy_manifest(test_dir, domains=(("med", ["z", "c"]),))
        code, out, _ = run(capsys, "audit-split",
                           "--train-manifest", str(m_train),
                           "--dev-manifest", str(m_dev),
                           "--test-manifest", str(m_test))
        assert code == 0
        report = json.loads(out)
        assert report["med"]["dev_in_train"] == 2
        assert report["med"]["dev_size"] == 4
        assert report["med"]["test_in_train"] == 1

    def test_domain_mismatch_rejected(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        m1 = toy_manifest(a, domains=(("med", ["x"]),))
        m2 = toy_manifest(b, domains=(("law", ["x"]),))
        code, _, err = run(capsys, "audit-split", "--train-manifest", str(m1),
                           "--dev-manifest", str(m2), "--test-manifest", str(m1))
        assert code == 1 and "same domains" in err


class TestEmbed:
    def test_fetch_and_write(self, capsys, tmp_path, provider):
        texts = tmp_path / "texts.txt"
        write_lines(texts, ["hello world", "second line"])
        emb_out = tmp_path / "vecs.emb"
        code, out, _ = run(capsys, "embed", "--texts", str(texts),
                           "--provider-url", provider.url, "--model", "m",
                           "--batch-size", "1", "--emb-out", str(emb_out))
        assert code == 0
        result = json.loads(out)
        assert result["count"] == 2 and result["dim"] == provider.dim
        m = read_embeddings(emb_out)
        assert m.ids == [0, 1]

    def test_provider_down_is_runtime_error(self, capsys, tmp_path):
        texts = tmp_path / "texts.txt"
        write_lines(texts, ["a"])
        code, _, err = run(capsys, "embed", "--texts", str(texts),
                           "--provider-url", "http://127.0.0.1:9",
                           "--model", "m", "--emb-out", str(tmp_path / "o.emb"),
                           "--config", str(_backoff_config(tmp_path)))
        assert code == 2

    def test_missing_model_flag(self, capsys, tmp_path):
        texts = tmp_path / "texts.txt"
        write_lines(texts, ["a"])
        code, _, err = run(capsys, "embed", "--texts", str(texts),
                           "--provider-url", "http://x", "--emb-out", "o.emb")
        assert code == 1 and "--model" in err


def _backoff_config(tmp_path):
    # nothing configurable for retries at CLI level; just a placeholder config
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{}")
    return cfg


class TestPcaClusterPurity:
    def blobs(self, tmp_path, n=40, dim=6):
        rng = np.random.RandomState(0)
        a = rng.normal(0, 0.5, size=(n, dim))
        b = rng.normal(0, 0.5, size=(n, dim))
        b[:, 0] += 8.0
        path = tmp_path / "emb.emb"
        write_matrix(path, np.vstack([a, b]))
        labels = tmp_path / "labels.txt"
        write_lines(labels, ["a"] * n + ["b"] * n)
        return path, labels

    def test_pca(self, capsys, tmp_path):
        emb, _ = self.blobs(tmp_path)
        out = tmp_path / "red.emb"
        code, stdout, _ = run(capsys, "pca", "--emb-in", str(emb),
                              "--n-components", "2", "--emb-out", str(out))
        assert code == 0
        assert json.loads(stdout)["dim"] == 2
        assert read_embeddings(out).dim == 2

    def test_cluster_writes_model_and_assignments(self, capsys, tmp_path):
        emb, _ = self.blobs(tmp_path)
        model_stem = tmp_path / "gmm"
        assign_out = tmp_path / "assign.tsv"
        code, stdout, _ = run(capsys, "cluster", "--emb-in", str(emb),
                              "--k", "2", "--seed", "1",
                              "--model-out", str(model_stem),
                              "--assign-out", str(assign_out))
        assert code == 0
        assert (tmp_path / "gmm.json").exists()
        lines = assign_out.read_text().splitlines()
        assert lines[0] == "id\tcluster"
        assert len(lines) == 81

    def test_purity_sweep_with_report(self, capsys, tmp_path):
        emb, labels = self.blobs(tmp_path)
        report_out = tmp_path / "purity.json"
        csv_out = tmp_path / "confusion.csv"
        code, stdout, _ = run(capsys, "purity", "--emb-in", str(emb),
                              "--labels", str(labels), "--k", "2",
                              "--seeds", "1,2,3",
                              "--report-out", str(report_out),
                              "--confusion-csv", str(csv_out))
        assert code == 0
        result = json.loads(stdout)
        assert len(result["purities"]) == 3
        assert result["mean"] == pytest.approx(1.0)
        report = json.loads(report_out.read_text())
        assert sorted(report["cluster_to_domain"]) == ["a", "b"]
        assert csv_out.exists()

    def test_purity_label_count_mismatch(self, capsys, tmp_path):
        emb, _ = self.blobs(tmp_path)
        labels = tmp_path / "short.txt"
        write_lines(labels, ["a"])
        code, _, err = run(capsys, "purity", "--emb-in", str(emb),
                           "--labels", str(labels), "--k", "2")
        assert code == 1 and "labels" in err


class TestSelect:
    def selection_setup(self, tmp_path):
        rng = np.random.RandomState(1)
        in_rows = rng.normal(0, 0.1, size=(10, 4)) + np.array([3, 0, 0, 0])
        pool_in = rng.normal(0, 0.1, size=(15, 4)) + np.array([3, 0, 0, 0])
        pool_out = rng.normal(0, 0.1, size=(30, 4)) - np.array([3, 0, 0, 0])
        in_path = tmp_path / "in.emb"
        pool_path = tmp_path / "pool.emb"
        write_matrix(in_path, in_rows, ids=list(range(1000, 1010)))
        write_matrix(pool_path, np.vstack([pool_in, pool_out]))
        return in_path, pool_path

    def test_cosine_selects_planted(self, capsys, tmp_path):
        in_path, pool_path = self.selection_setup(tmp_path)
        ranking_out = tmp_path / "rank.tsv"
        selection_out = tmp_path / "sel.txt"
        code, stdout, _ = run(capsys, "select", "--method", "cosine",
                              "--in-emb", str(in_path), "--pool-emb", str(pool_path),
                              "--top-k", "15", "--ranking-out", str(ranking_out),
                              "--selection-out", str(selection_out))
        assert code == 0
        selected = {int(l) for l in selection_out.read_text().splitlines()}
        assert selected == set(range(15))

    def test_classifier_method(self, capsys, tmp_path):
        in_path, pool_path = self.selection_setup(tmp_path)
        selection_out = tmp_path / "sel.txt"
        code, stdout, _ = run(capsys, "select", "--method", "classifier",
                              "--in-emb", str(in_path), "--pool-emb", str(pool_path),
                              "--top-k", "15", "--seed", "5",
                              "--selection-out", str(selection_out))
        assert code == 0
        selected = {int(l) for l in selection_out.read_text().splitlines()}
        assert selected == set(range(15))

    def test_classifier_positive_only(self, capsys, tmp_path):
        in_path, pool_path = self.selection_setup(tmp_path)
        selection_out = tmp_path / "pos.txt"
        code, stdout, _ = run(capsys, "select", "--method", "classifier",
                              "--in-emb", str(in_path), "--pool-emb", str(pool_path),
                              "--positive-only", "--seed", "5",
                              "--selection-out", str(selection_out))
        assert code == 0
        assert json.loads(stdout)["positive_only"] is True
        selected = {int(l) for l in selection_out.read_text().splitlines()}
        assert selected == set(range(15))

    def test_moore_lewis_method(self, capsys, tmp_path):
        import random as pyrandom
        rng = pyrandom.Random(0)
        in_vocab = ["med", "dose", "patient"]
        gen_vocab = ["film", "actor", "scene"]
        in_texts = tmp_path / "in.txt"
        pool_texts = tmp_path / "pool.txt"
        write_lines(in_texts, [" ".join(rng.choice(in_vocab) for _ in range(5))
                               for _ in range(20)])
        pool = [" ".join(rng.choice(in_vocab) for _ in range(5)) for _ in range(8)]
        pool += [" ".join(rng.choice(gen_vocab) for _ in range(5)) for _ in range(20)]
        write_lines(pool_texts, pool)
        selection_out = tmp_path / "sel.txt"
        code, stdout, _ = run(capsys, "select", "--method", "moore-lewis",
                              "--in-texts", str(in_texts),
                              "--pool-texts", str(pool_texts),
                              "--top-k", "8", "--selection-out", str(selection_out))
        assert code == 0
        selected = {int(l) for l in selection_out.read_text().splitlines()}
        assert selected == set(range(8))

    def test_random_method_deterministic(self, capsys, tmp_path):
        _, pool_path = self.selection_setup(tmp_path)
        out1, out2 = tmp_path / "r1.tsv", tmp_path / "r2.tsv"
        for out in (out1, out2):
            code, _, _ = run(capsys, "select", "--method", "random",
                             "--pool-emb", str(pool_path), "--seed", "7",
                             "--ranking-out", str(out))
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_method_validation(self, capsys, tmp_path):
        code, _, err = run(capsys, "select", "--method", "nope",
                           "--ranking-out", str(tmp_path / "x.tsv"))
        assert code == 1 and "unknown method" in err

    def test_config_file_defaults_flags_win(self, capsys, tmp_path):
        in_path, pool_path = self.selection_setup(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "method": "cosine",
            "in-emb": str(in_path),
            "pool-emb": str(pool_path),
            "top-k": 3,
        }))
        sel = tmp_path / "sel.txt"
        code, _, _ = run(capsys, "select", "--config", str(cfg),
                         "--top-k", "5", "--selection-out", str(sel))
        assert code == 0
        assert len(sel.read_text().splitlines()) == 5  # flag beats config

    def test_config_unknown_field(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"no-such-flag": 1}))
        code, _, err = run(capsys, "select", "--config", str(cfg),
                           "--method", "random", "--ranking-out", "r.tsv")
        assert code == 1 and "unknown field" in err


class TestEvalAndCorrelate:
    def test_eval_selection(self, capsys, tmp_path):
        selection = tmp_path / "sel.txt"
        write_lines(selection, ["0", "1", "5"])
        labels = tmp_path / "labels.txt"
        write_lines(labels, ["med"] * 4 + ["law"] * 4)
        code, out, _ = run(capsys, "eval-selection", "--selection", str(selection),
                           "--pool-labels", str(labels),
                           "--target-domain", "med,law")
        assert code == 0
        result = json.loads(out)
        assert result["med"]["true_positives"] == 2
        assert result["med"]["precision"] == pytest.approx(2 / 3)
        assert result["law"]["recall"] == pytest.approx(1 / 4)

    def test_correlate_with_fixture(self, capsys, tmp_path):
        rng = np.random.RandomState(2)
        domains = ["it", "koran", "law", "medical", "subtitles"]
        rows, labels = [], []
        for i, d in enumerate(domains):
            block = rng.normal(0, 0.05, size=(4, 8))
            block[:, i] += 1.0
            rows.append(block)
            labels += [d] * 4
        emb = tmp_path / "dev.emb"
        write_matrix(emb, np.vstack(rows))
        labels_path = tmp_path / "labels.txt"
        write_lines(labels_path, labels)
        csv_out = tmp_path / "corr.csv"
        png_out = tmp_path / "corr.png"
        code, out, _ = run(capsys, "correlate", "--emb-in", str(emb),
                           "--labels", str(labels_path),
                           "--bleu-fixture", str(FIXTURES / "cross_domain_bleu.json"),
                           "--csv-out", str(csv_out), "--png-out", str(png_out))
        assert code == 0
        result = json.loads(out)
        assert len(result["pairs"]) == 25
        assert -1.0 <= result["pearson_r"] <= 1.0
        assert csv_out.exists() and png_out.exists()


class TestEmitPlots:
    def test_scatter_csv_and_png(self, capsys, tmp_path):
        rng = np.random.RandomState(3)
        emb = tmp_path / "e2.emb"
        write_matrix(emb, rng.normal(size=(12, 2)))
        labels = tmp_path / "labels.txt"
        write_lines(labels, ["a"] * 6 + ["b"] * 6)
        csv_out = tmp_path / "scatter.csv"
        png_out = tmp_path / "scatter.png"
        code, _, _ = run(capsys, "emit-plots", "--kind", "scatter2d",
                         "--emb-in", str(emb), "--labels", str(labels),
                         "--csv-out", str(csv_out), "--png-out", str(png_out))
        assert code == 0
        assert csv_out.read_text().startswith("id,x,y,domain,cluster")
        assert png_out.stat().st_size > 0

    def test_confusion_from_report(self, capsys, tmp_path):
        report = tmp_path / "purity.json"
        report.write_text(json.dumps({
            "purity": 0.9,
            "cluster_to_domain": ["a", "b"],
            "domains": ["a", "b"],
            "confusion": [[9, 1], [0, 10]],
        }))
        csv_out = tmp_path / "conf.csv"
        png_out = tmp_path / "conf.png"
        code, _, _ = run(capsys, "emit-plots", "--kind", "confusion",
                         "--report", str(report), "--csv-out", str(csv_out),
                         "--png-out", str(png_out))
        assert code == 0
        assert csv_out.exists() and png_out.stat().st_size > 0

    def test_wrong_dim_scatter(self, capsys, tmp_path):
        emb = tmp_path / "e3.emb"
        write_matrix(emb, np.zeros((3, 3)))
        labels = tmp_path / "labels.txt"
        write_lines(labels, ["a", "a", "b"])
        code, _, err = run(capsys, "emit-plots", "--kind", "scatter2d",
                           "--emb-in", str(emb), "--labels", str(labels),
                           "--csv-out", str(tmp_path / "x.csv"))
        assert code == 2  # runtime failure: data has wrong shape for the plot


class TestDeterminism:
    def test_identical_runs_byte_identical(self, capsys, tmp_path):
        rng = np.random.RandomState(4)
        emb = tmp_path / "e.emb"
        write_matrix(emb, rng.normal(size=(30, 4)))
        outs = []
        for name in ("a", "b"):
            ranking = tmp_path / f"{name}.tsv"
            code, _, _ = run(capsys, "select", "--method", "random",
                             "--pool-emb", str(emb), "--seed", "11",
                             "--ranking-out", str(ranking))
            assert code == 0
            outs.append(ranking.read_bytes())
        assert outs[0] == outs[1]
