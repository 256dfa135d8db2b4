import json

import numpy as np
import pytest

from slicelm.cli import main
from slicelm.synth import export_desk_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("clicorpus")
    return export_desk_corpus(out, n_train=20, n_eval=6, seed=8, dim=8)


def run(argv):
    return main([str(a) for a in argv])


class TestIngest:
    def test_valid_corpus(self, corpus, capsys):
        assert run(["ingest", "--graphs", corpus["train_const"], "--validate"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["graphs"] == 20
        assert out["framework"] == "constituency"
        assert out["invalid"] == {}

    def test_invalid_graph_fails_validation(self, tmp_path, capsys):
        bad = tmp_path / "bad.mrp"
        bad.write_text(json.dumps({
            "id": "b", "input": "a",
            "nodes": [{"id": 0}, {"id": 1}],
            "edges": [{"source": 0, "target": 1, "label": "x"},
                      {"source": 1, "target": 0, "label": "y"}],
        }) + "\n")
        assert run(["ingest", "--graphs", bad, "--validate"]) == 1

    def test_parse_error_is_data_exit_code(self, tmp_path):
        bad = tmp_path / "bad.mrp"
        bad.write_text("{not json\n")
        assert run(["ingest", "--graphs", bad]) == 1

    def test_missing_file_is_data_exit_code(self):
        assert run(["ingest", "--graphs", "/nonexistent.mrp"]) == 1


class TestTokenizeSliceEncode:
    def test_tokenize_graphs(self, corpus, tmp_path):
        out = tmp_path / "tok.jsonl"
        assert run(["tokenize", "--vocab", corpus["vocab"], "--merges", corpus["merges"],
                    "--graphs", corpus["eval_const"], "--out", out]) == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 6
        assert all(t["span"][0] < t["span"][1] for l in lines for t in l["tokens"])

    def test_slice_encode_train_eval_chain(self, corpus, tmp_path, capsys):
        slices = tmp_path / "slices.jsonl"
        assert run(["slice", "--graphs", corpus["train_const"],
                    "--vocab", corpus["vocab"], "--merges", corpus["merges"],
                    "--out", slices]) == 0

        from slicelm import LabelVocabulary, read_mrp_file
        from slicelm.graphs import ensure_nonempty_edges
        graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(corpus["train_const"])]
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(LabelVocabulary.from_graphs(graphs).labels))

        svc = tmp_path / "vecs.svc"
        npz = tmp_path / "enc.npz"
        assert run(["encode", "--slices", slices, "--embeddings", corpus["embeddings"],
                    "--labels", labels_path, "--out", svc, "--out-npz", npz]) == 0

        from slicelm.encoding import SVC_MAGIC, read_float32_matrix
        mat = read_float32_matrix(svc, SVC_MAGIC)
        n_tokens = sum(len(json.loads(l)["slices"]) for l in slices.read_text().splitlines())
        assert mat.shape[0] == n_tokens

        ckpt = tmp_path / "m.ckpt"
        assert run(["train", "--encoded", npz, "--embeddings", corpus["embeddings"],
                    "--base-logits", corpus["base_logits"], "--epochs", 1,
                    "--hidden-dim", 8, "--out", ckpt]) == 0
        capsys.readouterr()

        assert run(["eval", "--checkpoint", ckpt, "--encoded", npz,
                    "--base-logits", corpus["base_logits"],
                    "--nll-out", tmp_path / "a.nll"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["metrics"]["ppl"] > 1.0
        assert len((tmp_path / "a.nll").read_text().split()) == n_tokens

    def test_encode_round_trip_matches_direct_encoding(self, corpus, tmp_path):
        # slicing to JSON and back must yield the same vectors as in-process
        slices = tmp_path / "s.jsonl"
        run(["slice", "--graphs", corpus["eval_const"], "--vocab", corpus["vocab"],
             "--merges", corpus["merges"], "--out", slices])
        from slicelm import (EmbeddingTable, EncoderConfig, LabelVocabulary,
                             TokenizerTables, bbpe_tokenize, encode_sentence, read_mrp_file,
                             slice_sentence)
        from slicelm.graphs import ensure_nonempty_edges
        from slicelm.tokenization import align_tokens_to_anchors
        graphs = [ensure_nonempty_edges(g) for g in read_mrp_file(corpus["eval_const"])]
        labels = LabelVocabulary.from_graphs(graphs)
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(labels.labels))
        svc = tmp_path / "v.svc"
        run(["encode", "--slices", slices, "--embeddings", corpus["embeddings"],
             "--labels", labels_path, "--out", svc])
        from slicelm.encoding import SVC_MAGIC, read_float32_matrix
        got = read_float32_matrix(svc, SVC_MAGIC)

        tables = TokenizerTables.load(corpus["vocab"], corpus["merges"])
        emb = EmbeddingTable.load(corpus["embeddings"])
        cfg = EncoderConfig(embedding_dim=emb.dim, num_labels=len(labels))
        rows = []
        for g in graphs:
            tokens = bbpe_tokenize(g.text, tables)
            aligned = align_tokens_to_anchors(tokens, g)
            x, _ = encode_sentence(slice_sentence(aligned), tokens.ids(), cfg, emb, labels)
            rows.append(x)
        expected = np.concatenate(rows)
        assert got.tobytes() == expected.tobytes()


class TestAblateSigtestSynth:
    def test_ablate_writes_shuffled_copy(self, corpus, tmp_path):
        out = tmp_path / "pert.mrp"
        assert run(["ablate", "--graphs", corpus["eval_const"], "--shuffle-labels",
                    "--seed", 3, "--out", out]) == 0
        from collections import Counter
        from slicelm import read_mrp_file
        orig = read_mrp_file(corpus["eval_const"])
        pert = read_mrp_file(out)
        assert orig != pert
        for a, b in zip(orig, pert):
            assert Counter(e.label for e in a.edges) == Counter(e.label for e in b.edges)

    def test_ablate_requires_a_shuffle_flag(self, corpus, tmp_path):
        assert run(["ablate", "--graphs", corpus["eval_const"],
                    "--out", tmp_path / "x.mrp"]) == 2

    def test_sigtest(self, tmp_path, capsys):
        (tmp_path / "a.txt").write_text("\n".join(["3.0"] * 30))
        (tmp_path / "b.txt").write_text("\n".join(["0.0"] * 30))
        assert run(["sigtest", "--a", tmp_path / "a.txt", "--b", tmp_path / "b.txt",
                    "--shuffles", 200]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["p_value"] == pytest.approx(1 / 201)
        assert out["significant"]

    def test_synth_writes_manifest(self, tmp_path):
        out = tmp_path / "syn"
        assert run(["synth", "--out", out, "--n-train", 5, "--n-eval", 2,
                    "--dim", 4]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        import os
        for path in manifest.values():
            assert os.path.exists(path)


class TestRun:
    def test_full_run(self, corpus, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "train_graphs": str(corpus["train_const"]),
            "eval_graphs": str(corpus["eval_const"]),
            "vocab": str(corpus["vocab"]), "merges": str(corpus["merges"]),
            "embeddings": str(corpus["embeddings"]),
            "base_logits": str(corpus["base_logits"]),
            "out_dir": str(tmp_path / "out"),
            "train": {"epochs": 1, "hidden_dim": 8, "seed": 0},
        }))
        assert run(["run", "--config", cfg_path]) == 0
        report = json.loads(capsys.readouterr().out)
        assert "metrics" in report
        assert (tmp_path / "out" / "report.json").exists()

    def test_bad_config_is_config_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus": True}))
        assert run(["run", "--config", cfg_path]) == 2
