"""End-to-end command-line behavior: artifacts, manifests, exit codes."""

import hashlib
import json

import numpy as np
import pytest

from fewgen.cli import main, read_split, write_split
from fewgen.embedstore import EmbeddingRecord, load_embeddings, make_store, save_embeddings
from fewgen.episodic import ClassSplit
from fewgen.protocore import ProjectionHead, save_head


def run(argv):
    return main([str(a) for a in argv])


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture()
def embeddings(tmp_path):
    path = tmp_path / "emb.jsonl"
    assert run(["synth", "--classes", 20, "--dim", 6, "--per-class", 10,
                "--mean-scale", 3.0, "--cov-scale", 0.4, "--seed", 0,
                "--out", path]) == 0
    return path


class TestSplit:
    def test_writes_split_and_manifest(self, tmp_path, embeddings):
        out = tmp_path / "split.json"
        assert run(["split", "--embeddings", embeddings, "--seen", 8,
                    "--valid", 5, "--unseen", 7, "--seed", 1, "--out", out]) == 0
        split = read_split(out)
        assert (len(split.seen), len(split.valid), len(split.unseen)) == (8, 5, 7)
        manifest = json.loads((tmp_path / "split.json.manifest.json").read_text())
        assert manifest["command"] == "split"
        assert manifest["inputs"][str(embeddings)] == sha256(embeddings)
        assert manifest["outputs"][str(out)] == sha256(out)

    def test_empty_split_allowed(self, tmp_path, embeddings):
        out = tmp_path / "split.json"
        assert run(["split", "--embeddings", embeddings, "--seen", 0,
                    "--valid", 0, "--unseen", 0, "--out", out]) == 0
        split = read_split(out)
        assert split == ClassSplit(frozenset(), frozenset(), frozenset())

    def test_too_many_classes_exits_2(self, tmp_path, embeddings):
        assert run(["split", "--embeddings", embeddings, "--seen", 15,
                    "--valid", 5, "--unseen", 7, "--out", tmp_path / "s.json"]) == 2

    def test_missing_embeddings_exits_2(self, tmp_path):
        assert run(["split", "--embeddings", tmp_path / "absent.jsonl", "--seen", 1,
                    "--valid", 1, "--unseen", 1, "--out", tmp_path / "s.json"]) == 2

    def test_malformed_embeddings_exits_2(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"count": 2, "dim": 2}\n{"id": "a", "label": "x", "vector": [1.0]}\n')
        assert run(["split", "--embeddings", bad, "--seen", 1, "--valid", 0,
                    "--unseen", 0, "--out", tmp_path / "s.json"]) == 2

    def test_split_file_round_trip(self, tmp_path):
        split = ClassSplit(frozenset({"a", "b"}), frozenset({"c"}), frozenset({"d"}))
        path = tmp_path / "split.json"
        write_split(split, path)
        assert read_split(path) == split

    def test_split_file_missing_key_rejected(self, tmp_path):
        path = tmp_path / "split.json"
        path.write_text('{"seen": [], "valid": []}\n')
        with pytest.raises(ValueError):
            read_split(path)


class TestTrain:
    def test_writes_head_trace_manifest(self, tmp_path, embeddings):
        out, trace = tmp_path / "head.ckpt", tmp_path / "trace.csv"
        assert run(["train", "--embeddings", embeddings, "--n", 4, "--k", 1,
                    "--q", 4, "--r", 3, "--gen", 5, "--episodes", 10,
                    "--out", out, "--trace", trace]) == 0
        assert out.exists()
        lines = trace.read_text().splitlines()
        assert lines[0] == "episode,l_basic,l_gen,l_total,grad_norm"
        assert len(lines) == 11
        manifest = json.loads((tmp_path / "head.ckpt.manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["episodes"] == 10
        assert manifest["outputs"][str(out)] == sha256(out)
        assert manifest["outputs"][str(trace)] == sha256(trace)

    def test_respects_split_file(self, tmp_path, embeddings):
        split_path = tmp_path / "split.json"
        assert run(["split", "--embeddings", embeddings, "--seen", 6, "--valid", 7,
                    "--unseen", 7, "--seed", 2, "--out", split_path]) == 0
        out = tmp_path / "head.ckpt"
        assert run(["train", "--embeddings", embeddings, "--split", split_path,
                    "--n", 4, "--k", 1, "--q", 4, "--r", 3, "--gen", 5,
                    "--episodes", 5, "--out", out,
                    "--trace", tmp_path / "trace.csv"]) == 0
        manifest = json.loads((tmp_path / "head.ckpt.manifest.json").read_text())
        assert str(split_path) in manifest["inputs"]

    def test_deterministic_reruns(self, tmp_path, embeddings):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.ckpt"
            assert run(["train", "--embeddings", embeddings, "--n", 4, "--k", 1,
                        "--q", 4, "--r", 3, "--gen", 5, "--episodes", 8, "--seed", 3,
                        "--out", out, "--trace", tmp_path / f"{name}.csv"]) == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_overflowing_vectors_exit_3(self, tmp_path):
        emb = tmp_path / "huge.jsonl"
        rng = np.random.default_rng(0)
        records = []
        for c in range(6):
            for i in range(8):
                sign = 1.0 if i % 2 == 0 else -1.0
                vec = sign * 1e160 * np.ones(4) + rng.normal(size=4)
                records.append(EmbeddingRecord(id=f"{c}-{i}", label=f"c{c}", vector=vec))
        save_embeddings(make_store(records, 4), emb)
        assert run(["train", "--embeddings", emb, "--n", 3, "--k", 2, "--q", 3,
                    "--r", 2, "--gen", 5, "--episodes", 3,
                    "--out", tmp_path / "h.ckpt", "--trace", tmp_path / "t.csv"]) == 3
        assert run(["eval", "--embeddings", emb, "--n", 3, "--k", 2, "--q", 3,
                    "--r", 2, "--gen", 5, "--episodes", 3,
                    "--report", tmp_path / "r.csv"]) == 3


class TestEval:
    def test_report_and_manifest(self, tmp_path, embeddings):
        report = tmp_path / "report.csv"
        assert run(["eval", "--embeddings", embeddings, "--n", 4, "--k", 1,
                    "--q", 4, "--r", 3, "--gen", 5, "--episodes", 6, "--runs", 2,
                    "--report", report]) == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "run,episode,accuracy"
        assert lines.index("# summary") == 13
        manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert manifest["command"] == "eval"
        assert manifest["config"]["n_gen"] == 5
        assert manifest["outputs"][str(report)] == sha256(report)

    def test_supplied_head_is_used(self, tmp_path, embeddings):
        # A head that keeps only the first coordinate collapses the well
        # separated classes, so its report must differ from the identity's.
        head_path = tmp_path / "head.ckpt"
        head = ProjectionHead.identity(6)
        head.weight[1:, :] = 0.0
        save_head(head, head_path)
        with_head = tmp_path / "with.csv"
        without = tmp_path / "without.csv"
        common = ["--n", 4, "--k", 1, "--q", 4, "--r", 3, "--gen", 0,
                  "--strategy", "none", "--episodes", 10]
        assert run(["eval", "--embeddings", embeddings, "--head", head_path,
                    "--report", with_head, *common]) == 0
        assert run(["eval", "--embeddings", embeddings,
                    "--report", without, *common]) == 0
        manifest = json.loads((tmp_path / "with.csv.manifest.json").read_text())
        assert str(head_path) in manifest["inputs"]
        assert with_head.read_text() != without.read_text()

    def test_jobs_do_not_change_report(self, tmp_path, embeddings):
        reports = []
        for jobs in (1, 2):
            report = tmp_path / f"report{jobs}.csv"
            assert run(["eval", "--embeddings", embeddings, "--n", 4, "--k", 1,
                        "--q", 4, "--r", 3, "--gen", 5, "--episodes", 8,
                        "--jobs", jobs, "--report", report]) == 0
            reports.append(report.read_text())
        assert reports[0] == reports[1]

    def test_preset_fills_q_and_r(self, tmp_path, embeddings):
        report = tmp_path / "report.csv"
        assert run(["eval", "--embeddings", embeddings, "--preset", "intent",
                    "--n", 4, "--k", 1, "--gen", 5, "--episodes", 4,
                    "--report", report]) == 0
        manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert manifest["config"]["n_query"] == 5
        assert manifest["config"]["r_neighbors"] == 4

    def test_explicit_flag_beats_preset(self, tmp_path, embeddings):
        report = tmp_path / "report.csv"
        assert run(["eval", "--embeddings", embeddings, "--preset", "intent",
                    "--n", 4, "--k", 1, "--q", 3, "--gen", 5, "--episodes", 4,
                    "--report", report]) == 0
        manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert manifest["config"]["n_query"] == 3
        assert manifest["config"]["r_neighbors"] == 4


class TestConfigFile:
    def test_config_file_supplies_values(self, tmp_path, embeddings):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 4, "q": 3, "r": 2, "episodes": 4}))
        report = tmp_path / "report.csv"
        assert run(["eval", "--embeddings", embeddings, "--gen", 5,
                    "--config", cfg, "--report", report]) == 0
        manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert manifest["config"]["n_way"] == 4
        assert manifest["config"]["n_query"] == 3
        assert manifest["config"]["episodes"] == 4

    def test_explicit_flag_beats_config_file(self, tmp_path, embeddings):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 4, "q": 3, "r": 2, "episodes": 4}))
        report = tmp_path / "report.csv"
        assert run(["eval", "--embeddings", embeddings, "--gen", 5, "--q", 2,
                    "--config", cfg, "--report", report]) == 0
        manifest = json.loads((tmp_path / "report.csv.manifest.json").read_text())
        assert manifest["config"]["n_query"] == 2

    def test_unknown_key_exits_2(self, tmp_path, embeddings):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 4, "warmup": 10}))
        assert run(["eval", "--embeddings", embeddings, "--config", cfg,
                    "--report", tmp_path / "r.csv"]) == 2

    def test_invalid_json_exits_2(self, tmp_path, embeddings):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert run(["eval", "--embeddings", embeddings, "--config", cfg,
                    "--report", tmp_path / "r.csv"]) == 2


class TestSynth:
    def test_output_loads_with_expected_shape(self, tmp_path):
        out = tmp_path / "synth.jsonl"
        assert run(["synth", "--classes", 5, "--dim", 3, "--per-class", 4,
                    "--out", out]) == 0
        store = load_embeddings(out)
        assert len(store) == 20
        assert store.dim == 3
        assert len(store.labels) == 5

    def test_truth_file_optional(self, tmp_path):
        out, truth = tmp_path / "synth.jsonl", tmp_path / "truth.json"
        assert run(["synth", "--classes", 3, "--dim", 2, "--per-class", 4,
                    "--out", out, "--truth", truth]) == 0
        doc = json.loads(truth.read_text())
        assert len(doc) == 3
        for entry in doc.values():
            assert len(entry["mean"]) == 2
            assert np.asarray(entry["cov"]).shape == (2, 2)
        manifest = json.loads((tmp_path / "synth.jsonl.manifest.json").read_text())
        assert str(truth) in manifest["outputs"]


class TestGradcheck:
    def test_pass_exits_0(self, tmp_path, capsys):
        out = tmp_path / "gc.json"
        assert run(["gradcheck", "--n", 3, "--k", 2, "--q", 4, "--r", 3,
                    "--gen", 4, "--dim", 5, "--probes", 30, "--out", out]) == 0
        printed = capsys.readouterr().out
        assert printed.startswith("PASS")
        doc = json.loads(out.read_text())
        assert doc["passed"] is True
        assert doc["max_rel_error"] < doc["tolerance"]

    def test_fail_exits_1(self, capsys):
        assert run(["gradcheck", "--n", 3, "--k", 2, "--q", 4, "--r", 3,
                    "--gen", 4, "--dim", 5, "--probes", 10, "--tol", 0.0]) == 1
        assert capsys.readouterr().out.startswith("FAIL")
