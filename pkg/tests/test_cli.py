"""CLI subcommands: exit codes, run manifests, and the end-to-end pipeline."""

import logging

import numpy as np
import pytest

from corrgan import cli
from corrgan.canonical import canonicalize
from corrgan.core import CorrelationMatrix, validate
from corrgan.gan import load_checkpoint
from corrgan.matio import load_matrix_dir, read_manifest


def _read_all(directory):
    return load_matrix_dir(directory)


class TestExitCodes:
    def test_unknown_subcommand_is_2(self, capsys):
        assert cli.run(["frobnicate"]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error: usage:")
        assert err.count("\nerror:") == 0  # single error line
        assert "usage" in err

    def test_unknown_flag_is_2_with_usage(self, capsys):
        assert cli.run(["sample-elliptope", "--n", "3", "--count", "1",
                        "--out", "x", "--bogus"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand_is_2(self, capsys):
        assert cli.run([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_invalid_config_value_is_3(self, tmp_path, capsys):
        code = cli.run(["sample-elliptope", "--n", "1", "--count", "5",
                        "--out", str(tmp_path / "d")])
        assert code == 3
        assert capsys.readouterr().err.startswith("error: config:")

    def test_io_failure_is_4(self, tmp_path, capsys):
        code = cli.run(["build-dataset", "--source", "csv",
                        "--returns-csv", str(tmp_path / "missing.csv"),
                        "--out", str(tmp_path / "d")])
        assert code == 4
        assert capsys.readouterr().err.startswith("error: io:")

    def test_generate_without_model_is_4(self, tmp_path, capsys):
        code = cli.run(["generate", "--model", str(tmp_path / "no.ckpt"),
                        "--count", "2", "--out", str(tmp_path / "g")])
        assert code == 4
        assert capsys.readouterr().err.startswith("error: io:")


class TestSampleElliptope:
    def test_writes_files_manifest_and_is_reproducible(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        argv = ["sample-elliptope", "--n", "3", "--count", "10", "--seed", "7"]
        assert cli.run(argv + ["--out", str(out1)]) == 0
        assert cli.run(argv + ["--out", str(out2)]) == 0
        files = sorted(p.name for p in out1.glob("corr-*.csv"))
        assert len(files) == 10
        assert (out1 / "manifest").exists()
        run_man = read_manifest(out1 / "run-manifest")
        assert run_man["subcommand"] == "sample-elliptope"
        assert run_man["seed"] == "7"
        assert run_man["n"] == "3"
        for name in files:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        for arr in _read_all(out1):
            assert validate(arr).is_valid

    def test_rerun_from_manifest_reproduces(self, tmp_path):
        out1 = tmp_path / "a"
        assert cli.run(["sample-elliptope", "--n", "4", "--count", "3",
                        "--seed", "21", "--out", str(out1)]) == 0
        man = read_manifest(out1 / "run-manifest")
        out2 = tmp_path / "b"
        argv = [man["subcommand"], "--n", man["n"], "--count", man["count"],
                "--seed", man["seed"], "--out", str(out2)]
        assert cli.run(argv) == 0
        for a, b in zip(_read_all(out1), _read_all(out2)):
            np.testing.assert_array_equal(a, b)


class TestCanonicalizeCommand:
    def test_output_is_canonical(self, tmp_path):
        src = tmp_path / "raw"
        assert cli.run(["sample-elliptope", "--n", "5", "--count", "4",
                        "--seed", "3", "--out", str(src)]) == 0
        dst = tmp_path / "canon"
        assert cli.run(["canonicalize", "--in", str(src), "--out", str(dst)]) == 0
        outs = _read_all(dst)
        assert len(outs) == 4
        for arr in outs:
            m = CorrelationMatrix.from_values(arr)
            np.testing.assert_array_equal(arr, canonicalize(m).values)
        assert read_manifest(dst / "manifest")["canonicalized"] == "true"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """build-dataset -> train -> generate -> repair, shared across tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data, model, raw, fixed = root / "data", root / "model", root / "raw", root / "fixed"
    assert cli.run(["build-dataset", "--out", str(data), "--source", "synthetic",
                    "--count", "48", "--window", "252", "--stride", "63",
                    "--universe-size", "10", "--assets", "14", "--days", "441",
                    "--seed", "5"]) == 0
    assert cli.run(["train", "--data", str(data), "--out", str(model),
                    "--arch", "dense", "--latent", "16",
                    "--gen-widths", "48,48", "--disc-widths", "48,48",
                    "--epochs", "12", "--batch-size", "16", "--seed", "2"]) == 0
    assert cli.run(["generate", "--model", str(model / "model.ckpt"),
                    "--count", "16", "--seed", "9", "--out", str(raw)]) == 0
    assert cli.run(["repair", "--in", str(raw), "--out", str(fixed)]) == 0
    return root


class TestPipeline:
    def test_dataset_matrices_are_canonical_and_valid(self, pipeline):
        arrays = _read_all(pipeline / "data")
        assert len(arrays) == 48
        for arr in arrays:
            assert arr.shape == (10, 10)
            assert validate(arr).is_valid
            m = CorrelationMatrix.from_values(arr)
            np.testing.assert_array_equal(arr, canonicalize(m).values)

    def test_training_artifacts(self, pipeline):
        model_dir = pipeline / "model"
        model = load_checkpoint(model_dir / "model.ckpt")
        assert model.arch.n == 10
        assert model.step == 12 * (48 // 16)
        log_lines = (model_dir / "training-log.csv").read_text().strip().splitlines()
        assert log_lines[0] == "epoch,disc_loss,gen_loss,d_real,d_fake,seconds"
        assert len(log_lines) == 13
        man = read_manifest(model_dir / "run-manifest")
        assert man["subcommand"] == "train"
        assert man["gen-widths"] == "48,48"

    def test_generated_raw_then_repaired_valid(self, pipeline):
        raws = _read_all(pipeline / "raw")
        assert len(raws) == 16
        fixed = _read_all(pipeline / "fixed")
        assert len(fixed) == 16
        for arr in fixed:
            rep = validate(arr)
            assert rep.is_valid
            np.testing.assert_array_equal(np.diag(arr), np.ones(10))

    def test_evaluate_report_covers_all_five_facts(self, pipeline, capsys):
        out = pipeline / "eval"
        assert cli.run(["evaluate", "--reference", str(pipeline / "data"),
                        "--candidate", str(pipeline / "fixed"),
                        "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "verdicts.all = " in printed
        text = (out / "report.txt").read_text()
        # one line per stylized fact family on both sides
        for key in ("pairwise_mean", "lambda1_mean", "pf_pass_rate",
                     "hierarchy_mean", "max_degree"):
            assert f"reference.{key} = " in text
            assert f"candidate.{key} = " in text
        for verdict in ("pairwise_mean", "pairwise_std", "lambda1_ks",
                        "perron_frobenius", "hierarchy_ks", "mst_degrees_chi2"):
            assert f"verdicts.{verdict} = " in text
        hist = out / "histograms"
        assert (hist / "pairwise-hist-reference.csv").exists()
        assert (hist / "mst-degrees-candidate.csv").exists()
        assert (hist / "lambda1-reference.csv").exists()

    def test_outputs_confined_to_out_dirs(self, pipeline):
        top_level = {p.name for p in pipeline.iterdir()}
        assert top_level <= {"data", "model", "raw", "fixed", "eval"}
        data_files = {p.name for p in (pipeline / "data").iterdir()}
        assert data_files == {"manifest", "run-manifest"} | {
            f"corr-{i:06d}.csv" for i in range(48)
        }


class TestServeCommand:
    def test_serve_builds_app_and_writes_manifest(self, tmp_path, monkeypatch, capsys):
        real, fake = tmp_path / "real", tmp_path / "fake"
        assert cli.run(["sample-elliptope", "--n", "3", "--count", "3",
                        "--seed", "1", "--out", str(real)]) == 0
        assert cli.run(["sample-elliptope", "--n", "3", "--count", "3",
                        "--seed", "2", "--out", str(fake)]) == 0
        captured = {}

        def fake_runner(app, host, port):
            captured["app"] = app
            captured["host"] = host
            captured["port"] = port

        monkeypatch.setattr(cli, "serve_runner", fake_runner)
        logs = tmp_path / "logs"
        logs.mkdir()
        code = cli.run(["serve", "--real-dir", str(real), "--fake-dir", str(fake),
                        "--port", "8123", "--log-file", str(logs / "guesses.log"),
                        "--seed", "4"])
        assert code == 0
        assert captured["port"] == 8123
        assert captured["host"] == "127.0.0.1"
        man = read_manifest(logs / "run-manifest")
        assert man["subcommand"] == "serve"
        from fastapi.testclient import TestClient

        client = TestClient(captured["app"])
        payload = client.get("/api/challenge").json()
        assert set(payload) == {"id", "n", "matrix"}


class TestLoggingEnv:
    def test_corrgan_log_sets_level(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CORRGAN_LOG", "debug")
        assert cli.run(["sample-elliptope", "--n", "3", "--count", "1",
                        "--seed", "0", "--out", str(tmp_path / "d")]) == 0
        assert logging.getLogger("corrgan").isEnabledFor(logging.DEBUG)
        monkeypatch.setenv("CORRGAN_LOG", "warning")
        cli.run(["sample-elliptope", "--n", "3", "--count", "1",
                 "--seed", "0", "--out", str(tmp_path / "e")])
        assert not logging.getLogger("corrgan").isEnabledFor(logging.DEBUG)
