import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

import nndecomp as nd
from nndecomp import cli
from nndecomp.decomp import make_components, save_mask
from nndecomp.errors import MissingArtifactError, ValidationError
from nndecomp.pipeline import (
    BOUNDARY_FILE,
    DATASET_FILE,
    METRICS_FILE,
    MODEL_FILE,
    REPORT_FILE,
    config_from_dict,
    load_config,
    run_pipeline,
    stage_seed,
)

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def small_config(seed=314, **overrides):
    """A fast variant of the shipped fixture for integration tests."""
    doc = json.loads((CONFIG_DIR / "blobs.json").read_text())
    doc["seed"] = seed
    doc["data"].update({"per_class": 40, "dim": 8, "redundancy": 4})
    doc["architecture"]["hidden_layers"] = [48]
    doc["reference_training"]["epochs"] = 60
    doc["lbmask"].update({"steps": 200})
    doc.update(overrides)
    return config_from_dict(doc)


def _config_file(tmp_path, config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config.to_dict()))
    return path


class TestConfig:
    def test_shipped_fixture_parses(self):
        cfg = load_config(CONFIG_DIR / "blobs.json")
        assert cfg.contract.epsilon == 0.1
        assert cfg.lbmask.target_sparsity == 0.5
        assert cfg.hidden_layers == (256,)

    def test_zero_quantile_rejected_before_any_compute(self, tmp_path):
        doc = json.loads((CONFIG_DIR / "blobs.json").read_text())
        doc["contract"]["boundary_selector"]["q"] = 0.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            load_config(path)

    def test_stage_seeds_differ_by_stage(self):
        seeds = {stage_seed(1, tag) for tag in (101, 102, 103, 104)}
        assert len(seeds) == 4
        assert stage_seed(1, 101) == stage_seed(1, 101)


class TestStages:
    def test_missing_upstream_artifact_is_actionable(self, tmp_path):
        cfg = small_config()
        with pytest.raises(MissingArtifactError, match="gen-data"):
            from nndecomp.pipeline import stage_train

            stage_train(cfg, tmp_path)

    def test_decompose_requires_model(self, tmp_path):
        cfg = small_config()
        from nndecomp.pipeline import stage_decompose, stage_gen_data

        stage_gen_data(cfg, tmp_path)
        with pytest.raises(MissingArtifactError, match="train-ref"):
            stage_decompose(cfg, tmp_path)

    def test_run_pipeline_writes_all_artifacts(self, tmp_path):
        cfg = small_config()
        report = run_pipeline(cfg, tmp_path)
        for name in (DATASET_FILE, MODEL_FILE, BOUNDARY_FILE, REPORT_FILE, METRICS_FILE):
            assert (tmp_path / name).exists()
        for k in range(4):
            assert (tmp_path / f"mask_{k}.json").exists()
            assert (tmp_path / f"component_{k}.model.json").exists()
        on_disk = json.loads((tmp_path / REPORT_FILE).read_text())
        assert on_disk["verdict"] == ("PASS" if report.verdict else "FAIL")

    def test_reduced_component_models_match_their_masks(self, tmp_path):
        cfg = small_config()
        run_pipeline(cfg, tmp_path)
        net = nd.load_model(tmp_path / MODEL_FILE)
        ds = nd.load_csv(tmp_path / DATASET_FILE, class_count=4)
        from nndecomp.decomp import binarize, load_mask
        from nndecomp.network import masked_forward_batch

        for k in range(4):
            comp = load_mask(net, tmp_path / f"mask_{k}.json")
            reduced = nd.load_model(tmp_path / f"component_{k}.model.json")
            X = ds.features[:25]
            want = masked_forward_batch(net, binarize(comp.mask), X)
            got = np.stack([nd.forward(reduced, x).logits for x in X])
            np.testing.assert_allclose(got, want, atol=1e-12)


class TestCli:
    def test_stage_chaining_equals_run(self, tmp_path):
        cfg = small_config()
        cfg_path = _config_file(tmp_path, cfg)
        out_a = tmp_path / "chained"
        out_b = tmp_path / "oneshot"
        for cmd in ("gen-data", "train-ref", "mine-boundary", "decompose", "evaluate"):
            code = cli.main([cmd, "--config", str(cfg_path), "--out", str(out_a)])
            assert code in (0, 1)
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out_b)]) in (0, 1)
        assert (out_a / REPORT_FILE).read_bytes() == (out_b / REPORT_FILE).read_bytes()

    def test_gen_data_twice_identical_bytes(self, tmp_path):
        cfg_path = _config_file(tmp_path, small_config())
        out = tmp_path / "data"
        assert cli.main(["gen-data", "--config", str(cfg_path), "--out", str(out)]) == 0
        first = (out / DATASET_FILE).read_bytes()
        assert cli.main(["gen-data", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / DATASET_FILE).read_bytes() == first

    def test_evaluate_accepts_external_masks_and_identity_masks_fail(self, tmp_path):
        cfg = small_config()
        cfg_path = _config_file(tmp_path, cfg)
        out = tmp_path / "run"
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) in (0, 1)
        net = nd.load_model(out / MODEL_FILE)
        external = tmp_path / "identity_masks"
        external.mkdir()
        for comp in make_components(net):
            save_mask(comp, external / f"mask_{comp.class_index}.json")
        code = cli.main(
            ["evaluate", "--config", str(cfg_path), "--out", str(out), "--masks", str(external)]
        )
        assert code == 1  # identity decomposition must fail the contract
        report = json.loads((out / REPORT_FILE).read_text())
        assert report["max_overlap"] == 1.0
        assert report["min_prune"] == 0.0
        assert report["verdict"] == "FAIL"

    def test_error_exit_code_and_stage_name(self, tmp_path, capsys):
        cfg_path = _config_file(tmp_path, small_config())
        code = cli.main(["decompose", "--config", str(cfg_path), "--out", str(tmp_path / "empty")])
        assert code == 2
        assert "decompose" in capsys.readouterr().err

    def test_contract_overrides(self, tmp_path):
        cfg = small_config()
        cfg_path = _config_file(tmp_path, cfg)
        out = tmp_path / "x"
        cli.main(["run", "--config", str(cfg_path), "--out", str(out), "--epsilon", "0.9",
                  "--gamma", "0.99", "--eta", "0.01", "--quantile", "0.5"])
        report = json.loads((out / REPORT_FILE).read_text())
        assert report["params"]["epsilon"] == 0.9
        assert report["params"]["boundary_selector"]["q"] == 0.5

    def test_seed_override_changes_artifacts(self, tmp_path):
        cfg_path = _config_file(tmp_path, small_config())
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        cli.main(["gen-data", "--config", str(cfg_path), "--out", str(out1)])
        cli.main(["gen-data", "--config", str(cfg_path), "--out", str(out2), "--seed", "999"])
        assert (out1 / DATASET_FILE).read_bytes() != (out2 / DATASET_FILE).read_bytes()


class TestDeterminism:
    def test_rerun_reproduces_every_artifact_byte_identically(self, tmp_path):
        cfg = small_config()
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_pipeline(cfg, out1)
        run_pipeline(cfg, out2)
        files1 = sorted(p.name for p in out1.iterdir())
        files2 = sorted(p.name for p in out2.iterdir())
        assert files1 == files2
        for name in files1:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_worker_count_does_not_change_reports(self, tmp_path):
        cfg = small_config()
        out1, out4 = tmp_path / "w1", tmp_path / "w4"
        run_pipeline(cfg, out1, workers=1)
        run_pipeline(cfg, out4, workers=4)
        assert (out1 / REPORT_FILE).read_bytes() == (out4 / REPORT_FILE).read_bytes()
        for k in range(4):
            assert (out1 / f"mask_{k}.json").read_bytes() == (out4 / f"mask_{k}.json").read_bytes()
