import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from vdpsync import cli, runner
from vdpsync.config import ConfigError, load_config, validate_dict


def base_config(out_dir, **overrides):
    doc = {
        "lattice": {"kind": "ssh", "n_sites": 4, "lambda0": 0.25,
                    "delta_lambda": 0.1},
        "params": {"omega0": 1.0, "kappa1": 5e-3, "kappa2": 1e-2},
        "initial": {"variant": "random"},
        "time": {"t_relax": 0.0, "t_end": 300.0, "dt_out": 0.5,
                 "window": [100.0, 300.0]},
        "sweep": {"n_realizations": 2},
        "solver": {"rtol": 1e-7, "atol": 1e-10},
        "output_dir": str(out_dir),
        "master_seed": 77,
    }
    for key, val in overrides.items():
        doc[key] = val
    return doc


class TestConfig:
    def test_valid_paper_defaults_no_warnings(self, tmp_path):
        doc = base_config(tmp_path)
        cfg = validate_dict(doc)
        assert cfg.warnings == []
        assert cfg.boundary_sites == (1, 4)

    def test_unknown_keys_rejected(self, tmp_path):
        doc = base_config(tmp_path)
        doc["typo_key"] = 1
        with pytest.raises(ConfigError):
            validate_dict(doc)
        doc = base_config(tmp_path)
        doc["params"]["kapa1"] = 1e-3
        with pytest.raises(ConfigError):
            validate_dict(doc)

    def test_regime_warnings(self, tmp_path):
        doc = base_config(tmp_path)
        doc["params"] = {"kappa1": 2e-2, "kappa2": 1e-2}
        cfg = validate_dict(doc)
        assert any("weakly" in w or "nonlinear" in w for w in cfg.warnings)

    def test_odd_ssh_rejected(self, tmp_path):
        doc = base_config(tmp_path)
        doc["lattice"]["n_sites"] = 5
        with pytest.raises(ConfigError):
            validate_dict(doc)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_window_ordering_enforced(self, tmp_path):
        doc = base_config(tmp_path)
        doc["time"]["window"] = [200.0, 100.0]
        with pytest.raises(ConfigError):
            validate_dict(doc)

    def test_dry_run_report(self, tmp_path):
        cfg = validate_dict(base_config(tmp_path))
        rep = runner.validate_config(cfg)
        assert rep["jobs"] == 2
        assert rep["sites"] == 4
        assert rep["window_samples"] == 401


class TestRunners:
    def test_meanfield_artifacts(self, tmp_path):
        cfg = validate_dict(base_config(tmp_path))
        manifest = runner.run_meanfield(cfg)
        assert manifest.n_failed == 0
        assert (tmp_path / "trajectory_r000.csv").exists()
        assert (tmp_path / "amplitude_raster_r001.csv").exists()
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "events.jsonl").exists()

    def test_reproducibility_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        m1 = runner.run_meanfield(validate_dict(base_config(out1)))
        m2 = runner.run_meanfield(validate_dict(base_config(out2)))
        assert m1.config_hash != ""
        t1 = (out1 / "trajectory_r000.csv").read_bytes()
        t2 = (out2 / "trajectory_r000.csv").read_bytes()
        assert t1 == t2

    def test_seed_streams_disjoint(self, tmp_path):
        # raising the realization count must not change earlier draws,
        # and disorder draws must not perturb initial-condition draws
        doc_a = base_config(tmp_path / "a")
        doc_b = base_config(tmp_path / "b")
        doc_b["sweep"] = {"n_realizations": 3}
        doc_b["disorder"] = {"strength": 0.05}
        runner.run_meanfield(validate_dict(doc_a))
        runner.run_meanfield(validate_dict(doc_b))
        a0 = (tmp_path / "a" / "trajectory_r000.csv").read_text().splitlines()[1]
        b0 = (tmp_path / "b" / "trajectory_r000.csv").read_text().splitlines()[1]
        # first sample (t=t_relax=0) reflects the initial condition only
        assert a0 == b0

    def test_spectrum_sweep(self, tmp_path):
        doc = base_config(tmp_path)
        doc["sweep"] = {"control": "delta_lambda", "values": [-0.1, 0.1],
                        "n_realizations": 2}
        manifest = runner.run_spectrum_sweep(validate_dict(doc))
        assert manifest.n_failed == 0
        smap = (tmp_path / "spectrum_map.csv").read_text()
        assert smap.startswith("control,omega,amplitude")
        peaks = json.loads((tmp_path / "peak_reports.json").read_text())
        assert set(peaks) == {"-0.1", "0.1"}

    def test_spectrum_sweep_pool_matches_serial(self, tmp_path):
        doc = base_config(tmp_path / "serial")
        doc["sweep"] = {"control": "delta_lambda", "values": [-0.1, 0.1],
                        "n_realizations": 1}
        runner.run_spectrum_sweep(validate_dict(doc))
        doc2 = base_config(tmp_path / "pool")
        doc2["sweep"] = {"control": "delta_lambda", "values": [-0.1, 0.1],
                         "n_realizations": 1}
        cfg2 = validate_dict(doc2)
        cfg2.jobs = 2
        runner.run_spectrum_sweep(cfg2)
        a = (tmp_path / "serial" / "spectrum_map.csv").read_bytes()
        b = (tmp_path / "pool" / "spectrum_map.csv").read_bytes()
        assert a == b

    def test_disorder_sweep(self, tmp_path):
        doc = base_config(tmp_path)
        doc["sweep"] = {"control": "disorder", "values": [0.0, 0.05],
                        "n_realizations": 2}
        manifest = runner.run_disorder_sweep(validate_dict(doc))
        assert manifest.n_failed == 0
        rep = json.loads((tmp_path / "disorder_peak_reports.json").read_text())
        assert len(rep) == 2

    def test_sync_matrix_run(self, tmp_path):
        doc = base_config(tmp_path)
        doc["time"] = {"t_relax": 0.0, "t_end": 200.0, "dt_out": 0.5,
                       "window": [100.0, 200.0]}
        manifest = runner.run_sync_matrix(validate_dict(doc))
        assert manifest.n_failed == 0
        vals = np.loadtxt(tmp_path / "sync_matrix_mean.csv", delimiter=",")
        assert vals.shape == (4, 4)
        assert np.all(np.isnan(np.diag(vals)))
        summ = json.loads((tmp_path / "sync_summary_r000.json").read_text())
        assert "boundary_bulk_ratio" in summ

    def test_sync_matrix_disorder_average(self, tmp_path):
        doc = base_config(tmp_path)
        doc["time"] = {"t_relax": 0.0, "t_end": 150.0, "dt_out": 0.5,
                       "window": [100.0, 150.0]}
        doc["sweep"] = {"control": "disorder", "values": [0.0, 0.02],
                        "n_realizations": 2}
        manifest = runner.run_sync_matrix(validate_dict(doc))
        assert manifest.n_failed == 0
        summ = json.loads((tmp_path / "sync_disorder_summary.json").read_text())
        assert len(summ["rows"]) == 2
        assert "1-4" in summ["rows"][0]["boundary_pairs"]

    def test_crash_isolation(self, tmp_path):
        # one poisoned sweep cell fails; the other cell's artifacts survive
        doc = base_config(tmp_path)
        # the second cell's wide band makes dt_out fail the sampling check
        doc["sweep"] = {"control": "delta_lambda", "values": [0.1, 1.0],
                        "n_realizations": 1}
        doc["time"]["dt_out"] = 2.0
        manifest = runner.run_spectrum_sweep(validate_dict(doc))
        statuses = {j["job_id"]: j["status"] for j in manifest.jobs}
        assert statuses["control_cell_001"] == "failed"
        assert statuses["control_cell_000"] == "ok"
        assert (tmp_path / "spectrum_map.csv").exists()

    def test_exact_compare_smoke(self, tmp_path):
        doc = base_config(tmp_path)
        doc["lattice"] = {"kind": "custom", "n_sites": 2,
                          "bonds": [[1, 2, 0.1]]}
        doc["exact"] = {"dim": 6, "oracle_dim": 12,
                        "lambda_values": [0.0, 0.1],
                        "t_relax": 150.0, "t_average": 150.0,
                        "phase_bins": 32}
        manifest = runner.run_exact_compare(validate_dict(doc))
        assert manifest.n_failed == 0, manifest.jobs
        lines = (tmp_path / "sc_curves.csv").read_text().strip().splitlines()
        assert lines[0] == "lambda,sc_exact,sc_effective"
        assert len(lines) == 3
        assert (tmp_path / "wigner_single_steady.csv").exists()
        assert (tmp_path / "phase_marginal_lam0.csv").exists()


class TestCli:
    def write_cfg(self, tmp_path, doc):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(doc))
        return p

    def test_validate_subcommand(self, tmp_path, capsys):
        p = self.write_cfg(tmp_path, base_config(tmp_path / "out"))
        rc = cli.main(["validate", "--config", str(p)])
        assert rc == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["jobs"] == 2

    def test_bad_config_exit_code(self, tmp_path):
        p = self.write_cfg(tmp_path, {"lattice": {}})
        assert cli.main(["validate", "--config", str(p)]) == 1

    def test_meanfield_subcommand_with_overrides(self, tmp_path):
        doc = base_config(tmp_path / "ignored")
        doc["time"] = {"t_relax": 0.0, "t_end": 50.0, "dt_out": 0.5,
                       "window": [10.0, 50.0]}
        p = self.write_cfg(tmp_path, doc)
        out = tmp_path / "cli_out"
        rc = cli.main(["meanfield", "--config", str(p), "--out", str(out),
                       "--seed", "5", "--realizations", "1"])
        assert rc == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["master_seed"] == 5

    def test_partial_failure_exit_code(self, tmp_path):
        doc = base_config(tmp_path / "out2")
        doc["sweep"] = {"control": "delta_lambda", "values": [0.1, 1.0],
                        "n_realizations": 1}
        doc["time"]["dt_out"] = 2.0  # poisons the wider-band cell
        p = self.write_cfg(tmp_path, doc)
        rc = cli.main(["spectrum-sweep", "--config", str(p)])
        assert rc == 2
