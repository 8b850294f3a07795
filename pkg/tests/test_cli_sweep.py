"""CLI contract (exit codes, subcommands) and sweep/plotdata machinery."""

import csv
import json
import os

import pytest

from feduaf.cli import main
from feduaf.config import config_from_dict
from feduaf.datagen import load_jsonl
from feduaf.exceptions import ConfigError, ValidationError
from feduaf.sweep import emit_plotdata, parse_grid, run_sweep

SMALL_RUN = {
    "federation": {"num_clients": 3, "samples_per_client": 12, "missing_ratio": 0.2},
    "model": {"hidden_dim": 6},
    "training": {"rounds": 2, "local_epochs": 1},
    "seeds": [1, 2],
}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh)
    return str(path)


class TestCli:
    def test_gen_data_writes_loadable_jsonl(self, tmp_path, capsys):
        spec = write_json(tmp_path / "spec.json",
                          {"num_clients": 3, "samples_per_client": 8,
                           "missing_ratio": 0.5, "seed": 2})
        out = tmp_path / "data.jsonl"
        assert main(["gen-data", "--spec", spec, "--out", str(out)]) == 0
        clients = load_jsonl(out)
        assert len(clients) == 3
        assert sum(len(c.samples) for c in clients) == 24

    def test_gen_data_unknown_key_exits_1(self, tmp_path, capsys):
        spec = write_json(tmp_path / "spec.json", {"num_clients": 3, "bogus": 1})
        assert main(["gen-data", "--spec", spec, "--out", str(tmp_path / "x")]) == 1
        assert "bogus" in capsys.readouterr().err

    def test_run_writes_outputs_and_exits_0(self, tmp_path, capsys):
        cfg = dict(SMALL_RUN, output_dir=str(tmp_path / "out"))
        path = write_json(tmp_path / "config.json", cfg)
        assert main(["run", "--config", path, "--seed", "7"]) == 0
        assert (tmp_path / "out" / "rounds.jsonl").exists()
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["seed"] == 7
        assert summary["rounds_completed"] == 2

    def test_run_same_seed_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            cfg = dict(SMALL_RUN, output_dir=str(tmp_path / sub))
            path = write_json(tmp_path / f"config-{sub}.json", cfg)
            assert main(["run", "--config", path]) == 0
        a = (tmp_path / "a" / "rounds.jsonl").read_bytes()
        b = (tmp_path / "b" / "rounds.jsonl").read_bytes()
        assert a == b

    def test_bad_config_exits_1(self, tmp_path, capsys):
        path = write_json(tmp_path / "config.json", {"training": {"rounds": 0}})
        assert main(["run", "--config", path]) == 1

    def test_missing_config_exits_1(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json")]) == 1

    def test_runtime_error_exits_2(self, tmp_path, capsys):
        # ingesting a dataset whose only client has too few samples for a
        # test split is a runtime-side failure path via empty federation
        data = tmp_path / "data.jsonl"
        data.write_text("")
        cfg = dict(SMALL_RUN, data_path=str(data),
                   output_dir=str(tmp_path / "out"))
        path = write_json(tmp_path / "config.json", cfg)
        code = main(["run", "--config", path])
        assert code == 1  # empty dataset is a validation error

    def test_plotdata_missing_columns_exits_1(self, tmp_path):
        bad = tmp_path / "sweep.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["plotdata", "--in", str(bad), "--out", str(tmp_path / "figs")]) == 1


class TestGrid:
    def test_empty_grid_is_single_point(self):
        assert parse_grid({}) == [{}]

    def test_cardinality(self):
        points = parse_grid({"missing_ratio": [0.2, 0.8],
                             "noniid_intensity": [0.2, 1.0]})
        assert len(points) == 4

    def test_axis_order_canonical(self):
        points = parse_grid({"strategy": ["uniform"], "missing_ratio": [0.1, 0.2]})
        assert [p["missing_ratio"] for p in points] == [0.1, 0.2]

    def test_unknown_axis_rejected(self):
        with pytest.raises(ConfigError, match="batch_size"):
            parse_grid({"batch_size": [1]})

    def test_bad_strategy_rejected(self):
        with pytest.raises(ConfigError):
            parse_grid({"strategy": ["nope"]})


class TestSweep:
    def sweep_config(self, tmp_path):
        return config_from_dict(dict(SMALL_RUN, output_dir=str(tmp_path / "sweep")))

    def test_single_point_matches_run(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        result = run_sweep(cfg, {}, cfg.output_dir)
        assert len(result.cells) == 1
        cell = result.cells[0]
        assert len(cell.maes) == 2  # one per seed
        # cross-check against the per-seed summary.json files
        for i, seed in enumerate(cfg.seeds):
            summary = json.loads(
                (tmp_path / "sweep" / "cell000" / f"seed{seed}" / "summary.json")
                .read_text())
            assert summary["final_mae"] == cell.maes[i]

    def test_csv_schema_and_rows(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        grid = {"missing_ratio": [0.2, 0.6], "strategy": ["reliability_weighted",
                                                          "uniform"]}
        result = run_sweep(cfg, grid, cfg.output_dir)
        with open(result.csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert set(rows[0]) == {"dataset_tag", "rho_m", "noniid", "noisy_ratio",
                                "strategy", "ua_fusion", "rel_agg", "seed_count",
                                "mae_mean", "mae_std"}
        assert all(r["dataset_tag"] == "synthetic" for r in rows)
        assert all(r["seed_count"] == "2" for r in rows)
        assert all(float(r["mae_std"]) >= 0.0 for r in rows)

    def test_csv_deterministic_across_reruns(self, tmp_path):
        grid = {"missing_ratio": [0.2, 0.5]}
        payloads = []
        for sub in ("s1", "s2"):
            cfg = config_from_dict(dict(SMALL_RUN, output_dir=str(tmp_path / sub)))
            result = run_sweep(cfg, grid, cfg.output_dir)
            payloads.append(open(result.csv_path, "rb").read())
        assert payloads[0] == payloads[1]

    def test_parallel_workers_match_serial(self, tmp_path):
        grid = {"missing_ratio": [0.2, 0.5]}
        payloads = []
        for sub, workers in (("serial", 1), ("parallel", 2)):
            cfg = config_from_dict(dict(SMALL_RUN, output_dir=str(tmp_path / sub)))
            result = run_sweep(cfg, grid, cfg.output_dir, n_workers=workers)
            payloads.append(open(result.csv_path, "rb").read())
        assert payloads[0] == payloads[1]

    def test_mean_equals_mean_of_seed_values(self, tmp_path):
        import numpy as np

        cfg = self.sweep_config(tmp_path)
        result = run_sweep(cfg, {"missing_ratio": [0.3]}, cfg.output_dir)
        cell = result.cells[0]
        assert cell.mae_mean == pytest.approx(np.mean(cell.maes), abs=1e-15)
        assert cell.mae_std == pytest.approx(np.std(cell.maes), abs=1e-15)

    def test_failed_cell_recorded_and_sweep_continues(self, tmp_path):
        # nonexistent data file fails every seed of every cell
        cfg = config_from_dict(dict(SMALL_RUN,
                                    data_path=str(tmp_path / "missing.jsonl"),
                                    output_dir=str(tmp_path / "sweep")))
        result = run_sweep(cfg, {"missing_ratio": [0.2, 0.4]}, cfg.output_dir)
        assert all(not c.maes and len(c.errors) == 2 for c in result.cells)
        errors = json.loads((tmp_path / "sweep" / "sweep_errors.json").read_text())
        assert set(errors) == {"cell000", "cell001"}
        with open(result.csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["mae_mean"] == "" and r["seed_count"] == "0" for r in rows)


class TestPlotData:
    def make_sweep_csv(self, tmp_path):
        cfg = config_from_dict(dict(SMALL_RUN, seeds=[1],
                                    output_dir=str(tmp_path / "sweep")))
        grid = {"missing_ratio": [0.1, 0.4], "strategy": ["reliability_weighted",
                                                          "uniform"]}
        return run_sweep(cfg, grid, cfg.output_dir).csv_path

    def test_series_and_rows(self, tmp_path):
        csv_path = self.make_sweep_csv(tmp_path)
        written = emit_plotdata(csv_path, tmp_path / "figs")
        assert len(written) == 1
        with open(written[0]) as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], rows[1:]
        assert header[0] == "rho_m"
        assert set(header[1:]) == {"reliability_weighted", "uniform"}
        assert [float(r[0]) for r in data] == [0.1, 0.4]  # sorted ascending
        assert len(data) == 2

    def test_single_strategy_single_series(self, tmp_path):
        cfg = config_from_dict(dict(SMALL_RUN, seeds=[1],
                                    output_dir=str(tmp_path / "sweep")))
        path = run_sweep(cfg, {"missing_ratio": [0.1, 0.3]}, cfg.output_dir).csv_path
        written = emit_plotdata(path, tmp_path / "figs")
        with open(written[0]) as fh:
            header = next(csv.reader(fh))
        assert len(header) == 2  # x axis + one series

    def test_missing_columns_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("rho_m,mae_mean\n0.1,0.5\n")
        with pytest.raises(ValidationError, match="missing columns"):
            emit_plotdata(bad, tmp_path / "figs")
