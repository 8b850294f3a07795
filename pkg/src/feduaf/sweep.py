"""Grid sweeps over federation knobs and strategies, with CSV emission.

A grid is a JSON object whose keys are a subset of
{noniid_intensity, missing_ratio, noisy_ratio, strategy, ablation} and whose
values are lists of settings. Every grid point runs once per seed; the
sweep aggregates final-MAE mean/std per point into sweep.csv (fixed column
set, rows in grid order, byte-deterministic). Failed cells are recorded in
sweep_errors.json and the sweep continues.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, config_from_dict
from .exceptions import ConfigError, ValidationError
from .fedsim import STRATEGIES, run_simulation

GRID_AXES = ("noniid_intensity", "missing_ratio", "noisy_ratio", "strategy", "ablation")

CSV_COLUMNS = ("dataset_tag", "rho_m", "noniid", "noisy_ratio", "strategy",
               "ua_fusion", "rel_agg", "seed_count", "mae_mean", "mae_std")


@dataclass
class SweepCell:
    point: dict
    config: ExperimentConfig
    maes: list
    errors: list

    @property
    def mae_mean(self):
        return float(np.mean(self.maes)) if self.maes else None

    @property
    def mae_std(self):
        return float(np.std(self.maes)) if self.maes else None


@dataclass
class SweepResult:
    cells: list
    csv_path: str


def parse_grid(raw: dict) -> list:
    """Expand a grid spec into points (dicts) in canonical axis order."""
    if not isinstance(raw, dict):
        raise ConfigError("grid must be a JSON object")
    unknown = set(raw) - set(GRID_AXES)
    if unknown:
        raise ConfigError(
            f"unknown grid axis {sorted(unknown)[0]!r}; allowed: {GRID_AXES}"
        )
    axes = [a for a in GRID_AXES if a in raw]
    for a in axes:
        if not isinstance(raw[a], list) or not raw[a]:
            raise ConfigError(f"grid axis {a!r} must be a non-empty list")
        if a == "strategy" and not all(v in STRATEGIES for v in raw[a]):
            raise ConfigError(f"grid axis 'strategy' values must be in {STRATEGIES}")
    if not axes:
        return [{}]
    return [dict(zip(axes, combo))
            for combo in itertools.product(*(raw[a] for a in axes))]


def apply_point(config: ExperimentConfig, point: dict) -> ExperimentConfig:
    """Derive a cell config; revalidates through the normal config path."""
    d = config.to_dict()
    for axis, value in point.items():
        if axis == "strategy":
            d["strategy"] = value
        elif axis == "ablation":
            d["ablation"] = value
        else:
            d["federation"][axis] = value
    return config_from_dict(d)


def _run_cell_seed(args):
    config_dict, seed, run_dir = args
    config = config_from_dict(config_dict)
    try:
        summary = run_simulation(config, seed, run_dir, n_threads=1)
        return ("ok", summary["final_mae"])
    except Exception as exc:  # a failed cell must not abort the sweep
        return ("error", f"seed {seed}: {type(exc).__name__}: {exc}")


def run_sweep(config: ExperimentConfig, grid_raw: dict, out_dir,
              n_workers: int | None = None) -> SweepResult:
    """Run every grid point x seed and write sweep.csv under out_dir."""
    if n_workers is None:
        n_workers = int(os.environ.get("FEDUAF_THREADS", "1"))
    points = parse_grid(grid_raw)
    os.makedirs(out_dir, exist_ok=True)
    cells = []
    jobs = []
    for ci, point in enumerate(points):
        cell_config = apply_point(config, point)
        cells.append(SweepCell(point, cell_config, [], []))
        for seed in config.seeds:
            run_dir = os.path.join(out_dir, f"cell{ci:03d}", f"seed{seed}")
            jobs.append((ci, (cell_config.to_dict(), seed, run_dir)))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_run_cell_seed, (j[1] for j in jobs)))
    else:
        outcomes = [_run_cell_seed(j[1]) for j in jobs]
    for (ci, _), (status, payload) in zip(jobs, outcomes):
        if status == "ok":
            cells[ci].maes.append(payload)
        else:
            cells[ci].errors.append(payload)
    csv_path = os.path.join(out_dir, "sweep.csv")
    write_sweep_csv(csv_path, cells)
    errors = {f"cell{ci:03d}": c.errors for ci, c in enumerate(cells) if c.errors}
    if errors:
        with open(os.path.join(out_dir, "sweep_errors.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(errors, fh, indent=2, sort_keys=True)
    return SweepResult(cells=cells, csv_path=csv_path)


def _dataset_tag(config: ExperimentConfig) -> str:
    if config.data_path:
        return os.path.basename(config.data_path)
    return "synthetic"


def write_sweep_csv(path, cells: list):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for cell in cells:
            cfg = cell.config
            writer.writerow([
                _dataset_tag(cfg),
                repr(float(cfg.federation.missing_ratio)),
                repr(float(cfg.federation.noniid_intensity)),
                repr(float(cfg.federation.noisy_ratio)),
                cfg.strategy,
                int(cfg.ablation.ua_fusion),
                int(cfg.ablation.rel_agg),
                len(cell.maes),
                "" if cell.mae_mean is None else repr(cell.mae_mean),
                "" if cell.mae_std is None else repr(cell.mae_std),
            ])


# ------------------------------------------------------------ plot data

_PLOT_X_AXES = (("rho_m", "fig_missing_ratio.csv"),
                ("noniid", "fig_noniid.csv"),
                ("noisy_ratio", "fig_noisy_ratio.csv"))


def _series_label(row: dict) -> str:
    label = row["strategy"]
    if row["ua_fusion"] != "1" or row["rel_agg"] != "1":
        label += f".ua{row['ua_fusion']}.rel{row['rel_agg']}"
    return label


def emit_plotdata(sweep_csv, out_dir) -> list:
    """Write one tidy per-figure CSV per varying numeric axis.

    Each output has the x-axis column first, then one mae_mean column per
    strategy/ablation series, rows sorted by x ascending.
    """
    with open(sweep_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(CSV_COLUMNS) - set(reader.fieldnames):
            missing = sorted(set(CSV_COLUMNS) - set(reader.fieldnames or []))
            raise ValidationError(f"sweep csv missing columns: {missing}")
        rows = [r for r in reader]
    if not rows:
        raise ValidationError("sweep csv has no data rows")
    os.makedirs(out_dir, exist_ok=True)
    candidates = [(axis, fname) for axis, fname in _PLOT_X_AXES
                  if len({r[axis] for r in rows}) >= 2]
    if not candidates:
        candidates = list(_PLOT_X_AXES)
    written = []
    for axis, fname in candidates:
        xs = sorted({float(r[axis]) for r in rows})
        series = sorted({_series_label(r) for r in rows})
        table = {}
        for r in rows:
            if r["mae_mean"] == "":
                continue
            key = (float(r[axis]), _series_label(r))
            table.setdefault(key, []).append(float(r["mae_mean"]))
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([axis] + series)
            for x in xs:
                row = [repr(x)]
                for s in series:
                    vals = table.get((x, s))
                    row.append("" if vals is None else repr(float(np.mean(vals))))
                writer.writerow(row)
        written.append(path)
    return written
