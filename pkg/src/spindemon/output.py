"""CSV and JSON writers for harness results.

CSV schemas are fixed: sweeps write (grid_value, shots, successes, median,
p25, p75, analytic); fits write (param, estimate, std_error).  JSON files
mirror the CSV rows and add a metadata header with the config hash, seed,
and package version.  Floats are serialized with repr so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from typing import IO, Iterable

from . import __version__
from .ancilla import NuclearHistogram
from .fitting import FitResult
from .harness import ProjectionScenario, ShotRecord, SweepResult

SWEEP_COLUMNS = ("grid_value", "shots", "successes", "median", "p25", "p75", "analytic")
FIT_COLUMNS = ("param", "estimate", "std_error")
SHOT_COLUMNS = (
    "shot_index",
    "triggered",
    "trigger_time_s",
    "n_resets",
    "spin_at_trigger",
    "n_ionizations",
    "n_missed_subrise",
    "n_missed_sampled",
)
PROJECTION_COLUMNS = ("label", "cutoff_hz", "in_rate_total", "t_rise_s", "p_miss", "plateau")


def build_metadata(cfg_hash: str, master_seed: int, extra: dict | None = None) -> dict:
    meta = {"version": __version__, "config_hash": cfg_hash, "master_seed": master_seed}
    if extra:
        meta.update(extra)
    return meta


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sweep_row(result: SweepResult) -> list:
    return [
        result.grid_value,
        result.shots,
        result.successes,
        result.median,
        result.p25,
        result.p75,
        result.analytic,
    ]


def _fit_rows(fit: FitResult) -> list[list]:
    rows = [
        ["prior", fit.prior, fit.std_errors["prior"]],
        ["rate_gap", fit.rate_gap, fit.std_errors["rate_gap"]],
        ["missed_probability", fit.missed_probability, fit.std_errors["missed_probability"]],
        ["residual_norm", fit.residual_norm, ""],
    ]
    return rows


def _shot_row(record: ShotRecord) -> list:
    return [
        record.shot_index,
        int(record.triggered),
        "" if record.trigger_time is None else record.trigger_time,
        record.n_resets,
        "" if record.spin_at_trigger is None else record.spin_at_trigger.name.lower(),
        record.n_ionizations,
        record.n_missed_subrise,
        record.n_missed_sampled,
    ]


def _projection_row(row: ProjectionScenario) -> list:
    return [row.label, row.cutoff, row.in_rate_total, row.t_rise, row.p_miss, row.plateau]


def _write_csv(stream: IO[str], columns: tuple[str, ...], rows: Iterable[list]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(value) for value in row])


def _write_json(
    stream: IO[str], columns: tuple[str, ...], rows: Iterable[list], metadata: dict
) -> None:
    payload = {
        "metadata": metadata,
        "rows": [dict(zip(columns, row)) for row in rows],
    }
    json.dump(payload, stream, indent=2, sort_keys=True)
    stream.write("\n")


def write_sweep(stream, results: list[SweepResult], fmt: str, metadata: dict) -> None:
    rows = [_sweep_row(r) for r in results]
    if fmt == "json":
        meta = dict(metadata)
        meta["abandoned_total"] = sum(r.n_abandoned for r in results)
        _write_json(stream, SWEEP_COLUMNS, rows, meta)
    else:
        _write_csv(stream, SWEEP_COLUMNS, rows)


def write_fit(stream, fit: FitResult, fmt: str, metadata: dict) -> None:
    rows = _fit_rows(fit)
    if fmt == "json":
        _write_json(stream, FIT_COLUMNS, rows, metadata)
    else:
        _write_csv(stream, FIT_COLUMNS, rows)


def write_shots(stream, records: list[ShotRecord], fmt: str, metadata: dict) -> None:
    rows = [_shot_row(r) for r in records]
    if fmt == "json":
        _write_json(stream, SHOT_COLUMNS, rows, metadata)
    else:
        _write_csv(stream, SHOT_COLUMNS, rows)


def write_projection(stream, rows: list[ProjectionScenario], fmt: str, metadata: dict) -> None:
    data = [_projection_row(r) for r in rows]
    if fmt == "json":
        _write_json(stream, PROJECTION_COLUMNS, data, metadata)
    else:
        _write_csv(stream, PROJECTION_COLUMNS, data)


def write_histogram(stream, histogram: NuclearHistogram, fmt: str, metadata: dict,
                    bins: int | None = None) -> None:
    centers, counts = histogram.histogram(bins)
    rows = [[float(c), int(n)] for c, n in zip(centers, counts)]
    if fmt == "json":
        _write_json(stream, ("bin_center", "count"), rows, metadata)
    else:
        _write_csv(stream, ("bin_center", "count"), rows)
