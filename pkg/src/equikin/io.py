"""Marker and force-plate ingestion, trial bundles and report serialization.

File formats
------------
Markers: CSV with header ``time_s,<segment>:<marker>:x_mm,<segment>:<marker>:y_mm,
<segment>:<marker>:z_mm,...``.  An empty cell marks a missing sample.

GRF: CSV with header ``time_s,fx_N,fy_N,fz_N,copx_m,copy_m,copz_m`` and an
optional trailing ``tz_Nm`` column (free moment about the vertical).

Numbers are written with ``repr`` so that parsing a written file restores
every value to within one rounding step.  Reading and writing never depend
on the process locale.
"""

from __future__ import annotations

import csv
import io as _io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .dynamics import GrfSeries
from .energetics import CATEGORIES, PHASES, VARIANTS, EnergySummary, FractionTable
from .errors import OutputError, ParseError
from .kinematics import MarkerFrameSeries, UNIFORM_TOL
from .model import LimbChain, build_chain, chain_to_config
from .pipeline import (EXTREMA_QUANTITIES, GRF_AXES, GROUND, QUANTITIES, UNITS,
                       AnalysisReport)

logger = logging.getLogger(__name__)

GRF_COLUMNS = ("time_s", "fx_N", "fy_N", "fz_N", "copx_m", "copy_m", "copz_m")
FREE_MOMENT_COLUMN = "tz_Nm"
_AXES = ("x", "y", "z")


class GrfValidationWarning(UserWarning):
    """Force-plate rows were altered during ingestion."""


@dataclass
class TrialBundle:
    trial_id: str
    markers: MarkerFrameSeries
    grf: GrfSeries
    chain: LimbChain
    metadata: dict[str, Any] = field(default_factory=dict)


def _fmt(value: float) -> str:
    return "" if not math.isfinite(value) else repr(float(value))


def _read_rows(path: Path) -> list[list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    rows = [r for r in csv.reader(_io.StringIO(text, newline="")) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    return rows


def _number(cell: str, path, line: int, column: str) -> float:
    cell = cell.strip()
    if cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"{path}:{line}: column {column!r} holds non-numeric value {cell!r}") from None


def _parse_times(values: list[float], path, lines: list[int]) -> np.ndarray:
    times = np.asarray(values, dtype=float)
    for i in range(len(times)):
        if not math.isfinite(times[i]):
            raise ParseError(f"{path}:{lines[i]}: missing or invalid timestamp")
        if i and times[i] <= times[i - 1]:
            kind = "duplicated" if times[i] == times[i - 1] else "non-monotonic"
            raise ParseError(f"{path}:{lines[i]}: {kind} timestamp {times[i]!r}")
    if len(times) >= 2:
        dt = (times[-1] - times[0]) / (len(times) - 1)
        bad = np.flatnonzero(np.abs(np.diff(times) - dt) > UNIFORM_TOL)
        if len(bad):
            raise ParseError(f"{path}:{lines[bad[0] + 1]}: timestamps are not uniformly spaced")
    return times


def parse_markers(path: str | Path, chain: LimbChain | None = None) -> MarkerFrameSeries:
    """Read a wide marker CSV (millimeters) into a series in meters.

    When ``chain`` is given, every segment named in the header must be one
    the chain tracks.
    """
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "time_s" or (len(header) - 1) % 3 != 0 or len(header) < 4:
        raise ParseError(f"{path}:1: malformed header; expected time_s followed by x/y/z_mm triples")
    labels = []
    for k in range(1, len(header), 3):
        parts = [h.rsplit(":", 1) for h in header[k:k + 3]]
        if any(len(p) != 2 for p in parts):
            raise ParseError(f"{path}:1: malformed marker column near {header[k]!r}")
        base = {p[0] for p in parts}
        if len(base) != 1 or [p[1] for p in parts] != [f"{a}_mm" for a in _AXES]:
            raise ParseError(f"{path}:1: columns {header[k:k + 3]} are not an x/y/z_mm triple")
        label = parts[0][0]
        if label.count(":") != 1 or not all(label.split(":")):
            raise ParseError(f"{path}:1: marker label {label!r} is not <segment>:<marker>")
        labels.append(label)
    if len(set(labels)) != len(labels):
        raise ParseError(f"{path}:1: duplicated marker label")
    if chain is not None:
        known = set(chain.tracked_segments)
        for label in labels:
            if label.split(":")[0] not in known:
                raise ParseError(f"{path}:1: unknown segment label {label.split(':')[0]!r}")

    times, coords, line_numbers = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{line}: expected {len(header)} columns, found {len(row)}")
        times.append(_number(row[0], path, line, "time_s"))
        coords.append([_number(c, path, line, header[i + 1]) for i, c in enumerate(row[1:])])
        line_numbers.append(line)
    if not times:
        raise ParseError(f"{path}: no data rows")
    t = _parse_times(times, path, line_numbers)
    pos = np.asarray(coords, dtype=float).reshape(len(t), len(labels), 3) * 1e-3
    valid = np.isfinite(pos).all(axis=2)
    pos[~valid] = np.nan
    if (~valid).any():
        logger.info("%s: %d missing marker samples", path, int((~valid).sum()))
    return MarkerFrameSeries(t, tuple(labels), pos, valid)


def parse_grf(path: str | Path, cop_threshold: float = 0.0) -> GrfSeries:
    """Read a force-plate CSV.

    Rows with negative vertical force are clamped to zero, flagged and
    reported with a :class:`GrfValidationWarning`.  COP is kept only where
    the vertical force exceeds ``cop_threshold`` (N).
    """
    rows = _read_rows(path)
    header = tuple(h.strip() for h in rows[0])
    if header not in (GRF_COLUMNS, GRF_COLUMNS + (FREE_MOMENT_COLUMN,)):
        raise ParseError(f"{path}:1: malformed header; expected {','.join(GRF_COLUMNS)}[,tz_Nm]")
    data, lines = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{line}: expected {len(header)} columns, found {len(row)}")
        values = [_number(c, path, line, header[i]) for i, c in enumerate(row)]
        if any(not math.isfinite(v) for v in values[1:4]):
            raise ParseError(f"{path}:{line}: force components must be present")
        data.append(values)
        lines.append(line)
    if not data:
        raise ParseError(f"{path}: no data rows")
    arr = np.asarray(data, dtype=float)
    t = _parse_times(list(arr[:, 0]), path, lines)
    force = arr[:, 1:4].copy()
    clamped = force[:, 2] < 0
    if clamped.any():
        first = lines[int(np.flatnonzero(clamped)[0])]
        warnings.warn(f"{path}: {int(clamped.sum())} rows with negative vertical force clamped "
                      f"to zero (first at line {first})", GrfValidationWarning, stacklevel=2)
        force[clamped, 2] = 0.0
    cop = arr[:, 4:7].copy()
    cop_valid = np.isfinite(cop).all(axis=1) & (force[:, 2] > cop_threshold)
    cop[~cop_valid] = np.nan
    free = None
    if len(header) == 8:
        free = np.nan_to_num(arr[:, 7])
    return GrfSeries(t, force, cop, free, cop_valid, clamped)


def _write_text(path: Path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = _io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_markers(path: str | Path, markers: MarkerFrameSeries) -> None:
    header = ["time_s"] + [f"{lab}:{a}_mm" for lab in markers.labels for a in _AXES]
    mm = markers.positions * 1e3
    rows = []
    for i, t in enumerate(markers.times):
        row = [_fmt(t)]
        for m in range(len(markers.labels)):
            ok = markers.valid[i, m]
            row.extend(_fmt(v) if ok else "" for v in mm[i, m])
        rows.append(row)
    _write_text(Path(path), _csv_text(header, rows))


def write_grf(path: str | Path, grf: GrfSeries) -> None:
    header = list(GRF_COLUMNS) + ([FREE_MOMENT_COLUMN] if grf.free_moment is not None else [])
    rows = []
    for i, t in enumerate(grf.times):
        row = [_fmt(t)] + [_fmt(v) for v in grf.force[i]]
        row += [_fmt(v) if grf.cop_valid[i] else "" for v in grf.cop[i]]
        if grf.free_moment is not None:
            row.append(_fmt(grf.free_moment[i]))
        rows.append(row)
    _write_text(Path(path), _csv_text(header, rows))


def _yaml_text(data) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, allow_unicode=False)


def save_bundle(bundle: TrialBundle, directory: str | Path) -> dict[str, Path]:
    """Write a trial as ``markers.csv``, ``grf.csv``, ``chain.yaml`` and ``trial.yaml``."""
    d = Path(directory)
    paths = {"markers": d / "markers.csv", "grf": d / "grf.csv",
             "chain": d / "chain.yaml", "trial": d / "trial.yaml"}
    write_markers(paths["markers"], bundle.markers)
    write_grf(paths["grf"], bundle.grf)
    _write_text(paths["chain"], _yaml_text(chain_to_config(bundle.chain)))
    _write_text(paths["trial"], _yaml_text({"trial_id": bundle.trial_id,
                                            "metadata": bundle.metadata}))
    return paths


def load_bundle(directory: str | Path) -> TrialBundle:
    d = Path(directory)
    try:
        chain_cfg = yaml.safe_load((d / "chain.yaml").read_text(encoding="utf-8"))
        trial = yaml.safe_load((d / "trial.yaml").read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ParseError(f"{d}: {exc}") from exc
    chain = build_chain(chain_cfg)
    markers = parse_markers(d / "markers.csv", chain)
    grf = parse_grf(d / "grf.csv")
    return TrialBundle(str(trial.get("trial_id", d.name)), markers, grf, chain,
                       dict(trial.get("metadata") or {}))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _g(value) -> str:
    """Fixed 10-significant-digit text, so reports do not depend on float repr noise."""
    if value is None:
        return "undefined"
    value = float(value)
    if not math.isfinite(value):
        return "nan"
    text = "%.10g" % value
    return "0" if text == "-0" else text


def _energy_rows(summary: EnergySummary, variant: str):
    rows = []
    for joint in summary.joints:
        row = [joint]
        for phase in PHASES:
            e = summary.entry(joint, phase, variant)
            row += [_g(e.generated), _g(e.absorbed), _g(e.net)]
        rows.append(row)
    return rows


ENERGY_HEADER = ["joint"] + [f"{phase}_{col}_J_per_kg" for phase in PHASES
                             for col in ("generated", "absorbed", "net")]
FRACTION_HEADER = ["joint"] + [f"{phase}_{cat}_pct" for phase in PHASES for cat in CATEGORIES]
EXTREMA_HEADER = ["quantity", "joint", "axis", "phase", "max", "max_sd", "max_pct_phase",
                  "min", "min_sd", "min_pct_phase"]


def energy_table_text(summary: EnergySummary, variant: str = "combined",
                      total: bool = True) -> str:
    """Work per joint and phase, one row per joint plus a ``total`` row.

    Absorbed work is negative and ``net = generated + absorbed``.
    """
    rows = _energy_rows(summary, variant)
    if total and summary.joints:
        row = ["total"]
        for phase in PHASES:
            e = summary.total(phase, variant)
            row += [_g(e.generated), _g(e.absorbed), _g(e.net)]
        rows.append(row)
    return _csv_text(ENERGY_HEADER, rows)


def write_energy_table(path: str | Path, summary: EnergySummary, variant: str = "combined",
                       total: bool = True) -> None:
    _write_text(Path(path), energy_table_text(summary, variant, total))


def fraction_table_text(table: FractionTable) -> str:
    """Each joint's share of its phase's work, then the phases' shares of the stride."""
    rows = []
    for joint in table.joints:
        rows.append([joint] + [_g(table.joint_share[(cat, phase, joint)])
                               for phase in PHASES for cat in CATEGORIES])
    if table.joints:
        rows.append(["stride"] + [_g(table.phase_share[(cat, phase)])
                                  for phase in PHASES for cat in CATEGORIES])
    return _csv_text(FRACTION_HEADER, rows)


def _curve_text(report: AnalysisReport, joint: str, quantities) -> str:
    header, columns = ["percent_stride"], [report.percent]
    for quantity in quantities:
        axes = QUANTITIES[quantity][0] if quantity in QUANTITIES else GRF_AXES
        agg = report.curves[(joint, quantity)]
        mean, sd = np.asarray(agg.mean), np.asarray(agg.sd)
        for k, axis in enumerate(axes):
            header += [f"{quantity}_{axis}_mean", f"{quantity}_{axis}_sd"]
            columns += [mean[:, k], sd[:, k]]
    rows = [[_g(c[i]) for c in columns] for i in range(len(report.percent))]
    return _csv_text(header, rows)


def _report_files(report: AnalysisReport, results=None) -> dict[str, str]:
    files: dict[str, str] = {}
    for joint in report.joints:
        files[f"curves/{joint}.csv"] = _curve_text(report, joint, QUANTITIES)
    if (GROUND, "grf") in report.curves:
        files[f"curves/{GROUND}.csv"] = _curve_text(report, GROUND, ("grf",))

    for quantity in EXTREMA_QUANTITIES + ("grf",):
        rows = [[r.quantity, r.joint, r.axis, r.phase, _g(r.maximum), _g(r.max_sd),
                 _g(r.max_percent), _g(r.minimum), _g(r.min_sd), _g(r.min_percent)]
                for r in report.extrema.get(quantity, [])]
        files[f"extrema_{quantity}.csv"] = _csv_text(EXTREMA_HEADER, rows)

    for variant in VARIANTS:
        files[f"energy_{variant}.csv"] = energy_table_text(report.energy[variant], variant)
        files[f"energy_{variant}_sd.csv"] = energy_table_text(report.energy_sd[variant], variant,
                                                              total=False)
        if variant in report.fractions:
            mean, sd = report.fractions[variant]
            files[f"fractions_{variant}.csv"] = fraction_table_text(mean)
            files[f"fractions_{variant}_sd.csv"] = fraction_table_text(sd)
        else:
            files[f"fractions_{variant}.csv"] = _csv_text(FRACTION_HEADER, [])
            files[f"fractions_{variant}_sd.csv"] = _csv_text(FRACTION_HEADER, [])

    rows = []
    for (joint, kind, axis, phase), (mean, sd) in sorted(report.axis_energy.items()):
        rows.append([joint, kind, axis, phase, _g(mean.generated), _g(mean.absorbed),
                     _g(mean.net), _g(sd.generated), _g(sd.absorbed)])
    files["energy_axes.csv"] = _csv_text(
        ["joint", "kind", "axis", "phase", "generated_J_per_kg", "absorbed_J_per_kg",
         "net_J_per_kg", "generated_sd", "absorbed_sd"], rows)

    rows = [["trials", str(len(report.trial_ids))], ["grid_points", str(report.grid_points)],
            ["stance_fraction_mean", _g(report.stance_fraction.mean)],
            ["stance_fraction_sd", _g(report.stance_fraction.sd)],
            ["boundary_index", str(report.boundary_index)]]
    files["summary.csv"] = _csv_text(["key", "value"], rows)
    if results is not None:
        rows = [[r.trial_id, _g(r.phases.stride_start), _g(r.phases.stance_start),
                 _g(r.phases.stance_end), _g(r.phases.stride_end), _g(r.phases.stance_fraction),
                 str(len(r.times))] for r in results]
        files["trials.csv"] = _csv_text(["trial_id", "stride_start_s", "stance_start_s",
                                         "stance_end_s", "stride_end_s", "stance_fraction",
                                         "frames"], rows)
    return files


def _report_plots(report: AnalysisReport) -> dict[str, str]:
    from .plots import line_chart

    boundary = float(report.percent[report.boundary_index])
    plots = {}
    for quantity in ("moment", "force", "power_rotation", "power_translation"):
        axes, order = QUANTITIES[quantity]
        for k in order:
            curves = {}
            for joint in report.joints:
                agg = report.curves[(joint, quantity)]
                curves[joint] = (np.asarray(agg.mean)[:, k], np.asarray(agg.sd)[:, k])
            if curves:
                plots[f"plots/{quantity}_{axes[k]}.svg"] = line_chart(
                    report.percent, curves, f"{quantity} {axes[k]}", UNITS[quantity], boundary)
    if (GROUND, "grf") in report.curves:
        agg = report.curves[(GROUND, "grf")]
        curves = {axis: (np.asarray(agg.mean)[:, k], np.asarray(agg.sd)[:, k])
                  for k, axis in enumerate(GRF_AXES)}
        plots["plots/grf.svg"] = line_chart(report.percent, curves, "ground reaction force",
                                            UNITS["grf"], boundary)
    return plots


def write_reports(report: AnalysisReport, out_dir: str | Path, results=None,
                  plots: bool = True) -> list[Path]:
    """Write every report table (and SVG plots) under ``out_dir``.

    All content is rendered before the first file is written, so a failure
    while formatting leaves no partial report behind.  Returns the written
    paths in a fixed order.
    """
    files = _report_files(report, results)
    if plots:
        files.update(_report_plots(report))
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(files):
            path = out / name
            _write_text(path, files[name])
            written.append(path)
    except OSError as exc:
        raise OutputError(f"cannot write reports to {out}: {exc}") from exc
    return written
