"""File formats: station CSVs, record panels, grids, draw archives and tables.

Every text output starts with a comment line::

    # artifact=recordbreak <version> config_hash=<hash> seed=<seed>

and readers skip lines starting with ``#``. Floats are written with
``repr`` so that archives round-trip exactly.
"""
import csv
from dataclasses import dataclass, field
import datetime as dt
import json
from pathlib import Path

import numpy as np

from . import __version__, mcmc
from .predict import GridSpec
from .records import (JJA_DAYS, SEED_DAY, SIGNALS, DailyTemperatureSeries, RecordPanel, day_of_year,
                      label_to_month_day)

STATION_HEADER = ["site_id", "x_km", "y_km", "dist_coast_km", "sx"]
OBS_HEADER = ["date", "tmax", "tmin"]
PANEL_HEADER = ["site_id", "year", "day", "signal", "mark", "r"]
SITES_HEADER = ["site_id", "x_km", "y_km", "dist_coast_km", "sx"]
MISSING_HEADER = ["site_id", "year", "day", "signal"]
GRID_HEADER = ["cell_id", "x_km", "y_km", "dist_coast_km"]
DRAWS_HEADER = ["chain", "draw", "sweep", "parameter", "value"]
MARK_NAMES = {0: "ZERO", 1: "ONE"}
WINDOW = (SEED_DAY,) + JJA_DAYS


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class Provenance:
    config_hash: str = "none"
    seed: int = 0

    def line(self):
        return f"# artifact=recordbreak {__version__} config_hash={self.config_hash} seed={self.seed}"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_table(path, header, rows, prov):
    """CSV with the provenance comment, a header row and ``rows``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(prov.line() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path, header=None, keep_header=False):
    """Rows (lists of strings) of a CSV written by :func:`write_table`.

    The header row is checked against ``header`` when given and dropped
    unless ``keep_header`` is set.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    rows = list(csv.reader(lines))
    if not rows:
        raise DataError(f"{path}: empty file")
    if header is not None and rows[0] != list(header):
        raise DataError(f"{path}: expected header {','.join(header)}, found {','.join(rows[0])}")
    return rows if keep_header else rows[1:]


# -- station files -----------------------------------------------------------

@dataclass
class IngestReport:
    """Missing fractions per station and signal over the study window."""

    missing: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def rows(self):
        return [(sid, sig, frac) for (sid, sig), frac in sorted(self.missing.items())]


def _number(text, where):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{where}: non-finite temperature")
    return value


def _station_blocks(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh))
                    if r and not r[0].startswith("#")]
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    blocks, cur = [], None
    for lineno, row in rows:
        row = [c.strip() for c in row]
        if row == STATION_HEADER:
            cur = {"meta": None, "obs": [], "line": lineno}
            blocks.append(cur)
            continue
        if cur is None:
            raise DataError(f"{path}:{lineno}: expected header {','.join(STATION_HEADER)}")
        if cur["meta"] is None:
            if len(row) != len(STATION_HEADER):
                raise DataError(f"{path}:{lineno}: station line needs {len(STATION_HEADER)} fields")
            cur["meta"] = (lineno, row)
        elif row == OBS_HEADER:
            continue
        else:
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: observation rows are date,tmax,tmin")
            cur["obs"].append((lineno, row))
    if not blocks:
        raise DataError(f"{path}: no station header found")
    return blocks


def _parse_block(path, block):
    lineno, meta = block["meta"] if block["meta"] else (block["line"], None)
    if meta is None:
        raise DataError(f"{path}:{lineno}: station header without a station line")
    site_id = meta[0]
    if not site_id:
        raise DataError(f"{path}:{lineno}: empty site_id")
    try:
        x_km, y_km, dist = (float(v) for v in meta[1:4])
        sx = float(meta[4]) if meta[4] else None
    except ValueError:
        raise DataError(f"{path}:{lineno}: station coordinates must be numeric") from None
    if dist < 0:
        raise DataError(f"{path}:{lineno}: negative distance to coast")
    if sx is not None and not sx > 0:
        raise DataError(f"{path}:{lineno}: sx must be positive")
    values = {}
    last = None
    for ln, (date_text, tmax, tmin) in block["obs"]:
        where = f"{path}:{ln}"
        try:
            date = dt.date.fromisoformat(date_text)
        except ValueError:
            raise DataError(f"{where}: bad date {date_text!r}") from None
        if last is not None:
            if date == last:
                raise DataError(f"{where}: duplicate date {date_text} for {site_id}")
            if date < last:
                raise DataError(f"{where}: dates not increasing ({date_text} after {last})")
        last = date
        label = day_of_year(date)
        if label is None or label not in WINDOW:
            continue
        values[(date.year, label)] = (_number(tmax, where), _number(tmin, where))
    if not values:
        raise DataError(f"{path}: station {site_id} has no observations in the study window")
    return (site_id, x_km, y_km, dist, sx), values


def ingest(paths):
    """Read station CSV files; returns (series list, :class:`IngestReport`).

    The day window runs from the seed day to the last observed window day
    and the years span all stations; absent entries become missing values.
    """
    report = IngestReport()
    parsed = []
    for path in paths:
        for block in _station_blocks(path):
            parsed.append(_parse_block(path, block))
    ids = [meta[0] for meta, _ in parsed]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate site_id across station files")
    keys = [k for _, values in parsed for k in values]
    years = np.arange(min(y for y, _ in keys), max(y for y, _ in keys) + 1)
    days = np.arange(SEED_DAY, max(label for _, label in keys) + 1)
    series = []
    for (site_id, x_km, y_km, dist, sx), values in parsed:
        tmax = np.full((years.size, days.size), np.nan)
        tmin = np.full((years.size, days.size), np.nan)
        for (year, label), (a, b) in values.items():
            tmax[year - years[0], label - SEED_DAY] = a
            tmin[year - years[0], label - SEED_DAY] = b
        absent = years.size * days.size - len(values)
        if absent:
            report.warnings.append(f"{site_id}: {absent} window entries absent, treated as missing")
        report.missing[(site_id, "max")] = float(np.isnan(tmax).mean())
        report.missing[(site_id, "min")] = float(np.isnan(tmin).mean())
        series.append(DailyTemperatureSeries(site_id, x_km, y_km, dist, sx, years, days, tmax, tmin))
    return series, report


def write_stations(path, series, prov):
    """One CSV holding a block per station."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(prov.line() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for s in series:
            w.writerow(STATION_HEADER)
            w.writerow([s.site_id, _fmt(float(s.x_km)), _fmt(float(s.y_km)),
                        _fmt(float(s.dist_coast)), _fmt(None if s.sx is None else float(s.sx))])
            w.writerow(OBS_HEADER)
            for ti, year in enumerate(s.years):
                for li, label in enumerate(s.days):
                    date = dt.date(int(year), *label_to_month_day(label))
                    w.writerow([date.isoformat(), _temp(s.tmax[ti, li]), _temp(s.tmin[ti, li])])


def _temp(v):
    return "" if np.isnan(v) else f"{v:.1f}"


# -- record panel -------------------------------------------------------------

def write_panel(run_dir, panel, prov):
    """panel.csv (marks), sites.csv and missing.csv under ``run_dir/panel``."""
    out = Path(run_dir) / "panel"
    rows = []
    for i, sid in enumerate(panel.site_ids):
        for ti, year in enumerate(panel.years):
            for li, day in enumerate(panel.days):
                for j, sig in enumerate(SIGNALS):
                    m = int(panel.marks[j, ti, li, i])
                    rows.append((sid, int(year), int(day), sig, MARK_NAMES.get(m, "TIED"),
                                 m if m >= 2 else ""))
    write_table(out / "panel.csv", PANEL_HEADER, rows, prov)
    sx = panel.sx if panel.sx is not None else [None] * panel.n_sites
    write_table(out / "sites.csv", SITES_HEADER,
                [(sid, float(c[0]), float(c[1]), float(d), None if s is None else float(s))
                 for sid, c, d, s in zip(panel.site_ids, panel.coords, panel.dist_coast, sx)], prov)
    miss = []
    idx = np.argwhere(panel.missing)
    order = np.lexsort((idx[:, 0], idx[:, 2], idx[:, 1], idx[:, 3]))
    for j, ti, li, i in idx[order]:
        miss.append((panel.site_ids[i], int(panel.years[ti]), int(panel.days[li]), SIGNALS[j]))
    write_table(out / "missing.csv", MISSING_HEADER, miss, prov)
    return out


def read_panel(run_dir):
    """Inverse of :func:`write_panel`."""
    base = Path(run_dir) / "panel"
    sites = read_table(base / "sites.csv", SITES_HEADER)
    ids = [r[0] for r in sites]
    pos = {sid: i for i, sid in enumerate(ids)}
    coords = np.array([[float(r[1]), float(r[2])] for r in sites])
    dist = np.array([float(r[3]) for r in sites])
    sx = np.array([float(r[4]) for r in sites]) if all(r[4] for r in sites) else None
    rows = read_table(base / "panel.csv", PANEL_HEADER)
    years = np.array(sorted({int(r[1]) for r in rows}))
    days = np.array(sorted({int(r[2]) for r in rows}))
    marks = np.full((2, years.size, days.size, len(ids)), -1, dtype=np.int32)
    for sid, year, day, sig, mark, r in rows:
        if sid not in pos or sig not in SIGNALS:
            raise DataError(f"panel row references unknown site or signal: {sid},{sig}")
        if mark == "TIED":
            value = int(r)
            if value < 2:
                raise DataError("tied marks need r >= 2")
        elif mark in ("ZERO", "ONE"):
            value = 0 if mark == "ZERO" else 1
        else:
            raise DataError(f"unknown mark {mark!r}")
        marks[SIGNALS.index(sig), int(year) - years[0], int(day) - days[0], pos[sid]] = value
    if np.any(marks < 0):
        raise DataError("panel is incomplete: some (site, year, day, signal) cells are absent")
    missing = np.zeros(marks.shape, dtype=bool)
    for sid, year, day, sig in read_table(base / "missing.csv", MISSING_HEADER):
        missing[SIGNALS.index(sig), int(year) - years[0], int(day) - days[0], pos[sid]] = True
    return RecordPanel(marks=marks, missing=missing, site_ids=ids, years=years, days=days,
                       coords=coords, dist_coast=dist, sx=sx)


# -- grid ---------------------------------------------------------------------

def read_grid(path, resolution=25.0):
    """Grid CSV ``cell_id,x_km,y_km,dist_coast_km[,sx]``; x = log(sx) when given."""
    rows = read_table(path, keep_header=True)
    header, body = rows[0], rows[1:]
    if header[:4] != GRID_HEADER or header[4:] not in ([], ["sx"]):
        raise DataError(f"{path}: grid header must be {','.join(GRID_HEADER)}[,sx]")
    if not body:
        raise DataError(f"{path}: grid has no cells")
    try:
        coords = np.array([[float(r[1]), float(r[2])] for r in body])
        dist = np.array([float(r[3]) for r in body])
        x = np.log([float(r[4]) for r in body]) if len(header) == 5 else None
    except (ValueError, IndexError):
        raise DataError(f"{path}: malformed grid row") from None
    try:
        return GridSpec(coords, dist, x, resolution, [r[0] for r in body])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_grid(path, grid, prov):
    header = GRID_HEADER + (["sx"] if grid.x is not None else [])
    rows = []
    for k, cid in enumerate(grid.cell_ids):
        row = [cid, float(grid.coords[k, 0]), float(grid.coords[k, 1]), float(grid.dist_coast[k])]
        if grid.x is not None:
            row.append(float(np.exp(grid.x[k])))
        rows.append(row)
    write_table(path, header, rows, prov)


# -- draw archive ---------------------------------------------------------------

def _param_rows(draws):
    rows = []
    for c in range(draws.n_chains):
        for d in range(draws.n_draws):
            sweep = int(draws.sweep_index[c, d])
            for name in sorted(draws.params):
                arr = draws.params[name][c, d]
                for idx in np.ndindex(arr.shape):
                    label = name + ("[" + ",".join(map(str, idx)) + "]" if idx else "")
                    rows.append((c, d, sweep, label, float(arr[idx])))
    return rows


def write_draws(run_dir, draws, prov, extra_meta=None):
    """draws.csv (one row per chain, draw and parameter), w.npy and meta.json."""
    out = Path(run_dir) / "draws"
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "draws.csv", DRAWS_HEADER, _param_rows(draws), prov)
    if draws.w is not None:
        np.save(out / "w.npy", np.ascontiguousarray(draws.w))
    meta = {
        "artifact": f"recordbreak {__version__}",
        "config_hash": prov.config_hash,
        "seed": prov.seed,
        "variant": draws.variant.name,
        "shapes": {k: list(v.shape[2:]) for k, v in sorted(draws.params.items())},
        "n_chains": draws.n_chains,
        "n_draws": draws.n_draws,
        "T": draws.T,
        "n_days": draws.n_days,
        "coords": draws.coords.tolist(),
        "dist_coast": draws.dist_coast.tolist(),
        "x": None if draws.x is None else draws.x.tolist(),
        "seeds": [int(s) for s in draws.seeds],
        "acceptance": [{k: np.atleast_1d(v).tolist() for k, v in sorted(a.items())}
                       for a in draws.acceptance],
        "prior": {k: v for k, v in sorted(vars(draws.prior).items())},
        "has_w": draws.w is not None,
    }
    meta.update(extra_meta or {})
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out


def read_meta(run_dir):
    path = Path(run_dir) / "draws" / "meta.json"
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no draw archive in {Path(run_dir)}; run 'fit' first") from None


def read_draws(run_dir):
    """Rebuild :class:`~recordbreak.mcmc.PosteriorDraws` from an archive."""
    base = Path(run_dir) / "draws"
    meta = read_meta(run_dir)
    if meta["variant"] == "M0":
        raise DataError("the stationary variant has no posterior draws")
    nc, nd = meta["n_chains"], meta["n_draws"]
    params = {k: np.empty((nc, nd) + tuple(s)) for k, s in meta["shapes"].items()}
    sweeps = np.empty((nc, nd), dtype=int)
    for c, d, sweep, label, value in read_table(base / "draws.csv", DRAWS_HEADER):
        c, d = int(c), int(d)
        sweeps[c, d] = int(sweep)
        name, _, idx = label.partition("[")
        key = tuple(int(i) for i in idx.rstrip("]").split(",")) if idx else ()
        params[name][(c, d) + key] = float(value)
    w = np.load(base / "w.npy") if meta["has_w"] else None
    return mcmc.PosteriorDraws(
        variant=mcmc.get_variant(meta["variant"]),
        params=params,
        sweep_index=sweeps,
        coords=np.array(meta["coords"], float),
        dist_coast=np.array(meta["dist_coast"], float),
        x=None if meta["x"] is None else np.array(meta["x"], float),
        T=meta["T"],
        n_days=meta["n_days"],
        w=w,
        seeds=tuple(meta["seeds"]),
        acceptance=meta["acceptance"],
        prior=mcmc.PriorConfig(**meta["prior"]),
    )
