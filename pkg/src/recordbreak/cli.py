"""Command-line interface.

Subcommands share a run directory with the fixed layout ``panel/``,
``draws/``, ``surfaces/`` and ``reports/``. Exit codes: 0 success, 2
configuration error, 3 data error, 4 numerical failure.
"""
import argparse
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__, config as cfgmod, diagnostics, io, mcmc, metrics, predict, summaries, synthetic
from .records import build_panel

log = logging.getLogger("recordbreak")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    """Incompatible options for the requested pipeline."""


def _context(args, extra=None):
    overrides = {"seed": args.seed}
    overrides.update(extra or {})
    cfg = cfgmod.load_config(args.config, overrides)
    prov = io.Provenance(cfgmod.config_hash(cfg), cfg["seed"])
    return cfg, prov


def _fit_data(panel):
    return mcmc.FitData(
        marks=panel.marks, coords=panel.coords, dist_coast=panel.dist_coast,
        x=None if panel.sx is None else np.log(panel.sx), years=panel.years,
        days=panel.days, site_ids=list(panel.site_ids))


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args):
    cfg, prov = _context(args, {k: getattr(args, k) for k in
                                ("n_sites", "T", "n_days", "generator", "tie_rate", "missing_rate")})
    spec = synthetic.SyntheticSpec(
        n_sites=cfg["n_sites"], T=cfg["T"], n_days=cfg["n_days"], generator=cfg["generator"],
        tie_rate=cfg["tie_rate"], missing_rate=cfg["missing_rate"], extent_km=cfg["extent_km"],
        eff_range=cfg["eff_range"], start_year=cfg["first_year"])
    data = synthetic.generate_synthetic(spec, cfg["seed"])
    run = Path(args.run)
    io.write_stations(run / "stations.csv", data.series, prov)
    truth = {k: np.asarray(v).tolist() for k, v in sorted(data.truth.items())
             if k in ("B", "a", "range", "range_x", "beta_a", "sigma2_a")}
    truth.update(header=prov.line().lstrip("# "), generator=spec.generator)
    (run / "reports").mkdir(parents=True, exist_ok=True)
    with open(run / "reports" / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d synthetic stations to %s", spec.n_sites, run / "stations.csv")
    return EXIT_OK


def cmd_extract(args):
    _, prov = _context(args)
    series, report = io.ingest(args.stations)
    for msg in report.warnings:
        log.warning(msg)
    panel = build_panel(series)
    io.write_panel(args.run, panel, prov)
    io.write_table(Path(args.run) / "reports" / "ingest.csv", ["site_id", "signal", "missing_fraction"],
                   report.rows(), prov)
    log.info("panel: %d sites, %d years, %d days", panel.n_sites, panel.T, len(panel.days))
    return EXIT_OK


def cmd_fit(args):
    cfg, prov = _context(args, {"variant": args.variant, "sweeps": args.sweeps,
                                "thin_to": args.thin_to})
    variant = mcmc.get_variant(cfg["variant"])
    panel = io.read_panel(args.run)
    if variant.stationary:
        rows = [(int(t), p) for t, p in zip(range(1, panel.T + 1), mcmc.stationary_probabilities(panel.T))]
        out = Path(args.run) / "draws"
        for stale in ("draws.csv", "w.npy"):
            (out / stale).unlink(missing_ok=True)
        io.write_table(out / "stationary.csv", ["t", "p"], rows, prov)
        with open(out / "meta.json", "w", encoding="utf-8") as fh:
            json.dump({"artifact": f"recordbreak {__version__}", "config_hash": prov.config_hash,
                       "seed": prov.seed, "variant": "M0", "T": panel.T,
                       "n_days": len(panel.days) - 1}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return EXIT_OK
    if variant.anisotropic and panel.sx is None:
        raise UsageError(f"{variant.name} needs sx for every station")
    data = _fit_data(panel)
    draws = mcmc.run_chains(variant, data, cfgmod.sampler_config(cfg, args.threads),
                            cfgmod.prior_config(cfg))
    io.write_draws(args.run, draws, prov)
    log.info("archived %d chains x %d draws", draws.n_chains, draws.n_draws)
    return EXIT_OK


def _predictive(args, cfg):
    meta = io.read_meta(args.run)
    panel = io.read_panel(args.run)
    grid = io.read_grid(args.grid, cfg["grid_resolution"])
    rng = np.random.default_rng(cfg["seed"])
    labels = panel.days[1:]
    if meta["variant"] == "M0":
        return predict.stationary_predictive(panel.T, len(labels), grid, cfg["pred_draws"], rng), panel
    draws = io.read_draws(args.run)
    sx = None if panel.sx is None else np.log(panel.sx)
    pd = predict.predict_grid(draws, grid, panel.marks, rng, n_draws=cfg["pred_draws"],
                              missing=panel.missing, station_x=sx, day_labels=labels)
    return pd, panel


SURFACE_HEADER = ["cell_id", "x_km", "y_km", "stat", "mean", "q05", "q95"]
SERIES_HEADER = ["t", "stat", "mean", "q05", "q95"]


def cmd_predict(args):
    cfg, prov = _context(args, {"pred_draws": args.draws})
    pd, panel = _predictive(args, cfg)
    out = Path(args.run) / "surfaces"
    T = int(pd.years.max())
    l1, l2 = int(pd.day_labels[0]), int(pd.day_labels[-1])
    rows = []
    for sig in summaries.SIGNALS:
        frame = summaries.SurfaceFrame.from_draws(f"N_{sig}", summaries.n_stat(pd, 2, T, l1, l2, sig), pd.grid)
        rows += frame.rows()
    for sig in ("max", "min"):
        frame = summaries.SurfaceFrame.from_draws(f"R_{sig}", summaries.r_stat(pd, 2, T, l1, l2, sig), pd.grid)
        rows += frame.rows()
    rows += summaries.SurfaceFrame.from_draws("jaccard", summaries.jaccard_surface(pd, 2, T), pd.grid).rows()
    io.write_table(out / "surfaces.csv", SURFACE_HEADER, rows, prov)
    series = []
    for sig in summaries.SIGNALS:
        vals = np.stack([t * summaries.ers_series(pd, t, signal=sig).mean(axis=1) for t in pd.years], axis=1)
        series += summaries.summarize_series(f"t_ers_{sig}", pd.years, vals)
    io.write_table(out / "ers_series.csv", SERIES_HEADER, series, prov)
    if args.dump_draws:
        np.save(out / "pred_prob.npy", pd.prob)
        np.save(out / "pred_ind.npy", pd.ind)
        io.write_grid(out / "grid.csv", pd.grid, prov)
        io.write_table(out / "pred_index.csv", ["kind", "value"],
                       [("year", int(t)) for t in pd.years] + [("day", int(d)) for d in pd.day_labels], prov)
    return EXIT_OK


def _load_predictive(run, cfg):
    base = Path(run) / "surfaces"
    if not (base / "pred_prob.npy").exists():
        raise io.DataError("no predictive draws found; run 'predict --dump-draws' first")
    index = io.read_table(base / "pred_index.csv", ["kind", "value"])
    years = np.array([int(v) for k, v in index if k == "year"])
    days = np.array([int(v) for k, v in index if k == "day"])
    grid = io.read_grid(base / "grid.csv", cfg["grid_resolution"])
    return predict.PredictiveDraws(prob=np.load(base / "pred_prob.npy"), ind=np.load(base / "pred_ind.npy"),
                                   years=years, grid=grid, day_labels=days)


def cmd_summarize(args):
    cfg, prov = _context(args)
    pd = _load_predictive(args.run, cfg)
    t2 = args.t2 or int(pd.years.max())
    first = int(pd.years.min())
    if args.t1:
        t1 = args.t1
    elif args.stat == "joint_change":
        # latest start whose preceding window of equal length still begins at or after `first`
        t1 = (t2 + first) // 2 + 1
    else:
        t1 = first
    l1 = args.l1 or int(pd.day_labels[0])
    l2 = args.l2 or int(pd.day_labels[-1])
    out = Path(args.run) / "surfaces"
    cells = None if args.cells is None else [int(c) for c in args.cells.split(",")]
    stat = args.stat
    uses_signal = stat in ("n", "r", "ers", "calendar")
    name = f"{stat}_{args.signal}_{t1}_{t2}" if uses_signal else f"{stat}_{t1}_{t2}"
    if stat in ("n", "r", "jaccard", "nmax_vs_nmin", "joint_change"):
        fn = {
            "n": lambda: summaries.n_stat(pd, t1, t2, l1, l2, args.signal),
            "r": lambda: summaries.r_stat(pd, t1, t2, l1, l2, args.signal),
            "jaccard": lambda: summaries.jaccard_surface(pd, t1, t2),
        }
        if stat in fn:
            frame = summaries.SurfaceFrame.from_draws(name, fn[stat](), pd.grid)
            rows = frame.rows()
        else:
            value = (summaries.nmax_vs_nmin_prob(pd, t1, t2, l1, l2) if stat == "nmax_vs_nmin"
                     else summaries.joint_change_prob(pd, t1, t2, l1, l2))
            rows = [(cid, float(c[0]), float(c[1]), name, float(v), float(v), float(v))
                    for cid, c, v in zip(pd.grid.cell_ids, pd.grid.coords, value)]
        io.write_table(out / f"{name}.csv", SURFACE_HEADER, rows, prov)
    elif stat == "ers":
        vals = np.stack([t * summaries.ers_series(pd, t, cells, args.signal).mean(axis=1)
                         for t in range(t1, t2 + 1)], axis=1)
        io.write_table(out / f"{name}.csv", SERIES_HEADER,
                       summaries.summarize_series(f"t_ers_{args.signal}", range(t1, t2 + 1), vals), prov)
    elif stat == "persistence":
        rows = [(t, "persistence", summaries.persistence_ratio(pd, t, cells), "", "")
                for t in range(t1, t2 + 1)]
        io.write_table(out / f"{name}.csv", SERIES_HEADER, rows, prov)
    elif stat == "calendar":
        rows = summaries.calendar_export(pd, cfg["first_year"], cells, args.signal,
                                         years=range(t1, t2 + 1))
        io.write_table(out / f"calendar_{args.signal}.csv", ["year", "month", "day", "ers"], rows, prov)
    return EXIT_OK


def cmd_cv(args):
    cfg, prov = _context(args, {"cv_folds": args.folds, "sweeps": args.sweeps,
                                "thin_to": args.thin_to})
    panel = io.read_panel(args.run)
    data = _fit_data(panel)
    variants = [mcmc.get_variant(v) for v in args.variants.split(",")]
    if any(v.anisotropic for v in variants) and panel.sx is None:
        raise UsageError("anisotropic variants need sx for every station")
    plan = metrics.FoldPlan.random(panel.n_sites, cfg["cv_folds"], cfg["seed"])
    result = metrics.run_cv(data, variants, plan, cfgmod.sampler_config(cfg, args.threads),
                            cfgmod.prior_config(cfg), n_draws=cfg["cv_draws"], seed=cfg["seed"])
    io.write_table(Path(args.run) / "reports" / "cv.csv", ["model", "event", "period", "J_mean"],
                   result.rows(), prov)
    return EXIT_OK


def cmd_diagnostics(args):
    _, prov = _context(args)
    if io.read_meta(args.run)["variant"] == "M0":
        raise UsageError("the stationary variant has no posterior draws to diagnose")
    draws = io.read_draws(args.run)
    if draws.n_chains < 2:
        raise UsageError("split R-hat needs at least two chains")
    rows = diagnostics.summarize(draws.scalar_table())
    io.write_table(Path(args.run) / "reports" / "diagnostics.csv",
                   ["parameter", "mean", "sd", "rhat", "ess"], rows, prov)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="recordbreak", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"recordbreak {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--run", required=True, help="run directory")
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate synthetic station files")
    s.add_argument("--n-sites", dest="n_sites", type=int)
    s.add_argument("--T", dest="T", type=int)
    s.add_argument("--n-days", dest="n_days", type=int)
    s.add_argument("--generator", choices=synthetic.GENERATORS)
    s.add_argument("--tie-rate", dest="tie_rate", type=float)
    s.add_argument("--missing-rate", dest="missing_rate", type=float)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", parents=[common], help="station CSVs to a record panel")
    s.add_argument("stations", nargs="+", help="station CSV files")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("fit", parents=[common], help="run the MCMC sampler")
    s.add_argument("--variant")
    s.add_argument("--sweeps", type=int)
    s.add_argument("--thin-to", dest="thin_to", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", parents=[common], help="posterior-predictive grid simulation")
    s.add_argument("--grid", required=True, help="grid CSV")
    s.add_argument("--draws", type=int, help="number of posterior draws to simulate")
    s.add_argument("--dump-draws", dest="dump_draws", action="store_true",
                   help="also store raw predictive probabilities and indicators")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("summarize", parents=[common], help="summary statistics of predictive draws")
    s.add_argument("--stat", required=True,
                   choices=("n", "r", "ers", "jaccard", "nmax_vs_nmin", "joint_change",
                            "persistence", "calendar"))
    s.add_argument("--signal", default="max", choices=summaries.SIGNALS)
    s.add_argument("--t1", type=int)
    s.add_argument("--t2", type=int)
    s.add_argument("--l1", type=int)
    s.add_argument("--l2", type=int)
    s.add_argument("--cells", help="comma-separated cell positions of a block")
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("cv", parents=[common], help="station cross-validation")
    s.add_argument("--variants", default="M0,M2")
    s.add_argument("--folds", type=int)
    s.add_argument("--sweeps", type=int)
    s.add_argument("--thin-to", dest="thin_to", type=int)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("diagnostics", parents=[common], help="R-hat and ESS of an archive")
    s.set_defaults(func=cmd_diagnostics)
    return p


def _fail(kind, code, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail("config", EXIT_CONFIG, "--threads must be at least 1")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, UsageError) as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except io.DataError as exc:
        return _fail("data", EXIT_DATA, exc)
    except (mcmc.NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail("numerical", EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail("data", EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
