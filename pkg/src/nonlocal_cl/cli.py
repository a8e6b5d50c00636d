"""Command-line front end.

    nonlocal-cl simulate blowup-exact --out runs/blowup
    nonlocal-cl simulate counterexample --alpha 0.5 --n 36
    nonlocal-cl study counterexample --threads 4
    nonlocal-cl bounds my-scenario.toml --override bounds.q=2

Exit codes: 0 ok, 2 configuration error, 3 runtime abort (domain too
small, blow-up, failed study point), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BLOWUP_DATUM, StudySolverConfig, concentration_report, detect_blowup, existence_bound,
    predicted_position, run_counterexample, velocity_window_bracket,
)
from .errors import BlowupAbort, ConfigError, DomainTooSmallError
from .eulerian import EulerianRun, cross_validate
from .fields import GridField, GridSpec
from .io import write_csv, write_json
from .lagrangian import DiagnosticsRecord, LagrangianRun, deposit, seed_from_datum
from .scenarios import (
    ScenarioConfig, build_kernel, build_velocity, datum_norm, load_config, parse_value, validate_study,
)

log = logging.getLogger("nonlocal_cl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


def exact_blowup_field(spec: GridSpec, t: float) -> GridField | None:
    """Cell averages of 2/(1-2t) on [t, 1/2]; None once the profile has collapsed."""
    if t >= 0.5:
        return None
    return GridField.from_pieces(spec, [(t, 0.5, 2.0 / (1.0 - 2.0 * t))])


def _is_blowup_setup(cfg: ScenarioConfig) -> bool:
    return cfg["velocity.kind"] == "identity" and [tuple(p) for p in cfg.pieces] == list(BLOWUP_DATUM)


def _tag(t: float) -> str:
    return f"t{t:.6f}"


def _l1(a: GridField, b: GridField) -> float:
    return float(np.sum(np.abs(a.values - b.values)) * a.h)


def _bounds(cfg: ScenarioConfig, kernel, velocity) -> dict:
    q = cfg["bounds.q"]
    try:
        eb = existence_bound(velocity, kernel, datum_norm(cfg.pieces, q), q)
    except (ValueError, NotImplementedError) as exc:
        return {"error": str(exc)}
    return {
        "K1": eb.K1, "K2": eb.K2, "q": eb.q, "datum_norm": eb.norm,
        "T_q": eb.T_q, "T_star_lower": eb.T_star_lower, "series_terms": eb.terms,
    }


# ---------------------------------------------------------------------------
# simulate


def run_scenario(cfg: ScenarioConfig, out: Path, plots: bool = True) -> dict:
    """Run the configured solver(s) and write every artifact under ``out``."""
    kernel = build_kernel(cfg)
    velocity = build_velocity(cfg)
    fp = cfg.fingerprint()
    out.mkdir(parents=True, exist_ok=True)
    snapdir = out / "snapshots"
    dep_spec = GridSpec(*cfg.domain, cfg["deposit_cells"])
    blowup = cfg["kernel.kind"] == "step" and _is_blowup_setup(cfg)
    summary: dict = {
        "metadata": {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "version": __version__},
        "config": cfg.as_dict(),
        "bounds": _bounds(cfg, kernel, velocity),
    }
    diag_rows: list = []
    lag = eul = None

    if cfg["solver"] in ("lagrangian", "both"):
        ens = seed_from_datum(cfg.pieces, cfg["particles"], domain=cfg.domain)
        lag = LagrangianRun(
            ens, kernel, velocity, cfg["dt"],
            track_divergence=cfg["track_divergence"],
            snapshot_every=cfg.steps_between(cfg["snapshot_every"]),
            record_every=cfg.steps_between(cfg["diagnostics_every"]),
            fingerprint=fp,
        )
    if cfg["solver"] in ("eulerian", "both"):
        spec = GridSpec(*cfg.domain, cfg["cells"])
        t_eul = cfg["eulerian_t_end"]
        every = cfg["snapshot_every"]
        snaps = []
        if every > 0:
            snaps = [round(every * i, 12) for i in range(1, int(math.floor(t_eul / every + 1e-9)) + 1)]
        if cfg["solver"] == "both":
            snaps.append(cfg["crossval.t"])
        eul = EulerianRun(
            GridField.from_pieces(spec, cfg.pieces), kernel, velocity, cfl=cfg["cfl"],
            snapshot_times=sorted(set(snaps)), fingerprint=fp,
        )

    if lag is not None and eul is not None:
        tc = cfg["crossval.t"]
        if tc <= min(cfg["t_end"], cfg["eulerian_t_end"]) and cfg.steps_between(tc) * cfg["dt"] == tc:
            rep = cross_validate(lag, eul, tc, tolerance=cfg["crossval.tolerance"])
            summary["crossval"] = {
                "t": rep.t, "distance": rep.distance, "tolerance": rep.tolerance,
                "passed": rep.passed, "comparison_cells": rep.comparison_cells,
            }
        else:
            summary["crossval"] = {"skipped": "crossval.t is past a solver end time or not a multiple of dt"}

    if lag is not None:
        summary["lagrangian"] = _finish_lagrangian(cfg, lag, dep_spec, snapdir, blowup)
        diag_rows += [["lagrangian"] + r.row() for r in lag.history]
    if eul is not None:
        summary["eulerian"] = _finish_eulerian(cfg, eul, snapdir, blowup)
        diag_rows += [["eulerian"] + r.row() for r in eul.history]

    write_csv(out / "diagnostics.csv", ["solver", *DiagnosticsRecord.FIELDS], diag_rows)
    write_json(out / "summary.json", summary)
    if plots:
        _scenario_figures(out / "figures", cfg, lag, eul, dep_spec, blowup, summary)
    return summary


def _finish_lagrangian(cfg, lag: LagrangianRun, dep_spec: GridSpec, snapdir: Path, blowup: bool) -> dict:
    lag.advance_to(cfg["t_end"])
    lag.write_trajectories(snapdir / "lagrangian_trajectories.csv")
    res: dict = {"t_final": lag.t, "steps": lag.steps}
    errors = []
    for snap in lag.snapshots:
        ens = lag.ensemble.copy()
        ens.positions = snap.positions
        field = deposit(ens, dep_spec)
        field.to_csv(snapdir / f"lagrangian_deposit_{_tag(snap.t)}.csv")
        ex = exact_blowup_field(dep_spec, snap.t) if blowup else None
        if ex is not None:
            errors.append({"t": snap.t, "l1_error": _l1(field, ex)})
    est = detect_blowup(lag, cfg["blowup_threshold"])
    res.update({
        "extrapolated_blowup": est.extrapolated, "first_exceed": est.first_exceed,
        "blowup_detected": est.detected, "fit_window": list(est.fit_window), "fit_points": est.fit_points,
        "final_mass": lag.history[-1].mass, "final_max_u": lag.history[-1].max_u,
    })
    if errors:
        res["exact_l1_error"] = errors
    if cfg["kernel.kind"] == "smoothed_step" and _is_blowup_setup(cfg):
        rep = concentration_report(lag, cfg["kernel.alpha"], cfg["blowup_threshold"])
        res["concentration"] = rep.summary()
        res["centroid_series"] = {
            "t": rep.times, "centroid": rep.centroid, "predicted": rep.predicted, "spread": rep.spread,
        }
        res["velocity_window_violations"] = velocity_window_bracket(lag, cfg["kernel.alpha"])
    return res


def _finish_eulerian(cfg, eul: EulerianRun, snapdir: Path, blowup: bool) -> dict:
    eul.advance_to(cfg["eulerian_t_end"])
    errors = []
    for snap in eul.snapshots:
        snap.field.to_csv(snapdir / f"eulerian_{_tag(snap.t)}.csv")
        ex = exact_blowup_field(snap.field.spec, snap.t) if blowup else None
        if ex is not None:
            errors.append({"t": snap.t, "l1_error": _l1(snap.field, ex)})
    res = {
        "t_final": eul.t, "steps": eul.steps, "dt": eul.dt, "halvings": eul.halvings,
        "final_mass": eul.history[-1].mass, "final_max_u": eul.history[-1].max_u,
    }
    if errors:
        res["exact_l1_error"] = errors
    return res


def _scenario_figures(figdir: Path, cfg, lag, eul, dep_spec, blowup, summary) -> None:
    from . import plotting

    lag_fields, eul_fields = [], []
    if lag is not None:
        for snap in lag.snapshots:
            ens = lag.ensemble.copy()
            ens.positions = snap.positions
            lag_fields.append((snap.t, deposit(ens, dep_spec)))
        if lag.snapshots and len(lag_fields) > 8:
            lag_fields = lag_fields[:: max(1, len(lag_fields) // 6)]
    if eul is not None:
        eul_fields = [(s.t, s.field) for s in eul.snapshots]
        if len(eul_fields) > 8:
            eul_fields = eul_fields[:: max(1, len(eul_fields) // 6)]
    exact = (lambda t: exact_blowup_field(dep_spec, t)) if blowup else None
    plotting.density_snapshots(figdir / "density.png", lag_fields, eul_fields, exact, title=cfg.name)
    if lag is not None:
        est = detect_blowup(lag, cfg["blowup_threshold"])
        plotting.blowup_growth(
            figdir / "max_u.png", [r.t for r in lag.history], [r.max_u for r in lag.history], est
        )
        cs = summary.get("lagrangian", {}).get("centroid_series")
        if cs is not None:
            plotting.centroid_track(figdir / "centroid.png", cs["t"], cs["centroid"], cs["predicted"], cs["spread"])


# ---------------------------------------------------------------------------
# study


def _point_dir(alpha: float, n: int) -> str:
    return f"alpha={alpha:g}_n={n}"


def _study_point(alpha: float, n: int, scfg: StudySolverConfig, outdir: str, deposit_cells: int, domain) -> dict:
    """One grid point; all files go to the point's own directory."""
    pdir = Path(outdir)
    try:
        run = run_counterexample(alpha, n, scfg)
        rep = concentration_report(run, alpha, scfg.blowup_threshold)
        spec = GridSpec(*domain, deposit_cells)
        worst_ratio = 0.0
        for snap in run.snapshots:
            if snap.t > 0.45 + 1e-12:
                continue
            ens = run.ensemble.copy()
            ens.positions = snap.positions
            dep = deposit(ens, spec)
            worst_ratio = max(worst_ratio, float(dep.values.max()) * (1.0 - 2.0 * snap.t) / 2.0)
        write_csv(pdir / "diagnostics.csv", DiagnosticsRecord.FIELDS, [r.row() for r in run.history])
        write_csv(
            pdir / "centroid.csv", ["t", "centroid", "predicted", "spread", "centroid_error"],
            np.column_stack((rep.times, rep.centroid, rep.predicted, rep.spread, rep.centroid_error)),
        )
        return {
            "ok": True, "summary": rep.summary(), "series": rep.series(),
            "max_principle_ratio": worst_ratio,
            "velocity_window_violations": velocity_window_bracket(run, alpha),
            "velocity_range": [min(r.vel_min for r in run.history), max(r.vel_max for r in run.history)],
        }
    except (BlowupAbort, DomainTooSmallError, ValueError) as exc:
        return {"ok": False, "alpha": alpha, "n": n, "error": f"{type(exc).__name__}: {exc}"}


def run_study(cfg: ScenarioConfig, out: Path, threads: int = 1, plots: bool = True) -> tuple[dict, bool]:
    validate_study(cfg)
    scfg = StudySolverConfig(
        particles=cfg["particles"], dt=cfg["dt"], t_end=cfg["t_end"],
        record_every=cfg.steps_between(cfg["diagnostics_every"]),
        snapshot_every=cfg.steps_between(cfg["snapshot_every"]),
        blowup_threshold=cfg["blowup_threshold"],
    )
    grid = [(float(a), int(n)) for a in cfg["study.alpha"] for n in cfg["study.n"]]
    out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (a, n, scfg, str(out / "points" / _point_dir(a, n)), cfg["deposit_cells"], cfg.domain) for a, n in grid
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_study_point, *zip(*jobs)))
    else:
        results = [_study_point(*job) for job in jobs]

    points, rows, failures = [], [], []
    for (a, n), res in zip(grid, results):
        if not res["ok"]:
            failures.append(res)
            log.error("study point alpha=%g n=%d failed: %s", a, n, res["error"])
            continue
        s = res["summary"]
        points.append(res)
        rows.append([a, n, s["r"], s["final_centroid"], s["final_centroid_error"], s["final_spread"],
                     s["extrapolated_blowup"]])
    report = {"config": cfg.as_dict(), "points": points, "failures": failures}
    by = {(p["summary"]["alpha"], p["summary"]["n"]): p["summary"] for p in points}
    n_max = max(int(n) for n in cfg["study.n"])
    if (0.0, n_max) in by and (1.0, n_max) in by:
        report["centroid_gap"] = {
            "n": n_max, "gap": by[(1.0, n_max)]["final_centroid"] - by[(0.0, n_max)]["final_centroid"],
            "predicted": 0.5 * cfg["t_end"] if cfg["t_end"] >= 0.5 else 0.0,
        }
    write_json(out / "study.json", report)
    write_csv(
        out / "study.csv",
        ["alpha", "n", "r", "final_centroid", "final_centroid_error", "final_spread", "extrapolated_blowup"],
        rows,
    )
    if plots and points:
        from types import SimpleNamespace

        from . import plotting

        reps = [
            SimpleNamespace(
                alpha=p["summary"]["alpha"], n=p["summary"]["n"], times=p["series"]["t"],
                centroid=p["series"]["centroid"], final_centroid_error=p["summary"]["final_centroid_error"],
                predicted=predicted_position(p["summary"]["alpha"], p["series"]["t"]),
            )
            for p in points
        ]
        plotting.study_overview(out / "figures" / "study.png", reps)
    return report, not failures


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal-cl", description="Nonlocal conservation law scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "run a scenario and write snapshots, diagnostics and a summary"),
        ("study", "run the (alpha, n) concentration study"),
        ("bounds", "existence-time bounds only"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="config file or built-in scenario name")
        s.add_argument("--out", type=Path, default=None, help="output directory (default runs/<scenario>)")
        s.add_argument("--threads", type=int, default=1, help="worker processes for the study")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        s.add_argument("--alpha", type=float, default=None, help="shortcut for kernel.alpha")
        s.add_argument("--n", type=int, default=None, help="shortcut for kernel.n")
        s.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {}
    for item in args.override:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--override expects KEY=VALUE, got {item!r}")
        out[key.strip()] = parse_value(value.strip())
    if args.alpha is not None:
        out["kernel.alpha"] = args.alpha
    if args.n is not None:
        out["kernel.n"] = args.n
    return out


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, _overrides(args))
        out = args.out if args.out is not None else Path("runs") / cfg.name
        plots = cfg["output.plots"] and not args.no_plots
        if args.command == "simulate":
            summary = run_scenario(cfg, out, plots=plots)
            lag = summary.get("lagrangian", {})
            if "extrapolated_blowup" in lag:
                print(f"extrapolated blow-up time: {lag['extrapolated_blowup']:.6g}")
            print(f"wrote {out}")
            return EXIT_OK
        if args.command == "study":
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            report, ok = run_study(cfg, out, threads=args.threads, plots=plots)
            print(f"{len(report['points'])} points done, {len(report['failures'])} failed; wrote {out}")
            return EXIT_OK if ok else EXIT_RUNTIME
        bounds = _bounds(cfg, build_kernel(cfg), build_velocity(cfg))
        if args.out is not None:
            write_json(out / "bounds.json", {"config": cfg.as_dict(), "bounds": bounds})
        for key in sorted(bounds):
            print(f"{key} = {bounds[key]}")
        return EXIT_RUNTIME if "error" in bounds else EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainTooSmallError, BlowupAbort) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
