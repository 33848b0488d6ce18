"""Command-line driver turning configs and data files into figure tables.

Each subcommand is a thin wrapper over the library: device simulation,
parameter sweeps, far-field export, and the measurement-analysis fits.
Outputs are deterministic files named after the figure they feed, and every
output directory receives the fully-resolved configuration that produced it.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver or fit
failure, 3 file I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SaturationData,
    eta_vs_iinf_fit,
    fit_saturation,
    is_single_emitter,
    read_calibration_csv,
    read_g2_csv,
    read_saturation_csv,
    snr,
    write_snr_grid_csv,
)
from .constants import C0
from .collection import (
    BAND_NM,
    DEFAULT_NA,
    DEFAULT_NA_SAMPLES,
    DEFAULT_WAVELENGTHS_NM,
    CollectionResult,
    EmissionSpectrum,
    SolverSettings,
    settings_for_tier,
    simulate_collection,
)
from .errors import SolverError, FitError, ValidationError
from .fdtd.core import GaussianPulse
from .geometry import PillarGeometry, rasterize
from .sweep import (
    ResultStore,
    SweepPlan,
    config_digest,
    default_store_root,
    run_sweep,
    write_results_csv,
)

DEFAULT_SEED = 20260822
ETA_BAR_BINS = tuple(round(0.05 * i, 2) for i in range(21))
VIABLE_ETA_BAR = 0.25


class _Parser(argparse.ArgumentParser):
    """Argument errors are user input errors, so exit 1 rather than 2."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """One device run, fully specified: geometry, solver, band, outputs."""

    geometry: PillarGeometry
    tier: str = "coarse"
    solver_overrides: dict = field(default_factory=dict)
    wavelengths_nm: tuple = DEFAULT_WAVELENGTHS_NM
    na: float = DEFAULT_NA
    na_samples: tuple = DEFAULT_NA_SAMPLES
    band_nm: tuple = BAND_NM
    spectrum_csv: str | None = None
    output: str = "pillarsim-out"

    _KEYS = {"geometry", "geometry_file", "tier", "solver", "wavelengths_nm",
             "na", "na_samples", "band_nm", "spectrum_csv", "output"}

    @classmethod
    def load(cls, path, tier: str | None = None,
             output: str | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        unknown = set(raw) - cls._KEYS
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        if ("geometry" in raw) == ("geometry_file" in raw):
            raise ValidationError(
                f"{path}: provide exactly one of geometry, geometry_file"
            )
        if "geometry" in raw:
            geometry = PillarGeometry.from_dict(raw["geometry"])
        else:
            gpath = Path(raw["geometry_file"])
            if not gpath.is_absolute():
                gpath = path.parent / gpath
            try:
                geometry = PillarGeometry.from_dict(json.loads(gpath.read_text()))
            except OSError as exc:
                raise ValidationError(
                    f"cannot read geometry {gpath}: {exc}") from exc
        spectrum_csv = raw.get("spectrum_csv")
        if spectrum_csv is not None:
            spath = Path(spectrum_csv)
            if not spath.is_absolute():
                spath = path.parent / spath
            spectrum_csv = str(spath)
        kwargs = {}
        for key in ("wavelengths_nm", "na_samples", "band_nm"):
            if key in raw:
                kwargs[key] = tuple(float(v) for v in raw[key])
        if "na" in raw:
            kwargs["na"] = float(raw["na"])
        cfg = cls(geometry=geometry,
                  tier=tier or raw.get("tier", "coarse"),
                  solver_overrides=dict(raw.get("solver", {})),
                  spectrum_csv=spectrum_csv,
                  output=output or raw.get("output", "pillarsim-out"),
                  **kwargs)
        cfg.settings()
        return cfg

    def settings(self) -> SolverSettings:
        base = settings_for_tier(self.tier)
        if self.solver_overrides:
            return SolverSettings.from_dict({**base.to_dict(),
                                             **self.solver_overrides})
        return base

    def spectrum(self) -> EmissionSpectrum | None:
        if self.spectrum_csv is None:
            return None
        return EmissionSpectrum.from_csv(self.spectrum_csv)

    def resolved(self) -> dict:
        """Same schema a sweep point resolves to, so caches interoperate."""
        spectrum = "builtin-1"
        if self.spectrum_csv is not None:
            spec = self.spectrum()
            spectrum = {"wavelengths_nm": spec.wavelengths_nm.tolist(),
                        "intensity": spec.intensity.tolist()}
        return {
            "geometry": self.geometry.to_dict(),
            "solver": self.settings().to_dict(),
            "band_nm": list(self.band_nm),
            "wavelengths_nm": list(self.wavelengths_nm),
            "na": float(self.na),
            "na_samples": list(self.na_samples),
            "spectrum": spectrum,
        }


def _out_dir(args) -> Path:
    out = Path(args.out or "pillarsim-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _store_for(out: Path) -> ResultStore:
    env = os.environ.get("PILLARSIM_CACHE")
    return ResultStore(Path(env) if env else out / "cache")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _cost_estimate(cfg: RunConfig) -> dict:
    settings = cfg.settings()
    grid = rasterize(cfg.geometry, settings.cell_nm, settings.raster_spec())
    nx, ny, nz = grid.shape
    dt_s = settings.courant * settings.cell_nm * 1e-9 / (C0 * math.sqrt(3.0))
    pulse = GaussianPulse.for_band(min(cfg.wavelengths_nm),
                                   max(cfg.wavelengths_nm))
    steps = math.ceil(pulse.cutoff_s / dt_s) + 6000
    cell_steps = nx * ny * nz * steps * 2  # two dipole orientations
    return {
        "grid_shape": [nx, ny, nz],
        "cells": nx * ny * nz,
        "time_step_fs": dt_s * 1e15,
        "estimated_steps_per_run": steps,
        "estimated_cell_steps": cell_steps,
        "estimated_minutes_at_1e8_per_s": round(cell_steps / 1e8 / 60.0, 1),
    }


def _simulate_result(cfg: RunConfig, store: ResultStore,
                     say) -> tuple[CollectionResult, bool]:
    """Run or fetch the configured device; bool reports a cache hit."""
    resolved = cfg.resolved()
    digest = config_digest(resolved)
    record = store.get(digest)
    if record is not None:
        if record["status"] != "ok":
            raise SolverError(
                f"cached run {digest[:12]} failed previously: {record['error']}"
            )
        say(f"cache hit {digest[:12]}, reusing stored result")
        return CollectionResult.from_dict(record["result"]), True
    say(f"simulating {digest[:12]} (tier {cfg.tier})")
    result = simulate_collection(
        cfg.geometry, cfg.settings(),
        wavelengths_nm=cfg.wavelengths_nm, na=cfg.na,
        na_samples=cfg.na_samples, spectrum=cfg.spectrum(),
        band_nm=cfg.band_nm,
    )
    store.put(digest, {"status": "ok", "result": result.to_dict(),
                       "error": None, "config": resolved})
    store.compact()
    return result, False


def _write_far_field_files(result: CollectionResult, out: Path, say) -> None:
    if result.far_field is None:
        say("far field not retained by the cached record; "
            "pattern CSVs left as previously written")
        return
    for wl in result.wavelengths_nm:
        path = out / f"farfield_{wl:.0f}nm.csv"
        result.far_field.write_csv(path, wavelength_nm=float(wl))
        say(f"wrote {path}")
    na_path = out / "na_curve.csv"
    with open(na_path, "w", encoding="utf-8") as fh:
        fh.write("na,collected_fraction\n")
        for na_v, frac in zip(result.na_samples, result.na_curve):
            fh.write(f"{float(na_v)!r},{float(frac)!r}\n")
    say(f"wrote {na_path}")


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config, tier=args.tier, output=args.out)
    out = Path(cfg.output)
    if args.dry_run:
        payload = {"resolved_config": cfg.resolved(),
                   "cost": _cost_estimate(cfg)}
        print(json.dumps(payload, indent=2))
        return 0
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "resolved_config.json", cfg.resolved())
    result, cached = _simulate_result(cfg, _store_for(out), print)
    result.to_json(out / "result.json")
    _write_far_field_files(result, out, print)
    print(f"eta_bar = {result.eta_bar:.4f}  na_080 = {result.na_080:.3f}"
          f"{'  (cached)' if cached else ''}")
    print(f"wrote {out / 'result.json'}")
    return 0


def cmd_farfield(args) -> int:
    cfg = RunConfig.load(args.config, tier=args.tier, output=args.out)
    out = Path(cfg.output)
    if args.dry_run:
        print(json.dumps({"resolved_config": cfg.resolved(),
                          "cost": _cost_estimate(cfg)}, indent=2))
        return 0
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "resolved_config.json", cfg.resolved())
    result, cached = _simulate_result(cfg, _store_for(out), print)
    if result.far_field is None:
        # angular data is never cached, so compute it fresh
        result = simulate_collection(
            cfg.geometry, cfg.settings(),
            wavelengths_nm=cfg.wavelengths_nm, na=cfg.na,
            na_samples=cfg.na_samples, spectrum=cfg.spectrum(),
            band_nm=cfg.band_nm,
        )
    _write_far_field_files(result, out, print)
    return 0


def cmd_sweep(args) -> int:
    plan = SweepPlan.from_json(args.plan)
    if args.tier:
        plan.tier = args.tier
        settings_for_tier(plan.tier)
    out = _out_dir(args)
    csv_path = Path(plan.output) if plan.output and not args.out else \
        out / "results.csv"
    if args.dry_run:
        print(f"sweep: {plan.size()} points, tier {plan.tier}, "
              f"output {csv_path}")
        for point in plan.points():
            print(json.dumps(point, sort_keys=True))
        return 0
    store = ResultStore(os.environ.get("PILLARSIM_CACHE") or out / "cache")
    _write_json(out / "plan_resolved.json",
                {**plan.to_dict(), "store": str(store.root),
                 "parallelism": args.jobs})
    rows = run_sweep(plan, parallelism=args.jobs, store=store,
                     output=str(csv_path), progress=print)
    n_ok = sum(r["status"] == "ok" for r in rows)
    print(f"{n_ok}/{len(rows)} points ok, table at {csv_path}")
    return 0


def cmd_fit_saturation(args) -> int:
    data = read_saturation_csv(args.data)
    fit = fit_saturation(data)
    report = fit.to_dict()
    report["n_points"] = int(data.power_uw.size)
    report["residual_kcts"] = [
        float(r) for r in data.rate_kcts - fit.model(data.power_uw)
    ]
    if args.bootstrap > 0:
        rng = np.random.default_rng(args.seed)
        scale = max(fit.residual_norm /
                    math.sqrt(max(data.power_uw.size - 3, 1)), 1e-12)
        draws = {"i_inf_kcts": [], "p_sat_uw": [], "c_bg": []}
        for _ in range(args.bootstrap):
            fake = SaturationData(
                power_uw=data.power_uw,
                rate_kcts=fit.model(data.power_uw)
                + rng.normal(0.0, scale, data.power_uw.size),
                sigma_kcts=data.sigma_kcts,
            )
            try:
                refit = fit_saturation(fake)
            except (FitError, ValidationError):
                continue
            draws["i_inf_kcts"].append(refit.i_inf_kcts)
            draws["p_sat_uw"].append(refit.p_sat_uw)
            draws["c_bg"].append(refit.c_bg)
        report["bootstrap"] = {
            "n_requested": args.bootstrap,
            "n_converged": len(draws["i_inf_kcts"]),
            "seed": args.seed,
            "sigma": {k: (float(np.std(v)) if v else None)
                      for k, v in draws.items()},
        }
    out = _out_dir(args)
    _write_json(out / "fig4b_fit.json", report)
    print(f"I_inf = {fit.i_inf_kcts:.1f} kcts/s  "
          f"P_sat = {fit.p_sat_uw:.1f} uW  "
          f"c_bg = {fit.c_bg:.4f} kcts/s/uW")
    print(f"wrote {out / 'fig4b_fit.json'}")
    return 0


def _parse_range(text: str, name: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"{name} must look like lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValidationError(f"bad {name} range {text!r}: {exc}") from exc
    if count < 2 or not lo < hi:
        raise ValidationError(f"{name} range needs lo < hi and count >= 2")
    return np.linspace(lo, hi, count)


def cmd_snr(args) -> int:
    if args.grid:
        alpha0 = _parse_range(args.alpha0_range, "alpha0")
        contrast = _parse_range(args.contrast_range, "contrast")
        out = _out_dir(args)
        path = write_snr_grid_csv(out / "fig5_grid.csv", alpha0, contrast)
        print(f"wrote {path}")
        return 0
    if args.alpha0 is None or args.contrast is None:
        raise ValidationError("snr needs --alpha0 and --contrast "
                              "(or --grid for the landscape)")
    print(f"{snr(args.alpha0, args.contrast):.3f}")
    return 0


def cmd_g2(args) -> int:
    delay, coincidences = read_g2_csv(args.data)
    verdict = is_single_emitter(delay, coincidences)
    out = _out_dir(args)
    _write_json(out / "fig4a_g2.json",
                {"g2_zero": verdict.g2_zero,
                 "is_single": verdict.is_single,
                 "n_bins": int(np.asarray(delay).size)})
    print(f"g2(0) = {verdict.g2_zero:.3f} -> "
          f"{'single emitter' if verdict.is_single else 'not a single emitter'}")
    return 0


def _report_rows(store: ResultStore) -> tuple[list[dict], int]:
    rows, skipped = [], 0
    for record in store.records():
        config = record.get("config")
        if not config:
            skipped += 1
            continue
        geom = PillarGeometry.from_dict(config["geometry"])
        radii = geom.segment_radii_nm()
        row = {
            "h_um": geom.height_um,
            "r_top_nm": geom.top_radius_nm,
            "r_mid_nm": radii[1],
            "phi_deg": geom.segments[0].angle_deg,
            "na": config["na"],
            "cell_nm": config["solver"]["cell_nm"],
            "status": record["status"],
            "eta_bar": (record["result"]["eta_bar"]
                        if record["status"] == "ok" else None),
            "na_080": (record["result"]["na_080"]
                       if record["status"] == "ok" else None),
        }
        rows.append(row)
    rows.sort(key=lambda r: (r["h_um"], r["r_top_nm"], r["r_mid_nm"],
                             r["phi_deg"], r["na"], r["cell_nm"]))
    return rows, skipped


def cmd_report(args) -> int:
    store = ResultStore(args.store)
    rows, skipped = _report_rows(store)
    out = _out_dir(args)
    write_results_csv(rows, out / "results.csv")

    ok_rows = [r for r in rows if r["status"] == "ok"]
    with open(out / "fig1d.csv", "w", encoding="utf-8") as fh:
        fh.write("h_um,eta_bar\n")
        for r in ok_rows:
            fh.write(f"{float(r['h_um'])!r},{float(r['eta_bar'])!r}\n")

    counts = [0] * (len(ETA_BAR_BINS) - 1)
    for r in ok_rows:
        for b in range(len(counts)):
            if ETA_BAR_BINS[b] <= r["eta_bar"] < ETA_BAR_BINS[b + 1] or (
                    b == len(counts) - 1 and r["eta_bar"] == ETA_BAR_BINS[-1]):
                counts[b] += 1
    with open(out / "fig4c_hist.csv", "w", encoding="utf-8") as fh:
        fh.write("eta_bar_lo,eta_bar_hi,devices\n")
        for b, count in enumerate(counts):
            fh.write(f"{ETA_BAR_BINS[b]},{ETA_BAR_BINS[b + 1]},{count}\n")

    if args.calibration:
        eta_bar, i_inf = read_calibration_csv(args.calibration)
        line = eta_vs_iinf_fit(eta_bar, i_inf)
        _write_json(out / "fig4d_fit.json", {
            "slope_eta_per_kcts": line.slope,
            "intercept_eta": line.intercept,
            "slope_sigma": line.slope_sigma,
            "intercept_sigma": line.intercept_sigma,
            "residual_rms_eta": line.residual_rms,
            "n_points": int(np.asarray(eta_bar).size),
        })

    viable = sum(r["eta_bar"] >= args.viable_eta for r in ok_rows)
    print(f"{len(rows)} records ({len(ok_rows)} ok, "
          f"{len(rows) - len(ok_rows)} failed, {skipped} without config); "
          f"{viable} viable at eta_bar >= {args.viable_eta}")
    print(f"wrote {out / 'results.csv'}, {out / 'fig1d.csv'}, "
          f"{out / 'fig4c_hist.csv'}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pillarsim",
                     description="Diamond-nanopillar photon collection toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None,
                        help="output directory (default pillarsim-out, or "
                             "the config's own output field)")
    common.add_argument("--jobs", type=int, default=1,
                        help="worker processes for sweeps (default 1)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="seed for any randomized analysis step")
    common.add_argument("--tier", choices=("coarse", "fine"), default=None,
                        help="resolution tier override")
    common.add_argument("--dry-run", action="store_true",
                        help="print the resolved configuration and cost, "
                             "run nothing")

    p = sub.add_parser("simulate", parents=[common],
                       help="simulate one device and write its results")
    p.add_argument("--config", required=True, help="run config JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("farfield", parents=[common],
                       help="export angular radiation patterns for a device")
    p.add_argument("--config", required=True, help="run config JSON")
    p.set_defaults(func=cmd_farfield)

    p = sub.add_parser("sweep", parents=[common],
                       help="run a parameter sweep plan")
    p.add_argument("plan", help="sweep plan JSON")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-saturation", parents=[common],
                       help="fit a measured saturation curve")
    p.add_argument("data", help="CSV with power_uw,kcts_per_s[,sigma]")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="Monte-Carlo refits for parameter spread (default off)")
    p.set_defaults(func=cmd_fit_saturation)

    p = sub.add_parser("snr", parents=[common],
                       help="single-shot readout signal-to-noise")
    p.add_argument("--alpha0", type=float, default=None,
                   help="bright-state photons per shot")
    p.add_argument("--contrast", type=float, default=None,
                   help="relative spin contrast")
    p.add_argument("--grid", action="store_true",
                   help="write the SNR landscape table instead")
    p.add_argument("--alpha0-range", default="0.01:0.5:50",
                   help="grid axis as lo:hi:count (default %(default)s)")
    p.add_argument("--contrast-range", default="0.05:0.6:56",
                   help="grid axis as lo:hi:count (default %(default)s)")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("g2", parents=[common],
                       help="classify an intensity-autocorrelation histogram")
    p.add_argument("data", help="CSV with delay_ns,norm_coincidences")
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("report", parents=[common],
                       help="tabulate a result store into figure data")
    p.add_argument("--store", default=None,
                   help="result store directory (default <out>/cache)")
    p.add_argument("--calibration", default=None,
                   help="CSV with eta_bar,i_inf_kcts for the rate fit")
    p.add_argument("--viable-eta", type=float, default=VIABLE_ETA_BAR,
                   help="eta_bar threshold counted as viable "
                        "(default %(default)s)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.func is cmd_report and args.store is None:
            args.store = str(Path(args.out or "pillarsim-out") / "cache")
        if getattr(args, "jobs", 1) < 1:
            raise ValidationError(f"--jobs must be >= 1, got {args.jobs}")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, FitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON (line {exc.lineno}): {exc.msg}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
