"""Parameter sweeps over device families, with a content-addressed store.

A sweep plan is a base device plus value lists for a handful of knobs; the
cartesian product defines the points. Every resolved point is hashed, so
completed work is never redone, interrupted sweeps resume, and failed
points are recorded as data instead of aborting the batch.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

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
from .errors import DataError, ValidationError
from .geometry import ConeSegment, PillarGeometry, cot_deg

SWEEP_AXES = ("h_um", "r_top_nm", "r_mid_nm", "phi_deg", "na", "cell_nm")
CSV_COLUMNS = ("h_um", "r_top_nm", "r_mid_nm", "phi_deg", "na",
               "eta_bar", "na_080", "cell_nm", "status")

_AXIS_BOUNDS = {
    "h_um": (0.0, 100.0),
    "r_top_nm": (0.0, 1e5),
    "r_mid_nm": (0.0, 1e5),
    "phi_deg": (0.0, 90.0),
    "na": (0.0, 1.0),
    "cell_nm": (0.0, 1e3),
}


def _canonical(obj):
    """Digest-stable form: keys sorted downstream, every number a float."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float)):
        return float(obj)
    raise ValidationError(f"cannot canonicalize {type(obj).__name__} for hashing")


def config_digest(config: dict) -> str:
    """Content hash of a fully-resolved configuration mapping."""
    text = json.dumps(_canonical(config), sort_keys=True,
                      separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class SweepPlan:
    """Base device template plus axis value lists."""

    base_geometry: PillarGeometry
    axes: dict[str, list] = field(default_factory=dict)
    tier: str = "coarse"
    output: str | None = None
    na: float = DEFAULT_NA
    solver_overrides: dict = field(default_factory=dict)
    wavelengths_nm: tuple = DEFAULT_WAVELENGTHS_NM
    na_samples: tuple = DEFAULT_NA_SAMPLES
    spectrum_csv: str | None = None

    def __post_init__(self):
        settings_for_tier(self.tier)
        for name, values in self.axes.items():
            if name not in SWEEP_AXES:
                raise ValidationError(
                    f"unknown sweep axis {name!r}; valid axes: {SWEEP_AXES}"
                )
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ValidationError(f"axis {name!r} needs a non-empty value list")
            lo, hi = _AXIS_BOUNDS[name]
            for v in values:
                if not isinstance(v, (int, float)) or isinstance(v, bool) \
                        or not math.isfinite(v):
                    raise ValidationError(f"axis {name!r} has non-numeric value {v!r}")
                if not lo < v <= hi and not (name == "na" and v == 0.0):
                    raise ValidationError(
                        f"axis {name!r} value {v} outside ({lo}, {hi}]"
                    )

    def size(self) -> int:
        n = 1
        for values in self.axes.values():
            n *= len(values)
        return n

    def points(self) -> list[dict]:
        """Cartesian product in deterministic (axis-insertion) order."""
        names = list(self.axes)
        combos = itertools.product(*(self.axes[n] for n in names))
        return [dict(zip(names, c)) for c in combos]

    def to_dict(self) -> dict:
        return {
            "base_geometry": self.base_geometry.to_dict(),
            "axes": {k: list(v) for k, v in self.axes.items()},
            "tier": self.tier,
            "output": self.output,
            "na": self.na,
            "solver_overrides": dict(self.solver_overrides),
            "wavelengths_nm": list(self.wavelengths_nm),
            "na_samples": list(self.na_samples),
            "spectrum_csv": self.spectrum_csv,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        if not isinstance(d, dict):
            raise ValidationError("sweep plan must be a JSON object")
        known = {"base_geometry", "axes", "tier", "output", "na",
                 "solver_overrides", "wavelengths_nm", "na_samples",
                 "spectrum_csv"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown sweep plan keys: {sorted(unknown)}")
        if "base_geometry" not in d:
            raise ValidationError("sweep plan needs a base_geometry")
        kwargs = {}
        for opt in ("tier", "output", "na", "solver_overrides", "spectrum_csv"):
            if opt in d and d[opt] is not None:
                kwargs[opt] = d[opt]
        for opt in ("wavelengths_nm", "na_samples"):
            if opt in d and d[opt] is not None:
                kwargs[opt] = tuple(float(v) for v in d[opt])
        return cls(base_geometry=PillarGeometry.from_dict(d["base_geometry"]),
                   axes=dict(d.get("axes", {})), **kwargs)

    @classmethod
    def from_json(cls, source) -> "SweepPlan":
        if isinstance(source, Path) or (isinstance(source, str)
                                        and source.lstrip()[:1] != "{"):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ValidationError(f"cannot read sweep plan {source}: {exc}") from exc
        else:
            text = source
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"invalid sweep plan JSON (line {exc.lineno}): {exc.msg}"
            ) from exc


def apply_point(base: PillarGeometry, point: dict) -> PillarGeometry:
    """Instantiate the device for one sweep point.

    Knobs apply in a fixed order: facet radius, first-segment angle, total
    height (absorbed by the last segment), then the first-segment reach to
    the mid radius (total height preserved, so a second segment is needed).
    """
    g = base.to_dict()
    if "r_top_nm" in point:
        g["r_top_nm"] = float(point["r_top_nm"])
    segs = [dict(s) for s in g["segments"]]
    if "phi_deg" in point:
        segs[0]["angle_deg"] = float(point["phi_deg"])
    if "h_um" in point:
        others = sum(s["h_um"] for s in segs[:-1])
        last = float(point["h_um"]) - others
        if last <= 0:
            raise ValidationError(
                f"total height {point['h_um']} um leaves no room for the "
                f"last segment ({others} um already used)"
            )
        segs[-1]["h_um"] = last
    if "r_mid_nm" in point:
        if len(segs) < 2:
            raise ValidationError(
                "r_mid_nm sweeps need a template with at least two segments"
            )
        r_top = float(g["r_top_nm"])
        r_mid = float(point["r_mid_nm"])
        slope = cot_deg(segs[0]["angle_deg"])
        if r_mid <= r_top or slope <= 0:
            raise ValidationError(
                f"mid radius {r_mid} nm must exceed the facet radius "
                f"{r_top} nm on an outward-tapering first segment"
            )
        total = sum(s["h_um"] for s in segs)
        h_first = (r_mid - r_top) / slope / 1e3
        h_rest = total - h_first
        n_rest = len(segs) - 1
        if h_rest <= 0:
            raise ValidationError(
                f"first segment needs {h_first:.2f} um to reach {r_mid} nm, "
                f"more than the {total:.2f} um device"
            )
        segs[0]["h_um"] = h_first
        # distribute the remainder over the other segments, keeping ratios
        old_rest = sum(s["h_um"] for s in segs[1:])
        for s in segs[1:]:
            s["h_um"] = h_rest * (s["h_um"] / old_rest) if old_rest > 0 \
                else h_rest / n_rest
    g["segments"] = segs
    return PillarGeometry.from_dict(g)


def resolve_point(plan: SweepPlan, point: dict,
                  spectrum_table: dict | str = "builtin-1") -> dict:
    """Fully-resolved, hashable configuration for one sweep point."""
    geom = apply_point(plan.base_geometry, point)
    settings = settings_for_tier(plan.tier)
    overrides = dict(plan.solver_overrides)
    if "cell_nm" in point:
        overrides["cell_nm"] = float(point["cell_nm"])
    if overrides:
        settings = SolverSettings.from_dict({**settings.to_dict(), **overrides})
    return {
        "geometry": geom.to_dict(),
        "solver": settings.to_dict(),
        "band_nm": list(BAND_NM),
        "wavelengths_nm": list(plan.wavelengths_nm),
        "na": float(point.get("na", plan.na)),
        "na_samples": list(plan.na_samples),
        "spectrum": spectrum_table,
    }


class ResultStore:
    """Append-only per-point records under one directory.

    Each completed point lives in its own JSON file named by the config
    digest, so concurrent writers never collide; `compact` folds the
    directory into an index for cheap reporting.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.points_dir = self.root / "points"
        self.points_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.points_dir / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self._path(digest)
        if not path.exists():
            return None
        try:
            record = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(
                f"result store corrupted: cannot parse {path}: {exc}"
            ) from exc
        if record.get("digest") != digest or "status" not in record:
            raise DataError(
                f"result store corrupted: {path} does not describe digest "
                f"{digest[:12]}"
            )
        return record

    def put(self, digest: str, record: dict) -> None:
        record = {**record, "digest": digest}
        path = self._path(digest)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record, indent=2) + "\n")
        os.replace(tmp, path)

    def records(self) -> list[dict]:
        out = []
        for path in sorted(self.points_dir.glob("*.json")):
            digest = path.stem
            rec = self.get(digest)
            if rec is not None:
                out.append(rec)
        return out

    def compact(self) -> Path:
        index = {}
        for rec in self.records():
            index[rec["digest"]] = {
                "status": rec["status"],
                "file": f"points/{rec['digest']}.json",
            }
        path = self.root / "index.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)
        return path


def default_store_root(plan: SweepPlan | None = None) -> Path:
    env = os.environ.get("PILLARSIM_CACHE")
    if env:
        return Path(env)
    if plan is not None and plan.output:
        return Path(plan.output).parent / "cache"
    return Path("pillarsim-cache")


def _load_spectrum_table(plan: SweepPlan) -> tuple[dict | str, EmissionSpectrum | None]:
    """Spectrum as digest content plus the object workers should use."""
    if plan.spectrum_csv is None:
        return "builtin-1", None
    spec = EmissionSpectrum.from_csv(plan.spectrum_csv)
    table = {"wavelengths_nm": spec.wavelengths_nm.tolist(),
             "intensity": spec.intensity.tolist()}
    return table, spec


def _execute_point(resolved: dict) -> dict:
    """Run one sweep point; failures become records, not exceptions."""
    started = time.time()
    try:
        geom = PillarGeometry.from_dict(resolved["geometry"])
        settings = SolverSettings.from_dict(resolved["solver"])
        spec_entry = resolved["spectrum"]
        spectrum = None
        if isinstance(spec_entry, dict):
            spectrum = EmissionSpectrum(spec_entry["wavelengths_nm"],
                                        spec_entry["intensity"])
        result = simulate_collection(
            geom, settings,
            wavelengths_nm=resolved["wavelengths_nm"],
            na=resolved["na"],
            na_samples=resolved["na_samples"],
            spectrum=spectrum,
            band_nm=tuple(resolved["band_nm"]),
        )
        record = {"status": "ok", "result": result.to_dict(), "error": None}
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        record = {"status": "failed", "result": None,
                  "error": f"{type(exc).__name__}: {exc}"}
    record["elapsed_s"] = round(time.time() - started, 3)
    return record


def _row_for(resolved: dict, record: dict) -> dict:
    geom = PillarGeometry.from_dict(resolved["geometry"])
    radii = geom.segment_radii_nm()
    row = {
        "h_um": geom.height_um,
        "r_top_nm": geom.top_radius_nm,
        "r_mid_nm": radii[1],
        "phi_deg": geom.segments[0].angle_deg,
        "na": resolved["na"],
        "cell_nm": resolved["solver"]["cell_nm"],
        "status": record["status"],
    }
    if "point" in record:
        # the point never resolved to a geometry; echo what was asked for
        row.update({k: float(v) for k, v in record["point"].items()})
    if record["status"] == "ok":
        row["eta_bar"] = record["result"]["eta_bar"]
        row["na_080"] = record["result"]["na_080"]
    else:
        row["eta_bar"] = None
        row["na_080"] = None
    return row


def write_results_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in CSV_COLUMNS:
                v = row[col]
                if v is None:
                    cells.append("")
                elif isinstance(v, str):
                    cells.append(v)
                else:
                    cells.append(repr(float(v)))
            fh.write(",".join(cells) + "\n")
    return path


def run_sweep(plan: SweepPlan, parallelism: int = 1,
              store: ResultStore | None = None,
              output: str | None = None,
              progress=None) -> list[dict]:
    """Execute every point of the plan, reusing the store where possible.

    Returns the result rows in plan order and, when the plan or `output`
    names a CSV path, writes the table there. `progress` is an optional
    callable fed one line per point.
    """
    if parallelism < 1:
        raise ValidationError(f"parallelism must be >= 1, got {parallelism}")
    store = store or ResultStore(default_store_root(plan))
    say = progress or (lambda msg: None)
    spectrum_entry, _ = _load_spectrum_table(plan)

    points = plan.points()
    say(f"sweep: {len(points)} points, tier {plan.tier}")
    resolved_list: list[dict | None] = []
    digests: list[str | None] = []
    records: list[dict | None] = []
    todo: list[int] = []
    for i, point in enumerate(points):
        try:
            resolved = resolve_point(plan, point, spectrum_entry)
        except ValidationError as exc:
            # the point itself is malformed; record it under the hash of
            # its raw knobs so reruns stay no-ops
            digest = config_digest({"invalid_point": point,
                                    "plan_tier": plan.tier})
            record = store.get(digest)
            if record is None:
                record = {"status": "failed", "result": None,
                          "error": f"{type(exc).__name__}: {exc}",
                          "point": point, "elapsed_s": 0.0}
                store.put(digest, record)
            resolved = {"geometry": plan.base_geometry.to_dict(),
                        "solver": settings_for_tier(plan.tier).to_dict(),
                        "na": float(point.get("na", plan.na))}
            resolved_list.append(resolved)
            digests.append(digest)
            records.append(record)
            say(f"point {i + 1}/{len(points)}: invalid ({exc})")
            continue
        digest = config_digest(resolved)
        record = store.get(digest)
        resolved_list.append(resolved)
        digests.append(digest)
        records.append(record)
        if record is None:
            todo.append(i)
        else:
            say(f"point {i + 1}/{len(points)}: cached ({record['status']})")

    if todo:
        if parallelism == 1 or len(todo) == 1:
            for i in todo:
                say(f"point {i + 1}/{len(points)}: running")
                rec = _execute_point(resolved_list[i])
                rec["config"] = resolved_list[i]
                rec["completed_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
                store.put(digests[i], rec)
                records[i] = rec
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                futures = {i: pool.submit(_execute_point, resolved_list[i])
                           for i in todo}
                for i, fut in futures.items():
                    rec = fut.result()
                    rec["config"] = resolved_list[i]
                    rec["completed_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
                    store.put(digests[i], rec)
                    records[i] = rec
                    say(f"point {i + 1}/{len(points)}: done ({rec['status']})")

    rows = [_row_for(resolved_list[i], records[i])
            for i in range(len(points))]
    store.compact()
    out_path = output or plan.output
    if out_path:
        write_results_csv(rows, out_path)
    return rows
