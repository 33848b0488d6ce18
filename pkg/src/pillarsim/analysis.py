"""Measurement-side numerics.

Covers the experimental figures of merit: fluorescence saturation fitting,
photon-budget scaling, spin-readout signal-to-noise, the linear calibration
of simulated collection against measured saturated count rates, and
single-emitter screening from intensity autocorrelation histograms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from .errors import DataError, FitError, ValidationError

Array = np.ndarray

DEFAULT_MEASUREMENT_WINDOW_NS = 300.0
MIN_SATURATION_POINTS = 5
G2_SINGLE_THRESHOLD = 0.5


# ---------------------------------------------------------------------------
# saturation curve


def saturation_model(power_uw, i_inf_kcts: float, p_sat_uw: float, c_bg: float):
    """Count rate vs pump power: saturating emitter plus linear background."""
    p = np.asarray(power_uw, dtype=float)
    return i_inf_kcts * p / (p + p_sat_uw) + c_bg * p


@dataclass(frozen=True)
class SaturationData:
    """Power-dependent fluorescence measurement.

    power_uw in microwatts, rate_kcts in kilocounts/s. `sigma_kcts` carries
    per-point rate uncertainties when the instrument provides them.
    """

    power_uw: Array
    rate_kcts: Array
    sigma_kcts: Array | None = None

    def __post_init__(self):
        object.__setattr__(self, "power_uw", np.asarray(self.power_uw, dtype=float))
        object.__setattr__(self, "rate_kcts", np.asarray(self.rate_kcts, dtype=float))
        if self.sigma_kcts is not None:
            object.__setattr__(self, "sigma_kcts", np.asarray(self.sigma_kcts, dtype=float))
        self.validate()

    def validate(self) -> None:
        p, i = self.power_uw, self.rate_kcts
        if p.ndim != 1 or p.shape != i.shape:
            raise ValidationError("power and rate must be 1D arrays of equal length")
        if p.size < MIN_SATURATION_POINTS:
            raise ValidationError(
                f"need at least {MIN_SATURATION_POINTS} points for a saturation fit, got {p.size}"
            )
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(i)):
            raise ValidationError("saturation data contains non-finite values")
        if np.any(p <= 0):
            raise ValidationError("all powers must be positive")
        if np.any(i < 0):
            raise ValidationError("count rates must be non-negative")
        if np.ptp(p) == 0:
            raise ValidationError("degenerate data: all powers identical")
        if self.sigma_kcts is not None:
            s = self.sigma_kcts
            if s.shape != p.shape or np.any(s <= 0) or not np.all(np.isfinite(s)):
                raise ValidationError("sigma must be positive, finite, same length as data")


@dataclass(frozen=True)
class SaturationFit:
    i_inf_kcts: float
    p_sat_uw: float
    c_bg: float
    i_inf_sigma: float
    p_sat_sigma: float
    c_bg_sigma: float
    residual_norm: float
    converged: bool

    def model(self, power_uw):
        return saturation_model(power_uw, self.i_inf_kcts, self.p_sat_uw, self.c_bg)

    def to_dict(self) -> dict:
        return {
            "i_inf_kcts": self.i_inf_kcts,
            "p_sat_uw": self.p_sat_uw,
            "c_bg_kcts_per_uw": self.c_bg,
            "i_inf_sigma": self.i_inf_sigma,
            "p_sat_sigma": self.p_sat_sigma,
            "c_bg_sigma": self.c_bg_sigma,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
        }


def _initial_guess(data: SaturationData) -> tuple[float, float, float]:
    p, i = data.power_uw, data.rate_kcts
    i0 = float(i.max())
    if i0 <= 0:
        i0 = 1.0
    half = np.argmin(np.abs(i - 0.5 * i0))
    p0 = float(p[half]) if p[half] > 0 else float(np.median(p))
    # background slope from what the saturating part cannot explain at high power
    order = np.argsort(p)
    top = order[-max(2, p.size // 4):]
    excess = i[top] - i0 * p[top] / (p[top] + p0)
    c0 = max(0.0, float(np.median(excess / p[top])))
    return i0, p0, c0


def fit_saturation(data: SaturationData, max_iterations: int = 2000) -> SaturationFit:
    """Least-squares fit of the saturation model to measured count rates.

    Unweighted unless the data carries uncertainties, in which case the
    residuals are inverse-sigma scaled and the reported uncertainties are
    absolute. Initial guesses come from the data itself.
    """
    data.validate()
    p = data.power_uw
    # fit in rate units normalized to the peak so the optimizer sees the same
    # problem for any overall count-rate scale (exact scale equivariance)
    scale_i = float(data.rate_kcts.max()) or 1.0
    i = data.rate_kcts / scale_i
    w = scale_i / data.sigma_kcts if data.sigma_kcts is not None else None

    def residuals(theta):
        r = saturation_model(p, *theta) - i
        return r * w if w is not None else r

    def jacobian(theta):
        _, p_sat, _ = theta
        den = p + p_sat
        j = np.empty((p.size, 3))
        j[:, 0] = p / den
        j[:, 1] = -theta[0] * p / den**2
        j[:, 2] = p
        return j * w[:, None] if w is not None else j

    i0, p0, c0 = _initial_guess(data)
    x0 = np.array([i0 / scale_i, p0, c0 / scale_i])
    result = least_squares(
        residuals, x0, jac=jacobian, method="lm", max_nfev=max_iterations,
        xtol=1e-14, ftol=1e-14, gtol=1e-14,
    )
    if not result.success:
        raise FitError(
            f"saturation fit did not converge: {result.message} "
            f"(residual norm {np.linalg.norm(result.fun):.4g})"
        )
    # MINPACK stops when the cost stops improving, which on noisy data can be
    # ~1e-7 away from the stationary point in parameter space. Polish with
    # plain Gauss-Newton so the result is pinned by the data alone.
    theta = result.x.copy()
    for _ in range(30):
        jac = jacobian(theta)
        try:
            step = np.linalg.solve(jac.T @ jac, -(jac.T @ residuals(theta)))
        except np.linalg.LinAlgError:
            break
        rel = float(np.max(np.abs(step) / np.maximum(np.abs(theta), 1e-12)))
        if not np.isfinite(rel) or rel > 1e-3:
            break
        theta = theta + step
        if rel < 5e-15:
            break
    i_inf, p_sat, c_bg = theta
    if i_inf <= 0 or p_sat <= 0:
        raise FitError(
            f"non-physical fit parameters: i_inf={i_inf * scale_i:.4g}, p_sat={p_sat:.4g}"
        )
    c_bg = max(c_bg, 0.0)

    dof = p.size - 3
    final_jac = jacobian(theta)
    final_res = residuals(theta)
    jtj = final_jac.T @ final_jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    if w is None:
        scale = (float(final_res @ final_res) / dof) if dof > 0 else np.nan
        cov = cov * scale
    sig = np.sqrt(np.abs(np.diag(cov)))
    resid_norm = float(np.linalg.norm(final_res))
    if w is None:
        resid_norm *= scale_i
    return SaturationFit(
        i_inf_kcts=float(i_inf * scale_i),
        p_sat_uw=float(p_sat),
        c_bg=float(c_bg * scale_i),
        i_inf_sigma=float(sig[0] * scale_i),
        p_sat_sigma=float(sig[1]),
        c_bg_sigma=float(sig[2] * scale_i),
        residual_norm=resid_norm,
        converged=True,
    )


# ---------------------------------------------------------------------------
# spin-readout signal-to-noise


def snr(alpha0: float, contrast: float) -> float:
    """Single-shot readout SNR in the shot-noise limit.

    `alpha0` is the mean photon number per measurement for the bright state,
    `contrast` the relative rate difference between the two spin states.
    """
    if not alpha0 > 0:
        raise ValidationError(f"alpha0 must be positive, got {alpha0}")
    if not 0.0 <= contrast < 1.0:
        raise ValidationError(f"contrast must lie in [0, 1), got {contrast}")
    return math.sqrt(alpha0) * contrast / math.sqrt(2.0 - contrast)


def alpha0_for_snr(target_snr: float, contrast: float) -> float:
    """Invert the SNR expression for the photon budget at fixed contrast."""
    if target_snr < 0:
        raise ValidationError(f"SNR must be non-negative, got {target_snr}")
    if not 0.0 < contrast < 1.0:
        raise ValidationError(f"contrast must lie in (0, 1), got {contrast}")
    return target_snr**2 * (2.0 - contrast) / contrast**2


def scale_alpha0(alpha0_ref: float, i_inf_ratio: float) -> float:
    """Photon budget scales linearly with the saturated count rate."""
    if not alpha0_ref > 0:
        raise ValidationError(f"alpha0 must be positive, got {alpha0_ref}")
    if not i_inf_ratio > 0:
        raise ValidationError(f"rate ratio must be positive, got {i_inf_ratio}")
    return alpha0_ref * i_inf_ratio


def shots_to_reach(target_snr: float, single_shot_snr: float) -> int:
    """Number of repeated measurements to average up to `target_snr`."""
    if single_shot_snr <= 0:
        raise ValidationError("single-shot SNR must be positive")
    return math.ceil((target_snr / single_shot_snr) ** 2)


@dataclass(frozen=True)
class SnrPoint:
    """One readout operating point; `t_m_ns` is the fixed measurement window."""

    alpha0: float
    alpha1: float
    contrast: float
    snr: float
    t_m_ns: float = DEFAULT_MEASUREMENT_WINDOW_NS

    @classmethod
    def from_alpha0_contrast(cls, alpha0: float, contrast: float,
                             t_m_ns: float = DEFAULT_MEASUREMENT_WINDOW_NS) -> "SnrPoint":
        value = snr(alpha0, contrast)
        return cls(alpha0=alpha0, alpha1=alpha0 * (1.0 - contrast),
                   contrast=contrast, snr=value, t_m_ns=t_m_ns)

    def validate(self) -> None:
        if not self.alpha0 > 0:
            raise ValidationError("alpha0 must be positive")
        if not 0.0 <= self.contrast < 1.0:
            raise ValidationError("contrast must lie in [0, 1)")
        if not math.isclose(self.alpha1, self.alpha0 * (1.0 - self.contrast),
                            rel_tol=1e-9, abs_tol=1e-12):
            raise ValidationError("alpha1 inconsistent with alpha0 and contrast")


def snr_landscape(alpha0_values, contrast_values) -> Array:
    """SNR on the (alpha0, contrast) grid; rows follow alpha0."""
    a = np.asarray(alpha0_values, dtype=float)
    c = np.asarray(contrast_values, dtype=float)
    if np.any(a <= 0):
        raise ValidationError("alpha0 grid must be positive")
    if np.any((c < 0) | (c >= 1)):
        raise ValidationError("contrast grid must lie in [0, 1)")
    return np.sqrt(a)[:, None] * (c / np.sqrt(2.0 - c))[None, :]


def write_snr_grid_csv(path: str | Path, alpha0_values, contrast_values) -> Path:
    """Long-format CSV of the SNR landscape: alpha0, contrast, snr."""
    table = snr_landscape(alpha0_values, contrast_values)
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["alpha0", "contrast", "snr"])
        for i, a in enumerate(np.asarray(alpha0_values, dtype=float)):
            for j, c in enumerate(np.asarray(contrast_values, dtype=float)):
                out.writerow([repr(float(a)), repr(float(c)), repr(float(table[i, j]))])
    return path


# ---------------------------------------------------------------------------
# collection-vs-count-rate calibration


class LineFit(NamedTuple):
    slope: float
    intercept: float
    slope_sigma: float
    intercept_sigma: float
    residual_rms: float


def eta_vs_iinf_fit(eta_bar, i_inf_kcts, sigma=None, with_intercept: bool = True) -> LineFit:
    """Weighted linear fit of simulated collection vs measured saturated rate.

    The slope carries units of seconds per kilocount. With `with_intercept`
    False the line is forced through the origin.
    """
    y = np.asarray(eta_bar, dtype=float)
    x = np.asarray(i_inf_kcts, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValidationError("calibration points must be 1D arrays of equal length")
    if x.size < 2:
        raise ValidationError(f"need at least 2 calibration points, got {x.size}")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != x.shape or np.any(sigma <= 0):
            raise ValidationError("sigma must be positive and match the data length")
        w = 1.0 / sigma
    else:
        w = np.ones_like(x)

    cols = [x] + ([np.ones_like(x)] if with_intercept else [])
    a = np.stack(cols, axis=1)
    theta, *_ = np.linalg.lstsq(a * w[:, None], y * w, rcond=None)
    fitted = a @ theta
    resid = y - fitted
    dof = x.size - a.shape[1]
    ata = (a * w[:, None] * w[:, None]).T @ a
    cov = np.linalg.pinv(ata)
    if sigma is None:
        cov = cov * (float(resid @ resid) / dof if dof > 0 else np.nan)
    err = np.sqrt(np.abs(np.diag(cov)))
    slope = float(theta[0])
    intercept = float(theta[1]) if with_intercept else 0.0
    intercept_sigma = float(err[1]) if with_intercept else 0.0
    return LineFit(
        slope=slope,
        intercept=intercept,
        slope_sigma=float(err[0]),
        intercept_sigma=intercept_sigma,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


# ---------------------------------------------------------------------------
# autocorrelation screening


class G2Result(NamedTuple):
    g2_zero: float
    is_single: bool


def is_single_emitter(delay_ns, coincidences, plateau_fraction: float = 0.2) -> G2Result:
    """Classify an intensity-autocorrelation histogram.

    The histogram is renormalized so the long-delay plateau (outer
    `plateau_fraction` of bins, split between both tails) sits at 1; the
    zero-delay value is then read from the bin nearest zero delay. Single
    emitter means strictly below 0.5.
    """
    d = np.asarray(delay_ns, dtype=float)
    c = np.asarray(coincidences, dtype=float)
    if d.ndim != 1 or d.shape != c.shape:
        raise ValidationError("delays and coincidences must be 1D arrays of equal length")
    if d.size < 10:
        raise DataError(f"too few histogram bins ({d.size}) to identify a plateau")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise DataError("coincidence counts must be finite and non-negative")

    n_side = max(1, int(round(0.5 * plateau_fraction * d.size)))
    order = np.argsort(d)
    tails = np.concatenate([c[order[:n_side]], c[order[-n_side:]]])
    plateau = float(tails.mean())
    if plateau <= 0:
        raise DataError("plateau level is zero; cannot normalize the histogram")
    if float(tails.std()) / plateau > 0.5:
        raise DataError("outer bins too scattered to define a plateau")

    g2_zero = float(c[np.argmin(np.abs(d))] / plateau)
    return G2Result(g2_zero=g2_zero, is_single=bool(g2_zero < G2_SINGLE_THRESHOLD))


# ---------------------------------------------------------------------------
# CSV ingest


def _read_csv_columns(path: str | Path, required: tuple[str, ...],
                      optional: tuple[str, ...] = ()) -> dict[str, Array]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(lines)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: header is missing columns {missing} (got {header})")
    idx = {c: header.index(c) for c in (*required, *optional) if c in header}
    data: dict[str, list[float]] = {c: [] for c in idx}
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not f.strip() for f in row):
            continue
        for c, i in idx.items():
            try:
                data[c].append(float(row[i]))
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: line {ln}: bad value for '{c}': {exc}") from exc
    return {c: np.array(v) for c, v in data.items()}


def read_saturation_csv(path: str | Path) -> SaturationData:
    cols = _read_csv_columns(path, ("power_uw", "kcts_per_s"), ("sigma",))
    return SaturationData(
        power_uw=cols["power_uw"],
        rate_kcts=cols["kcts_per_s"],
        sigma_kcts=cols.get("sigma"),
    )


def read_g2_csv(path: str | Path) -> tuple[Array, Array]:
    cols = _read_csv_columns(path, ("delay_ns", "norm_coincidences"))
    return cols["delay_ns"], cols["norm_coincidences"]


def read_calibration_csv(path: str | Path) -> tuple[Array, Array]:
    cols = _read_csv_columns(path, ("eta_bar", "i_inf_kcts"))
    return cols["eta_bar"], cols["i_inf_kcts"]
