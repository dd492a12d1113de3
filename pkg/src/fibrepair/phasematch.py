"""Four-wave-mixing energy conservation and phase matching in a birefringent fibre.

Two pump photons on one axis produce a signal/idler pair on the same or the
orthogonal axis. The signal is the blue photon: lambda_s < lambda_p < lambda_i.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dispersion import C_LIGHT, _check_range, group_index
from .errors import (
    BracketError,
    ConfigError,
    DegenerateContinuumError,
    DomainError,
    SingularityError,
)

DK_TOL = 1e-3  # 1/m
SCAN_SAMPLES = 2000
PUMP_GUARD = 1e-5  # relative distance kept between the scanned signal and the pump


class Scheme(enum.Enum):
    """Pump axis -> pair axis."""

    SS_SS = "ssss"
    FF_FF = "ffff"
    SS_FF = "ssff"
    FF_SS = "ffss"

    @property
    def pump_axis(self):
        return self.value[0]

    @property
    def pair_axis(self):
        return self.value[2]

    @property
    def label(self):
        return f"{self.value[:2]}->{self.value[2:]}"

    def __str__(self):
        return self.label

    @classmethod
    def parse(cls, text):
        """Accept ``ss->ff``, ``ss→ff``, ``ssff``, ``SS-FF`` and the like."""
        if isinstance(text, cls):
            return text
        key = str(text).lower()
        for sep in ("->", "→", "-", ">", " ", "_"):
            key = key.replace(sep, "")
        for member in cls:
            if member.value == key:
                return member
        raise ConfigError(f"unknown scheme {text!r}; expected one of ss->ss, ff->ff, ss->ff, ff->ss")


@dataclass(frozen=True)
class PumpSpec:
    """Pump pulse: centre wavelength, intensity FWHM in nm, envelope and peak power."""

    lambda_nm: float
    fwhm_nm: float
    shape: str = "gaussian"
    peak_power_w: float = 0.0
    order: int = 1
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lambda_nm > 0:
            raise ConfigError("pump wavelength must be positive")
        if not self.fwhm_nm > 0:
            raise ConfigError("pump bandwidth must be positive")
        if not self.peak_power_w >= 0:
            raise ConfigError("pump peak power must be non-negative")
        if self.shape not in ("gaussian", "tophat", "supergaussian"):
            raise ConfigError(f"unknown pump shape {self.shape!r}")
        if int(self.order) < 1:
            raise ConfigError("supergaussian order must be >= 1")

    @property
    def fwhm_omega(self):
        return omega_width(self.lambda_nm, self.fwhm_nm)


@dataclass(frozen=True)
class PhaseMatchPoint:
    lambda_p: float
    lambda_s: float
    lambda_i: float
    scheme: Scheme
    dk_residual: float
    peak_power_w: float
    N_p: float
    N_s: float
    N_i: float


def omega_width(lam_nm, dlam_nm):
    """Angular-frequency width (rad/s) of a small wavelength interval at lam_nm."""
    return 2.0 * np.pi * C_LIGHT * (np.asarray(dlam_nm) * 1e-9) / (np.asarray(lam_nm) * 1e-9) ** 2


def lambda_width(lam_nm, domega):
    """Inverse of :func:`omega_width`, in nm."""
    return np.asarray(domega) * (np.asarray(lam_nm) * 1e-9) ** 2 / (2.0 * np.pi * C_LIGHT) * 1e9


def gamma(fibre, lambda_p):
    """Nonlinear coefficient 2 pi n2 / (lambda_p A_eff) in 1/(W m)."""
    if not lambda_p > 0:
        raise DomainError("pump wavelength must be positive")
    return 2.0 * math.pi * fibre.n2_m2_per_W / (lambda_p * 1e-9 * fibre.aeff_m2)


def idler_from_energy(lambda_p, lambda_s):
    """Idler wavelength from 2 omega_p = omega_s + omega_i."""
    inv = 2.0 / np.asarray(lambda_p, dtype=float) - 1.0 / np.asarray(lambda_s, dtype=float)
    if np.any(inv <= 0):
        raise DomainError("signal too blue for this pump: no positive idler frequency")
    out = 1.0 / inv
    return float(out) if np.ndim(out) == 0 else out


def _axes(fibre, scheme):
    scheme = Scheme.parse(scheme)
    return fibre.axis(scheme.pump_axis), fibre.axis(scheme.pair_axis)


def delta_k(fibre, scheme, lambda_p, lambda_s, lambda_i, peak_power_w=0.0):
    """2 k_p - k_s - k_i - 2 gamma P in 1/m (wavelengths in nm, broadcastable)."""
    pump, pair = _axes(fibre, scheme)
    lp = np.asarray(lambda_p, dtype=float)
    ls = np.asarray(lambda_s, dtype=float)
    li = np.asarray(lambda_i, dtype=float)
    if np.any(lp <= 0):
        raise DomainError("pump wavelength must be positive")
    k = 2.0 * np.pi * (2.0 * pump.n(lp) / lp - pair.n(ls) / ls - pair.n(li) / li) * 1e9
    nl = 2.0 * peak_power_w * 2.0 * np.pi * fibre.n2_m2_per_W / (lp * 1e-9 * fibre.aeff_m2)
    out = k - nl
    return float(out) if np.ndim(out) == 0 else out


def _point(fibre, scheme, lp, ls, peak_power_w):
    pump, pair = _axes(fibre, scheme)
    li = idler_from_energy(lp, ls)
    return PhaseMatchPoint(
        lambda_p=float(lp),
        lambda_s=float(ls),
        lambda_i=float(li),
        scheme=Scheme.parse(scheme),
        dk_residual=float(delta_k(fibre, scheme, lp, ls, li, peak_power_w)),
        peak_power_w=float(peak_power_w),
        N_p=float(group_index(pump, lp)),
        N_s=float(group_index(pair, ls)),
        N_i=float(group_index(pair, li)),
    )


def _scan_window(fibre, lambda_p, window):
    lo_r, hi_r = fibre.valid_range
    if window is None:
        window = (lo_r, lambda_p)
    w_lo, w_hi = map(float, window)
    if not w_lo < w_hi:
        raise ConfigError(f"empty signal window {window}")
    _check_range([w_lo, w_hi], (lo_r, hi_r), f"{fibre.name} signal window")
    # keep the idler inside the model and the signal strictly blue of the pump
    inv = 2.0 / lambda_p - 1.0 / hi_r
    s_min = 1.0 / inv * (1.0 + 1e-9) if inv > 0 else math.inf
    lo = max(w_lo, s_min)
    hi = min(w_hi, lambda_p * (1.0 - PUMP_GUARD))
    return lo, hi


def solve_phasematch(fibre, scheme, lambda_p, peak_power_w=0.0, signal_window=None, samples=SCAN_SAMPLES):
    """All phase-matched signal wavelengths in the window, sorted by lambda_s.

    The window defaults to everything blue of the pump. Signal wavelengths whose
    idler would leave the model's range are not scanned.
    """
    scheme = Scheme.parse(scheme)
    _check_range(lambda_p, fibre.valid_range, f"{fibre.name} pump", strict=True)
    lo, hi = _scan_window(fibre, lambda_p, signal_window)
    if not lo < hi:
        return []
    ls = np.linspace(lo, hi, int(samples))
    li = idler_from_energy(lambda_p, ls)
    dk = delta_k(fibre, scheme, lambda_p, ls, li, peak_power_w)
    if np.max(np.abs(dk)) < 1e-6:
        raise DegenerateContinuumError(
            f"delta k vanishes over the whole window {lo:g}-{hi:g} nm: no isolated roots"
        )

    def dk_at(x):
        return delta_k(fibre, scheme, lambda_p, x, idler_from_energy(lambda_p, x), peak_power_w)

    # delta k has a trivial double root at the pump; dividing by the squared
    # detuning removes it so rounding noise near the pump cannot fake a crossing
    def f(x):
        detune = 1.0 / x - 1.0 / lambda_p
        return dk_at(x) / detune**2

    dk = dk / (1.0 / ls - 1.0 / lambda_p) ** 2

    points = []
    sign = np.sign(dk)
    for j in np.flatnonzero(sign[:-1] * sign[1:] <= 0):
        if dk[j] == 0.0:
            root = ls[j]
        elif dk[j + 1] == 0.0:
            if j + 1 < len(ls) - 1:
                continue  # picked up as the left end of the next interval
            root = ls[j + 1]
        else:
            root = brentq(f, ls[j], ls[j + 1], xtol=1e-12, rtol=4 * np.finfo(float).eps)
        if abs(root - lambda_p) < 1e-6 or abs(dk_at(root)) >= DK_TOL:
            continue
        points.append(_point(fibre, scheme, lambda_p, root, peak_power_w))
    return sorted(points, key=lambda p: p.lambda_s)


def phasematch_curve(fibre, scheme, lambda_p_range, steps, peak_power_w=0.0, signal_window=None):
    """[(lambda_p, [PhaseMatchPoint, ...]), ...] over ``steps`` evenly spaced pumps."""
    steps = int(steps)
    lo, hi = map(float, lambda_p_range)
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if steps == 1:
        pumps = np.array([lo])
    else:
        if not lo < hi:
            raise ConfigError("pump range must be increasing")
        pumps = np.linspace(lo, hi, steps)
    return [
        (float(lp), solve_phasematch(fibre, scheme, lp, peak_power_w, signal_window))
        for lp in pumps
    ]


def write_curve_csv(curve, fh):
    """CSV with one row per (pump, branch) solution."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["lambda_p_nm", "branch", "lambda_s_nm", "lambda_i_nm", "dk_residual_per_m"])
    for lp, points in curve:
        for branch, p in enumerate(points):
            writer.writerow([f"{lp:.9g}", branch, f"{p.lambda_s:.9g}", f"{p.lambda_i:.9g}", f"{p.dk_residual:.9g}"])


def _gv_mismatch(fibre, scheme, lambda_p, signal_window, branch):
    pts = solve_phasematch(fibre, scheme, lambda_p, 0.0, signal_window)
    if len(pts) <= branch:
        return math.nan
    p = pts[branch]
    return p.N_p - p.N_i


def zero_slope_pump(fibre, scheme, bracket, signal_window=None, branch=0, samples=41):
    """Pump wavelength where N_p equals the idler group index (to 1e-4 nm).

    ``branch`` picks the phase-matching solution (0 = bluest signal in the window).
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ConfigError("bracket must be increasing")
    grid = np.linspace(lo, hi, int(samples))
    vals = np.array([_gv_mismatch(fibre, scheme, lp, signal_window, branch) for lp in grid])
    for j in range(len(grid) - 1):
        a, b = vals[j], vals[j + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b <= 0:
            if a == 0.0:
                return float(grid[j])
            return float(
                brentq(
                    lambda x: _gv_mismatch(fibre, scheme, x, signal_window, branch),
                    grid[j],
                    grid[j + 1],
                    xtol=1e-4,
                )
            )
    raise BracketError(f"pump/idler group indices do not cross between {lo:g} and {hi:g} nm")


def bandwidth_terms(point, length_m, domega_p):
    """The two terms of the signal-bandwidth formula (rad/s)."""
    if not length_m > 0:
        raise ConfigError("fibre length must be positive")
    dsi = point.N_s - point.N_i
    if abs(dsi) < 1e-15:
        raise SingularityError("signal and idler group indices are equal: bandwidth diverges")
    first = 2.0 * math.pi * C_LIGHT / (abs(dsi) * length_m)
    second = 2.0 * abs((point.N_i - point.N_p) / dsi) * domega_p
    return first, second


def signal_bandwidth(point, length_m, domega_p):
    """(delta omega_s in rad/s, delta lambda_s in nm) for pump bandwidth domega_p."""
    first, second = bandwidth_terms(point, length_m, domega_p)
    dw = first + second
    return dw, float(lambda_width(point.lambda_s, dw))
