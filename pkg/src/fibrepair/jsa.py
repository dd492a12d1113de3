"""Joint spectral amplitude F(w_s, w_i) = alpha(w_s + w_i) phi(w_s, w_i) on a grid.

Axes are absolute angular frequencies (rad/s), uniform and increasing, centred
on a phase-matched point. ``phase_model="exact"`` evaluates the mismatch from the
full index models; ``"taylor"`` uses the first-order group-index expansion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .dispersion import C_LIGHT, nm_from_omega, omega_from_nm, propagation_constant
from .errors import ConfigError, FilterError, NormalizationError, SpanError
from .phasematch import PumpSpec, lambda_width

NORM_TOL = 1e-9
CAPTURE_MIN = 0.99
# FWHM of sinc^2(x) in x is 2 * SINC_HALF_POWER_X; along one axis x = a L dw / 2
PM_FWHM_X = 4.0 * _kernels.SINC_HALF_POWER_X

_PUMP_CODES = {
    "gaussian": _kernels.PUMP_GAUSSIAN,
    "tophat": _kernels.PUMP_TOPHAT,
    "supergaussian": _kernels.PUMP_SUPERGAUSSIAN,
}
_PM_CODES = {"sinc": _kernels.PM_SINC, "gaussian": _kernels.PM_GAUSSIAN}


@dataclass(frozen=True)
class FilterSpec:
    """Bandpass filter on one arm; ``fwhm_nm`` refers to intensity transmission."""

    center_nm: float
    fwhm_nm: float
    shape: str = "tophat"
    order: int = 2

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise ConfigError("filter FWHM must be positive")
        if not self.center_nm > 0:
            raise ConfigError("filter centre must be positive")
        if self.shape not in ("tophat", "gaussian", "supergaussian"):
            raise ConfigError(f"unknown filter shape {self.shape!r}")
        if int(self.order) < 1:
            raise ConfigError("supergaussian order must be >= 1")

    def intensity(self, lam_nm):
        d = np.abs(np.asarray(lam_nm, dtype=float) - self.center_nm) / (0.5 * self.fwhm_nm)
        if self.shape == "tophat":
            return (d <= 1.0).astype(float)
        m = 1 if self.shape == "gaussian" else int(self.order)
        return np.exp(-math.log(2.0) * d ** (2 * m))

    def amplitude(self, lam_nm):
        return np.sqrt(self.intensity(lam_nm))


@dataclass(frozen=True)
class RelativeFilter:
    """Filter sized as ``factor`` x the unfiltered marginal FWHM, centred on its peak."""

    factor: float
    shape: str = "tophat"
    order: int = 2

    def __post_init__(self):
        if not self.factor > 0:
            raise ConfigError("relative filter factor must be positive")


@dataclass(frozen=True)
class JsaGrid:
    omega_s: np.ndarray
    omega_i: np.ndarray
    F: np.ndarray
    point: object
    normalized: bool = True
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def d_omega_s(self):
        return float(self.omega_s[1] - self.omega_s[0])

    @property
    def d_omega_i(self):
        return float(self.omega_i[1] - self.omega_i[0])

    @property
    def lambda_s(self):
        return nm_from_omega(self.omega_s)

    @property
    def lambda_i(self):
        return nm_from_omega(self.omega_i)

    @property
    def shape(self):
        return self.F.shape

    def norm(self):
        return float(np.sum(np.abs(self.F) ** 2) * self.d_omega_s * self.d_omega_i)


def _axis_ok(ax):
    step = np.diff(ax)
    return ax.ndim == 1 and ax.size >= 2 and np.all(step > 0) and np.allclose(step, step[0], rtol=1e-9, atol=0)


def make_grid(omega_s, omega_i, F, point=None, metadata=None, normalize=True):
    """Wrap a user-supplied field; checks axes and optionally normalizes."""
    ws = np.asarray(omega_s, dtype=float)
    wi = np.asarray(omega_i, dtype=float)
    F = np.asarray(F, dtype=complex)
    if not (_axis_ok(ws) and _axis_ok(wi)):
        raise ConfigError("JSA axes must be uniform and strictly increasing")
    if F.shape != (ws.size, wi.size):
        raise ConfigError(f"field shape {F.shape} does not match axes ({ws.size}, {wi.size})")
    if not np.all(np.isfinite(F)):
        raise ConfigError("JSA contains non-finite values")
    grid = JsaGrid(ws, wi, F, point, normalized=False, metadata=dict(metadata or {}))
    return normalize_grid(grid) if normalize else grid


def normalize_grid(grid):
    total = grid.norm()
    if not total > 0:
        raise NormalizationError("JSA is identically zero")
    return replace(grid, F=grid.F / math.sqrt(total), normalized=True)


def require_normalized(grid):
    if not grid.normalized or abs(grid.norm() - 1.0) > NORM_TOL:
        raise NormalizationError(f"JSA is not normalized (norm {grid.norm():.12g})")


def pump_sigma(pump):
    """Gaussian width parameter sigma (s) so that |alpha|^2 has the pump intensity FWHM."""
    if pump.shape != "gaussian":
        raise ConfigError(f"sigma is only defined for a gaussian pump, not {pump.shape!r}")
    return 2.0 * math.sqrt(math.log(2.0)) / pump.fwhm_omega


def pump_amplitude(pump, domega_sum):
    """alpha(delta w_s + delta w_i), peak 1; supergaussian edges use ``pump.order``."""
    u = np.asarray(domega_sum, dtype=float)
    fwhm = pump.fwhm_omega
    if pump.shape == "tophat":
        out = (np.abs(u) <= 0.5 * fwhm).astype(float)
    elif pump.shape == "supergaussian":
        out = np.exp(-0.5 * math.log(2.0) * np.abs(2.0 * u / fwhm) ** (2 * int(pump.order)))
    else:
        sigma = pump_sigma(pump)
        out = np.exp(-0.5 * (u * sigma) ** 2)
    return out.astype(complex)


def taylor_coefficients(point):
    """(N_s - N_p)/c and (N_i - N_p)/c in s/m."""
    return (point.N_s - point.N_p) / C_LIGHT, (point.N_i - point.N_p) / C_LIGHT


def phasematch_amplitude(point, length_m, domega_s, domega_i, pm_shape="sinc"):
    """exp(i dk L/2) sinc(dk L/2) with the first-order (group-index) mismatch."""
    a_s, a_i = taylor_coefficients(point)
    x = 0.5 * length_m * (a_s * np.asarray(domega_s, dtype=float) + a_i * np.asarray(domega_i, dtype=float))
    if pm_shape == "gaussian":
        env = np.exp(-_kernels.GAUSS_PM_COEFF * x * x)
    elif pm_shape == "sinc":
        env = np.sinc(x / np.pi)
    else:
        raise ConfigError(f"unknown phase-matching shape {pm_shape!r}")
    return env * np.exp(1j * x)


def pm_fwhm(coef, length_m):
    """FWHM (rad/s) of |phi|^2 along one axis, inf for a zero coefficient."""
    a = abs(coef)
    return math.inf if a == 0 else PM_FWHM_X / (a * length_m)


def default_spans(point, pump_fwhm_omega, length_m, factor=4.0):
    """Half-spans (rad/s) of the signal and idler detuning axes.

    Each axis gets ``factor`` x the larger of the pump FWHM and the phase-matching
    FWHM along it. A phase-matching width is capped by the other axis's width
    plus the pump width, since energy conservation ties the two supports.
    """
    a_s, a_i = taylor_coefficients(point)
    pm_s, pm_i = pm_fwhm(a_s, length_m), pm_fwhm(a_i, length_m)
    dp = pump_fwhm_omega

    def capped(own, other):
        if math.isinf(own) and math.isinf(other):
            return dp
        return min(own, max(dp, other))

    return factor * max(dp, capped(pm_s, pm_i)), factor * max(dp, capped(pm_i, pm_s))


def _mismatch_x(fibre, point, length_m, omega_s, omega_i, phase_model):
    ds = omega_s - omega_from_nm(point.lambda_s)
    di = omega_i - omega_from_nm(point.lambda_i)
    if phase_model == "taylor":
        a_s, a_i = taylor_coefficients(point)
        return 0.5 * length_m * (a_s * ds[:, None] + a_i * di[None, :])
    if phase_model != "exact":
        raise ConfigError(f"unknown phase model {phase_model!r}")
    pump_ax = fibre.axis(point.scheme.pump_axis)
    pair_ax = fibre.axis(point.scheme.pair_axis)
    w_s0, w_i0 = omega_from_nm(point.lambda_s), omega_from_nm(point.lambda_i)
    w_p0 = 0.5 * (w_s0 + w_i0)
    k0 = (
        propagation_constant(pair_ax, w_s0)
        + propagation_constant(pair_ax, w_i0)
        - 2.0 * propagation_constant(pump_ax, w_p0)
    )
    ks = propagation_constant(pair_ax, omega_s)
    ki = propagation_constant(pair_ax, omega_i)
    kp = propagation_constant(pump_ax, 0.5 * (omega_s[:, None] + omega_i[None, :]))
    return 0.5 * length_m * ((ks[:, None] + ki[None, :] - 2.0 * kp) - k0)


def _field(fibre, pump, point, length_m, ds, di, phase_model, pm_shape):
    w_s0, w_i0 = omega_from_nm(point.lambda_s), omega_from_nm(point.lambda_i)
    x = _mismatch_x(fibre, point, length_m, w_s0 + ds, w_i0 + di, phase_model)
    return _kernels.jsa_field(
        ds,
        di,
        np.ascontiguousarray(x),
        _PUMP_CODES[pump.shape],
        float(pump.fwhm_omega),
        int(pump.order),
        _PM_CODES[pm_shape],
    ), x


def _check_points(coef, half, length_m, n_min=256, n_max=2048):
    # enough samples that the |x| < pi stripe is at least 8 points wide along this axis
    lobe = 4.0 * math.pi / max(abs(coef) * length_m, 1e-300)
    n = math.ceil(8.0 * 4.0 * half / lobe)
    return int(min(max(n, n_min), n_max))


def _main_lobe_capture(fibre, pump, point, length_m, half_s, half_i, phase_model, pm_shape):
    # main lobe: |x| < pi (sinc) together with the pump envelope; look on a doubled span
    a_s, a_i = taylor_coefficients(point)
    ds = np.linspace(-2 * half_s, 2 * half_s, _check_points(a_s, half_s, length_m))
    di = np.linspace(-2 * half_i, 2 * half_i, _check_points(a_i, half_i, length_m))
    try:
        F, x = _field(fibre, pump, point, length_m, ds, di, phase_model, pm_shape)
    except ConfigError:
        # doubled span leaves the model range; fall back to the grid itself
        ds, di = ds / 2, di / 2
        F, x = _field(fibre, pump, point, length_m, ds, di, phase_model, pm_shape)
        return 1.0 if np.abs(F[[0, -1], :]).max() < 1e-3 and np.abs(F[:, [0, -1]]).max() < 1e-3 else 0.0
    inten = np.abs(F) ** 2 * (np.abs(x) < np.pi)
    total = inten.sum()
    if total == 0:
        return 0.0
    inside = inten[np.abs(ds) <= half_s][:, np.abs(di) <= half_i].sum()
    return float(inside / total)


def build_jsa(
    fibre,
    pump,
    point,
    length_m=None,
    n_s=512,
    n_i=512,
    span_factor=4.0,
    spans=None,
    phase_model="exact",
    pm_shape="sinc",
    check_capture=True,
):
    """Sample and normalize the JSA around ``point``.

    ``spans`` overrides the half-widths (rad/s) of the signal and idler detuning
    axes; otherwise :func:`default_spans` is used. Raises :class:`SpanError`
    when less than 99 % of the main lobe falls inside the grid.
    """
    if not isinstance(pump, PumpSpec):
        raise ConfigError("pump must be a PumpSpec")
    if n_s < 64 or n_i < 64:
        raise ConfigError("grid sizes must be at least 64")
    if pm_shape not in _PM_CODES:
        raise ConfigError(f"unknown phase-matching shape {pm_shape!r}")
    if abs(pump.lambda_nm - point.lambda_p) > 1e-3:
        raise ConfigError(
            f"pump centre {pump.lambda_nm:g} nm differs from the phase-matched pump {point.lambda_p:g} nm"
        )
    length_m = fibre.length_m if length_m is None else float(length_m)
    if not length_m > 0:
        raise ConfigError("fibre length must be positive")
    if spans is None:
        half_s, half_i = default_spans(point, pump.fwhm_omega, length_m, span_factor)
    else:
        half_s, half_i = map(float, spans)
    if not (half_s > 0 and half_i > 0 and math.isfinite(half_s) and math.isfinite(half_i)):
        raise SpanError("grid span is not finite and positive")

    ds = np.linspace(-half_s, half_s, int(n_s))
    di = np.linspace(-half_i, half_i, int(n_i))
    F, _ = _field(fibre, pump, point, length_m, ds, di, phase_model, pm_shape)
    if check_capture:
        capture = _main_lobe_capture(fibre, pump, point, length_m, half_s, half_i, phase_model, pm_shape)
        if capture < CAPTURE_MIN:
            raise SpanError(
                f"grid captures only {100 * capture:.2f}% of the main lobe; widen the span "
                f"(span_factor > {span_factor:g}) or pass explicit spans"
            )
    meta = {
        "pump": pump,
        "length_m": length_m,
        "phase_model": phase_model,
        "pm_shape": pm_shape,
        "fibre": fibre.name,
        "filters": (),
    }
    return make_grid(
        omega_from_nm(point.lambda_s) + ds,
        omega_from_nm(point.lambda_i) + di,
        F,
        point,
        meta,
    )


def _passband(spec):
    return spec.center_nm - 0.5 * spec.fwhm_nm, spec.center_nm + 0.5 * spec.fwhm_nm


def resolve_filters(grid, filter_s=None, filter_i=None):
    """Turn :class:`RelativeFilter` entries into absolute :class:`FilterSpec` for this grid."""
    if not any(isinstance(f, RelativeFilter) for f in (filter_s, filter_i)):
        return filter_s, filter_i
    m = jsi_and_marginals(grid)
    out = []
    for f, peak, fwhm in (
        (filter_s, m.peak_s_nm, m.fwhm_s_nm),
        (filter_i, m.peak_i_nm, m.fwhm_i_nm),
    ):
        if isinstance(f, RelativeFilter):
            f = FilterSpec(peak, f.factor * fwhm, f.shape, f.order)
        out.append(f)
    return tuple(out)


def apply_filters(grid, filter_s=None, filter_i=None):
    """Multiply by amplitude transmissions (sqrt of intensity) and renormalize."""
    filter_s, filter_i = resolve_filters(grid, filter_s, filter_i)
    F = grid.F
    for spec, lam, axis in ((filter_s, grid.lambda_s, 0), (filter_i, grid.lambda_i, 1)):
        if spec is None:
            continue
        lo, hi = _passband(spec)
        if hi < lam.min() or lo > lam.max():
            raise FilterError(
                f"filter passband {lo:g}-{hi:g} nm does not overlap the grid ({lam.min():g}-{lam.max():g} nm)"
            )
        t = spec.amplitude(lam)
        F = F * (t[:, None] if axis == 0 else t[None, :])
    if not np.any(np.abs(F) > 0):
        raise FilterError("filters remove the whole JSA")
    meta = dict(grid.metadata)
    meta["filters"] = tuple(meta.get("filters", ())) + ((filter_s, filter_i),)
    return normalize_grid(replace(grid, F=F, metadata=meta))


def _fwhm_linear(x, y):
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    above = np.flatnonzero(y >= half)
    lo, hi = above[0], above[-1]

    def cross(i, j):
        if y[i] == y[j]:
            return x[i]
        return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    left = x[lo] if lo == 0 else cross(lo - 1, lo)
    right = x[hi] if hi == len(x) - 1 else cross(hi, hi + 1)
    return float(abs(right - left))


def fwhm(x, y, method="spline"):
    """Full width at half maximum of samples y(x) on an increasing axis.

    ``"spline"`` refines the peak and both half-maximum crossings on a cubic
    spline through the samples around the peak, which stays accurate with a
    handful of points per width. ``"linear"`` interpolates between samples.
    Falls back to linear when the spline gives no bracketing crossings.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if method == "linear" or x.size < 4:
        return _fwhm_linear(x, y)
    if method != "spline":
        raise ConfigError(f"unknown FWHM method {method!r}")
    k = int(np.argmax(y))
    above = np.flatnonzero(y >= 0.5 * y[k])
    a, b = max(above[0] - 3, 0), min(above[-1] + 3, x.size - 1)
    if b - a < 3:
        return _fwhm_linear(x, y)
    cs = CubicSpline(x[a : b + 1], y[a : b + 1])
    near = np.linspace(x[max(k - 1, a)], x[min(k + 1, b)], 201)
    vals = cs(near)
    j = int(np.argmax(vals))
    peak_x, peak = near[j], max(float(vals[j]), float(y[k]))
    roots = np.real(cs.solve(0.5 * peak, extrapolate=False))
    left, right = roots[roots < peak_x], roots[roots > peak_x]
    if left.size == 0 or right.size == 0:
        return _fwhm_linear(x, y)
    return float(right.min() - left.max())


@dataclass(frozen=True)
class Marginals:
    jsi: np.ndarray
    signal: np.ndarray  # per rad/s, integrates to 1
    idler: np.ndarray
    fwhm_s_omega: float
    fwhm_i_omega: float
    fwhm_s_nm: float
    fwhm_i_nm: float
    peak_s_nm: float
    peak_i_nm: float


def jsi_and_marginals(grid):
    require_normalized(grid)
    jsi = np.abs(grid.F) ** 2
    sig = jsi.sum(axis=1) * grid.d_omega_i
    idl = jsi.sum(axis=0) * grid.d_omega_s
    fs = fwhm(grid.omega_s, sig)
    fi = fwhm(grid.omega_i, idl)
    ps = float(nm_from_omega(grid.omega_s[np.argmax(sig)]))
    pi_ = float(nm_from_omega(grid.omega_i[np.argmax(idl)]))
    return Marginals(
        jsi=jsi,
        signal=sig,
        idler=idl,
        fwhm_s_omega=fs,
        fwhm_i_omega=fi,
        fwhm_s_nm=float(lambda_width(ps, fs)),
        fwhm_i_nm=float(lambda_width(pi_, fi)),
        peak_s_nm=ps,
        peak_i_nm=pi_,
    )


def write_jsi_csv(grid, fh):
    """First row: idler wavelengths (nm); first column: signal wavelengths; body: |F|^2."""
    require_normalized(grid)
    jsi = np.abs(grid.F) ** 2
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["lambda_s_nm\\lambda_i_nm"] + [f"{v:.9g}" for v in grid.lambda_i])
    for lam, row in zip(grid.lambda_s, jsi):
        w.writerow([f"{lam:.9g}"] + [f"{v:.9g}" for v in row])


def write_marginal_csv(lambda_nm, intensity, fh):
    """``lambda_nm,intensity`` rows in increasing wavelength."""
    order = np.argsort(lambda_nm)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["lambda_nm", "intensity"])
    for j in order:
        w.writerow([f"{lambda_nm[j]:.9g}", f"{intensity[j]:.9g}"])
