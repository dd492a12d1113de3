"""Schmidt decomposition, purity optimization and Hong-Ou-Mandel overlap of JSAs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import ConfigError, DomainError, ResampleError
from .jsa import apply_filters, build_jsa, require_normalized
from .phasematch import PumpSpec

TRUNCATE = 1e-12
MAX_RESAMPLE_POINTS = 16384
MAX_SPACING_RATIO = 4.0


@dataclass(frozen=True)
class SchmidtDecomposition:
    weights: np.ndarray  # lambda_j, descending, sum 1
    signal_modes: np.ndarray  # columns f_j, unit norm under the grid measure
    idler_modes: np.ndarray  # columns g_j
    K: float

    @property
    def purity(self):
        return 1.0 / self.K


def _scaled(grid):
    require_normalized(grid)
    return grid.F * math.sqrt(grid.d_omega_s * grid.d_omega_i)


def _weights(s):
    lam = s**2 / np.sum(s**2)
    return lam[lam >= TRUNCATE]


def schmidt_decompose(grid):
    """SVD of F sqrt(dw_s dw_i); weights below 1e-12 are dropped."""
    u, s, vh = np.linalg.svd(_scaled(grid), full_matrices=False)
    lam = _weights(s)
    r = lam.size
    f = u[:, :r] / math.sqrt(grid.d_omega_s)
    g = vh[:r, :].T / math.sqrt(grid.d_omega_i)
    return SchmidtDecomposition(lam, f, g, float(1.0 / np.sum(lam**2)))


def schmidt_number(grid):
    s = np.linalg.svd(_scaled(grid), compute_uv=False)
    return float(1.0 / np.sum(_weights(s) ** 2))


def purity(grid):
    return 1.0 / schmidt_number(grid)


def reconstruct(decomp):
    """sum_j sqrt(lambda_j) f_j(w_s) g_j(w_i)."""
    return (decomp.signal_modes * np.sqrt(decomp.weights)) @ decomp.idler_modes.T


# ------------------------------------------------------------ purity scans


@dataclass(frozen=True)
class PurityScanResult:
    axis_name: str
    axis: np.ndarray
    K: np.ndarray
    argmin: float
    K_min: float
    boundary: bool


def _k_at(fibre, point, length_m, bw_nm, filters, grid_kw):
    pump = PumpSpec(point.lambda_p, bw_nm, grid_kw.get("pump_shape", "gaussian"))
    kw = {k: v for k, v in grid_kw.items() if k != "pump_shape"}
    grid = build_jsa(fibre, pump, point, length_m, **kw)
    if filters:
        grid = apply_filters(grid, *filters)
    return schmidt_number(grid)


def optimize_pump_bandwidth(
    fibre,
    point,
    length_m,
    bw_range=(0.5, 8.0),
    filters=None,
    samples=40,
    xtol=1e-4,
    **grid_kw,
):
    """Coarse log-spaced scan of K(pump FWHM) plus golden-section refinement.

    ``filters`` is an optional (signal, idler) pair of FilterSpec/RelativeFilter
    applied to every JSA before the decomposition. A minimum on the edge of the
    scan is returned with ``boundary=True``.
    """
    lo, hi = map(float, bw_range)
    if not (lo > 0 and hi >= lo):
        raise ConfigError("pump bandwidth range must be positive and increasing")
    samples = int(samples)
    if samples < 1:
        raise ConfigError("need at least one sample")
    bws = np.array([lo]) if samples == 1 or lo == hi else np.geomspace(lo, hi, samples)
    ks = np.array([_k_at(fibre, point, length_m, b, filters, grid_kw) for b in bws])
    j = int(np.argmin(ks))
    if j == 0 or j == len(bws) - 1:
        return PurityScanResult("pump_fwhm_nm", bws, ks, float(bws[j]), float(ks[j]), True)

    f = lambda t: _k_at(fibre, point, length_m, math.exp(t), filters, grid_kw)
    t = np.log(bws)
    res = minimize_scalar(f, bracket=(t[j - 1], t[j], t[j + 1]), method="golden", options={"xtol": xtol})
    best_bw, best_k = (math.exp(res.x), float(res.fun)) if res.fun <= ks[j] else (bws[j], ks[j])
    return PurityScanResult("pump_fwhm_nm", bws, ks, float(best_bw), float(best_k), False)


@dataclass(frozen=True)
class LengthScan:
    lengths: np.ndarray
    K_min: np.ndarray
    bw_opt: np.ndarray
    results: tuple

    @property
    def k_decreasing(self):
        return bool(np.all(np.diff(self.K_min) < 0))

    @property
    def bw_decreasing(self):
        return bool(np.all(np.diff(self.bw_opt) < 0))

    def rows(self):
        return list(zip(self.lengths.tolist(), self.K_min.tolist(), self.bw_opt.tolist()))


def scan_length(fibre, point, lengths, bw_range=(0.5, 8.0), filters=None, **kw):
    lengths = np.asarray(lengths, dtype=float)
    if lengths.size == 0 or np.any(lengths <= 0):
        raise ConfigError("lengths must be positive")
    results = tuple(optimize_pump_bandwidth(fibre, point, L, bw_range, filters, **kw) for L in lengths)
    return LengthScan(
        lengths,
        np.array([r.K_min for r in results]),
        np.array([r.argmin for r in results]),
        results,
    )


def visibility_to_schmidt(v):
    if not 0 < v <= 1:
        raise DomainError("visibility must lie in (0, 1]")
    return 1.0 / v


def schmidt_to_visibility(k):
    if not k >= 1:
        raise DomainError("Schmidt number must be >= 1")
    return 1.0 / k


# ------------------------------------------------------------ HOM overlap


def _reduced_state(F, d_omega_i):
    return (F @ F.conj().T) * d_omega_i


def _interp_rows(x_new, x_old, F):
    # linear interpolation along the signal axis, zero outside the source span
    out = np.empty((x_new.size, F.shape[1]), dtype=complex)
    for k in range(F.shape[1]):
        col = F[:, k]
        out[:, k] = np.interp(x_new, x_old, col.real, left=0.0, right=0.0) + 1j * np.interp(
            x_new, x_old, col.imag, left=0.0, right=0.0
        )
    return out


def _common_signal_states(a, b):
    require_normalized(a)
    require_normalized(b)
    if a.omega_s.size == b.omega_s.size and np.allclose(a.omega_s, b.omega_s, rtol=1e-12, atol=0):
        return a.omega_s, _reduced_state(a.F, a.d_omega_i), _reduced_state(b.F, b.d_omega_i)
    da, db = a.d_omega_s, b.d_omega_s
    if max(da, db) / min(da, db) > MAX_SPACING_RATIO:
        raise ResampleError(f"signal-axis spacings differ by more than {MAX_SPACING_RATIO:g}x")
    step = min(da, db)
    lo = min(a.omega_s[0], b.omega_s[0])
    hi = max(a.omega_s[-1], b.omega_s[-1])
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if n > MAX_RESAMPLE_POINTS:
        raise ResampleError(f"common signal axis would need {n} points (limit {MAX_RESAMPLE_POINTS})")
    axis = lo + step * np.arange(n)
    states = []
    for g in (a, b):
        rho = _reduced_state(_interp_rows(axis, g.omega_s, g.F), g.d_omega_i)
        tr = float(np.trace(rho).real) * step
        if tr > 0:
            rho = rho / tr
        states.append(rho)
    return axis, states[0], states[1]


def _overlap_series(a, b):
    axis, ra, rb = _common_signal_states(a, b)
    step = axis[1] - axis[0]
    g = _kernels.diagonal_sums(np.ascontiguousarray(ra * rb.T)) * step**2
    d = np.arange(-(axis.size - 1), axis.size)
    return g, d, step


def _overlap_at(g, d, step, delays):
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    phase = np.exp(1j * step * np.outer(delays, d))
    return (phase @ g).real


def reduced_state_overlap(a, b, tau=0.0):
    """Tr(rho_a D(tau) rho_b D(tau)^dag) for signal reduced states, D = exp(i w tau)."""
    g, d, step = _overlap_series(a, b)
    val = float(_overlap_at(g, d, step, [tau])[0])
    return min(max(val, 0.0), 1.0) if abs(val) < 1.0 + 1e-9 else val


def hom_visibility(a, b):
    return reduced_state_overlap(a, b, 0.0)


def max_delay(a, b=None):
    """Largest |tau| (s) the sampled signal axis represents without aliasing."""
    step = a.d_omega_s if b is None else min(a.d_omega_s, b.d_omega_s)
    return math.pi / step


def hom_dip_profile(a, b, delays):
    """[(tau, 1 - overlap(tau)), ...]; baseline 1 far from zero delay.

    On a uniform grid the overlap is periodic in tau with period 2 pi / d_omega_s,
    so delays beyond :func:`max_delay` are rejected rather than aliased.
    """
    g, d, step = _overlap_series(a, b)
    delays = np.asarray(delays, dtype=float)
    limit = math.pi / step
    if delays.size and np.max(np.abs(delays)) > limit:
        raise ConfigError(
            f"delay {np.max(np.abs(delays)) * 1e12:g} ps exceeds the grid's unaliased range "
            f"+-{limit * 1e12:.4g} ps; use a finer signal axis"
        )
    vals = _overlap_at(g, d, step, delays)
    return [(float(t), float(1.0 - v)) for t, v in zip(delays, vals)]


# ------------------------------------------------------------ CSV


def write_bandwidth_scan_csv(result, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["pump_fwhm_nm", "K"])
    for x, k in zip(result.axis, result.K):
        w.writerow([f"{x:.9g}", f"{k:.9g}"])


def write_length_scan_csv(scan, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["length_m", "K_min", "bw_opt_nm"])
    for L, k, bw in scan.rows():
        w.writerow([f"{L:.9g}", f"{k:.9g}", f"{bw:.9g}"])


def write_dip_csv(profile, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["delay_ps", "normalized_coincidences"])
    for tau, c in profile:
        w.writerow([f"{tau * 1e12:.9g}", f"{c:.9g}"])
