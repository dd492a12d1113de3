"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics. The active
implementation is chosen once at import time: numba is used unless it is not
installed or ``FIBREPAIR_NUMBA`` is set to ``0``/``false``/``no``/``off``.
Both variants stay importable under ``*_numpy`` / ``*_numba`` names so the
benchmark and the equivalence tests can call them side by side.
"""

import math
import os

import numpy as np

# x at which sinc(x)^2 = 1/2
SINC_HALF_POWER_X = 1.3915573782515103
# gaussian phase-matching stand-in exp(-g x^2) with the same intensity FWHM as sinc
GAUSS_PM_COEFF = math.log(2.0) / (2.0 * SINC_HALF_POWER_X**2)

PUMP_GAUSSIAN = 0
PUMP_TOPHAT = 1
PUMP_SUPERGAUSSIAN = 2

PM_SINC = 0
PM_GAUSSIAN = 1


def _flag_enabled():
    value = os.environ.get("FIBREPAIR_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _flag_enabled()


# ---------------------------------------------------------------- numpy path


def _pump_profile_numpy(u, shape, fwhm, order):
    if shape == PUMP_TOPHAT:
        return (np.abs(u) <= 0.5 * fwhm).astype(np.float64)
    if shape == PUMP_SUPERGAUSSIAN:
        return np.exp(-0.5 * math.log(2.0) * np.abs(2.0 * u / fwhm) ** (2 * order))
    return np.exp(-0.5 * math.log(2.0) * (2.0 * u / fwhm) ** 2)


def jsa_field_numpy(d_s, d_i, x, pump_shape, pump_fwhm, pump_order, pm_shape):
    """alpha(d_s + d_i) * exp(i x) * pm(x) on the outer grid; ``x = dk L / 2``."""
    u = d_s[:, None] + d_i[None, :]
    alpha = _pump_profile_numpy(u, pump_shape, pump_fwhm, pump_order)
    if pm_shape == PM_GAUSSIAN:
        envelope = np.exp(-GAUSS_PM_COEFF * x * x)
    else:
        envelope = np.sinc(x / np.pi)
    return alpha * envelope * np.exp(1j * x)


def diagonal_sums_numpy(m):
    """g[d + n - 1] = sum_j m[j, j + d] for d in -(n-1)..(n-1) (square input)."""
    n = m.shape[0]
    return np.array([np.trace(m, offset=d) for d in range(-(n - 1), n)], dtype=m.dtype)


def _tri_numpy(t):
    tm = np.zeros((4, 4), dtype=np.complex128)
    tm[0, 0], tm[1, 1], tm[2, 2], tm[3, 3] = t[0], t[1], t[2], t[3]
    tm[1, 0] = t[4] + 1j * t[5]
    tm[2, 1] = t[6] + 1j * t[7]
    tm[3, 2] = t[8] + 1j * t[9]
    tm[2, 0] = t[10] + 1j * t[11]
    tm[3, 1] = t[12] + 1j * t[13]
    tm[3, 0] = t[14] + 1j * t[15]
    return tm


def probabilities_numpy(t, states):
    """p_nu = <psi_nu| T^dag T |psi_nu> / Tr(T^dag T) for rows psi_nu of ``states``."""
    tm = _tri_numpy(t)
    norm = np.sum(np.abs(tm) ** 2)
    v = states @ tm.T
    return np.sum(np.abs(v) ** 2, axis=1) / norm


def nll_numpy(t, states, counts, flux, gaussian):
    p = probabilities_numpy(t, states)
    mu = np.maximum(flux * p, 1e-300)
    if gaussian:
        return float(np.sum((mu - counts) ** 2 / (2.0 * mu)))
    return float(np.sum(mu - counts * np.log(mu)))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _pump_profile_scalar(u, shape, fwhm, order):
        if shape == PUMP_TOPHAT:
            return 1.0 if abs(u) <= 0.5 * fwhm else 0.0
        r = abs(2.0 * u / fwhm)
        if shape == PUMP_SUPERGAUSSIAN:
            return math.exp(-0.5 * math.log(2.0) * r ** (2 * order))
        return math.exp(-0.5 * math.log(2.0) * r * r)

    @numba.njit(cache=True)
    def jsa_field_numba(d_s, d_i, x, pump_shape, pump_fwhm, pump_order, pm_shape):
        ns = d_s.shape[0]
        ni = d_i.shape[0]
        out = np.empty((ns, ni), dtype=np.complex128)
        for j in range(ns):
            for k in range(ni):
                a = _pump_profile_scalar(d_s[j] + d_i[k], pump_shape, pump_fwhm, pump_order)
                xv = x[j, k]
                if pm_shape == PM_GAUSSIAN:
                    env = math.exp(-GAUSS_PM_COEFF * xv * xv)
                elif xv == 0.0:
                    env = 1.0
                else:
                    env = math.sin(xv) / xv
                amp = a * env
                out[j, k] = complex(amp * math.cos(xv), amp * math.sin(xv))
        return out

    @numba.njit(cache=True)
    def diagonal_sums_numba(m):
        n = m.shape[0]
        g = np.zeros(2 * n - 1, dtype=m.dtype)
        for j in range(n):
            for k in range(n):
                g[k - j + n - 1] += m[j, k]
        return g

    @numba.njit(cache=True)
    def _tri_numba(t):
        tm = np.zeros((4, 4), dtype=np.complex128)
        tm[0, 0] = t[0]
        tm[1, 1] = t[1]
        tm[2, 2] = t[2]
        tm[3, 3] = t[3]
        tm[1, 0] = complex(t[4], t[5])
        tm[2, 1] = complex(t[6], t[7])
        tm[3, 2] = complex(t[8], t[9])
        tm[2, 0] = complex(t[10], t[11])
        tm[3, 1] = complex(t[12], t[13])
        tm[3, 0] = complex(t[14], t[15])
        return tm

    @numba.njit(cache=True)
    def probabilities_numba(t, states):
        tm = _tri_numba(t)
        norm = 0.0
        for a in range(4):
            for b in range(4):
                norm += tm[a, b].real ** 2 + tm[a, b].imag ** 2
        m = states.shape[0]
        p = np.empty(m)
        for nu in range(m):
            acc = 0.0
            for a in range(4):
                s = 0j
                for b in range(a + 1):
                    s += tm[a, b] * states[nu, b]
                acc += s.real * s.real + s.imag * s.imag
            p[nu] = acc / norm
        return p

    @numba.njit(cache=True)
    def nll_numba(t, states, counts, flux, gaussian):
        p = probabilities_numba(t, states)
        total = 0.0
        for nu in range(p.shape[0]):
            mu = max(flux * p[nu], 1e-300)
            if gaussian:
                total += (mu - counts[nu]) ** 2 / (2.0 * mu)
            else:
                total += mu - counts[nu] * math.log(mu)
        return total

else:  # pragma: no cover
    jsa_field_numba = diagonal_sums_numba = probabilities_numba = nll_numba = None


if USE_NUMBA:
    jsa_field = jsa_field_numba
    diagonal_sums = diagonal_sums_numba
    probabilities = probabilities_numba
    nll = nll_numba
else:
    jsa_field = jsa_field_numpy
    diagonal_sums = diagonal_sums_numpy
    probabilities = probabilities_numpy
    nll = nll_numpy


def backend():
    """Name of the active kernel implementation."""
    return "numba" if USE_NUMBA else "numpy"
