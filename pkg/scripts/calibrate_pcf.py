"""Regenerate the bundled PCF presets.

The fibres are modelled as fused silica plus a waveguide polynomial (both axes)
and a birefringence polynomial (slow axis), all in ascending powers of lambda
in um. For pcf-a the coefficients are solved so that, for slow-axis pumping and
fast-axis pairs:

* the fast axis is dispersion-flattened around 790 nm: d2n/dlambda2 has a
  shallow minimum there, just below zero, so two zero-dispersion wavelengths
  sit a few nm either side of 790 nm,
* |N_s - N_i| = 5.94e-3, i.e. a 0.150 nm signal bandwidth for 0.4 m of fibre,
* a 705 nm pump phase-matches a 597 nm signal (idler from energy conservation),
* pump and idler group indices are equal at that point,
* 2 beta2(idler) - beta2(pump) takes a fixed value. This sets the curvature of
  the phase-matching curve around 705 nm and, through the same second-order
  dispersion, the pump bandwidth that minimizes the Schmidt number.

The birefringence is written as a + b x + c x^2 + d x^4 with x = lambda - 705 nm.
a, b and c follow from the last three conditions; the quartic term only keeps
the slow index above the fast one away from the pump. pcf-b and pcf-c keep
everything but lower the phase birefringence at 705 nm.

    python scripts/calibrate_pcf.py [--write]
"""

import argparse
import json
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from fibrepair.dispersion import C_LIGHT, FUSED_SILICA

PUMP, SIGNAL = 0.705, 0.597  # um
IDLER = 1.0 / (2.0 / PUMP - 1.0 / SIGNAL)
FLAT_UM = 0.790
FLAT_DEPTH = -1e-4  # d2n/dlambda2 at the flat point, 1/um^2
DN_TARGET = 5.94e-3
W5 = 0.076
GVD_COMBO = 68.0e-27  # 2 beta2_i - beta2_p in s^2/m (68 fs^2/mm)
D4 = 6.0
RANGE = (450.0, 1100.0)
PRESET_DIR = Path(__file__).resolve().parents[1] / "src" / "fibrepair" / "presets"


def _silica(l_um):
    return FUSED_SILICA._derivs_um(np.asarray(l_um, dtype=float))


def _silica_d3(l_um, h=1e-4):
    return (_silica(l_um + h)[2] - _silica(l_um - h)[2]) / (2 * h)


def _group(n, n1, l_um):
    return n - l_um * n1


def _mono(k, l_um, order):
    """order-th derivative of l^k."""
    c = np.zeros(k + 1)
    c[k] = 1.0
    return P.polyval(l_um, P.polyder(c, order)) if order else l_um**k


def solve_waveguide():
    ks = (2, 3, 4)
    rows, rhs = [], []
    # flat point: n'' = depth, n''' = 0
    rows.append([_mono(k, FLAT_UM, 2) for k in ks])
    rhs.append(FLAT_DEPTH - _silica(FLAT_UM)[2] - W5 * _mono(5, FLAT_UM, 2))
    rows.append([_mono(k, FLAT_UM, 3) for k in ks])
    rhs.append(-_silica_d3(FLAT_UM) - W5 * _mono(5, FLAT_UM, 3))
    # group index of l^k is (1 - k) l^k
    gk = lambda k: (1 - k) * (SIGNAL**k - IDLER**k)
    ns, n1s, _ = _silica(SIGNAL)
    ni, n1i, _ = _silica(IDLER)
    rows.append([gk(k) for k in ks])
    rhs.append(DN_TARGET - (_group(ns, n1s, SIGNAL) - _group(ni, n1i, IDLER)) - W5 * gk(5))
    w2, w3, w4 = np.linalg.solve(np.array(rows), np.array(rhs))
    return (0.0, 0.0, float(w2), float(w3), float(w4), W5)


def _fast(wg, l_um):
    n, n1, n2 = _silica(l_um)
    return (
        n + P.polyval(l_um, wg),
        n1 + P.polyval(l_um, P.polyder(wg)),
        n2 + P.polyval(l_um, P.polyder(wg, 2)),
    )


def solve_birefringence(wg, phase_scale=1.0):
    nf_p, n1_p, n2_p = _fast(wg, PUMP)
    nf_s = _fast(wg, SIGNAL)[0]
    nf_i, n1_i, n2_i = _fast(wg, IDLER)
    group = _group(nf_i, n1_i, IDLER) - _group(nf_p, n1_p, PUMP)
    # 2 n_slow(p)/p = n_f(s)/s + n_f(i)/i
    phase = 0.5 * PUMP * (nf_s / SIGNAL + nf_i / IDLER) - nf_p
    a = phase_scale * phase
    b = (a - group) / PUMP
    # beta2 = l^3 n'' / (2 pi c^2), l in m; n'' per m^2
    combo = GVD_COMBO * 2 * np.pi * C_LIGHT**2 * 1e6  # in um
    c = 0.5 * ((2 * IDLER**3 * n2_i - combo) / PUMP**3 - n2_p)
    out = np.zeros(5)
    for k, coef in enumerate((a, b, c, 0.0, D4)):
        out[: k + 1] += coef * P.polypow([-PUMP, 1.0], k)
    return tuple(float(x) for x in out)


def preset(name, wg, bi, notes):
    return {
        "name": name,
        "sellmeier": {"B": list(FUSED_SILICA.B), "C_um2": list(FUSED_SILICA.C_um2)},
        "waveguide_poly": list(wg),
        "birefringence_poly": list(bi),
        "length_m": 0.4,
        "n2_m2_per_W": 2e-20,
        "Aeff_m2": 4e-12,
        "valid_range_nm": list(RANGE),
        "notes": notes,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--write", action="store_true", help="overwrite the bundled presets")
    args = ap.parse_args()

    wg = solve_waveguide()
    note_a = (
        "Calibrated stand-in for a birefringent PCF: fused-silica Sellmeier + waveguide "
        "polynomial (um powers, both axes) + birefringence polynomial (slow axis). Fast axis "
        f"dispersion-flattened at {FLAT_UM * 1e3:g} nm (two close zero-dispersion wavelengths). "
        f"ss->ff phase matching {PUMP * 1e3:g} -> {SIGNAL * 1e3:g} + {IDLER * 1e3:.2f} nm; "
        f"pump/idler group-index match at {PUMP * 1e3:g} nm; |N_s - N_i| = {DN_TARGET:g}; "
        f"2 beta2_i - beta2_p = {GVD_COMBO * 1e27:g} fs^2/mm. "
        "Reconstruction, not measured data. Regenerate with scripts/calibrate_pcf.py."
    )
    presets = [preset("pcf-a", wg, solve_birefringence(wg), note_a)]
    for name, scale in (("pcf-b", 0.99), ("pcf-c", 0.98)):
        presets.append(
            preset(
                name,
                wg,
                solve_birefringence(wg, scale),
                f"As pcf-a with {scale:g}x its phase birefringence at 705 nm.",
            )
        )
    silica = preset("silica", (), (), "Bulk fused silica (Malitson), no waveguide or birefringence terms.")
    silica["valid_range_nm"] = list(FUSED_SILICA.valid_range)
    silica["length_m"] = 1.0
    silica["Aeff_m2"] = 80e-12
    presets.append(silica)

    for p in presets:
        print(json.dumps(p, indent=2))
        if args.write:
            (PRESET_DIR / f"{p['name']}.json").write_text(json.dumps(p, indent=2) + "\n")


if __name__ == "__main__":
    main()
