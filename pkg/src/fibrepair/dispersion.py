"""Refractive-index models for the two birefringent axes of a fibre.

Wavelengths are in nm at every public boundary. Internally the Sellmeier sum
and the correction polynomials are evaluated in µm, the unit their coefficients
are quoted in. Models are immutable; evaluation is pure.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BracketError, ConfigError, ParseError, RangeError

C_LIGHT = 299_792_458.0  # m/s, exact

PRESET_DIR_ENV = "FIBREPAIR_PRESET_DIR"


def omega_from_nm(lam_nm):
    """Angular frequency (rad/s) of a vacuum wavelength in nm."""
    return 2.0 * np.pi * C_LIGHT / (np.asarray(lam_nm, dtype=float) * 1e-9)


def nm_from_omega(omega):
    return 2.0 * np.pi * C_LIGHT / np.asarray(omega, dtype=float) * 1e9


def _check_range(lam_nm, valid_range, label, strict=False):
    lam = np.asarray(lam_nm, dtype=float)
    lo, hi = valid_range
    if not np.all(np.isfinite(lam)):
        raise RangeError(f"{label}: non-finite wavelength")
    if strict:
        bad = (lam <= lo) | (lam >= hi)
    else:
        bad = (lam < lo) | (lam > hi)
    if np.any(bad):
        worst = lam[bad].flat[0] if lam.ndim else float(lam)
        where = "strictly inside" if strict else "inside"
        raise RangeError(
            f"{label}: wavelength {worst:g} nm is not {where} the valid interval "
            f"[{lo:g}, {hi:g}] nm"
        )
    return lam


@dataclass(frozen=True)
class SellmeierModel:
    """Three-term (or any-term) Sellmeier index, ``n^2 = 1 + sum B l^2/(l^2 - C)``."""

    B: tuple
    C_um2: tuple
    valid_range: tuple = (210.0, 3710.0)
    name: str = "sellmeier"

    def __post_init__(self):
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))
        object.__setattr__(self, "C_um2", tuple(float(c) for c in self.C_um2))
        object.__setattr__(self, "valid_range", tuple(float(v) for v in self.valid_range))
        if len(self.B) != len(self.C_um2) or not self.B:
            raise ConfigError("Sellmeier B and C must be non-empty and of equal length")
        if any(c <= 0 for c in self.C_um2):
            raise ConfigError("Sellmeier resonance terms C_j must be positive")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ConfigError(f"invalid range {self.valid_range}")
        l2 = (np.linspace(lo, hi, 257) * 1e-3) ** 2
        if np.any(np.abs(l2[:, None] - np.asarray(self.C_um2)) < 1e-12):
            raise ConfigError("a Sellmeier pole lies inside the valid range")
        if np.any(self._n_um(np.sqrt(l2)) <= 1.0):
            raise ConfigError("Sellmeier index must exceed 1 over the valid range")

    def _terms(self, l_um):
        l2 = np.asarray(l_um, dtype=float)[..., None] ** 2
        b = np.asarray(self.B)
        c = np.asarray(self.C_um2)
        return l2, b, c

    def _n_um(self, l_um):
        l2, b, c = self._terms(l_um)
        return np.sqrt(1.0 + np.sum(b * l2 / (l2 - c), axis=-1))

    def _derivs_um(self, l_um):
        # S = n^2 - 1 and its first two derivatives with respect to lambda in um
        l_um = np.asarray(l_um, dtype=float)
        l2, b, c = self._terms(l_um)
        lv = l_um[..., None]
        den = l2 - c
        s = np.sum(b * l2 / den, axis=-1)
        s1 = np.sum(-2.0 * b * c * lv / den**2, axis=-1)
        s2 = np.sum(2.0 * b * c * (3.0 * l2 + c) / den**3, axis=-1)
        n = np.sqrt(1.0 + s)
        n1 = s1 / (2.0 * n)
        n2 = s2 / (2.0 * n) - s1**2 / (4.0 * n**3)
        return n, n1, n2

    def n(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._n_um(lam * 1e-3)

    def dn_dlambda(self, lam_nm):
        """dn/dlambda in 1/nm."""
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._derivs_um(lam * 1e-3)[1] * 1e-3

    def d2n_dlambda2(self, lam_nm):
        """d2n/dlambda2 in 1/nm^2."""
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._derivs_um(lam * 1e-3)[2] * 1e-6


FUSED_SILICA = SellmeierModel(
    B=(0.6961663, 0.4079426, 0.8974794),
    C_um2=(0.0684043**2, 0.1162414**2, 9.896161**2),
    valid_range=(210.0, 3710.0),
    name="fused-silica",
)


@dataclass(frozen=True)
class AxisModel:
    """Bulk Sellmeier index plus additive polynomial corrections in lambda (um).

    ``waveguide`` applies to every axis built on the same fibre; ``birefringence``
    is the extra term carried by the slow axis only (empty for the fast axis).
    Coefficients are in ascending powers of lambda in um.
    """

    base: SellmeierModel
    waveguide: tuple = ()
    birefringence: tuple = ()
    name: str = "axis"

    def __post_init__(self):
        object.__setattr__(self, "waveguide", tuple(float(x) for x in self.waveguide))
        object.__setattr__(self, "birefringence", tuple(float(x) for x in self.birefringence))
        lam = np.linspace(*self.valid_range, 257)
        n = self.n(lam)
        if not np.all(np.isfinite(n)) or np.any(n <= 1.0):
            raise ConfigError(f"{self.name}: corrected index must stay finite and > 1")

    @property
    def valid_range(self):
        return self.base.valid_range

    def _poly(self):
        return P.polyadd(self.waveguide or (0.0,), self.birefringence or (0.0,))

    def n(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self.base._n_um(lam * 1e-3) + P.polyval(lam * 1e-3, self._poly())

    def dn_dlambda(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        l_um = lam * 1e-3
        d = self.base._derivs_um(l_um)[1] + P.polyval(l_um, P.polyder(self._poly()))
        return d * 1e-3

    def d2n_dlambda2(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        l_um = lam * 1e-3
        d = self.base._derivs_um(l_um)[2] + P.polyval(l_um, P.polyder(self._poly(), 2))
        return d * 1e-6


@dataclass(frozen=True)
class TabulatedModel:
    """Natural cubic spline through measured (lambda, n) samples; no extrapolation."""

    lambda_nm: np.ndarray
    n_values: np.ndarray
    name: str = "tabulated"
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lambda_nm, dtype=float)
        n = np.asarray(self.n_values, dtype=float)
        if lam.ndim != 1 or lam.shape != n.shape:
            raise ConfigError("wavelength and index samples must be 1-D and equally long")
        if lam.size < 8:
            raise ConfigError(f"need at least 8 samples, got {lam.size}")
        if np.any(np.diff(lam) <= 0):
            raise ConfigError("wavelength samples must be strictly increasing")
        lam.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "lambda_nm", lam)
        object.__setattr__(self, "n_values", n)
        object.__setattr__(self, "_spline", CubicSpline(lam, n, bc_type="natural", extrapolate=False))

    @property
    def valid_range(self):
        return (float(self.lambda_nm[0]), float(self.lambda_nm[-1]))

    def n(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._spline(lam)

    def dn_dlambda(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._spline(lam, 1)

    def d2n_dlambda2(self, lam_nm):
        lam = _check_range(lam_nm, self.valid_range, self.name)
        return self._spline(lam, 2)


def phase_index(model, lam_nm):
    """Phase index n(lambda)."""
    return model.n(lam_nm)


def group_index(model, lam_nm):
    """Group index N = n - lambda dn/dlambda (equivalently n + omega dn/domega).

    Needs a derivative, so lambda must lie strictly inside the valid range.
    """
    lam = _check_range(lam_nm, model.valid_range, getattr(model, "name", "model"), strict=True)
    return model.n(lam) - lam * model.dn_dlambda(lam)


def zero_dispersion_wavelength(model, bracket):
    """Wavelength (nm) where d2n/dlambda2 changes sign inside ``bracket``."""
    lo, hi = map(float, bracket)
    _check_range([lo, hi], model.valid_range, getattr(model, "name", "model"))
    grid = np.linspace(lo, hi, 401)
    d2 = model.d2n_dlambda2(grid)
    idx = np.flatnonzero(np.sign(d2[:-1]) * np.sign(d2[1:]) <= 0)
    if idx.size == 0:
        raise BracketError(
            f"no zero of the group-velocity dispersion between {lo:g} and {hi:g} nm"
        )
    j = idx[0]
    if d2[j] == 0.0:
        return float(grid[j])
    return float(brentq(lambda x: float(model.d2n_dlambda2(x)), grid[j], grid[j + 1], xtol=1e-6))


def propagation_constant(model, omega):
    """k(omega) = n omega / c in 1/m."""
    omega = np.asarray(omega, dtype=float)
    return model.n(nm_from_omega(omega)) * omega / C_LIGHT


def load_tabulated(path, name=None):
    """Read a ``lambda_nm,n`` CSV into a :class:`TabulatedModel`."""
    path = Path(path)
    lam, nval = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        if [h.strip() for h in header] != ["lambda_nm", "n"]:
            raise ParseError(f"expected header 'lambda_nm,n', got {','.join(header)!r}", row=1)
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", row=row_no)
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"malformed number in {row!r}", row=row_no) from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ParseError("non-finite value", row=row_no)
            if lam and x <= lam[-1]:
                kind = "duplicated" if x == lam[-1] else "decreasing"
                raise ParseError(f"{kind} wavelength {x:g} nm", row=row_no)
            lam.append(x)
            nval.append(y)
    if len(lam) < 8:
        raise ParseError(f"need at least 8 data rows, found {len(lam)}")
    return TabulatedModel(np.array(lam), np.array(nval), name=name or path.stem)


@dataclass(frozen=True)
class FibreSpec:
    """Birefringent fibre: two axis models plus length and nonlinear parameters."""

    name: str
    slow: object
    fast: object
    length_m: float
    n2_m2_per_W: float = 2e-20
    aeff_m2: float = 4e-12
    notes: str = ""

    def __post_init__(self):
        if not self.length_m > 0:
            raise ConfigError("fibre length must be positive")
        if not self.n2_m2_per_W > 0:
            raise ConfigError("n2 must be positive")
        if not self.aeff_m2 > 0:
            raise ConfigError("effective area must be positive")
        lam = np.linspace(*self.valid_range, 513)
        if np.any(self.slow.n(lam) - self.fast.n(lam) < -1e-12):
            raise ConfigError(f"{self.name}: slow-axis index must not drop below fast-axis index")

    @property
    def valid_range(self):
        lo = max(self.slow.valid_range[0], self.fast.valid_range[0])
        hi = min(self.slow.valid_range[1], self.fast.valid_range[1])
        return (lo, hi)

    def axis(self, which):
        if which in ("s", "slow"):
            return self.slow
        if which in ("f", "fast"):
            return self.fast
        raise ConfigError(f"unknown axis {which!r}")


def fibre_from_dict(data):
    """Build a :class:`FibreSpec` from the preset JSON schema."""
    try:
        name = str(data["name"])
        sell = data["sellmeier"]
        lo, hi = (float(v) for v in data["valid_range_nm"])
        base = SellmeierModel(sell["B"], sell["C_um2"], valid_range=(lo, hi), name=f"{name}/sellmeier")
        wg = tuple(data.get("waveguide_poly", ()))
        bi = tuple(data.get("birefringence_poly", ()))
        slow = AxisModel(base, wg, bi, name=f"{name}/slow")
        fast = AxisModel(base, wg, (), name=f"{name}/fast")
        return FibreSpec(
            name=name,
            slow=slow,
            fast=fast,
            length_m=float(data["length_m"]),
            n2_m2_per_W=float(data["n2_m2_per_W"]),
            aeff_m2=float(data["Aeff_m2"]),
            notes=str(data.get("notes", "")),
        )
    except KeyError as exc:
        raise ConfigError(f"preset is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed preset: {exc}") from None


def fibre_to_dict(fibre):
    if not isinstance(fibre.slow, AxisModel) or not isinstance(fibre.fast, AxisModel):
        raise ConfigError("only Sellmeier-based fibres can be serialized as presets")
    base = fibre.slow.base
    return {
        "name": fibre.name,
        "sellmeier": {"B": list(base.B), "C_um2": list(base.C_um2)},
        "waveguide_poly": list(fibre.slow.waveguide),
        "birefringence_poly": list(fibre.slow.birefringence),
        "length_m": fibre.length_m,
        "n2_m2_per_W": fibre.n2_m2_per_W,
        "Aeff_m2": fibre.aeff_m2,
        "valid_range_nm": list(base.valid_range),
        "notes": fibre.notes,
    }


def _preset_sources():
    extra = os.environ.get(PRESET_DIR_ENV)
    if extra:
        yield Path(extra)
    yield resources.files("fibrepair") / "presets"


def list_presets():
    """Names of every resolvable preset (env directory first, then bundled)."""
    names = []
    for src in _preset_sources():
        if not src.is_dir():
            continue
        for entry in sorted(src.iterdir(), key=lambda p: p.name):
            if entry.name.endswith(".json") and entry.name[:-5] not in names:
                names.append(entry.name[:-5])
    return names


def load_preset(name_or_path):
    """Load a fibre preset by bundled name, name in ``$FIBREPAIR_PRESET_DIR``, or path."""
    candidate = Path(str(name_or_path))
    if candidate.suffix == ".json" and candidate.is_file():
        text = candidate.read_text()
    else:
        text = None
        for src in _preset_sources():
            entry = src / f"{name_or_path}.json"
            if entry.is_file():
                text = entry.read_text()
                break
        if text is None:
            raise ConfigError(
                f"unknown preset {name_or_path!r}; available: {', '.join(list_presets())}"
            )
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"preset {name_or_path!r} is not valid JSON: {exc}") from None
    return fibre_from_dict(data)
