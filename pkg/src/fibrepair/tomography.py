"""Two-qubit polarization tomography for a Sagnac-loop entangled pair source.

Basis ordering is HH, HV, VH, VV (signal first). Each analysis bench is a QWP,
then a HWP, then a polarizer transmitting H, met by the photon in that order.

Wave-plate convention: a plate with retardance G at angle t has Jones matrix
``R(t) diag(1, exp(-iG)) R(-t)`` with ``R(t) = [[cos t, sin t], [-sin t, cos t]]``.
The analyzed state of a bench is ``QWP(q)^dag HWP(h)^dag |H>``. This is the
only sign/handedness choice under which every canonical setting analyzes the
state its label names, with R = (H - iV)/sqrt2 and L = (H + iV)/sqrt2.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .errors import ConfigError, DataError, ParseError

BASIS = ("HH", "HV", "VH", "VV")

_S2 = 1.0 / math.sqrt(2.0)
SINGLE_STATES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
}
PHI_PLUS = np.array([_S2, 0.0, 0.0, _S2], dtype=complex)

_SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


class UnphysicalStateWarning(UserWarning):
    """A reconstructed matrix has negative eigenvalues."""


class ConvergenceWarning(UserWarning):
    """The likelihood maximization stopped on its evaluation budget."""


# ------------------------------------------------------------ wave plates


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def waveplate_jones(kind, theta_deg, retardance=None):
    """Jones matrix of a HWP or QWP with its fast axis at ``theta_deg``."""
    kind = str(kind).upper()
    if retardance is None:
        if kind == "HWP":
            retardance = math.pi
        elif kind == "QWP":
            retardance = math.pi / 2
        else:
            raise ConfigError(f"unknown wave plate {kind!r}; expected HWP or QWP")
    t = math.radians(theta_deg)
    return _rot(t) @ np.diag([1.0, np.exp(-1j * retardance)]) @ _rot(-t)


def analyzed_state(hwp_deg, qwp_deg=None):
    """Single-photon state transmitted to the H port; ``qwp_deg=None`` removes the QWP."""
    psi = waveplate_jones("HWP", hwp_deg).conj().T @ SINGLE_STATES["H"]
    if qwp_deg is not None:
        psi = waveplate_jones("QWP", qwp_deg).conj().T @ psi
    return psi


@dataclass(frozen=True)
class MeasurementSetting:
    nu: int
    hwp_s: float
    qwp_s: float
    hwp_i: float
    qwp_i: float
    label: str = ""

    def state(self):
        return np.kron(analyzed_state(self.hwp_s, self.qwp_s), analyzed_state(self.hwp_i, self.qwp_i))


_TABLE = [
    (1, "HH", 0, 0, 0, 0),
    (2, "HV", 0, 0, 45, 0),
    (3, "VV", 45, 0, 45, 0),
    (4, "VH", 45, 0, 0, 0),
    (5, "RH", 22.5, 0, 0, 0),
    (6, "RV", 22.5, 0, 45, 0),
    (7, "DV", -22.5, -45, 45, 0),
    (8, "DH", -22.5, -45, 0, 0),
    (9, "DR", -22.5, -45, 22.5, 0),
    (10, "DD", -22.5, -45, -22.5, -45),
    (11, "RD", 22.5, 0, -22.5, -45),
    (12, "HD", 0, 0, -22.5, -45),
    (13, "VD", 45, 0, -22.5, -45),
    (14, "VL", 45, 0, 22.5, 90),
    (15, "HL", 0, 0, 22.5, 90),
    (16, "RL", 22.5, 0, 22.5, 90),
]
CANONICAL_SETTINGS = tuple(
    MeasurementSetting(nu, hs, qs, hi, qi, label) for nu, label, hs, qs, hi, qi in _TABLE
)


def label_state(label):
    """Two-photon product state for a label like ``"RH"``."""
    return np.kron(SINGLE_STATES[label[0]], SINGLE_STATES[label[1]])


def setting_to_projector(setting):
    psi = setting.state()
    return np.outer(psi, psi.conj())


def _states_matrix(settings):
    return np.ascontiguousarray(np.array([s.state() for s in settings]))


# ------------------------------------------------------------ states


@dataclass(frozen=True)
class SagnacParams:
    alpha: float = _S2
    beta: float = _S2
    phi: float = 0.0

    def __post_init__(self):
        if abs(self.alpha**2 + self.beta**2 - 1.0) > 1e-12:
            raise ConfigError("alpha^2 + beta^2 must equal 1")


def sagnac_state(params=SagnacParams()):
    """alpha|HH> + beta exp(2i phi)|VV> as a density matrix."""
    psi = np.array([params.alpha, 0.0, 0.0, params.beta * np.exp(2j * params.phi)], dtype=complex)
    return np.outer(psi, psi.conj())


def pure_state(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def check_density(rho, eig_tol=1e-9, tol=1e-12):
    """Raise ConfigError unless rho is a 4x4 Hermitian, unit-trace, PSD matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ConfigError(f"density matrix must be 4x4, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ConfigError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ConfigError("density matrix trace is not 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise ConfigError("density matrix has negative eigenvalues")
    return rho


def is_physical(rho, eig_tol=1e-9):
    rho = np.asarray(rho, dtype=complex)
    h = 0.5 * (rho + rho.conj().T)
    return bool(np.linalg.eigvalsh(h).min() >= -eig_tol)


def project_physical(rho):
    """Nearest physical state by clipping negative eigenvalues and renormalizing."""
    rho = np.asarray(rho, dtype=complex)
    h = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise DataError("matrix has no positive part to project onto")
    out = (v * w) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    return out / np.trace(out).real


def coincidence_probability(rho, setting):
    psi = setting.state()
    return float(np.real(psi.conj() @ np.asarray(rho) @ psi))


# ------------------------------------------------------------ fringes


# idler HWP angle (QWP removed) that analyzes each fringe basis state
FRINGE_IDLER_HWP = {"H": 0.0, "D": -22.5}


def fringe_scan(rho, idler, signal_hwp_deg):
    """Coincidence probability vs signal HWP angle, idler fixed, QWPs removed.

    ``idler`` is ``"H"`` (H/V basis), ``"D"`` (D/A basis) or an explicit idler
    HWP angle in degrees. With the plate convention above the idler
    analyzes D at -22.5 deg; +22.5 deg analyzes A.
    """
    if isinstance(idler, str):
        key = {"HV": "H", "H": "H", "DA": "D", "D": "D"}.get(idler.upper().replace("/", ""))
        if key is None:
            raise ConfigError(f"unknown fringe basis {idler!r}; expected H or D")
        idler = FRINGE_IDLER_HWP[key]
    psi_i = analyzed_state(float(idler))
    rho = np.asarray(rho)
    out = []
    for th in np.atleast_1d(signal_hwp_deg):
        psi = np.kron(analyzed_state(float(th)), psi_i)
        out.append((float(th), float(np.real(psi.conj() @ rho @ psi))))
    return out


@dataclass(frozen=True)
class VisibilityFit:
    visibility: float
    residual: float
    fallback: bool
    offset: float = math.nan
    amplitude: float = math.nan


def _raw_visibility(y):
    hi, lo = float(np.max(y)), float(np.min(y))
    return 0.0 if hi + lo == 0 else (hi - lo) / (hi + lo)


def visibility(samples):
    """Visibility of a HWP fringe from a fit ``a + b cos 4t + c sin 4t`` (t in degrees).

    Falls back to raw extrema (``fallback=True``) when the fit is degenerate.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise ConfigError("need at least two (angle, rate) samples")
    t = np.radians(data[:, 0]) * 4.0
    y = data[:, 1]
    a = np.column_stack([np.ones_like(t), np.cos(t), np.sin(t)])
    distinct = np.unique(np.round(np.mod(t, 2 * np.pi), 9)).size
    if distinct >= 3:
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        if np.linalg.matrix_rank(a) == 3 and coef[0] > 0:
            amp = float(math.hypot(coef[1], coef[2]))
            resid = float(np.sqrt(np.mean((a @ coef - y) ** 2)))
            return VisibilityFit(amp / float(coef[0]), resid, False, float(coef[0]), amp)
    return VisibilityFit(_raw_visibility(y), math.nan, True)


# ------------------------------------------------------------ records


@dataclass(frozen=True)
class TomographyRecord:
    settings: tuple
    counts: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)
    custom: bool = False

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.settings),):
            raise ConfigError("one count per setting required")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ConfigError("counts must be non-negative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        if not self.custom and tuple(
            (s.nu, s.hwp_s, s.qwp_s, s.hwp_i, s.qwp_i) for s in self.settings
        ) != tuple((s.nu, s.hwp_s, s.qwp_s, s.hwp_i, s.qwp_i) for s in CANONICAL_SETTINGS):
            raise ConfigError("settings differ from the canonical 16; pass custom=True")

    @property
    def flux(self):
        """Pairs per setting, estimated from the complete H/V basis (nu = 1..4)."""
        return float(np.sum(self.counts[:4]))


def simulate_counts(rho, n_per_setting, seed=None, settings=CANONICAL_SETTINGS):
    """Poisson counts with mean N Tr(rho Pi_nu); deterministic for a given seed."""
    if not n_per_setting > 0:
        raise ConfigError("pairs per setting must be positive")
    rho = check_density(rho, tol=1e-9)
    p = np.array([coincidence_probability(rho, s) for s in settings])
    rng = np.random.default_rng(seed)
    counts = rng.poisson(n_per_setting * np.clip(p, 0.0, None))
    custom = tuple(settings) != CANONICAL_SETTINGS
    return TomographyRecord(tuple(settings), counts, {"n_per_setting": n_per_setting, "seed": seed}, custom)


def expected_counts(rho, n_per_setting, settings=CANONICAL_SETTINGS):
    """Noiseless record (real-valued mean counts) for inversion checks."""
    return np.array([n_per_setting * coincidence_probability(rho, s) for s in settings])


def _inversion_matrix(settings):
    # Tr(rho Pi) = sum_jk rho_jk Pi_kj
    return np.array([setting_to_projector(s).T.reshape(-1) for s in settings])


def linear_reconstruct(record, counts=None):
    """Linear-inversion estimate; Hermitian but possibly with negative eigenvalues.

    ``counts`` may override the record's integer counts (e.g. noiseless means).
    """
    n = np.asarray(record.counts if counts is None else counts, dtype=float)
    flux = float(np.sum(n[:4]))
    if not flux > 0:
        raise DataError("no counts in the H/V basis settings: cannot normalize")
    a = _inversion_matrix(record.settings)
    if a.shape != (16, 16):
        raise DataError("linear inversion needs exactly 16 settings")
    vec = np.linalg.solve(a, (n / flux).astype(complex))
    rho = vec.reshape(4, 4)
    rho = 0.5 * (rho + rho.conj().T)
    if not is_physical(rho):
        warnings.warn("linear reconstruction has negative eigenvalues", UnphysicalStateWarning, stacklevel=2)
    return rho


# ------------------------------------------------------------ maximum likelihood


def t_from_rho(rho, mix=1e-3):
    """16 real parameters of a lower-triangular T with T^dag T proportional to rho."""
    rho = (1.0 - mix) * project_physical(rho) + mix * np.eye(4) / 4.0
    j = np.eye(4)[::-1]
    low = np.linalg.cholesky(j @ rho @ j)
    t = j @ low.conj().T @ j
    return np.array(
        [
            t[0, 0].real, t[1, 1].real, t[2, 2].real, t[3, 3].real,
            t[1, 0].real, t[1, 0].imag, t[2, 1].real, t[2, 1].imag,
            t[3, 2].real, t[3, 2].imag, t[2, 0].real, t[2, 0].imag,
            t[3, 1].real, t[3, 1].imag, t[3, 0].real, t[3, 0].imag,
        ]
    )


def rho_from_t(t):
    tm = _kernels._tri_numpy(np.asarray(t, dtype=float))
    rho = tm.conj().T @ tm
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def negative_log_likelihood(rho, record, gaussian=False):
    """Poisson (default) or gaussian NLL of a physical rho for the record's counts."""
    p = np.array([coincidence_probability(rho, s) for s in record.settings])
    mu = np.maximum(record.flux * p, 1e-300)
    n = record.counts.astype(float)
    if gaussian:
        return float(np.sum((mu - n) ** 2 / (2.0 * mu)))
    return float(np.sum(mu - n * np.log(mu)))


@dataclass(frozen=True)
class MleResult:
    rho: np.ndarray
    nll: float
    evaluations: int
    converged: bool
    starts: int
    linear: np.ndarray


def mle_reconstruct(
    record, gaussian=False, starts=5, seed=0, max_evals=100_000, rtol=1e-10, perturb=0.1, counts=None
):
    """Maximum-likelihood physical state, rho = T^dag T / Tr(T^dag T).

    Nelder-Mead from the projected linear estimate and ``starts - 1`` perturbed
    copies; each start is restarted from its best point until the relative NLL
    change drops below ``rtol`` or its evaluation budget is spent. ``counts``
    may override the record's integer counts (e.g. noiseless means).
    """
    counts = np.asarray(record.counts if counts is None else counts, dtype=float)
    if counts.shape != record.counts.shape or np.any(counts < 0):
        raise ConfigError("count override must be non-negative with one entry per setting")
    flux = float(np.sum(counts[:4]))
    if not flux > 0:
        raise DataError("no counts in the H/V basis settings: cannot normalize")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnphysicalStateWarning)
        lin = linear_reconstruct(record, counts)
    states = _states_matrix(record.settings)

    def f(t):
        return _kernels.nll(t, states, counts, flux, bool(gaussian))

    t0 = t_from_rho(lin)
    rng = np.random.default_rng(seed)
    scale = perturb * np.max(np.abs(t0))
    inits = [t0] + [t0 + rng.normal(0.0, scale, t0.size) for _ in range(max(int(starts), 1) - 1)]

    best_t, best_f, total, all_converged = None, math.inf, 0, True
    for x in inits:
        fx = f(x)
        used, converged = 0, False
        while used < max_evals:
            res = minimize(
                f,
                x,
                method="Nelder-Mead",
                options={
                    "maxfev": max_evals - used,
                    "xatol": 1e-9,
                    "fatol": rtol * max(abs(fx), 1.0),
                    "adaptive": True,
                },
            )
            used += res.nfev
            change = abs(fx - res.fun) / max(abs(res.fun), 1e-300)
            x, fx = res.x, res.fun
            if change < rtol:
                converged = True
                break
        total += used
        all_converged &= converged
        if fx < best_f:
            best_t, best_f = x, fx
    if not all_converged:
        warnings.warn("likelihood maximization hit its evaluation budget", ConvergenceWarning, stacklevel=2)
    return MleResult(rho_from_t(best_t), float(best_f), total, all_converged, len(inits), lin)


# ------------------------------------------------------------ metrics


def fidelity(rho, psi=PHI_PLUS):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ np.asarray(rho) @ psi))


def concurrence(rho):
    """Wootters concurrence from the spin-flipped product rho (sy x sy) rho* (sy x sy)."""
    rho = np.asarray(rho, dtype=complex)
    r = rho @ _SIGMA_YY @ rho.conj() @ _SIGMA_YY
    ev = np.sort(np.sqrt(np.clip(np.linalg.eigvals(r).real, 0.0, None)))[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


def linear_entropy(rho):
    rho = np.asarray(rho, dtype=complex)
    return float(4.0 / 3.0 * (1.0 - np.real(np.trace(rho @ rho))))


def trace_distance(a, b):
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b)))))


@dataclass(frozen=True)
class Metrics:
    fidelity: float
    concurrence: float
    tangle: float
    linear_entropy: float
    projected: bool = False

    def as_dict(self):
        return {
            "fidelity": self.fidelity,
            "concurrence": self.concurrence,
            "tangle": self.tangle,
            "linear_entropy": self.linear_entropy,
            "projected": self.projected,
        }


def metrics(rho, reference=PHI_PLUS):
    """Fidelity to ``reference``, concurrence, tangle = C^2 and linear entropy.

    Matrices that are not physical (e.g. print-rounded) are first projected.
    """
    rho = np.asarray(rho, dtype=complex)
    projected = not is_physical(rho) or abs(np.trace(rho).real - 1.0) > 1e-12
    if projected:
        rho = project_physical(rho)
    c = concurrence(rho)
    return Metrics(fidelity(rho, reference), c, c * c, linear_entropy(rho), projected)


@dataclass(frozen=True)
class ErrorBars:
    std: dict
    samples: dict
    unconverged: int


def error_bars(record, n_resamples=100, seed=None, reference=PHI_PLUS, **mle_kw):
    """Parametric Poisson bootstrap around the observed counts; MLE per resample."""
    if int(n_resamples) < 2:
        raise ConfigError("need at least two resamples")
    streams = np.random.SeedSequence(seed).spawn(int(n_resamples))
    keys = ("fidelity", "concurrence", "tangle", "linear_entropy")
    out = {k: [] for k in keys}
    unconverged = 0
    for ss in streams:
        rng = np.random.default_rng(ss)
        counts = rng.poisson(record.counts.astype(float))
        rec = TomographyRecord(record.settings, counts, dict(record.metadata), record.custom)
        if rec.flux == 0:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = mle_reconstruct(rec, **mle_kw)
        unconverged += not res.converged
        m = metrics(res.rho, reference)
        for k in keys:
            out[k].append(getattr(m, k))
    samples = {k: np.array(v) for k, v in out.items()}
    return ErrorBars({k: float(np.std(v, ddof=1)) for k, v in samples.items()}, samples, unconverged)


# ------------------------------------------------------------ file formats

RECORD_HEADER = ["nu", "hwp_s_deg", "qwp_s_deg", "hwp_i_deg", "qwp_i_deg", "counts"]


def write_record_csv(record, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for s, c in zip(record.settings, record.counts):
        w.writerow([s.nu, f"{s.hwp_s:.9g}", f"{s.qwp_s:.9g}", f"{s.hwp_i:.9g}", f"{s.qwp_i:.9g}", int(c)])


def read_record_csv(fh, custom=False):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty record file", row=1) from None
    if header != RECORD_HEADER:
        raise ParseError(f"expected header {','.join(RECORD_HEADER)}", row=1)
    settings, counts = [], []
    canon = {s.nu: s for s in CANONICAL_SETTINGS}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 fields, got {len(row)}", row=row_no)
        try:
            nu = int(row[0])
            angles = [float(x) for x in row[1:5]]
        except ValueError:
            raise ParseError("nu must be an integer and angles numeric", row=row_no) from None
        try:
            c = float(row[5])
        except ValueError:
            raise ParseError(f"counts field {row[5]!r} is not a number", row=row_no) from None
        if c < 0 or c != int(c):
            raise ParseError(f"counts must be a non-negative integer, got {row[5]!r}", row=row_no)
        if not custom:
            ref = canon.get(nu)
            if ref is None or nu != len(settings) + 1:
                raise ParseError(f"expected nu = {len(settings) + 1}, got {nu}", row=row_no)
            if not np.allclose(angles, [ref.hwp_s, ref.qwp_s, ref.hwp_i, ref.qwp_i], atol=1e-9):
                raise ParseError(f"angles for nu = {nu} differ from the canonical setting", row=row_no)
            settings.append(ref)
        else:
            settings.append(MeasurementSetting(nu, *angles))
        counts.append(int(c))
    if not custom and len(settings) != 16:
        raise ParseError(f"expected 16 settings, found {len(settings)}")
    return TomographyRecord(tuple(settings), np.array(counts), {}, custom)


def rho_to_json(rho):
    rho = np.asarray(rho, dtype=complex)
    return {
        "basis": list(BASIS),
        "re": [[float(f"{v:.9g}") for v in row] for row in rho.real],
        "im": [[float(f"{v:.9g}") for v in row] for row in rho.imag],
    }


def rho_from_json(data):
    if not isinstance(data, dict):
        raise ParseError("density-matrix JSON must be an object")
    for key in ("basis", "re", "im"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    if list(data["basis"]) != list(BASIS):
        raise ParseError(f"field 'basis' must be {list(BASIS)}")
    try:
        re = np.array(data["re"], dtype=float)
        im = np.array(data["im"], dtype=float)
    except (TypeError, ValueError):
        raise ParseError("fields 're' and 'im' must be 4x4 numeric arrays") from None
    if re.shape != (4, 4) or im.shape != (4, 4):
        raise ParseError("fields 're' and 'im' must be 4x4")
    rho = re + 1j * im
    if np.abs(rho - rho.conj().T).max() > 1e-6:
        raise ParseError("density matrix is not Hermitian")
    return rho


def load_state(path_or_name):
    """Density matrix from a JSON path or a bundled state name (``phi_plus``...)."""
    from importlib import resources
    from pathlib import Path

    p = Path(str(path_or_name))
    if p.is_file():
        text = p.read_text()
    else:
        entry = resources.files("fibrepair") / "data" / "states" / f"{p.stem}.json"
        if not entry.is_file():
            raise ConfigError(f"no state file {path_or_name!r}")
        text = entry.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return rho_from_json(data)
