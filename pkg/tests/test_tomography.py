import io
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fibrepair.errors import ConfigError, DataError, ParseError
from fibrepair.tomography import (
    CANONICAL_SETTINGS,
    PHI_PLUS,
    SINGLE_STATES,
    MeasurementSetting,
    SagnacParams,
    TomographyRecord,
    UnphysicalStateWarning,
    analyzed_state,
    check_density,
    concurrence,
    error_bars,
    expected_counts,
    fidelity,
    fringe_scan,
    is_physical,
    label_state,
    linear_entropy,
    linear_reconstruct,
    load_state,
    metrics,
    mle_reconstruct,
    negative_log_likelihood,
    project_physical,
    pure_state,
    read_record_csv,
    rho_from_json,
    rho_from_t,
    rho_to_json,
    sagnac_state,
    simulate_counts,
    t_from_rho,
    trace_distance,
    visibility,
    waveplate_jones,
    write_record_csv,
)

seeds = st.integers(0, 2**32 - 1)


def random_state(seed, rank=4):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    return psi / np.linalg.norm(psi)


def test_table_convention_lock():
    for s in CANONICAL_SETTINGS:
        assert abs(np.vdot(label_state(s.label), s.state())) ** 2 > 1 - 1e-9


@given(st.sampled_from(["HWP", "QWP"]), st.floats(-180, 180))
def test_waveplates_unitary(kind, theta):
    j = waveplate_jones(kind, theta)
    assert np.allclose(j.conj().T @ j, np.eye(2), atol=1e-12)


def test_waveplate_basics():
    assert abs(np.vdot(SINGLE_STATES["V"], analyzed_state(45.0))) == pytest.approx(1.0)
    assert abs(np.vdot(SINGLE_STATES["A"], analyzed_state(22.5))) == pytest.approx(1.0)
    assert abs(np.vdot(SINGLE_STATES["D"], analyzed_state(-22.5))) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        waveplate_jones("LCD", 0.0)


def test_canonical_settings_informationally_complete():
    from fibrepair.tomography import _inversion_matrix

    assert np.linalg.matrix_rank(_inversion_matrix(CANONICAL_SETTINGS)) == 16


def test_metrics_phi_plus():
    m = metrics(pure_state(PHI_PLUS))
    assert (m.fidelity, m.concurrence, m.tangle) == pytest.approx((1.0, 1.0, 1.0))
    assert m.linear_entropy == pytest.approx(0.0, abs=1e-12)
    assert not m.projected


def test_metrics_maximally_mixed():
    m = metrics(np.eye(4) / 4)
    assert m.concurrence == 0.0
    assert m.linear_entropy == pytest.approx(1.0)
    assert m.fidelity == pytest.approx(0.25)


@given(st.floats(0.0, 1.0))
def test_werner_concurrence(p):
    rho = p * pure_state(PHI_PLUS) + (1 - p) * np.eye(4) / 4
    assert concurrence(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-9)


@given(seeds)
def test_pure_state_concurrence_dual_route(seed):
    psi = random_pure(seed)
    a, b, c, d = psi
    assert concurrence(pure_state(psi)) == pytest.approx(2 * abs(a * d - b * c), abs=1e-7)


@given(seeds)
def test_tangle_is_concurrence_squared(seed):
    m = metrics(random_state(seed, rank=2))
    assert m.tangle == m.concurrence**2


def test_sagnac_state():
    rho = sagnac_state(SagnacParams(math.cos(0.3), math.sin(0.3), 0.2))
    assert rho[0, 3] == pytest.approx(math.cos(0.3) * math.sin(0.3) * np.exp(-0.4j))
    assert fidelity(sagnac_state()) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        SagnacParams(1.0, 1.0)


def test_check_density():
    with pytest.raises(ConfigError):
        check_density(np.eye(3) / 3)
    with pytest.raises(ConfigError):
        check_density(np.eye(4) / 2)
    with pytest.raises(ConfigError):
        check_density(np.diag([1.2, -0.2, 0, 0]))
    bad = np.eye(4) / 4
    bad[0, 1] = 0.1
    with pytest.raises(ConfigError):
        check_density(bad)


@given(seeds)
def test_projection_is_physical(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = h + h.conj().T
    # shift so the top eigenvalue is positive and the rest are arbitrary
    h = h - (np.linalg.eigvalsh(h).max() - rng.uniform(0.1, 4.0)) * np.eye(4)
    rho = project_physical(h)
    assert is_physical(rho)
    assert np.trace(rho).real == pytest.approx(1.0)


def test_projection_needs_positive_part():
    with pytest.raises(DataError):
        project_physical(-np.eye(4))


def test_printed_state_is_projected():
    rho = load_state("sagnac_reconstructed")
    assert not is_physical(rho)
    m = metrics(rho)
    assert m.projected


@given(seeds)
def test_linear_inversion_noiseless(seed):
    truth = random_state(seed)
    rec = simulate_counts(truth, 100, seed=0)
    rho = linear_reconstruct(rec, expected_counts(truth, 1e4))
    assert np.abs(rho - truth).max() < 1e-12


def test_linear_inversion_warns_on_unphysical():
    rec = simulate_counts(pure_state(PHI_PLUS), 50, seed=3)
    with pytest.warns(UnphysicalStateWarning):
        for seed in range(50):
            linear_reconstruct(simulate_counts(pure_state(PHI_PLUS), 50, seed=seed))
    assert rec.flux > 0


def test_no_flux():
    rec = TomographyRecord(CANONICAL_SETTINGS, np.zeros(16, dtype=int))
    with pytest.raises(DataError):
        linear_reconstruct(rec)
    with pytest.raises(DataError):
        mle_reconstruct(rec)


@given(seeds)
def test_t_parametrization_roundtrip(seed):
    rho = random_state(seed)
    assert np.abs(rho_from_t(t_from_rho(rho, mix=0.0)) - rho).max() < 1e-10


def test_simulation_deterministic():
    a = simulate_counts(pure_state(PHI_PLUS), 1e4, seed=7)
    b = simulate_counts(pure_state(PHI_PLUS), 1e4, seed=7)
    assert np.array_equal(a.counts, b.counts)


def test_mle_recovers_state():
    truth = random_state(11)
    rec = simulate_counts(truth, 1e4, seed=5)
    res = mle_reconstruct(rec)
    assert res.converged
    assert is_physical(res.rho)
    assert trace_distance(res.rho, truth) < 0.05
    assert res.nll <= negative_log_likelihood(truth, rec) + 1e-6


def test_mle_gaussian_likelihood():
    rec = simulate_counts(pure_state(PHI_PLUS), 1e4, seed=2)
    res = mle_reconstruct(rec, gaussian=True)
    assert fidelity(res.rho) > 0.98


def test_error_bars_small():
    rec = simulate_counts(pure_state(PHI_PLUS), 1e4, seed=1)
    eb = error_bars(rec, 3, seed=4, starts=1)
    assert set(eb.std) == {"fidelity", "concurrence", "tangle", "linear_entropy"}
    assert all(v >= 0 for v in eb.std.values())
    again = error_bars(rec, 3, seed=4, starts=1)
    assert eb.std == again.std


def test_fringes_of_phi_plus():
    ang = np.linspace(0, 90, 46)
    for basis in ("H", "D"):
        assert visibility(fringe_scan(pure_state(PHI_PLUS), basis, ang)).visibility == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ConfigError):
        fringe_scan(pure_state(PHI_PLUS), "R", ang)


@given(st.floats(0.1, 1.0), st.floats(0, 90), seeds)
def test_visibility_fit_recovers_synthetic(v, phase, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 90, 37)
    y = 100 * (1 + v * np.cos(np.radians(4 * (t - phase)))) + rng.normal(0, 0.01, t.size)
    assert visibility(np.column_stack([t, y])).visibility == pytest.approx(v, abs=1e-3)


def test_visibility_fallback():
    fit = visibility([(0.0, 10.0), (45.0, 2.0)])
    assert fit.fallback
    assert fit.visibility == pytest.approx(8 / 12)
    with pytest.raises(ConfigError):
        visibility([(0.0, 1.0)])


def test_record_csv_roundtrip():
    rec = simulate_counts(random_state(3), 1e3, seed=9)
    buf = io.StringIO()
    write_record_csv(rec, buf)
    again = read_record_csv(io.StringIO(buf.getvalue()))
    assert np.array_equal(again.counts, rec.counts)
    assert again.settings == rec.settings


@pytest.mark.parametrize(
    "mutate, row",
    [
        (lambda lines: ["nu,counts"] + lines[1:], 1),
        (lambda lines: lines[:3] + ["3,45,0,45,0,-4"] + lines[4:], 4),
        (lambda lines: lines[:3] + ["3,45,0,45,0,1.5"] + lines[4:], 4),
        (lambda lines: lines[:3] + ["3,45,0,45,0,abc"] + lines[4:], 4),
        (lambda lines: lines[:3] + ["3,44,0,45,0,10"] + lines[4:], 4),
        (lambda lines: lines[:3] + ["3,45,0,45"] + lines[4:], 4),
        (lambda lines: lines[:2] + lines[3:], 3),
        (lambda lines: lines[:-1], None),
    ],
)
def test_record_parse_errors(mutate, row):
    buf = io.StringIO()
    write_record_csv(simulate_counts(pure_state(PHI_PLUS), 1e3, seed=1), buf)
    lines = buf.getvalue().strip().split("\n")
    with pytest.raises(ParseError) as exc:
        read_record_csv(io.StringIO("\n".join(mutate(lines)) + "\n"))
    assert exc.value.row == row


def test_custom_settings_record():
    settings = CANONICAL_SETTINGS[:4] + (MeasurementSetting(17, 10.0, 0.0, 0.0, 0.0),)
    rec = simulate_counts(pure_state(PHI_PLUS), 1e3, seed=1, settings=settings)
    assert rec.custom
    buf = io.StringIO()
    write_record_csv(rec, buf)
    assert read_record_csv(io.StringIO(buf.getvalue()), custom=True).counts.size == 5
    with pytest.raises(ConfigError):
        TomographyRecord(settings, rec.counts)


@given(seeds)
def test_rho_json_roundtrip(seed):
    rho = random_state(seed)
    again = rho_from_json(json.loads(json.dumps(rho_to_json(rho))))
    assert np.abs(again - rho).max() < 1e-8


@pytest.mark.parametrize(
    "data",
    [
        [],
        {"basis": ["HH", "HV", "VH", "VV"], "re": [[1]]},
        {"basis": ["VV", "HV", "VH", "HH"], "re": np.eye(4).tolist(), "im": np.zeros((4, 4)).tolist()},
        {"basis": ["HH", "HV", "VH", "VV"], "re": [[1, 2], [3, 4]], "im": [[0, 0], [0, 0]]},
        {"basis": ["HH", "HV", "VH", "VV"], "re": np.triu(np.ones((4, 4))).tolist(), "im": np.zeros((4, 4)).tolist()},
    ],
)
def test_rho_json_errors(data):
    with pytest.raises(ParseError):
        rho_from_json(data)


def test_load_state_missing():
    with pytest.raises(ConfigError):
        load_state("no_such_state")
