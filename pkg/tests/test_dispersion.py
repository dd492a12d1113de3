import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fibrepair.dispersion import (
    FUSED_SILICA,
    AxisModel,
    FibreSpec,
    SellmeierModel,
    TabulatedModel,
    fibre_from_dict,
    fibre_to_dict,
    group_index,
    list_presets,
    load_preset,
    load_tabulated,
    nm_from_omega,
    omega_from_nm,
    phase_index,
    propagation_constant,
    zero_dispersion_wavelength,
)
from fibrepair.errors import BracketError, ConfigError, ParseError, RangeError

wavelengths = st.floats(min_value=300.0, max_value=3000.0)


def fd_group_index(model, lam, h=1e-3):
    dn = (model.n(lam + h) - model.n(lam - h)) / (2 * h)
    return model.n(lam) - lam * dn


def test_silica_index_at_705():
    assert phase_index(FUSED_SILICA, 705.0) == pytest.approx(1.45518, abs=1e-4)


def test_silica_group_index_matches_finite_difference():
    # dual route: analytic Sellmeier derivative vs central difference of n
    assert group_index(FUSED_SILICA, 705.0) == pytest.approx(fd_group_index(FUSED_SILICA, 705.0), abs=1e-8)
    assert group_index(FUSED_SILICA, 705.0) == pytest.approx(1.47098, abs=5e-5)


def test_silica_zdw():
    assert zero_dispersion_wavelength(FUSED_SILICA, (1100, 1500)) == pytest.approx(1272.75, abs=0.5)


def test_zdw_bracket_without_crossing():
    with pytest.raises(BracketError):
        zero_dispersion_wavelength(FUSED_SILICA, (600, 900))


@given(wavelengths)
def test_group_index_dual_route(lam):
    assert group_index(FUSED_SILICA, lam) == pytest.approx(fd_group_index(FUSED_SILICA, lam), abs=1e-7)


@given(wavelengths)
def test_second_derivative_dual_route(lam):
    h = 1e-2
    fd = (FUSED_SILICA.dn_dlambda(lam + h) - FUSED_SILICA.dn_dlambda(lam - h)) / (2 * h)
    assert FUSED_SILICA.d2n_dlambda2(lam) == pytest.approx(fd, rel=1e-5, abs=1e-14)


@given(wavelengths)
def test_normal_dispersion_group_index_exceeds_phase_index(lam):
    # dn/dlambda < 0 across the transparent window of silica
    assert group_index(FUSED_SILICA, lam) > phase_index(FUSED_SILICA, lam)


@given(st.floats(min_value=250.0, max_value=3500.0))
def test_omega_roundtrip(lam):
    assert nm_from_omega(omega_from_nm(lam)) == pytest.approx(lam, rel=1e-14)


def test_propagation_constant():
    w = omega_from_nm(800.0)
    assert propagation_constant(FUSED_SILICA, w) == pytest.approx(FUSED_SILICA.n(800.0) * 2 * np.pi / 800e-9)


def test_out_of_range_raises():
    with pytest.raises(RangeError):
        FUSED_SILICA.n(5000.0)
    with pytest.raises(RangeError):
        group_index(FUSED_SILICA, 210.0)  # edge: derivative needs interior


def test_sellmeier_validation():
    with pytest.raises(ConfigError):
        SellmeierModel((1.0,), (0.5, 0.2))
    with pytest.raises(ConfigError):
        SellmeierModel((1.0,), (-0.1,))
    with pytest.raises(ConfigError):
        SellmeierModel((1.0,), (0.36,), valid_range=(400, 800))  # pole at 600 nm


def test_axis_model_adds_polynomial():
    ax = AxisModel(FUSED_SILICA, waveguide=(0.01,), birefringence=(0.0, 1e-3))
    assert ax.n(1000.0) == pytest.approx(FUSED_SILICA.n(1000.0) + 0.01 + 1e-3)
    assert ax.dn_dlambda(1000.0) == pytest.approx(FUSED_SILICA.dn_dlambda(1000.0) + 1e-6)


def test_tabulated_reproduces_smooth_model(tmp_path):
    lam = np.linspace(500, 1500, 101)
    path = tmp_path / "n.csv"
    path.write_text("lambda_nm,n\n" + "".join(f"{x},{FUSED_SILICA.n(x):.12f}\n" for x in lam))
    tab = load_tabulated(path)
    for x in (600.0, 777.7, 1234.5):
        assert tab.n(x) == pytest.approx(FUSED_SILICA.n(x), abs=1e-9)
        assert group_index(tab, x) == pytest.approx(group_index(FUSED_SILICA, x), abs=1e-6)
    with pytest.raises(RangeError):
        tab.n(1600.0)


@pytest.mark.parametrize(
    "body, row",
    [
        ("lambda,n\n", 1),
        ("lambda_nm,n\n500,1.4\n500,1.41\n", 3),
        ("lambda_nm,n\n500,abc\n", 2),
        ("lambda_nm,n\n500,1.4,3\n", 2),
        ("lambda_nm,n\n600,1.4\n500,1.41\n", 3),
    ],
)
def test_tabulated_parse_errors(tmp_path, body, row):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError) as exc:
        load_tabulated(path)
    assert exc.value.row == row


def test_tabulated_needs_enough_points():
    with pytest.raises(ConfigError):
        TabulatedModel(np.arange(5.0) + 500, np.ones(5) * 1.4)


def test_presets_listed_and_loadable():
    names = list_presets()
    for n in ("pcf-a", "pcf-b", "pcf-c", "silica"):
        assert n in names
        f = load_preset(n)
        assert f.length_m > 0


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("no-such-fibre")


def test_preset_dict_roundtrip(pcf_a):
    again = fibre_from_dict(json.loads(json.dumps(fibre_to_dict(pcf_a))))
    lam = np.linspace(500, 1000, 11)
    assert np.allclose(again.slow.n(lam), pcf_a.slow.n(lam), atol=0, rtol=1e-15)
    assert np.allclose(again.fast.n(lam), pcf_a.fast.n(lam), atol=0, rtol=1e-15)


def test_preset_dir_env(tmp_path, monkeypatch, pcf_a):
    data = fibre_to_dict(pcf_a)
    data["name"] = "custom-fibre"
    (tmp_path / "custom-fibre.json").write_text(json.dumps(data))
    monkeypatch.setenv("FIBREPAIR_PRESET_DIR", str(tmp_path))
    assert "custom-fibre" in list_presets()
    assert load_preset("custom-fibre").name == "custom-fibre"


def test_slow_axis_never_below_fast(pcf_a):
    lam = np.linspace(*pcf_a.valid_range, 2001)
    assert np.all(pcf_a.slow.n(lam) >= pcf_a.fast.n(lam))


def test_fibre_rejects_inverted_axes():
    fast = AxisModel(FUSED_SILICA, birefringence=(1e-3,))
    with pytest.raises(ConfigError):
        FibreSpec("bad", FUSED_SILICA, fast, 1.0)


def test_pcf_a_fast_axis_zdw(pcf_a):
    assert 780.0 <= zero_dispersion_wavelength(pcf_a.fast, (700, 900)) <= 800.0
