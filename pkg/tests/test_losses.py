import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diupfc.losses import (
    BertottiParams,
    DeviceCoefficients,
    FaultSpec,
    LossLineup,
    NoCrossing,
    bandwidth_3db,
    bertotti_loss,
    fault_ratings,
    inductor_loss,
    load_lineup,
    loss_lineup,
    transformer_transfer,
)

P = BertottiParams()


def test_bertotti_reference_values():
    c = bertotti_loss(P, 50.0)
    # eta B^2 f V and pi^2 t^2 B^2 f^2 V / (6 rho), evaluated by hand
    assert c.hysteresis == pytest.approx(15 * 2.25 * 50 * 0.129, rel=1e-12)
    assert c.hysteresis == pytest.approx(217.6875, abs=1e-4)
    assert c.eddy == pytest.approx(181.2788, abs=1e-3)
    assert c.total == c.hysteresis + c.eddy


def test_bertotti_micron_thickness_reading():
    # taking the thickness literally as 0.27 um leaves eddy loss a millionth as large
    micro = dataclasses.replace(P, t_sheet=0.27e-6)
    assert bertotti_loss(micro, 50.0).eddy == pytest.approx(bertotti_loss(P, 50.0).eddy * 1e-6, rel=1e-12)


def test_bertotti_zero_frequency_and_validation():
    c = bertotti_loss(P, 0.0)
    assert c.hysteresis == 0.0 and c.eddy == 0.0
    with pytest.raises(ValueError):
        BertottiParams(eta=0.0)
    with pytest.raises(ValueError):
        bertotti_loss(P, -1.0)


@given(st.floats(1e-3, 1e5))
def test_bertotti_proportionality_exact(f):
    a, b = bertotti_loss(P, f), bertotti_loss(P, 2 * f)
    assert b.hysteresis == 2 * a.hysteresis
    assert b.eddy == 4 * a.eddy


@given(st.floats(1, 50), st.floats(0.1, 2.5), st.floats(1e-5, 1e-3), st.floats(1e-7, 1e-5),
       st.floats(1e-3, 1), st.floats(1, 1e4))
def test_eddy_hysteresis_ratio_identity(eta, bm, t, rho, vol, f):
    p = BertottiParams(eta, bm, t, rho, vol)
    c = bertotti_loss(p, f)
    assert c.eddy / c.hysteresis == pytest.approx(math.pi ** 2 * t * t * f / (6 * rho * eta), rel=1e-12)


def test_transfer_limits():
    assert transformer_transfer(1e12, P, 50.0).h == pytest.approx(1.0, abs=1e-8)
    half = bertotti_loss(P, 50.0).total * 2
    assert transformer_transfer(half, P, 50.0).h == pytest.approx(0.5, rel=1e-12)
    t = transformer_transfer(10.0, P, 50.0)
    assert t.clamped and t.h == 0.0
    with pytest.raises(ValueError):
        transformer_transfer(0.0, P, 50.0)


def test_transfer_monotone_decreasing():
    f = np.linspace(1, 2000, 400)
    h = [transformer_transfer(10e3, P, x).h for x in f]
    assert all(a > b for a, b in zip(h, h[1:]) if b > 0)


def _fixture_at_1khz(p_g):
    """Scale the core volume so the loss at 1 kHz is exactly half the injected power."""
    unit = dataclasses.replace(P, volume=1.0)
    return dataclasses.replace(P, volume=0.5 * p_g / bertotti_loss(unit, 1000.0).total)


def test_bandwidth_constructed_fixture():
    params = _fixture_at_1khz(50e3)
    f = bandwidth_3db(50e3, params)
    assert f == pytest.approx(1000.0, abs=1.0)
    assert abs(transformer_transfer(50e3, params, f).h - 0.5) < 1e-6


def test_bandwidth_amplitude_reading_is_lower():
    params = _fixture_at_1khz(50e3)
    fa = bandwidth_3db(50e3, params, amplitude=True)
    assert fa < 1000.0
    assert transformer_transfer(50e3, params, fa).h == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_bandwidth_grows_with_injected_power():
    fs = [bandwidth_3db(p, P) for p in (5e3, 10e3, 50e3)]
    assert fs[0] < fs[1] < fs[2]


def test_bandwidth_default_config_against_dense_sweep():
    f = bandwidth_3db(10e3, P)
    grid = np.arange(1.0, 5000.0, 0.01)
    h = np.array([transformer_transfer(10e3, P, x).h for x in grid[::100]])
    coarse = grid[::100][np.argmax(h <= 0.5)]
    assert abs(f - coarse) <= 1.0
    assert f == pytest.approx(234.3, abs=0.1)


def test_bandwidth_no_crossing():
    with pytest.raises(NoCrossing):
        bandwidth_3db(1e9, P, f_max=10.0)


def test_inductor_loss_example():
    assert inductor_loss(100.0, 5e-3) == 50.0
    assert inductor_loss(0.0, 5e-3) == 0.0


def test_packaged_lineup_totals():
    rep = loss_lineup(load_lineup())
    assert rep.direct["inductor"] == 50.0
    assert rep.direct_total == pytest.approx(209.6, abs=1e-9)
    assert rep.transformer_total == pytest.approx(246.9, abs=1e-9)
    assert rep.direct_total == sum(rep.direct.values())
    # stated resistance does not reproduce the reference transformer figure
    assert rep.transformer_i2r == pytest.approx(200.0)
    assert rep.transformer_reference == 150.3


def test_lineup_zero_current_and_devices(tmp_path):
    rep = loss_lineup(LossLineup(i_rms=0.0))
    assert rep.direct["inductor"] == 0.0 and rep.transformer_i2r == 0.0
    dev = DeviceCoefficients(r_on=2e-3, e_sw=1e-3, i_ref=100.0, f_sw=20e3)
    rep = loss_lineup(LossLineup(direct={"afe": 48.3}, devices={"afe": dev}))
    assert rep.direct["afe"] == pytest.approx(100 ** 2 * 2e-3 + 20.0)
    doc = {"i_rms": 50.0, "direct": {"x": 1.0}, "devices": {"x": {"r_on": 1e-3}}}
    path = tmp_path / "l.json"
    path.write_text(json.dumps(doc))
    assert loss_lineup(load_lineup(path)).direct["x"] == pytest.approx(2.5)
    with pytest.raises(ValueError):
        LossLineup(r_inductor=-1.0)


def test_fault_reference_values():
    r = fault_ratings(FaultSpec())
    assert r.i_nominal == pytest.approx(433.0127, abs=1e-4)
    assert r.i_short == pytest.approx(5094.267, abs=1e-3)
    assert round(r.i_nominal, -1) == 430 and round(r.i_short, -2) == 5100
    assert r.i2t == pytest.approx(1.038e7, rel=1e-3)


def test_fault_unit_uk_and_validation():
    r = fault_ratings(FaultSpec(u_k=1.0))
    assert r.i_short == r.i_nominal
    with pytest.raises(ValueError):
        FaultSpec(u_k=0.0)
