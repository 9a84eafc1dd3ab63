import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diupfc.control import (
    AfeController,
    PiController,
    SeriesController,
    SogiBank,
    SogiPll,
    afe_step,
    clipped_fundamental,
    harmonic_block_step,
    modulate,
    overmod_drive,
    series_current_control,
)
from diupfc.network import AfeGains, BlockHarmonics, RegulateCurrent, SeriesGains
from diupfc.phasor import SQRT2, DqSample

W = 2 * math.pi * 50
DT = 1e-5


# ---------------------------------------------------------------- PI


def test_pi_proportional_and_integral():
    pi = PiController(2.0, 10.0)
    assert pi.step(1.0, 0.1) == pytest.approx(2.0 + 1.0)
    assert pi.integrator == pytest.approx(1.0)
    pi.reset()
    assert pi.integrator == 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200))
def test_pi_output_and_integrator_bounded(errors):
    pi = PiController(0.5, 50.0, -10.0, 10.0)
    for e in errors:
        u = pi.step(e, 1e-3)
        assert -10.0 <= u <= 10.0
        assert -10.0 <= pi.integrator <= 10.0


def test_pi_no_windup_recovers_immediately():
    pi = PiController(0.0, 100.0, -1.0, 1.0)
    for _ in range(1000):
        pi.step(5.0, 1e-3)
    assert pi.integrator <= 1.0
    # one negative step moves the output off the bound at once
    assert pi.step(-5.0, 1e-3) < 1.0


def test_pi_hold_freezes_integrator():
    pi = PiController(1.0, 1.0)
    pi.step(1.0, 1.0, hold=True)
    assert pi.integrator == 0.0


# ---------------------------------------------------------------- modulator


def test_modulate_bypass_and_linear():
    out = modulate(0.0, 48.0)
    assert out.mode == "Bypass" and out.duty == 0.0
    out = modulate(24.0, 48.0)
    assert out.duty == 0.5 and out.terminal_voltage(48.0) == 24.0 and out.mode == "SeriesPos"
    assert modulate(-10.0, 48.0).mode == "SeriesNeg"
    with pytest.raises(ValueError):
        modulate(1.0, 0.0)


def test_modulate_linear_boundary():
    t = np.linspace(0, 0.02, 2001)
    cmd = 48.0 * np.sin(2 * np.pi * 50 * t)  # rms 48/sqrt(2)
    outs = [modulate(v, 48.0) for v in cmd]
    assert max(o.duty for o in outs) == pytest.approx(1.0)
    assert min(o.duty for o in outs) == pytest.approx(-1.0)
    assert not any(o.overmod_active for o in outs)


def _numeric_fundamental_rms(amp, v_dc, n=4096):
    x = np.arange(n) / n * 2 * np.pi
    y = np.array([modulate(a, v_dc).terminal_voltage(v_dc) for a in amp * np.sin(x)])
    return abs(np.fft.rfft(y)[1]) * 2 / n / SQRT2


def test_modulate_overmodulated_sine():
    amp = 40.0 * SQRT2
    assert modulate(amp, 48.0).overmod_active
    fund = _numeric_fundamental_rms(amp, 48.0)
    assert fund > 48.0 / SQRT2
    assert clipped_fundamental(amp / 48.0) * 48.0 / SQRT2 == pytest.approx(fund, rel=1e-4)


@pytest.mark.parametrize("r", [0.5, 1.0, 1.3, 2.47, 10.0])
def test_clipped_fundamental_against_fft(r):
    assert clipped_fundamental(r) * 48.0 / SQRT2 == pytest.approx(_numeric_fundamental_rms(r * 48.0, 48.0), rel=1e-4)


def test_clipped_fundamental_tends_to_square_wave():
    assert clipped_fundamental(1e6) == pytest.approx(4 / math.pi, rel=1e-6)


@given(st.floats(48.0, 48.0 * 4 / math.pi * 0.999))
def test_overmod_drive_inverts_clipping(target):
    drive, sat = overmod_drive(target, 48.0)
    assert not sat
    assert clipped_fundamental(drive / 48.0) * 48.0 == pytest.approx(target, rel=1e-4)


def test_overmod_drive_linear_and_saturated():
    assert overmod_drive(30.0, 48.0) == (30.0, False)
    _, sat = overmod_drive(70.0, 48.0)
    assert sat


# ---------------------------------------------------------------- sync


def test_sogi_bank_separates_orders():
    bank = SogiBank(W, DT, (5,))
    z = None
    for k in range(int(0.2 / DT)):
        t = k * DT
        z = bank.step(100 * math.cos(W * t) + 20 * math.cos(5 * W * t + 0.4))
    t = (int(0.2 / DT) - 1) * DT
    assert abs(z[0]) == pytest.approx(100, rel=5e-3)
    assert abs(z[1]) == pytest.approx(20, rel=1e-2)
    assert cmath.phase(z[1] * cmath.exp(-1j * 5 * W * t)) == pytest.approx(0.4, abs=0.02)


@pytest.mark.parametrize("f", [50.0, 49.5])
def test_sogi_pll_locks(f):
    pll = SogiPll(W, DT, SeriesGains().pll_kp, SeriesGains().pll_ki)
    n = int(0.6 / DT)
    for k in range(n):
        th = pll.step(325 * math.cos(2 * math.pi * f * k * DT + 0.8))
    true = 2 * math.pi * f * (n - 1) * DT + 0.8
    assert abs(math.degrees(math.remainder(th - true, 2 * math.pi))) < 1.0
    # fixed-tuned SOGI: off-nominal input leaves a small double-frequency ripple on omega
    assert pll.omega == pytest.approx(2 * math.pi * f, rel=5e-3)


# ---------------------------------------------------------------- series controller


def _series(orders=(), z_load=None):
    return SeriesController(SeriesGains(), W, DT, complex(0.02, 0.0728), z_load, orders)


def test_series_reference_for_regulate_current():
    ctl = _series()
    ctl.set_mode(RegulateCurrent(20.0, -90.0))
    assert ctl.current_reference() == pytest.approx(SQRT2 * 20.0 * -1j)


def test_series_compensation_references():
    from diupfc.network import CompensateP, CompensateQ

    zl = complex(22, 4)
    ctl = _series(z_load=zl)
    ctl.v_dq = complex(325.0, 0.0)
    ctl.set_mode(CompensateQ())
    ref = ctl.current_reference()
    zt = ctl.z_series + zl
    # unity power factor at the source: the current is in phase with V
    assert ref.imag == 0.0 and ref.real == pytest.approx(325 * zt.real / abs(zt) ** 2)
    ctl.set_mode(CompensateP())
    ref = ctl.current_reference()
    assert ref.real == 0.0 and ref.imag < 0


def test_series_current_control_zero_error_gives_feedforward():
    ctl = _series()
    for k in range(int(0.1 / DT)):
        ctl.measure(325 * math.cos(W * k * DT), 0.0, 0.0)
    ref = DqSample(0.0, 0.0)
    u = series_current_control(ctl, 0.0, ref, DT)
    ff = ctl.feedforward(0j)
    assert u == pytest.approx((ff * cmath.exp(1j * (ctl.theta + ctl.lead))).real, abs=1e-6)


def test_series_zero_reference_against_flow_saturates():
    ctl = _series()
    ctl.set_mode(RegulateCurrent(0.0))
    sat = False
    for k in range(int(0.1 / DT)):
        t = k * DT
        out = ctl.step(325 * math.cos(W * t), 0.0, 200 * math.cos(W * t), 48.0)
        sat |= out.saturated
    assert sat


def test_harmonic_block_disabled_is_exact_zero():
    ctl = _series()
    assert harmonic_block_step(ctl, 5.0, DT) == 0.0
    assert ctl.harmonic_commands() == {}


def test_harmonic_block_no_content_gives_near_zero():
    ctl = _series((3, 5))
    # start synchronised, as the engine does; the loop is open here, so any
    # start-up transient would stay in the integrators
    ctl.v_bank.preset([325 + 0j, 0j, 0j])
    ctl.i_bank.preset([10 + 0j, 0j, 0j])
    ctl.set_mode(BlockHarmonics((3, 5)))
    cmds = {}
    for k in range(int(0.2 / DT)):
        t = k * DT
        ctl.measure(325 * math.cos(W * t), 0.0, 10 * math.cos(W * t))
        cmds = ctl.harmonic_commands()
    assert set(cmds) == {3, 5}
    assert max(abs(u) for u in cmds.values()) < 0.05


def test_controllers_share_no_state():
    a, b = _series(), _series()
    a.set_mode(RegulateCurrent(10.0))
    for k in range(100):
        a.step(325 * math.cos(W * k * DT), 0.0, 3.0, 48.0)
    assert b.i_loop.integrator == 0 and b.pll.theta == 0.0 and isinstance(b.mode, type(b.mode))
    assert a.i_bank is not b.i_bank and a.pll is not b.pll


# ---------------------------------------------------------------- AFE

VPK = 400 / math.sqrt(3) * SQRT2


def test_afe_zero_error_outputs_grid_voltage():
    ctl = AfeController(AfeGains(), W, DT, 2e-3, 700.0)
    ctl.preset(complex(VPK, 0), 0j)
    out = ctl.step(complex(VPK, 0), 0j, 700.0)
    assert out.i_d_ref == 0.0 and out.i_q_ref == 0.0
    # only the separated sequence voltages come back, advanced by the hold lead
    vp, vn = ctl.v_seq
    lead = ctl.lead
    assert out.u_ab == pytest.approx(vp * cmath.exp(1j * lead) + vn * cmath.exp(-1j * lead), abs=1e-9)
    assert abs(out.u_ab) == pytest.approx(VPK, rel=1e-3)


def test_afe_cross_coupling_terms():
    ctl = AfeController(AfeGains(), W, DT, 2e-3, 700.0)
    ctl.preset(complex(VPK, 0), 0j)
    ctl.pos_d = PiController(0.0, 0.0)
    ctl.pos_q = PiController(0.0, 0.0)
    ctl.neg_d = PiController(0.0, 0.0)
    ctl.neg_q = PiController(0.0, 0.0)
    i = complex(0.0, 10.0)
    out = ctl.step(complex(VPK, 0), i, 700.0)
    vp, vn = ctl.v_seq
    ip, in_ = ctl.i_seq
    wl = W * 2e-3
    up = complex(vp.real + wl * ip.imag, vp.imag - wl * ip.real)
    un = complex(vn.real - wl * in_.imag, vn.imag + wl * in_.real)
    expect = up * cmath.exp(1j * ctl.lead) + un * cmath.exp(-1j * ctl.lead)
    assert out.u_ab == pytest.approx(expect, abs=1e-9)


def test_afe_low_dc_voltage_raises_d_reference():
    ctl = AfeController(AfeGains(), W, DT, 2e-3, 700.0)
    ctl.preset(complex(VPK, 0), 0j)
    refs = [afe_step(ctl, {"v_grid": (VPK, -VPK / 2, -VPK / 2), "i_in": (0, 0, 0), "v_dc": 650.0}, DT).i_d_ref
            for _ in range(200)]
    assert refs[-1] > refs[0] > 0


def test_afe_step_rejects_bad_dt():
    ctl = AfeController(AfeGains(), W, DT, 2e-3, 700.0)
    with pytest.raises(ValueError):
        afe_step(ctl, {"v_grid": (0, 0, 0), "i_in": (0, 0, 0), "v_dc": 700.0}, 0.0)


def test_afe_decoupling_on_d_step():
    l, r = 2e-3, 0.05
    ctl = AfeController(AfeGains(), W, DT, l, 700.0)
    ctl.preset(complex(VPK, 0), 0j)
    ctl.vdc_loop = PiController(0.0, 0.0, 0.0, 0.0)  # pins I_d* at zero
    i, t = 0j, 0.0
    n_step, n_end = int(0.2 / DT), int(0.4 / DT)
    for k in range(n_end):
        if k == n_step:
            ctl.vdc_loop = PiController(0.0, 0.0, 20.0, 20.0)  # I_d* = 20 A
        v = VPK * cmath.exp(1j * W * t)
        out = ctl.step(v, i, 700.0)
        i += DT * (v - out.u_ab - r * i) / l
        t += DT
    idq = i * cmath.exp(-1j * W * t)
    assert idq.real == pytest.approx(20.0, rel=0.01)
    assert abs(idq.imag) < 0.02 * 20.0
