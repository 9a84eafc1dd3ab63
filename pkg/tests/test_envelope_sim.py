"""Zero-current holds placed just inside and just outside the two-grid envelope."""

import math

import pytest

from conftest import VPH, hold_probe
from diupfc.checks import uncontrolled_current
from diupfc.control import SQUARE_WAVE_GAIN
from diupfc.envelope import max_inphase_diff, parity_max_phase


def _worst_current(tr):
    te = tr.t[-1] - 0.5 * tr.step
    return max(abs(tr.phasor("i_line", p, te, 2)) for p in range(3))


PROBES = [
    ("amplitude", dict(dv=max_inphase_diff(48.0))),
    ("phase", dict(dtheta=parity_max_phase(VPH, 48.0))),
]


@pytest.mark.parametrize("name,limit", PROBES)
def test_linear_limit_just_inside_holds_zero(name, limit):
    sc, tr = hold_probe(**{k: 0.97 * v for k, v in limit.items()})
    assert _worst_current(tr) < 0.01 * uncontrolled_current(sc)
    assert tr.info["saturated_fraction"] == 0.0
    assert tr.info["overmod_fraction"] == 0.0


@pytest.mark.parametrize("name,limit", PROBES)
def test_linear_limit_just_outside_saturates(name, limit):
    sc, tr = hold_probe(**{k: 1.03 * v for k, v in limit.items()})
    assert tr.info["saturated_fraction"] > 0.5
    assert _worst_current(tr) > 1.0


def test_overmod_extends_reach_with_flag():
    # beyond the linear limit but below the clipped-waveform fundamental ceiling
    ceiling = SQUARE_WAVE_GAIN * 48.0 / math.sqrt(2)
    dv = 0.9 * ceiling
    assert dv > max_inphase_diff(48.0)
    sc, tr = hold_probe(dv=dv, overmod=True)
    assert tr.info["overmod_fraction"] > 0.5
    assert _worst_current(tr) < 0.01 * uncontrolled_current(sc)


def test_overmod_limit_just_outside_saturates():
    sc, tr = hold_probe(dv=1.03 * max_inphase_diff(48.0, overmod=True), overmod=True)
    assert tr.info["saturated_fraction"] > 0.5
    assert _worst_current(tr) > 1.0
