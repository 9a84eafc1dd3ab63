"""Pass/fail checks for the built-in cases, evaluated on a finished trace."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .metrics import THD_ORDERS, thd
from .network import T_ENABLE, RegulateCurrent, Scenario, steady_state_current


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _ph(tr, channel: str, phase: int, t_end: float, cycles: float = 2.0, order: int = 1) -> complex:
    # leave out the boundary sample, its centred averages reach past t_end
    return tr.phasor(channel, phase, t_end - 0.5 * tr.step, cycles, order)


def source_power(tr, t_end: float, cycles: float = 2.0) -> complex:
    """Three-phase fundamental complex power at the left terminal."""
    return sum(_ph(tr, "v_left", p, t_end, cycles) * _ph(tr, "i_line", p, t_end, cycles).conjugate()
               for p in range(3))


def uncontrolled_current(sc: Scenario, phase: int = 0) -> float:
    """Line current between the two grids with the module bypassed and no filter."""
    vl = sc.left.phasors()[phase]
    vr = sc.right.phasors()[phase]
    return abs(complex(steady_state_current(vl, vr, 0j, sc.line.z)))


def _deg(z: complex) -> float:
    return math.degrees(cmath.phase(z))


def check_a(tr, sc) -> list[Check]:
    period = 1.0 / tr.freq
    pre = source_power(tr, T_ENABLE)
    post4 = source_power(tr, T_ENABLE + 4 * period, 1.0)
    post = source_power(tr, sc.sim.t_end)
    return [
        Check("pre-enable Q 1.28 kvar +-10%", abs(pre.imag - 1280.0) <= 128.0, f"Q={pre.imag:.1f} var"),
        Check("Q < 5% of pre-value 4 cycles after enable", abs(post4.imag) < 0.05 * abs(pre.imag),
              f"Q={post4.imag:.1f} var"),
        Check("steady Q < 5% of pre-value", abs(post.imag) < 0.05 * abs(pre.imag), f"Q={post.imag:.1f} var"),
        Check("source P unchanged +-2%", abs(post.real - pre.real) <= 0.02 * abs(pre.real),
              f"P {pre.real:.1f} -> {post.real:.1f} W"),
    ]


def check_b(tr, sc) -> list[Check]:
    pre = source_power(tr, T_ENABLE)
    post = source_power(tr, sc.sim.t_end)
    out = [Check("P < 5% of pre-value", abs(post.real) < 0.05 * abs(pre.real),
                 f"P {pre.real:.1f} -> {post.real:.1f} W")]
    for p in range(3):
        ang = _deg(_ph(tr, "i_line", p, sc.sim.t_end) / _ph(tr, "v_left", p, sc.sim.t_end))
        out.append(Check(f"phase {'abc'[p]} current lags by 90 +-5 deg", abs(ang + 90.0) <= 5.0,
                         f"angle {ang:.2f} deg"))
    return out


def _two_grid(tr, sc) -> list[Check]:
    i_unc = uncontrolled_current(sc)
    out = []
    for t0, t1, cmd in sc.intervals():
        if not isinstance(cmd, RegulateCurrent):
            continue
        i = [_ph(tr, "i_line", p, t1) for p in range(3)]
        v = [_ph(tr, "v_left", p, t1) for p in range(3)]
        s = source_power(tr, t1)
        tag = f"[{t0:.2f}, {t1:.2f}]"
        if cmd.i_ref_rms == 0:
            worst = max(abs(z) for z in i)
            out.append(Check(f"{tag} zero hold < 1% of uncontrolled {i_unc:.0f} A", worst < 0.01 * i_unc,
                             f"|I|max={worst:.4f} A"))
            continue
        mags = [abs(z) for z in i]
        ok = all(abs(m - cmd.i_ref_rms) <= 0.05 * cmd.i_ref_rms for m in mags)
        out.append(Check(f"{tag} |I| = {cmd.i_ref_rms:g} A +-5%", ok, f"|I|={', '.join(f'{m:.3f}' for m in mags)}"))
        ang = [_deg(z / u) for z, u in zip(i, v)]
        ang_ok = all(abs(math.remainder(a - cmd.phase_ref, 360.0)) <= 5.0 for a in ang)
        out.append(Check(f"{tag} angle {cmd.phase_ref:g} deg", ang_ok, f"angles {', '.join(f'{a:.2f}' for a in ang)}"))
        expect = sum(abs(u) for u in v) * cmd.i_ref_rms * cmath.exp(-1j * math.radians(cmd.phase_ref))
        if abs(expect.real) > abs(expect.imag):
            got, want, what = s.real, expect.real, "P"
        else:
            got, want, what = s.imag, expect.imag, "Q"
        sign_ok = math.copysign(1.0, got) == math.copysign(1.0, want)
        out.append(Check(f"{tag} {what} sign and magnitude +-5%", sign_ok and abs(got - want) <= 0.05 * abs(want),
                         f"{what}={got:.1f} (expected {want:.1f})"))
    return out


def check_c(tr, sc) -> list[Check]:
    out = _two_grid(tr, sc)
    t1 = sc.sim.t_end
    p = source_power(tr, t1).real
    # reversed: power enters the higher-voltage left grid from the lower one
    out.append(Check("reversed interval: P flows low -> high voltage", p < 0, f"P_left={p:.1f} W"))
    return out


def check_d(tr, sc) -> list[Check]:
    return _two_grid(tr, sc)


def check_e(tr, sc) -> list[Check]:
    n = tr.samples_per_cycle
    b = tr.window(0.0, T_ENABLE - 0.5 * tr.step).stop
    v_thd = [thd(tr.v_left[p, b - 2 * n:b], 2, THD_ORDERS) for p in range(3)]
    out = [Check("injected THD 11.18% +-0.3pp", all(abs(x - math.hypot(0.1, 0.05)) <= 0.003 for x in v_thd),
                 f"THD {', '.join(f'{100 * x:.2f}%' for x in v_thd)}")]
    for h in (3, 5):
        pre = [abs(_ph(tr, "i_line", p, T_ENABLE, order=h)) for p in range(3)]
        post = [abs(_ph(tr, "i_line", p, sc.sim.t_end, order=h)) for p in range(3)]
        att = [1 - b_ / a_ for a_, b_ in zip(pre, post)]
        out.append(Check(f"order {h} current attenuated >= 90%", min(att) >= 0.9,
                         f"attenuation {', '.join(f'{100 * a:.1f}%' for a in att)}"))
    return out


def check_f(tr, sc) -> list[Check]:
    t1 = sc.sim.t_end
    out = []
    p_mod = []
    for p in range(3):
        vm = _ph(tr, "v_m", p, t1)
        vl = _ph(tr, "v_left", p, t1)
        i = _ph(tr, "i_line", p, t1)
        # a lowering module is in phase with the opposite sign
        ang = math.remainder(_deg(vm / vl), 180.0)
        out.append(Check(f"phase {'abc'[p]} injection collinear with phase voltage +-2 deg", abs(ang) <= 2.0,
                         f"|Vm|={abs(vm):.2f} V at {_deg(vm / vl):.3f} deg"))
        p_mod.append((vm * i.conjugate()).real)
    order = sorted(range(3), key=lambda k: -abs(p_mod[k]))
    out.append(Check("module |P| ordering c > a > b", order == [2, 0, 1],
                     f"P={', '.join(f'{x:.1f}' for x in p_mod)} W"))
    return out


CASE_CHECKS = {"A": check_a, "B": check_b, "C": check_c, "D": check_d, "E": check_e, "F": check_f}


def case_checks(tr, sc: Scenario) -> list[Check]:
    """Built-in checks for a scenario named after one of the cases; empty otherwise."""
    fn = CASE_CHECKS.get(sc.name.upper())
    return fn(tr, sc) if fn else []
