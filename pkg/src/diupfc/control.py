"""Closed-loop controllers and the three-state modulator.

Per-phase series control runs in a frame locked to that phase's own left-side
voltage. Dq quantities here are complex numbers ``d + j*q`` holding *peak*
values, so a steady rms phasor ``X`` relative to the phase reference maps to
``sqrt(2)*X``. Series voltages use the drop convention of :mod:`diupfc.network`:
raising the module voltage along the current lowers the current.
"""

from __future__ import annotations

import bisect
import cmath
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .network import (
    AfeGains, BlockHarmonics, Bypass, Command, CompensateP, CompensateQ, InjectVoltage,
    RegulateCurrent, SeriesGains,
)
from .phasor import SQRT2, DqSample, Sogi

# ------------------------------------------------------------------------- PI


@dataclass(slots=True)
class PiController:
    kp: float
    ki: float
    out_min: float = -math.inf
    out_max: float = math.inf
    integrator: float = 0.0

    def step(self, error: float, dt: float, hold: bool = False) -> float:
        """One update with conditional integration.

        The integrator does not move while ``hold`` is set or while the output
        is pinned at a bound and the error would push it further out. It is
        also kept inside the output bounds itself.
        """
        p = self.kp * error
        trial = self.integrator + self.ki * error * dt
        u = p + trial
        if not hold and not ((u > self.out_max and trial > self.integrator)
                             or (u < self.out_min and trial < self.integrator)):
            self.integrator = min(max(trial, self.out_min), self.out_max)
        out = p + self.integrator
        if out > self.out_max:
            return self.out_max
        if out < self.out_min:
            return self.out_min
        return out

    def reset(self, value: float = 0.0) -> None:
        self.integrator = value


class ComplexPi:
    """Independent d and q PI loops acting on a complex error."""

    __slots__ = ("d", "q")

    def __init__(self, kp: float, ki: float, limit: float = math.inf):
        self.d = PiController(kp, ki, -limit, limit)
        self.q = PiController(kp, ki, -limit, limit)

    def step(self, error: complex, dt: float, hold: bool = False) -> complex:
        return complex(self.d.step(error.real, dt, hold), self.q.step(error.imag, dt, hold))

    @property
    def integrator(self) -> complex:
        return complex(self.d.integrator, self.q.integrator)

    def reset(self) -> None:
        self.d.reset()
        self.q.reset()


# ------------------------------------------------------------------ modulator


@dataclass(frozen=True)
class ModulatorOutput:
    duty: float
    mode: str  # "Bypass" | "SeriesPos" | "SeriesNeg"
    overmod_active: bool

    def terminal_voltage(self, v_dc: float) -> float:
        return self.duty * v_dc


def modulate(v_cmd: float, v_dc: float, allow_overmod: bool = True) -> ModulatorOutput:
    """Map an instantaneous voltage command onto the bypass / +v_dc / -v_dc states.

    The averaged output is ``duty*v_dc`` with the duty clipped to [-1, 1]. A
    command beyond ``v_dc`` raises ``overmod_active``; whether the controller is
    allowed to ask for that is its own business, the bridge simply clips.
    """
    if not v_dc > 0:
        raise ValueError(f"module dc voltage must be positive, got {v_dc}")
    over = abs(v_cmd) > v_dc
    duty = v_cmd / v_dc
    if duty > 1.0:
        duty = 1.0
    elif duty < -1.0:
        duty = -1.0
    if duty == 0.0:
        mode = "Bypass"
    elif duty > 0:
        mode = "SeriesPos"
    else:
        mode = "SeriesNeg"
    return ModulatorOutput(duty, mode, over and allow_overmod)


def clipped_fundamental(r: float) -> float:
    """Fundamental peak of ``clip(r*cos(x), -1, 1)`` for ``r >= 0``."""
    if r <= 1.0:
        return r
    s = 1.0 / r
    return (2.0 * r / math.pi) * (math.asin(s) + s * math.sqrt(1.0 - s * s))


SQUARE_WAVE_GAIN = 4.0 / math.pi

_R_TABLE = [1.0 + 0.002 * k for k in range(500)] + [2.0 * 1.01 ** k for k in range(700)]
_F_TABLE = [clipped_fundamental(r) for r in _R_TABLE]
_R_MAX = _R_TABLE[-1]


def overmod_drive(target: float, v_dc: float) -> tuple[float, bool]:
    """Sinusoid amplitude whose clipped version at ``v_dc`` has fundamental ``target``.

    Returns ``(amplitude, saturated)``; ``saturated`` means the target lies at or
    beyond the square-wave limit and the largest tabulated drive is returned.
    """
    if target <= v_dc:
        return target, False
    f = target / v_dc
    if f >= _F_TABLE[-1]:
        return _R_MAX * v_dc, True
    k = bisect.bisect_left(_F_TABLE, f)
    f0, f1 = _F_TABLE[k - 1], _F_TABLE[k]
    r0, r1 = _R_TABLE[k - 1], _R_TABLE[k]
    return (r0 + (r1 - r0) * (f - f0) / (f1 - f0)) * v_dc, False


# ------------------------------------------------------------------ sync


class SogiBank:
    """SOGIs at several multiples of the fundamental with cross-feedback decoupling.

    Each SOGI sees the input minus the in-phase outputs of all the others, which
    removes the leakage a wide single SOGI would pick up from neighbouring orders.
    Order 1 is always present and comes first.
    """

    __slots__ = ("orders", "sogis", "_outs")

    def __init__(self, omega: float, dt: float, orders: Sequence[int] = (), k: float = SQRT2):
        self.orders = (1,) + tuple(h for h in orders if h != 1)
        self.sogis = [Sogi(h * omega, dt, k) for h in self.orders]
        self._outs = [0.0] * len(self.orders)

    def step(self, x: float) -> list[complex]:
        # Each SOGI's new in-phase output depends on the others' new outputs
        # through its input x - sum(others). The relation is linear, so the
        # coupled update is solved exactly instead of feeding back last step's
        # outputs, which would leak the fundamental into the harmonic channels.
        free, gain = [], []
        for s in self.sogis:
            m11, m12, _, _, n1, _ = s._c
            free.append(m11 * s.v + m12 * s.qv + n1 * (s.u_prev + x))
            gain.append(n1)
        a = sum(c / (1 - g) for c, g in zip(free, gain))
        b = sum(g / (1 - g) for g in gain)
        total = a / (1 + b)
        zs = []
        for n, s in enumerate(self.sogis):
            v = (free[n] - gain[n] * total) / (1 - gain[n])
            u = x - (total - v)
            _, _, m21, m22, _, n2 = s._c
            qv = m21 * s.v + m22 * s.qv + n2 * (s.u_prev + u)
            s.v, s.qv, s.u_prev = v, qv, u
            self._outs[n] = v
            zs.append(complex(v, qv))
        return zs

    def preset(self, peaks: Sequence[complex]) -> None:
        """Start from steady state; ``peaks[n]`` is the present space vector of order n."""
        for n, (s, z) in enumerate(zip(self.sogis, peaks)):
            s.v, s.qv = z.real, z.imag
            self._outs[n] = z.real
        x = sum(z.real for z in peaks)
        for s in self.sogis:
            s.u_prev = x - (sum(self._outs) - s.v)


class SogiPll:
    """Phase tracker on a SOGI space vector: atan2 phase error and PI frequency loop."""

    __slots__ = ("omega0", "dt", "pi", "theta", "omega", "sogi")

    def __init__(self, omega0: float, dt: float, kp: float, ki: float, k: float = SQRT2,
                 theta0: float = 0.0):
        self.omega0, self.dt = omega0, dt
        self.pi = PiController(kp, ki, -0.5 * omega0, 0.5 * omega0)
        self.theta = theta0
        self.omega = omega0
        self.sogi = Sogi(omega0, dt, k)

    def update(self, z: complex) -> float:
        """Advance with a measured fundamental space vector; returns the angle valid for this sample."""
        th = self.theta
        err = cmath.phase(z * cmath.exp(-1j * th)) if z != 0 else 0.0
        self.omega = self.omega0 + self.pi.step(err, self.dt)
        self.theta = math.remainder(th + self.omega * self.dt, 2 * math.pi)
        return th

    def step(self, v: float) -> float:
        """Advance from a raw single-phase sample through the built-in SOGI."""
        return self.update(complex(*self.sogi.step(v)))


# ------------------------------------------------------------- series control


@dataclass
class SeriesOutput:
    v_cmd: float
    fundamental: complex  # desired fundamental, peak dq, before over-modulation shaping
    saturated: bool
    overmod: bool


class SeriesController:
    """Per-phase floating-module controller.

    ``z_series`` is the path impedance between the two terminals and ``z_load``
    the load (``None`` for two grids); both are used only for feedforward and
    for turning CompensateQ / CompensateP into current references.
    """

    def __init__(self, gains: SeriesGains, omega: float, dt: float, z_series: complex,
                 z_load: complex | None = None, harmonic_orders: Sequence[int] = (),
                 phase_index: int = 0, theta0: float = 0.0):
        self.gains, self.omega, self.dt = gains, omega, dt
        self.z_series, self.z_load = z_series, z_load
        self.phase_index = phase_index
        self.orders = tuple(sorted(set(int(h) for h in harmonic_orders if h > 1)))
        self.pll = SogiPll(omega, dt, gains.pll_kp, gains.pll_ki, gains.sogi_k, theta0)
        self.v_bank = SogiBank(omega, dt, self.orders, gains.sogi_k)
        self.i_bank = SogiBank(omega, dt, self.orders, gains.sogi_k)
        self.dv_sogi = Sogi(omega, dt, gains.sogi_k)
        self.i_loop = ComplexPi(gains.kp, gains.ki)
        self.h_loops = {h: ComplexPi(gains.harmonic_kp, gains.harmonic_ki) for h in self.orders}
        self.ref_sogi = Sogi(omega, dt, gains.sogi_k)
        self.i_f = 0j  # shaped reference, peak dq
        self.tau_ref = 3e-3
        self._a_ref = 1.0 - math.exp(-dt / self.tau_ref)
        zl = 0j if z_load is None else z_load
        self.l_path = (z_series.imag + zl.imag) / omega
        self.mode: Command = Bypass()
        self.lead = 0.5 * omega * dt  # zero-order-hold delay of one control period
        self.theta = theta0
        self.v_dq = 0j
        self.dv_dq = 0j
        self.i_dq = 0j
        self.v_h: dict[int, complex] = {}
        self.i_h: dict[int, complex] = {}
        self._saturated = False

    # measurement ------------------------------------------------------------

    def measure(self, v_left: float, v_right: float, i: float) -> None:
        zv = self.v_bank.step(v_left)
        th = self.pll.update(zv[0])
        self.theta = th
        rot = cmath.exp(-1j * th)
        self.v_dq = zv[0] * rot
        self.dv_dq = complex(*self.dv_sogi.step(v_left - v_right)) * rot
        zi = self.i_bank.step(i)
        self.i_dq = zi[0] * rot
        for n, h in enumerate(self.orders, start=1):
            hr = cmath.exp(-1j * h * th)
            self.v_h[h] = zv[n] * hr
            self.i_h[h] = zi[n] * hr

    def set_mode(self, cmd: Command) -> None:
        tracking = (RegulateCurrent, CompensateQ, CompensateP)
        if type(cmd) is not type(self.mode):
            self.i_loop.reset()
            for loop in self.h_loops.values():
                loop.reset()
            if isinstance(cmd, tracking) and not isinstance(self.mode, tracking):
                # pick up the present current so the reference starts where the plant is
                self.i_f = self.i_dq
                src = self.i_bank.sogis[0]
                self.ref_sogi.v, self.ref_sogi.qv, self.ref_sogi.u_prev = src.v, src.qv, src.u_prev
        self.mode = cmd

    # references -------------------------------------------------------------

    def current_reference(self) -> complex | None:
        """Fundamental current reference (peak dq), or ``None`` for open-loop modes."""
        m = self.mode
        if isinstance(m, RegulateCurrent):
            return SQRT2 * cmath.rect(m.i_ref_rms, math.radians(m.phase_ref))
        if isinstance(m, (CompensateQ, CompensateP)):
            zt = self.z_series + self.z_load
            vmag = abs(self.v_dq)
            if isinstance(m, CompensateQ):
                return complex(vmag * zt.real / abs(zt) ** 2, 0.0)
            return complex(0.0, -vmag * zt.imag / abs(zt) ** 2)
        return None

    def feedforward(self, i_ref: complex, di_dt: complex = 0j) -> complex:
        """Module voltage that holds ``i_ref`` in the path model (rotating-frame form)."""
        if self.z_load is None:
            return self.dv_dq - self.z_series * i_ref - self.l_path * di_dt
        return self.v_dq - (self.z_series + self.z_load) * i_ref - self.l_path * di_dt

    # control laws -------------------------------------------------------------

    def fundamental_command(self) -> complex:
        m = self.mode
        if isinstance(m, InjectVoltage):
            return SQRT2 * cmath.rect(m.per_phase()[self.phase_index], math.radians(m.phase))
        target = self.current_reference()
        if target is None:
            return 0j
        # first-order shaped reference; the loop compares against that reference
        # seen through the same SOGI as the measurement, so filter lag cancels
        di_dt = (target - self.i_f) / self.tau_ref
        self.i_f += self._a_ref * (target - self.i_f)
        zr = complex(*self.ref_sogi.step((self.i_f * cmath.exp(1j * self.theta)).real))
        err = self.i_dq - zr * cmath.exp(-1j * self.theta)
        return self.feedforward(self.i_f, di_dt) + self.i_loop.step(err, self.dt, hold=self._saturated)

    def harmonic_commands(self) -> dict[int, complex]:
        if not isinstance(self.mode, BlockHarmonics):
            return {}
        out = {}
        for h in self.mode.orders:
            if h not in self.h_loops:
                continue
            out[h] = self.v_h[h] + self.h_loops[h].step(self.i_h[h], self.dt, hold=self._saturated)
        return out

    def step(self, v_left: float, v_right: float, i: float, v_dc: float) -> SeriesOutput:
        """Measure, run the active command and synthesise the instantaneous command."""
        self.measure(v_left, v_right, i)
        if isinstance(self.mode, Bypass):
            return SeriesOutput(0.0, 0j, False, False)
        u1 = self.fundamental_command()
        uh = self.harmonic_commands()
        th = self.theta + self.lead
        mag = abs(u1)
        sat = over = False
        if mag > v_dc:
            if self.gains.allow_overmod and not uh:
                drive, sat = overmod_drive(mag, v_dc)
                over = True
            else:
                drive, sat = v_dc, True
            u_eff = u1 * (drive / mag)
        else:
            u_eff = u1
        v = (u_eff * cmath.exp(1j * th)).real
        for h, u in uh.items():
            v += (u * cmath.exp(1j * h * th)).real
        if uh and abs(v) > v_dc:
            sat = True
        self._saturated = sat
        return SeriesOutput(v, u1, sat, over)


def series_current_control(ctl: SeriesController, i_meas: float, i_ref: DqSample, dt: float) -> float:
    """Current-loop step with an explicit dq reference (peak), reusing the latest voltage sync.

    Returns the instantaneous voltage command (drop convention) before modulation.
    """
    if abs(dt - ctl.dt) > 1e-15:
        raise ValueError("controller was built for a different step")
    zi = ctl.i_bank.step(i_meas)
    rot = cmath.exp(-1j * ctl.theta)
    ctl.i_dq = zi[0] * rot
    ref = complex(i_ref.d, i_ref.q)
    u = ctl.feedforward(ref) + ctl.i_loop.step(ctl.i_dq - ref, dt)
    return (u * cmath.exp(1j * (ctl.theta + ctl.lead))).real


def harmonic_block_step(ctl: SeriesController, i_meas: float, dt: float) -> float:
    """Additive instantaneous command from the per-order resonant blocks.

    Exactly zero when no orders are configured.
    """
    if not ctl.orders:
        return 0.0
    if abs(dt - ctl.dt) > 1e-15:
        raise ValueError("controller was built for a different step")
    zi = ctl.i_bank.step(i_meas)
    th = ctl.theta + ctl.lead
    v = 0.0
    for n, h in enumerate(ctl.orders, start=1):
        e = zi[n] * cmath.exp(-1j * h * ctl.theta)
        ctl.i_h[h] = e
        u = ctl.v_h.get(h, 0j) + ctl.h_loops[h].step(e, dt)
        v += (u * cmath.exp(1j * h * th)).real
    return v


# ------------------------------------------------------------------------ AFE


@dataclass
class AfeOutput:
    u_ab: complex      # node-voltage command, alpha + j*beta
    i_d_ref: float
    i_q_ref: float
    saturated: bool


class AfeController:
    """Shunt front end: dual-sequence dq current control under a dc-voltage loop.

    Sequence separation uses two synchronous frames with mutual decoupling; the
    PLL is an SRF loop on the separated positive sequence. ``omega`` is the
    nominal frequency; the tracked one is ``pll_omega``.
    """

    def __init__(self, gains: AfeGains, omega: float, dt: float, l_filter: float,
                 vdc_ref: float, theta0: float = 0.0):
        self.gains, self.omega, self.dt = gains, omega, dt
        self.l_filter = l_filter
        self.q_ref = gains.q_ref
        self.vdc_ref = vdc_ref
        self.vdc_loop = PiController(gains.vdc_kp, gains.vdc_ki, -gains.i_max, gains.i_max)
        big = 10 * vdc_ref
        self.pos_d = PiController(gains.kp, gains.ki, -big, big)
        self.pos_q = PiController(gains.kp, gains.ki, -big, big)
        self.neg_d = PiController(gains.kp, gains.ki, -big, big)
        self.neg_q = PiController(gains.kp, gains.ki, -big, big)
        self.pll = PiController(gains.pll_kp, gains.pll_ki, -0.5 * omega, 0.5 * omega)
        self.theta = theta0
        self.pll_omega = omega
        self.lead = 0.5 * omega * dt
        self._wf = omega / SQRT2  # decoupling-filter corner
        self.v_bar = [0j, 0j]  # filtered (pos, neg) dq, peak
        self.i_bar = [0j, 0j]
        self.v_seq = [0j, 0j]
        self.i_seq = [0j, 0j]
        n = max(1, int(round(0.5 * 2 * math.pi / omega / dt)))
        self._vdc_buf: deque[float] = deque([vdc_ref] * n, maxlen=n)
        self._vdc_sum = vdc_ref * n
        self._saturated = False

    def preset(self, v_pos_peak: complex, v_neg_peak: complex) -> None:
        """Start synchronised: ``v_pos_peak`` and ``v_neg_peak`` are the space-vector
        coefficients of ``exp(+j w t)`` and ``exp(-j w t)`` at t = 0."""
        self.theta = cmath.phase(v_pos_peak) if v_pos_peak else 0.0
        self.v_bar = [complex(abs(v_pos_peak), 0.0), v_neg_peak * cmath.exp(1j * self.theta)]
        self.v_seq = list(self.v_bar)

    def _separate(self, x: complex, bar: list[complex], e_pos: complex, e2: complex) -> tuple[complex, complex]:
        xp = x * e_pos - bar[1] * e2
        xn = x * e_pos.conjugate() - bar[0] * e2.conjugate()
        a = self._wf * self.dt
        bar[0] += a * (xp - bar[0])
        bar[1] += a * (xn - bar[1])
        return xp, xn

    def step(self, v_ab: complex, i_ab: complex, v_dc: float) -> AfeOutput:
        dt, g = self.dt, self.gains
        th = self.theta
        e_pos = cmath.exp(-1j * th)
        e2 = e_pos * e_pos
        vp, vn = self._separate(v_ab, self.v_bar, e_pos, e2)
        ip, in_ = self._separate(i_ab, self.i_bar, e_pos, e2)
        self.v_seq, self.i_seq = [vp, vn], [ip, in_]

        err = math.atan2(vp.imag, vp.real) if vp else 0.0
        self.pll_omega = self.omega + self.pll.step(err, dt)
        self.theta = math.remainder(th + self.pll_omega * dt, 2 * math.pi)

        old = self._vdc_buf[0]
        self._vdc_buf.append(v_dc)
        self._vdc_sum += v_dc - old
        v_avg = self._vdc_sum / len(self._vdc_buf)
        i_d_ref = self.vdc_loop.step(self.vdc_ref - v_avg, dt, hold=self._saturated)
        vd = max(self.v_bar[0].real, 1.0)
        i_q_ref = -self.q_ref / (1.5 * vd)

        wl = self.omega * self.l_filter
        hold = self._saturated
        ud_p = vp.real - self.pos_d.step(i_d_ref - ip.real, dt, hold) + wl * ip.imag
        uq_p = vp.imag - self.pos_q.step(i_q_ref - ip.imag, dt, hold) - wl * ip.real
        ud_n = vn.real - self.neg_d.step(0.0 - in_.real, dt, hold) - wl * in_.imag
        uq_n = vn.imag - self.neg_q.step(0.0 - in_.imag, dt, hold) + wl * in_.real

        thl = th + self.lead
        u = complex(ud_p, uq_p) * cmath.exp(1j * thl) + complex(ud_n, uq_n) * cmath.exp(-1j * thl)
        limit = v_dc / math.sqrt(3.0)
        mag = abs(u)
        self._saturated = mag > limit
        if self._saturated:
            u *= limit / mag
        return AfeOutput(u, i_d_ref, i_q_ref, self._saturated)


def afe_step(ctl: AfeController, meas: dict, dt: float) -> AfeOutput:
    """Functional wrapper: ``meas`` holds ``v_grid`` and ``i_in`` as (a, b, c) samples and ``v_dc``."""
    from .phasor import abc_to_alphabeta

    if not dt > 0:
        raise ValueError("dt must be positive")
    if abs(dt - ctl.dt) > 1e-15:
        raise ValueError("controller was built for a different step")
    va, vb = abc_to_alphabeta(*meas["v_grid"])
    ia, ib = abc_to_alphabeta(*meas["i_in"])
    return ctl.step(complex(va, vb), complex(ia, ib), meas["v_dc"])
