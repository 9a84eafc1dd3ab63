"""Fixed-step simulation of one feeder with three floating series modules.

Each phase is an independent series path (left source, line, split filter,
module, right load or grid, star points solidly tied). The three modules share
a dc link through their LLC stages, and that link is held by a three-wire AFE
on the left terminal.

Electrical states use the trapezoidal rule with the module voltage held over
the step. All power terms are formed with the step-midpoint current, so the
discrete energy ledger closes to roundoff.
"""

from __future__ import annotations

import cmath
import math
from array import array
from dataclasses import dataclass, field

import numpy as np

from . import converters as cv
from .control import AfeController, SeriesController, modulate
from .network import BlockHarmonics, RlLoad, Scenario
from .phasor import SQRT2, SQRT3, sequence_decompose, ThreePhaseSet

PHASES = ("a", "b", "c")


class NumericalDivergence(ArithmeticError):
    def __init__(self, t: float, name: str, value: float):
        super().__init__(f"state {name} became {value!r} at t={t:.6f} s")
        self.t, self.name, self.value = t, name, value


@dataclass(frozen=True)
class EnergyReport:
    e_left: float        # delivered by the left grid (line plus AFE)
    e_right: float       # absorbed by the right grid (two-grid only)
    e_loss: float        # resistive plus LLC losses
    d_stored: float      # change in inductor and capacitor energy
    throughput: float    # integral of |power| at all ports, normalising scale

    @property
    def residual(self) -> float:
        return self.e_left - self.e_right - self.e_loss - self.d_stored

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.throughput if self.throughput > 0 else abs(self.residual)


@dataclass(frozen=True)
class TraceSet:
    t: np.ndarray
    v_left: np.ndarray       # (3, n)
    v_right: np.ndarray
    i_line: np.ndarray
    v_m: np.ndarray
    v_dc_module: np.ndarray
    p_source: np.ndarray
    q_source: np.ndarray
    p_module: np.ndarray
    q_module: np.ndarray
    v_dc_shared: np.ndarray
    i_afe: np.ndarray        # (3, n), extra channel not written to CSV
    energy: EnergyReport
    freq: float
    info: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def samples_per_cycle(self) -> int:
        return int(round(1.0 / (self.freq * self.step)))

    def window(self, t0: float, t1: float) -> slice:
        """Index slice of samples with ``t0 < t <= t1`` (half-open on the left)."""
        a = int(np.searchsorted(self.t, t0 + 1e-12, side="left"))
        b = int(np.searchsorted(self.t, t1 + 1e-12, side="left"))
        return slice(a, b)

    def phasor(self, channel: str, phase: int, t_end: float, cycles: float = 1.0, order: int = 1) -> complex:
        """Rms phasor of one channel over ``cycles`` periods ending at ``t_end``."""
        x = getattr(self, channel)[phase]
        n = int(round(cycles * self.samples_per_cycle))
        b = self.window(0.0, t_end).stop
        a = b - n
        if a < 0:
            raise ValueError(f"not enough samples before t={t_end}")
        tt = self.t[a:b]
        return complex(SQRT2 / n * np.sum(x[a:b] * np.exp(-1j * order * 2 * np.pi * self.freq * tt)))


def _wave(terms):
    """Closure evaluating a list of (peak, w, phase) cosine terms."""
    cos = math.cos
    if len(terms) == 1:
        (a, w, p), = terms
        return lambda t: a * cos(w * t + p)
    return lambda t: sum(a * cos(w * t + p) for a, w, p in terms)


def _sliding_phasor(t: np.ndarray, x: np.ndarray, f: float, n: int) -> np.ndarray:
    """One-cycle fundamental phasor ending at each sample; the first cycle holds the first full value."""
    z = x * np.exp(-2j * np.pi * f * t)
    c = np.concatenate(([0j], np.cumsum(z)))
    out = np.empty(t.size, dtype=complex)
    if t.size < n:
        out[:] = SQRT2 / max(t.size, 1) * c[-1]
        return out
    out[n - 1:] = SQRT2 / n * (c[n:] - c[:-n])
    out[: n - 1] = out[n - 1]
    return out


def harmonic_orders(sc: Scenario) -> tuple[int, ...]:
    orders: set[int] = set()
    for _, cmd in sc.schedule:
        if isinstance(cmd, BlockHarmonics):
            orders.update(int(h) for h in cmd.orders)
    return tuple(sorted(orders))


def run(sc: Scenario) -> TraceSet:
    """Simulate a scenario and return decimated traces.

    Deterministic: identical scenarios give bit-identical traces. Raises
    :class:`NumericalDivergence` or :class:`converters.VoltageCollapse` if a
    state becomes non-finite or a dc link collapses.
    """
    cfg = sc.sim
    dt = cfg.dt
    n_steps = int(round(cfg.t_end / dt))
    deci = int(cfg.record_decimation)
    n_ctrl = max(1, int(round(1.0 / (cfg.control_rate * dt))))
    dt_c = n_ctrl * dt
    switched = cfg.fidelity == "switched"
    w = sc.omega
    mod = sc.module
    gains = sc.controllers

    # series path per phase
    load = sc.right if isinstance(sc.right, RlLoad) else None
    r_tot = sc.line.r + (load.r if load else 0.0)
    l_tot = sc.series_l + (load.x / w if load else 0.0)
    a_coef = l_tot / dt - 0.5 * r_tot
    b_inv = 1.0 / (l_tot / dt + 0.5 * r_tot)

    left_w = [_wave(tr) for tr in sc.left.waveform_terms()]
    right_w = [_wave(tr) for tr in sc.right.waveform_terms()] if load is None else None

    # controllers start synchronised to the pre-existing grid
    lp = sc.left.phasors()
    orders = harmonic_orders(sc)
    z_load = load.z if load else None
    series = []
    for p in range(3):
        ctl = SeriesController(gains.series, w, dt_c, sc.series_z, z_load, orders, p,
                               theta0=cmath.phase(lp[p]))
        peaks = [SQRT2 * lp[p]]
        harm = {int(h): (mag, ph) for h, mag, ph in sc.left.harmonics}
        for h in ctl.v_bank.orders[1:]:
            if h in harm:
                mag, ph = harm[h]
                peaks.append(SQRT2 * abs(lp[p]) * mag * cmath.exp(1j * (h * cmath.phase(lp[p]) + math.radians(ph))))
            else:
                peaks.append(0j)
        ctl.v_bank.preset(peaks)
        ctl.pll.sogi.v, ctl.pll.sogi.qv = peaks[0].real, peaks[0].imag
        if load is None:
            dv0 = SQRT2 * (lp[p] - sc.right.phasors()[p])
            ctl.dv_sogi.v, ctl.dv_sogi.qv = dv0.real, dv0.imag
            ctl.dv_sogi.u_prev = dv0.real
        series.append(ctl)

    seq = sequence_decompose(ThreePhaseSet.from_complex(*lp))
    afe = AfeController(gains.afe, w, dt_c, mod.afe_l, mod.v_shared)
    afe.preset(SQRT2 * complex(seq.pos), SQRT2 * complex(seq.neg).conjugate())
    afe_a = mod.afe_l / dt - 0.5 * mod.afe_r
    afe_binv = 1.0 / (mod.afe_l / dt + 0.5 * mod.afe_r)

    llc = cv.LlcLink(mod.llc.ratio, mod.llc.efficiency, mod.llc.conductance)
    c_m, c_s = mod.c_dc, mod.c_shared
    v_min = mod.v_dc_min

    # state
    i = [0.0, 0.0, 0.0]
    vdc = [mod.v_dc] * 3
    e_m = [0.5 * c_m * v * v for v in vdc]
    vsh = mod.v_shared
    e_s = 0.5 * c_s * vsh * vsh
    i_ab = 0j
    duty = [0.0, 0.0, 0.0]
    u_ab = 0j

    def stored() -> float:
        return (0.5 * l_tot * sum(x * x for x in i) + 0.75 * mod.afe_l * abs(i_ab) ** 2
                + sum(e_m) + e_s)

    e0 = stored()
    e_left = e_right = e_loss = thr = 0.0

    # carrier: unipolar PWM, triangle in [-1, 1] sampled at sub-step midpoints
    n_sw = max(1, int(round(1.0 / (mod.f_sw * dt))))
    carrier = [1.0 - 4.0 * abs((k + 0.5) / n_sw - 0.5) for k in range(n_sw)]

    schedule = sorted(sc.schedule, key=lambda e: e[0])
    sched_idx = 0
    allow_over = gains.series.allow_overmod

    # per-step buffers
    rec_i = [array("d") for _ in range(3)]
    rec_vm = [array("d") for _ in range(3)]
    rec_vdc = [array("d") for _ in range(3)]
    rec_vsh = array("d")
    rec_iab = array("d"), array("d")
    overmod_steps = 0
    sat_steps = 0

    vl0 = [f(0.0) for f in left_w]
    vr0 = [f(0.0) for f in right_w] if right_w else [0.0, 0.0, 0.0]
    sq3 = SQRT3
    v_ab0 = complex((2.0 / 3.0) * (vl0[0] - 0.5 * vl0[1] - 0.5 * vl0[2]), (vl0[1] - vl0[2]) / sq3)

    for n in range(n_steps):
        t = n * dt
        for p in range(3):
            rec_i[p].append(i[p])
            rec_vdc[p].append(vdc[p])
        rec_vsh.append(vsh)
        rec_iab[0].append(i_ab.real)
        rec_iab[1].append(i_ab.imag)

        if n % n_ctrl == 0:
            while sched_idx < len(schedule) and schedule[sched_idx][0] <= t + 0.5 * dt:
                cmd = schedule[sched_idx][1]
                for ctl in series:
                    ctl.set_mode(cmd)
                sched_idx += 1
            for p in range(3):
                out = series[p].step(vl0[p], vr0[p], i[p], vdc[p])
                duty[p] = modulate(out.v_cmd, vdc[p], allow_over).duty
                overmod_steps += out.overmod
                sat_steps += out.saturated
            u_ab = afe.step(v_ab0, i_ab, vsh).u_ab

        t1 = t + dt
        vl1 = [f(t1) for f in left_w]
        vr1 = [f(t1) for f in right_w] if right_w else vr0

        # LLC flows from step-start voltages
        p_sh_total = 0.0
        p_llc_m = [0.0, 0.0, 0.0]
        for p in range(3):
            flow = cv.llc_transfer(llc, vdc[p], vsh)
            p_llc_m[p] = flow.p_module
            p_sh_total += flow.p_shared
            e_loss += dt * flow.loss

        if switched:
            c = carrier[n % n_sw]
        p_left = p_right = 0.0
        for p in range(3):
            d = duty[p]
            if switched:
                s = (1.0 if d > c else 0.0) - (1.0 if -d > c else 0.0)
                vm = s * vdc[p]
            else:
                vm = d * vdc[p]
            vl_bar = 0.5 * (vl0[p] + vl1[p])
            vr_bar = 0.5 * (vr0[p] + vr1[p])
            i0 = i[p]
            i1 = (i0 * a_coef + vl_bar - vr_bar - vm) * b_inv
            ib = 0.5 * (i0 + i1)
            i[p] = i1
            pl, pr = vl_bar * ib, vr_bar * ib
            p_left += pl
            p_right += pr
            e_loss += dt * r_tot * ib * ib
            thr += dt * (abs(pl) + abs(pr))
            e_m[p] += dt * (vm * ib + p_llc_m[p])
            if e_m[p] < 0.5 * c_m * v_min * v_min:
                raise cv.VoltageCollapse(f"module dc link {PHASES[p]}", math.sqrt(max(2 * e_m[p] / c_m, 0.0)),
                                         v_min, t1)
            vdc[p] = math.sqrt(2.0 * e_m[p] / c_m)
            rec_vm[p].append(vm)
        e_left += dt * p_left
        e_right += dt * p_right

        # AFE, averaged three-wire
        v_ab1 = complex((2.0 / 3.0) * (vl1[0] - 0.5 * vl1[1] - 0.5 * vl1[2]), (vl1[1] - vl1[2]) / sq3)
        v_ab_bar = 0.5 * (v_ab0 + v_ab1)
        i_ab1 = (i_ab * afe_a + v_ab_bar - u_ab) * afe_binv
        iab_bar = 0.5 * (i_ab + i_ab1)
        i_ab = i_ab1
        p_g = 1.5 * (v_ab_bar.real * iab_bar.real + v_ab_bar.imag * iab_bar.imag)
        p_afe = 1.5 * (u_ab.real * iab_bar.real + u_ab.imag * iab_bar.imag)
        e_left += dt * p_g
        thr += dt * abs(p_g)
        e_loss += dt * 1.5 * mod.afe_r * (iab_bar.real ** 2 + iab_bar.imag ** 2)
        e_s += dt * (p_afe - p_sh_total)
        if e_s < 0.5 * c_s * v_min * v_min:
            raise cv.VoltageCollapse("shared dc link", math.sqrt(max(2 * e_s / c_s, 0.0)), v_min, t1)
        vsh = math.sqrt(2.0 * e_s / c_s)

        chk = i[0] + i[1] + i[2] + i_ab.real + i_ab.imag + vsh
        if not math.isfinite(chk):
            for name, val in (("i_a", i[0]), ("i_b", i[1]), ("i_c", i[2]),
                              ("i_afe_alpha", i_ab.real), ("i_afe_beta", i_ab.imag), ("v_dc_shared", vsh)):
                if not math.isfinite(val):
                    raise NumericalDivergence(t1, name, val)
        vl0, vr0, v_ab0 = vl1, vr1, v_ab1

    # final sample
    for p in range(3):
        rec_i[p].append(i[p])
        rec_vdc[p].append(vdc[p])
        rec_vm[p].append(duty[p] * vdc[p] if not switched else rec_vm[p][-1])
    rec_vsh.append(vsh)
    rec_iab[0].append(i_ab.real)
    rec_iab[1].append(i_ab.imag)

    energy = EnergyReport(e_left, e_right, e_loss, stored() - e0, thr)
    return _decimate(sc, dt, n_steps, deci, rec_i, rec_vm, rec_vdc, rec_vsh, rec_iab, load, energy,
                     dict(steps=n_steps, control_every=n_ctrl, overmod_fraction=overmod_steps / max(1, 3 * n_steps // n_ctrl),
                          saturated_fraction=sat_steps / max(1, 3 * n_steps // n_ctrl), fidelity=cfg.fidelity))


def _decimate(sc, dt, n_steps, deci, rec_i, rec_vm, rec_vdc, rec_vsh, rec_iab, load, energy, info) -> TraceSet:
    idx = np.arange(0, n_steps + 1, deci)
    t = idx * dt
    h = deci // 2
    i_full = np.array([np.frombuffer(a, dtype=float) for a in rec_i])
    vm_full = np.array([np.frombuffer(a, dtype=float) for a in rec_vm])
    i_line = i_full[:, idx]

    if h == 0:
        v_m = vm_full[:, idx]
        di = np.gradient(i_full, dt, axis=1)[:, idx]
    else:
        # centred window averages, truncated at the ends
        cs = np.concatenate((np.zeros((3, 1)), np.cumsum(vm_full, axis=1)), axis=1)
        lo = np.clip(idx - h, 0, n_steps + 1)
        hi = np.clip(idx + h, 0, n_steps + 1)
        v_m = (cs[:, hi] - cs[:, lo]) / np.maximum(hi - lo, 1)
        il = i_full[:, np.clip(idx - h, 0, n_steps)]
        ih = i_full[:, np.clip(idx + h, 0, n_steps)]
        span = (np.clip(idx + h, 0, n_steps) - np.clip(idx - h, 0, n_steps)) * dt
        di = (ih - il) / np.maximum(span, dt)

    left = [_wave(tr) for tr in sc.left.waveform_terms()]
    v_left = np.array([[f(x) for x in t] for f in left])
    if load is not None:
        v_right = load.r * i_line + (load.x / sc.omega) * di
    else:
        right = [_wave(tr) for tr in sc.right.waveform_terms()]
        v_right = np.array([[f(x) for x in t] for f in right])

    v_dc_module = np.array([np.frombuffer(a, dtype=float) for a in rec_vdc])[:, idx]
    v_dc_shared = np.frombuffer(rec_vsh, dtype=float)[idx].copy()
    ia = np.frombuffer(rec_iab[0], dtype=float)[idx]
    ib = np.frombuffer(rec_iab[1], dtype=float)[idx]
    i_afe = np.array([ia, -0.5 * ia + 0.5 * SQRT3 * ib, -0.5 * ia - 0.5 * SQRT3 * ib])

    f = sc.left.freq
    n_cyc = int(round(1.0 / (f * dt * deci)))
    s_src = np.zeros(t.size, dtype=complex)
    s_mod = np.zeros(t.size, dtype=complex)
    for p in range(3):
        vph = _sliding_phasor(t, v_left[p], f, n_cyc)
        iph = _sliding_phasor(t, i_line[p], f, n_cyc)
        mph = _sliding_phasor(t, v_m[p], f, n_cyc)
        s_src += vph * np.conj(iph)
        s_mod += mph * np.conj(iph)

    return TraceSet(
        t=t, v_left=v_left, v_right=v_right, i_line=i_line, v_m=v_m, v_dc_module=v_dc_module,
        p_source=s_src.real, q_source=s_src.imag, p_module=s_mod.real, q_module=s_mod.imag,
        v_dc_shared=v_dc_shared, i_afe=i_afe, energy=energy, freq=f, info=info,
    )
