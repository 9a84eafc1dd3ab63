"""Interval metrics and the analytic cross-check for simulated traces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Command, RlLoad, Scenario, load_flow, module_apparent_power, steady_state_current
from .phasor import SQRT2

THD_ORDERS = range(2, 41)


def harmonic_spectrum(x: np.ndarray, cycles: int, max_order: int = 40) -> np.ndarray:
    """Rms magnitudes of orders 0..max_order from a window holding exactly ``cycles`` periods."""
    x = np.asarray(x, dtype=float)
    spec = np.fft.rfft(x) / x.size
    bins = np.arange(max_order + 1) * cycles
    if bins[-1] >= spec.size:
        raise ValueError("window too coarse for the requested harmonic orders")
    mag = np.abs(spec[bins]) * SQRT2
    mag[0] = abs(spec[0])
    return mag


def thd(x: np.ndarray, cycles: int, orders=THD_ORDERS) -> float:
    """Total harmonic distortion relative to the fundamental, orders 2-40 by default."""
    orders = list(orders)
    mag = harmonic_spectrum(x, cycles, max(orders))
    if mag[1] == 0:
        return 0.0 if not np.any(mag[orders]) else math.inf
    return float(math.sqrt(sum(mag[h] ** 2 for h in orders)) / mag[1])


@dataclass(frozen=True)
class IntervalMetrics:
    t_start: float
    t_end: float
    command: str
    p_avg: float
    q_avg: float
    i_rms: tuple[float, float, float]
    thd: tuple[float, float, float]
    settle_time: float  # nan when unsettled
    settled: bool


def _window_phasors(trace, channel: str, a: int, b: int) -> np.ndarray:
    x = getattr(trace, channel)[:, a:b]
    ph = np.exp(-2j * np.pi * trace.freq * trace.t[a:b])
    return SQRT2 / (b - a) * (x @ ph)


def _end_index(trace, t_end: float) -> int:
    """Exclusive end index of a window closing at ``t_end``.

    The sample sitting exactly on ``t_end`` is left out: its centred module
    voltage average already reaches into the next interval.
    """
    return trace.window(0.0, t_end - 0.5 * trace.step).stop


def settle_window(duration: float, period: float) -> int:
    """Comparison window in cycles: two, or one for intervals under six cycles."""
    return 2 if duration >= 6 * period - 1e-9 else 1


def is_settled(trace, t_end: float, mag_tol: float = 0.01, ang_tol_deg: float = 1.0,
               floor: float = 1.0, cycles: int = 2) -> bool:
    """Last ``cycles`` cycles vs the ``cycles`` before: magnitude within 1 % and angle within 1 degree.

    ``floor`` (amps) sets the scale below which currents count as zero, so a
    held-at-zero current is judged by absolute change instead of noisy angles.
    """
    n = trace.samples_per_cycle
    w = cycles * n
    b = _end_index(trace, t_end)
    if b - 2 * w < 0:
        return False
    now = _window_phasors(trace, "i_line", b - w, b)
    before = _window_phasors(trace, "i_line", b - 2 * w, b - w)
    for z1, z0 in zip(now, before):
        scale = max(abs(z0), floor)
        if abs(abs(z1) - abs(z0)) > mag_tol * scale:
            return False
        if abs(z0) > floor and abs(z1) > floor:
            if abs(math.degrees(np.angle(z1 / z0))) > ang_tol_deg:
                return False
        elif abs(z1 - z0) > mag_tol * scale:
            return False
    return True


def compute_metrics(trace, intervals) -> list[IntervalMetrics]:
    """Per-interval figures over the last two cycles (or fewer if the interval is short).

    ``intervals`` holds (start, end, command) tuples as produced by
    :meth:`Scenario.intervals`.
    """
    n = trace.samples_per_cycle
    period = n * trace.step
    out = []
    for t0, t1, cmd in intervals:
        if t1 - t0 < period - 1e-9:
            raise ValueError(f"interval [{t0}, {t1}] is shorter than one fundamental cycle")
        if t0 < trace.t[0] - 1e-9 or t1 > trace.t[-1] + 1e-9:
            raise ValueError(f"interval [{t0}, {t1}] lies outside the trace")
        cyc = max(1, min(2, int((t1 - t0) / period + 1e-9)))
        b = _end_index(trace, t1)
        a = b - cyc * n
        v = _window_phasors(trace, "v_left", a, b)
        i = _window_phasors(trace, "i_line", a, b)
        s = complex(np.sum(v * np.conj(i)))
        irms = tuple(float(np.sqrt(np.mean(trace.i_line[p, a:b] ** 2))) for p in range(3))
        thds = tuple(thd(trace.i_line[p, a:b], cyc) if irms[p] > 1e-6 else 0.0 for p in range(3))
        settle = math.nan
        w = settle_window(t1 - t0, period)
        settled = is_settled(trace, t1, cycles=w)
        if settled:
            k = 2 * w
            while t0 + k * period <= t1 + 1e-9:
                if is_settled(trace, t0 + k * period, cycles=w):
                    settle = (k - w) * period
                    break
                k += 1
        out.append(IntervalMetrics(t0, t1, getattr(cmd, "kind", str(cmd)), s.real, s.imag,
                                   irms, thds, settle, settled))
    return out


@dataclass(frozen=True)
class AnalyticCheck:
    t_start: float
    t_end: float
    phase: int
    settled: bool
    i_sim: complex
    i_analytic: complex
    i_error: float        # relative, with a 1 A floor on the reference magnitude
    p_module_sim: float   # fundamental, Re(Vm conj(I)) from the trace phasors
    p_module_analytic: float
    p_error: float        # relative, floored at 1 % of the phase's line apparent power
    p_module_mean: float  # mean of vm*i, includes harmonic power from clipping


def compare_to_analytic(trace, sc: Scenario, min_cycles: int = 4) -> list[AnalyticCheck]:
    """Settled two-cycle phasors against the steady-state circuit solution.

    The measured fundamental module voltage is fed into the analytic solution
    together with the full series impedance (line plus filter) the simulation
    uses. Intervals shorter than ``min_cycles`` are skipped.
    """
    n = trace.samples_per_cycle
    period = n * trace.step
    z = sc.series_z
    out = []
    for t0, t1, _ in sc.intervals():
        if t1 - t0 < min_cycles * period - 1e-9:
            continue
        b = _end_index(trace, t1)
        a = b - 2 * n
        vl = _window_phasors(trace, "v_left", a, b)
        vr = _window_phasors(trace, "v_right", a, b)
        vm = _window_phasors(trace, "v_m", a, b)
        im = _window_phasors(trace, "i_line", a, b)
        settled = is_settled(trace, t1, cycles=settle_window(t1 - t0, period))
        for p in range(3):
            if isinstance(sc.right, RlLoad):
                ia = complex(load_flow(sc.right, vl[p], z, vm=vm[p], phases=1).i)
            else:
                ia = complex(steady_state_current(vl[p], vr[p], vm[p], z))
            sa = complex(module_apparent_power(vm[p], vr[p], vl[p], z)) if not isinstance(sc.right, RlLoad) \
                else vm[p] * ia.conjugate()
            p_sim = float((vm[p] * np.conj(im[p])).real)
            p_mean = float(np.mean(trace.v_m[p, a:b] * trace.i_line[p, a:b]))
            i_err = abs(im[p] - ia) / max(abs(ia), 1.0)
            p_floor = 0.01 * abs(vl[p]) * max(abs(ia), 1.0)
            p_err = abs(p_sim - sa.real) / max(abs(sa.real), p_floor)
            out.append(AnalyticCheck(t0, t1, p, settled, complex(im[p]), ia, i_err, p_sim, sa.real, p_err, p_mean))
    return out
