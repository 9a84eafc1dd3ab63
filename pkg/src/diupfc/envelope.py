"""Closed-form coverage limits of a series module and sampled region boundaries.

All voltages are rms phase values. The module's usable rms voltage is
``v_dc/sqrt(2)`` in the linear range and ``v_dc`` when over-modulation is
allowed (the square-wave fundamental would give ``4/pi*v_dc/sqrt(2)``; the
simpler bound is the one used for planning).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .phasor import SQRT2


class Unreachable(ValueError):
    """The requested operating point lies outside what the module can reach."""


@dataclass(frozen=True)
class EnvelopeQuery:
    v1_rms: float = 230.0
    v2_rms: float | None = None
    v_dc: float = 48.0
    overmod: bool = False
    x_line: float = 0.1
    theta: float = 0.0  # degrees

    def __post_init__(self):
        if not self.v1_rms > 0:
            raise ValueError("v1_rms must be positive")
        if self.v2_rms is not None and not self.v2_rms > 0:
            raise ValueError("v2_rms must be positive")
        if self.v_dc < 0:
            raise ValueError("v_dc must be non-negative")
        if not self.x_line > 0:
            raise ValueError("x_line must be positive")

    @property
    def v_m(self) -> float:
        return module_voltage(self.v_dc, self.overmod)


@dataclass(frozen=True)
class RegionBoundary:
    x: np.ndarray
    y: np.ndarray
    x_label: str
    y_label: str
    kind: str
    # per point: True where it lies on a limiting constraint, False on an
    # arbitrary extent cut (e.g. the arc closing an unbounded wedge)
    on_constraint: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __len__(self) -> int:
        return int(self.x.size)

    @property
    def closed(self) -> bool:
        return bool(self.x.size > 2 and self.x[0] == self.x[-1] and self.y[0] == self.y[-1])


def module_voltage(v_dc: float, overmod: bool = False) -> float:
    """Largest rms series voltage available from a module at ``v_dc``."""
    if v_dc < 0:
        raise ValueError("v_dc must be non-negative")
    return v_dc if overmod else v_dc / SQRT2


def _angle_limit(v1: float, v_dc: float) -> tuple[float, bool]:
    """``asin(v_dc/(sqrt(2)*v1))`` and whether the argument had to be saturated."""
    if not v1 > 0:
        raise ValueError("v1 must be positive")
    arg = v_dc / (SQRT2 * v1)
    if arg >= 1.0:
        return math.pi / 2, True
    return math.asin(arg), False


def _load_angle(p: float, q: float) -> float:
    # sign of P or Q only says which way power flows; the geometry is symmetric
    if p == 0 and q == 0:
        raise ValueError("P and Q cannot both be zero")
    return math.atan2(abs(q), abs(p))


def reactive_comp_feasible(p: float, q: float, v1: float, v_dc: float) -> bool:
    """Can the module take over all reactive power of a load drawing ``p + jq``?"""
    lim, _ = _angle_limit(v1, v_dc)
    return _load_angle(p, q) <= lim + 1e-15


def active_comp_feasible(p: float, q: float, v1: float, v_dc: float) -> bool:
    """Can the module take over all active power of a load drawing ``p + jq``?"""
    lim, _ = _angle_limit(v1, v_dc)
    return _load_angle(p, q) + lim >= math.pi / 2 - 1e-15


def delta_v_limit(v2: float, dtheta: float, v_m: float) -> float:
    """Largest amplitude difference reachable at phase difference ``dtheta`` (degrees).

    Uses the positive root, i.e. the far intersection of the module circle
    with the ray at ``dtheta``.
    """
    s = v2 * math.sin(math.radians(dtheta))
    if abs(s) > v_m * (1 + 1e-12):
        raise Unreachable(f"phase difference {dtheta} deg needs {abs(s):.4g} V, module offers {v_m:.4g} V")
    root = math.sqrt(max(v_m * v_m - s * s, 0.0))
    # v2 - v2 cos written as 2 v2 sin^2(half angle) so that dtheta = 0 is exact
    return abs(root - 2 * v2 * math.sin(math.radians(dtheta) / 2) ** 2)


def max_inphase_diff(v_dc: float, overmod: bool = False) -> float:
    """Largest in-phase amplitude difference between the two terminals."""
    if not v_dc > 0:
        if v_dc == 0:
            return 0.0
        raise ValueError("v_dc must be positive")
    return module_voltage(v_dc, overmod)


def parity_max_phase(v1: float, v_dc: float, overmod: bool = False) -> float:
    """Largest phase difference (degrees) between two equal-amplitude grids."""
    arg = module_voltage(v_dc, overmod) / (2 * v1)
    if arg > 1:
        raise Unreachable("module voltage exceeds twice the grid voltage; phase unconstrained")
    return math.degrees(2 * math.asin(arg))


def global_max_phase(v1: float, v_dc: float, overmod: bool = False) -> float:
    """Largest phase difference (degrees) over all amplitude pairs: tangency to the module circle."""
    arg = module_voltage(v_dc, overmod) / v1
    if arg > 1:
        raise Unreachable("module voltage exceeds the grid voltage; phase unconstrained")
    return math.degrees(math.asin(arg))


def uncontrolled_power(v1: float, v2: float, theta: float, x_line: float) -> complex:
    """Power sent from segment 1 over a purely inductive line with no module action."""
    if not x_line > 0:
        raise ValueError("x_line must be positive")
    th = math.radians(theta)
    return complex(-v1 * v2 * math.sin(th) / x_line, (v1 * v1 - v1 * v2 * math.cos(th)) / x_line)


@dataclass(frozen=True)
class RegulationCircle:
    center: complex
    radius: float

    def contains(self, s: complex) -> bool:
        return abs(complex(s) - self.center) <= self.radius * (1 + 1e-12)


def regulation_circle(v1: float, v_m_max: float, x_line: float, theta: float = 0.0,
                      v2: float | None = None) -> RegulationCircle:
    """Reachable power set: a circle of radius ``v1*v_m/x`` around the uncontrolled point."""
    if v_m_max < 0:
        raise ValueError("module voltage must be non-negative")
    center = uncontrolled_power(v1, v1 if v2 is None else v2, theta, x_line)
    return RegulationCircle(center, v1 * v_m_max / x_line)


def regulated_power(v1: float, v2: float, theta: float, x_line: float, v_m: float, rho: float) -> complex:
    """Power from segment 1 with the module at rms ``v_m`` and angle ``rho`` (degrees)."""
    r = math.radians(rho)
    return uncontrolled_power(v1, v2, theta, x_line) - v1 * v_m / x_line * complex(math.sin(r), math.cos(r))


def two_grid_feasible(v1: float, dv: float, dtheta: float, v_m: float) -> bool:
    """Is the other terminal at ``(v1 + dv)∠dtheta`` within module reach of ``v1∠0``?"""
    other = cmath.rect(v1 + dv, math.radians(dtheta))
    return abs(other - v1) <= v_m * (1 + 1e-12)


# ------------------------------------------------------------------- sampling

RegionKind = Literal["reactive_comp", "active_comp", "two_grid_limits", "regulation"]


def _wedge(center_deg: float, half_deg: float, s_max: float, n: int) -> tuple[np.ndarray, ...]:
    """Bow-tie of two wedges of half-angle ``half_deg`` about ``center_deg`` and its opposite.

    Emits exactly ``n`` points: apex, rays and closing arcs of both lobes, back
    to the apex. Ray points are tagged as constraint points; arcs and the apex
    are extent points.
    """
    rem = n - 3
    lobes = (rem // 2 + rem % 2, rem // 2)
    xs, ys, tags = [0.0], [0.0], [False]
    for c, size in zip((center_deg, center_deg + 180.0), lobes):
        k = max(2, size // 4)
        m = size - 2 * k
        lo, hi = math.radians(c - half_deg), math.radians(c + half_deg)
        r = np.linspace(0.0, s_max, k + 1)[1:]
        arc = np.linspace(lo, hi, m + 2)[1:-1]
        for rr in r:
            xs.append(rr * math.cos(lo)); ys.append(rr * math.sin(lo)); tags.append(True)
        for a in arc:
            xs.append(s_max * math.cos(a)); ys.append(s_max * math.sin(a)); tags.append(False)
        for rr in r[::-1]:
            xs.append(rr * math.cos(hi)); ys.append(rr * math.sin(hi)); tags.append(True)
        xs.append(0.0); ys.append(0.0); tags.append(False)
    return np.array(xs), np.array(ys), np.array(tags)


def sample_region(kind: RegionKind, query: EnvelopeQuery, n: int = 256, s_max: float | None = None) -> RegionBoundary:
    """Closed boundary of one of the coverage regions.

    ``reactive_comp`` / ``active_comp``: load P-Q sets (W, var) truncated at
    ``s_max`` (default 1.5x the regulation radius). ``two_grid_limits``: the
    module circle mapped to (amplitude difference V, phase difference deg).
    ``regulation``: the reachable P-Q circle for ``query.theta``.
    """
    if n < 16:
        raise ValueError("need at least 16 points")
    v1, v_m = query.v1_rms, query.v_m
    if kind in ("reactive_comp", "active_comp"):
        lim, _ = _angle_limit(v1, v_m * SQRT2)
        half = math.degrees(lim)
        smax = s_max if s_max is not None else 1.5 * v1 * v_m / query.x_line
        if kind == "reactive_comp":
            x, y, tags = _wedge(0.0, half, smax, n)
        else:
            x, y, tags = _wedge(90.0, half, smax, n)
        return RegionBoundary(x, y, "P (W)", "Q (var)", kind, tags)
    if kind == "two_grid_limits":
        phi = np.linspace(0.0, 2 * np.pi, n)
        other = v1 + v_m * np.exp(1j * phi)
        other[-1] = other[0]
        dv = np.abs(other) - v1
        dth = np.degrees(np.angle(other))
        return RegionBoundary(dv, dth, "amplitude difference (V)", "phase difference (deg)", kind,
                              np.ones(n, dtype=bool))
    if kind == "regulation":
        circ = regulation_circle(v1, v_m, query.x_line, query.theta, query.v2_rms)
        phi = np.linspace(0.0, 2 * np.pi, n)
        s = circ.center + circ.radius * np.exp(1j * phi)
        s[-1] = s[0]
        return RegionBoundary(s.real, s.imag, "P (W)", "Q (var)", kind, np.ones(n, dtype=bool))
    raise ValueError(f"unknown region kind {kind!r}")


def region_contains(kind: RegionKind, query: EnvelopeQuery, x: float, y: float) -> bool:
    """Feasibility predicate matching :func:`sample_region` (ignoring the extent cut)."""
    if kind == "reactive_comp":
        return reactive_comp_feasible(x, y, query.v1_rms, query.v_m * SQRT2)
    if kind == "active_comp":
        return active_comp_feasible(x, y, query.v1_rms, query.v_m * SQRT2)
    if kind == "two_grid_limits":
        return two_grid_feasible(query.v1_rms, x, y, query.v_m)
    if kind == "regulation":
        circ = regulation_circle(query.v1_rms, query.v_m, query.x_line, query.theta, query.v2_rms)
        return circ.contains(complex(x, y))
    raise ValueError(f"unknown region kind {kind!r}")


def limits_table(v1: float, v_dc: float, x_line: float | None = None) -> dict[str, float]:
    """Headline numbers for a grid and module voltage, linear and over-modulated."""
    out = {
        "v1": v1,
        "v_dc": v_dc,
        "dv_max": max_inphase_diff(v_dc, False),
        "dv_max_overmod": max_inphase_diff(v_dc, True),
        "beta_deg": parity_max_phase(v1, v_dc, False),
        "beta_deg_overmod": parity_max_phase(v1, v_dc, True),
        "gamma_deg": global_max_phase(v1, v_dc, False),
        "gamma_deg_overmod": global_max_phase(v1, v_dc, True),
        "dv_pct": 100 * max_inphase_diff(v_dc, False) / v1,
        "dv_pct_overmod": 100 * max_inphase_diff(v_dc, True) / v1,
    }
    if x_line is not None:
        out["x_line"] = x_line
        out["radius_va"] = regulation_circle(v1, module_voltage(v_dc), x_line).radius
        out["radius_va_overmod"] = regulation_circle(v1, module_voltage(v_dc, True), x_line).radius
    return out
