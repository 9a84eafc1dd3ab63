"""Power-stage models: floating H-bridge module, LLC isolation link, shared dc link.

Capacitor states are integrated in energy form, ``E' = p_in - p_out``, with the
power terms supplied by the caller already trapezoid-averaged over the step, so
stored energy changes by exactly the integrated power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple


class VoltageCollapse(ArithmeticError):
    """A dc link fell below its configured minimum."""

    def __init__(self, name: str, v: float, v_min: float, t: float | None = None):
        when = "" if t is None else f" at t={t:.6f} s"
        super().__init__(f"{name} collapsed to {v:.4g} V (minimum {v_min:.4g} V){when}")
        self.name, self.v, self.t = name, v, t


@dataclass(frozen=True)
class FloatingModuleState:
    v_dc: float
    c_dc: float
    duty: float = 0.0
    mode: str = "bypass"
    filter_l: float = 100e-6  # per side
    filter_i: float = 0.0
    v_dc_min: float = 0.0

    def __post_init__(self):
        if not self.c_dc > 0:
            raise ValueError("module capacitance must be positive")
        if self.v_dc < 0:
            raise ValueError("module voltage must be non-negative")

    @property
    def energy(self) -> float:
        return 0.5 * self.c_dc * self.v_dc * self.v_dc


def capacitor_update(v: float, c: float, p_net: float, dt: float) -> float:
    """New voltage after ``p_net`` watts flow into a capacitor for ``dt``.

    Returns a negative number if the capacitor would be drained past zero; the
    caller decides how to report it.
    """
    e = 0.5 * c * v * v + p_net * dt
    return math.sqrt(e * 2.0 / c) if e >= 0 else -1.0


def module_step(m: FloatingModuleState, i_line: float, p_llc: float, dt: float,
                i_next: float | None = None) -> tuple[FloatingModuleState, float]:
    """Advance a module by ``dt`` with its duty held.

    ``i_line`` flows left to right through the module; the bridge absorbs
    ``duty * v_dc * i``. ``p_llc`` is the power arriving from the LLC. If the
    end-of-step current is known it is trapezoid-averaged with ``i_line``.
    Returns the new state and the (averaged) terminal voltage.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    i_avg = i_line if i_next is None else 0.5 * (i_line + i_next)
    v_term = m.duty * m.v_dc
    v_new = capacitor_update(m.v_dc, m.c_dc, v_term * i_avg + p_llc, dt)
    if v_new < m.v_dc_min:
        raise VoltageCollapse("module dc link", max(v_new, 0.0), m.v_dc_min)
    return replace(m, v_dc=v_new, filter_i=i_next if i_next is not None else i_line), v_term


@dataclass(frozen=True)
class LlcLink:
    ratio: float
    efficiency: float = 1.0
    conductance: float = 1000.0

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError("ratio must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")


class LlcFlow(NamedTuple):
    p_raw: float      # antisymmetric droop transfer, positive toward the module
    p_module: float   # power arriving at (+) or leaving (-) the module capacitor
    p_shared: float   # power leaving (+) or arriving at (-) the shared link

    @property
    def loss(self) -> float:
        return self.p_shared - self.p_module


def llc_transfer(link: LlcLink, v_module: float, v_shared: float, dt: float | None = None) -> LlcFlow:
    """Droop model of an open-loop fixed-ratio resonant link.

    Power follows the error between the reflected shared voltage and the module
    voltage; the receiving side gets ``efficiency`` times what the sending side
    gives up. ``dt`` is accepted for interface symmetry; the transfer is static.
    """
    if not (v_module > 0 and v_shared > 0):
        raise ValueError("both link voltages must be positive")
    p = link.conductance * (v_shared / link.ratio - v_module)
    if p >= 0:
        return LlcFlow(p, p * link.efficiency, p)
    return LlcFlow(p, p, p * link.efficiency)


@dataclass(frozen=True)
class SharedDcLink:
    v_dc: float
    c_dc: float
    v_min: float = 0.0

    def __post_init__(self):
        if not self.c_dc > 0:
            raise ValueError("shared link capacitance must be positive")
        if self.v_dc < 0:
            raise ValueError("shared link voltage must be non-negative")

    @property
    def energy(self) -> float:
        return 0.5 * self.c_dc * self.v_dc * self.v_dc


def shared_link_step(link: SharedDcLink, p_afe: float, p_llc_total: float, dt: float) -> SharedDcLink:
    """Integrate ``C v dv/dt = p_afe - p_llc_total``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = capacitor_update(link.v_dc, link.c_dc, p_afe - p_llc_total, dt)
    if v < link.v_min:
        raise VoltageCollapse("shared dc link", max(v, 0.0), link.v_min)
    return replace(link, v_dc=v)
