"""Loss and rating calculators: core loss, transformer transfer, loss roll-ups, fault currents."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class BertottiParams:
    eta: float = 15.0          # Steinmetz constant
    b_m: float = 1.5           # peak flux density, T
    t_sheet: float = 0.27e-3   # lamination thickness, m
    rho_lam: float = 0.48e-6   # lamination resistivity, ohm m
    volume: float = 0.129      # core volume, m^3

    def __post_init__(self):
        for name in ("eta", "b_m", "t_sheet", "rho_lam", "volume"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CoreLoss:
    hysteresis: float
    eddy: float

    @property
    def total(self) -> float:
        return self.hysteresis + self.eddy


def bertotti_loss(p: BertottiParams, f: float) -> CoreLoss:
    """Hysteresis (linear in f) plus classical eddy loss (quadratic in f), in watts."""
    if f < 0:
        raise ValueError("frequency must be non-negative")
    b2 = p.b_m * p.b_m
    hys = p.eta * b2 * f * p.volume
    edd = math.pi ** 2 * p.t_sheet ** 2 * b2 * f * f / (6.0 * p.rho_lam) * p.volume
    return CoreLoss(hys, edd)


@dataclass(frozen=True)
class Transfer:
    h: float
    clamped: bool  # core loss exceeded the injected power


def transformer_transfer(p_inject: float, params: BertottiParams, f: float) -> Transfer:
    """Fraction of injected power that survives the core, ``|(P_g - P_loss)/P_g|``.

    Once the loss exceeds the injected power the transformer passes nothing
    useful; that case reports 0 and sets ``clamped``.
    """
    if not p_inject > 0:
        raise ValueError("injected power must be positive")
    loss = bertotti_loss(params, f).total
    if loss > p_inject:
        return Transfer(0.0, True)
    return Transfer(abs((p_inject - loss) / p_inject), False)


class NoCrossing(ValueError):
    """The transfer never falls to the threshold within the search range."""


def bandwidth_3db(p_inject: float, params: BertottiParams, amplitude: bool = False,
                  f_max: float = 1e6, tol: float = 1e-9) -> float:
    """Frequency where the transfer falls to 0.5 (or 1/sqrt(2) with ``amplitude``).

    H is a power ratio, so the power reading (0.5) is the default.
    """
    target = 1 / math.sqrt(2) if amplitude else 0.5

    def g(f):
        return transformer_transfer(p_inject, params, f).h - target

    lo, hi = 0.0, f_max
    if g(hi) > 0:
        raise NoCrossing(f"transfer stays above {target:.3f} up to {f_max:g} Hz")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- roll-ups

@dataclass(frozen=True)
class DeviceCoefficients:
    """Conduction and switching model for one bridge stage (optional)."""
    r_on: float = 0.0           # ohm, per conducting path
    e_sw: float = 0.0           # J per on+off event at i_ref
    i_ref: float = 1.0          # A, current at which e_sw was characterised
    f_sw: float = 0.0           # Hz

    def loss(self, i_rms: float) -> float:
        return i_rms * i_rms * self.r_on + self.f_sw * self.e_sw * i_rms / self.i_ref


@dataclass(frozen=True)
class LossLineup:
    i_rms: float = 100.0
    v_inject: float = 33.0
    r_inductor: float = 5e-3
    r_transformer: float = 20e-3
    # reference stage losses per phase, W; keys are stage names
    direct: dict = field(default_factory=dict)
    transformer: dict = field(default_factory=dict)
    devices: dict = field(default_factory=dict)  # stage -> DeviceCoefficients, overrides a reference

    def __post_init__(self):
        if self.i_rms < 0:
            raise ValueError("current must be non-negative")
        if self.r_inductor < 0 or self.r_transformer < 0:
            raise ValueError("resistances must be non-negative")


@dataclass(frozen=True)
class LossReport:
    direct: dict
    transformer: dict
    transformer_i2r: float        # I^2 R of the injection transformer from the stated resistance
    transformer_reference: float  # the stage value used in the transformer column

    @property
    def direct_total(self) -> float:
        return sum(self.direct.values())

    @property
    def transformer_total(self) -> float:
        return sum(self.transformer.values())


def inductor_loss(i_rms: float, r: float) -> float:
    return i_rms * i_rms * r


def loss_lineup(l: LossLineup) -> LossReport:
    """Per-stage losses per phase for direct injection and transformer injection.

    The filter inductor is always computed as I^2 R. The transformer injection
    stage uses the reference value if one is supplied and I^2 R otherwise; both
    numbers are reported because they need not agree.
    """
    direct = {}
    for name, w in l.direct.items():
        dev = l.devices.get(name)
        direct[name] = dev.loss(l.i_rms) if dev is not None else float(w)
    direct["inductor"] = inductor_loss(l.i_rms, l.r_inductor)
    i2r = inductor_loss(l.i_rms, l.r_transformer)
    trans = {}
    for name, w in l.transformer.items():
        dev = l.devices.get(name)
        trans[name] = dev.loss(l.i_rms) if dev is not None else float(w)
    trans.setdefault("injection_transformer", i2r)
    return LossReport(direct, trans, i2r, trans["injection_transformer"])


def _lineup_from_dict(d: dict) -> LossLineup:
    devices = {k: DeviceCoefficients(**v) for k, v in d.get("devices", {}).items()}
    keys = ("i_rms", "v_inject", "r_inductor", "r_transformer", "direct", "transformer")
    return LossLineup(**{k: d[k] for k in keys if k in d}, devices=devices)


def load_lineup(path: str | Path | None = None) -> LossLineup:
    """Read a lineup coefficient file; the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("diupfc").joinpath("data/loss_lineup.json").read_text()
    else:
        text = Path(path).read_text()
    return _lineup_from_dict(json.loads(text))


# ------------------------------------------------------------------- faults

@dataclass(frozen=True)
class FaultSpec:
    s_tx: float = 300e3
    v_ll: float = 400.0
    u_k: float = 0.085
    clear_time: float = 0.4

    def __post_init__(self):
        if not 0 < self.u_k <= 1:
            raise ValueError("u_k must lie in (0, 1]")
        if not (self.s_tx > 0 and self.v_ll > 0):
            raise ValueError("rating and voltage must be positive")
        if self.clear_time < 0:
            raise ValueError("clearing time must be non-negative")


@dataclass(frozen=True)
class FaultRatings:
    i_nominal: float
    i_short: float
    i2t: float


def fault_ratings(f: FaultSpec) -> FaultRatings:
    """Continuous and prospective short-circuit current behind a distribution transformer."""
    i_n = f.s_tx / (math.sqrt(3) * f.v_ll)
    i_k = i_n / f.u_k
    return FaultRatings(i_n, i_k, i_k * i_k * f.clear_time)
