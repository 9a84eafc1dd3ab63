"""Network description, analytic steady-state solutions and the built-in cases.

Sign conventions
----------------
The simulated circuit runs from the *left* terminal (the main grid, the one
that feeds the shunt front end) through the line and the floating module to
the *right* terminal (a load or a second grid). Line current is positive from
left to right and the module voltage is a drop along that direction, so

    I = (V_left - V_right - V_m) / Z

This is the textbook ``I_g = (V2 - V1 - Vm)/Z_line`` with ``V2 = V_left`` and
``V1 = V_right``. Complex power is ``S = V * conj(I)`` (inductive Q positive);
the module power ``V_m * conj(I)`` is the power the module *absorbs*.
"""

from __future__ import annotations

import cmath
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence, Union

from .phasor import SQRT3, Phasor

Topology = Literal["load", "two_grid"]
Fidelity = Literal["averaged", "switched"]


class ScenarioError(ValueError):
    """Invalid scenario or parameter set; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ------------------------------------------------------------------------ types


@dataclass(frozen=True)
class GridSegment:
    v_ll_rms: float = 400.0
    phase_offset: float = 0.0  # degrees
    freq: float = 50.0
    per_phase_overrides: tuple[float, float, float] | None = None  # rms phase volts
    harmonics: tuple[tuple[int, float, float], ...] = ()  # (order, pu of phase fundamental, degrees)

    def __post_init__(self):
        if not self.freq > 0:
            raise ScenarioError("freq", "must be positive")
        if self.v_ll_rms < 0:
            raise ScenarioError("v_ll_rms", "must be non-negative")
        if self.per_phase_overrides is not None:
            if len(self.per_phase_overrides) != 3 or min(self.per_phase_overrides) < 0:
                raise ScenarioError("per_phase_overrides", "need three non-negative rms values")
        for h in self.harmonics:
            if len(h) != 3 or int(h[0]) < 2 or h[1] < 0:
                raise ScenarioError("harmonics", f"bad entry {h!r}")

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.freq

    def phase_rms(self) -> tuple[float, float, float]:
        if self.per_phase_overrides is not None:
            return tuple(float(v) for v in self.per_phase_overrides)  # type: ignore[return-value]
        v = self.v_ll_rms / SQRT3
        return (v, v, v)

    def phasors(self) -> tuple[complex, complex, complex]:
        """Fundamental rms phasors of phases a, b, c."""
        return tuple(
            cmath.rect(v, math.radians(self.phase_offset + shift))
            for v, shift in zip(self.phase_rms(), (0.0, -120.0, 120.0))
        )  # type: ignore[return-value]

    def waveform_terms(self) -> list[list[tuple[float, float, float]]]:
        """Per phase, a list of (peak, angular frequency, phase rad) cosine terms.

        Harmonic ``h`` of phase p uses angle ``h*(w t + phi_p) + phi_h`` so the 3rd
        is zero sequence and the 5th negative sequence.
        """
        w = self.omega
        terms = []
        for v, shift in zip(self.phase_rms(), (0.0, -120.0, 120.0)):
            phi = math.radians(self.phase_offset + shift)
            row = [(math.sqrt(2) * v, w, phi)]
            for order, mag, ph in self.harmonics:
                row.append((math.sqrt(2) * v * mag, order * w, order * phi + math.radians(ph)))
            terms.append(row)
        return terms


@dataclass(frozen=True)
class LineImpedance:
    r: float
    x: float

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise ScenarioError("r", "r and x must be non-negative")

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class RlLoad:
    r: float
    x: float

    def __post_init__(self):
        if self.r < 0:
            raise ScenarioError("r", "must be non-negative")

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class LlcParams:
    ratio: float = 700.0 / 48.0
    efficiency: float = 0.98
    conductance: float = 1000.0  # W per volt of module-side error

    def __post_init__(self):
        if not self.ratio > 0:
            raise ScenarioError("ratio", "must be positive")
        if not 0 < self.efficiency <= 1:
            raise ScenarioError("efficiency", "must lie in (0, 1]")
        if self.conductance < 0:
            raise ScenarioError("conductance", "must be non-negative")


@dataclass(frozen=True)
class ModuleParams:
    v_dc: float = 48.0
    f_sw: float = 100e3
    c_dc: float = 20e-3
    v_dc_min: float = 5.0
    v_shared: float = 700.0
    c_shared: float = 2e-3
    llc: LlcParams = field(default_factory=LlcParams)
    afe_l: float = 2e-3
    afe_r: float = 0.05

    def __post_init__(self):
        for name in ("v_dc", "f_sw", "c_dc", "v_shared", "c_shared", "afe_l"):
            if not getattr(self, name) > 0:
                raise ScenarioError(name, "must be positive")
        if self.v_dc_min < 0 or self.afe_r < 0:
            raise ScenarioError("v_dc_min", "v_dc_min and afe_r must be non-negative")


@dataclass(frozen=True)
class SeriesGains:
    kp: float = 0.1
    ki: float = 1.0
    harmonic_kp: float = 5.0
    harmonic_ki: float = 200.0
    sogi_k: float = math.sqrt(2)
    pll_kp: float = 2 * 1.0 * (2 * math.pi * 8.0)
    pll_ki: float = (2 * math.pi * 8.0) ** 2
    allow_overmod: bool = True


@dataclass(frozen=True)
class AfeGains:
    kp: float = 2 * math.pi * 200.0 * 2e-3
    ki: float = 2 * math.pi * 200.0 * 0.05
    vdc_kp: float = 0.2
    vdc_ki: float = 2.0
    q_ref: float = 0.0
    i_max: float = 60.0
    pll_kp: float = 2 * 1.0 * (2 * math.pi * 8.0)
    pll_ki: float = (2 * math.pi * 8.0) ** 2


@dataclass(frozen=True)
class ControllerParams:
    series: SeriesGains = field(default_factory=SeriesGains)
    afe: AfeGains = field(default_factory=AfeGains)


# Commands ---------------------------------------------------------------------


@dataclass(frozen=True)
class Bypass:
    kind: Literal["bypass"] = "bypass"


@dataclass(frozen=True)
class RegulateCurrent:
    """Track an rms current phasor given relative to each phase's own left voltage."""

    i_ref_rms: float
    phase_ref: float = 0.0  # degrees, negative = lagging
    kind: Literal["regulate_current"] = "regulate_current"


@dataclass(frozen=True)
class InjectVoltage:
    """Open-loop series voltage (drop convention) relative to each phase's own left voltage.

    ``v_rms`` is either one value for all phases or a per-phase triple.
    """

    v_rms: float | tuple[float, float, float]
    phase: float = 0.0
    kind: Literal["inject_voltage"] = "inject_voltage"

    def per_phase(self) -> tuple[float, float, float]:
        if isinstance(self.v_rms, (int, float)):
            return (float(self.v_rms),) * 3
        return tuple(float(v) for v in self.v_rms)  # type: ignore[return-value]


@dataclass(frozen=True)
class CompensateQ:
    kind: Literal["compensate_q"] = "compensate_q"


@dataclass(frozen=True)
class CompensateP:
    kind: Literal["compensate_p"] = "compensate_p"


@dataclass(frozen=True)
class BlockHarmonics:
    orders: tuple[int, ...] = (3, 5)
    kind: Literal["block_harmonics"] = "block_harmonics"


Command = Union[Bypass, RegulateCurrent, InjectVoltage, CompensateQ, CompensateP, BlockHarmonics]
_COMMANDS = {c.__dataclass_fields__["kind"].default: c for c in
             (Bypass, RegulateCurrent, InjectVoltage, CompensateQ, CompensateP, BlockHarmonics)}


@dataclass(frozen=True)
class SimConfig:
    dt: float = 10e-6
    t_end: float = 0.6
    fidelity: Fidelity = "averaged"
    record_decimation: int = 4
    control_rate: float = 100e3
    seed: int = 0  # reserved; the engine is deterministic

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt", "must be positive")
        if not self.t_end > 0:
            raise ScenarioError("t_end", "must be positive")
        if self.fidelity not in ("averaged", "switched"):
            raise ScenarioError("fidelity", f"unknown fidelity {self.fidelity!r}")
        if int(self.record_decimation) < 1:
            raise ScenarioError("record_decimation", "must be >= 1")
        if not self.control_rate > 0:
            raise ScenarioError("control_rate", "must be positive")

    def with_fidelity(self, fidelity: Fidelity) -> "SimConfig":
        """Switch fidelity keeping the recording grid unchanged."""
        if fidelity == self.fidelity:
            return self
        record_step = self.dt * self.record_decimation
        dt = 1e-6 if fidelity == "switched" else 10e-6
        return dataclasses.replace(
            self, fidelity=fidelity, dt=dt, record_decimation=max(1, int(round(record_step / dt)))
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    left: GridSegment
    right: GridSegment | RlLoad
    line: LineImpedance
    filter_l: float = 200e-6
    module: ModuleParams = field(default_factory=ModuleParams)
    controllers: ControllerParams = field(default_factory=ControllerParams)
    schedule: tuple[tuple[float, Command], ...] = ()
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.topology == "load":
            if not isinstance(self.right, RlLoad):
                raise ScenarioError("right", "load topology needs an RL load on the right")
        elif self.topology == "two_grid":
            if not isinstance(self.right, GridSegment):
                raise ScenarioError("right", "two_grid topology needs a grid segment on the right")
            if abs(self.right.freq - self.left.freq) > 1e-12:
                raise ScenarioError("right.freq", "both grids must share one frequency")
        else:
            raise ScenarioError("topology", f"unknown topology {self.topology!r}")
        if self.filter_l < 0:
            raise ScenarioError("filter.l", "must be non-negative")
        times = [t for t, _ in self.schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("schedule", "times must be strictly increasing")
        for i, (t, cmd) in enumerate(self.schedule):
            if not math.isfinite(t) or t < 0:
                raise ScenarioError(f"schedule[{i}].t", "must be finite and non-negative")
            if isinstance(cmd, (CompensateQ, CompensateP)) and self.topology != "load":
                raise ScenarioError(f"schedule[{i}]", f"{cmd.kind} needs the load topology")
            if isinstance(cmd, RegulateCurrent) and not (
                math.isfinite(cmd.i_ref_rms) and math.isfinite(cmd.phase_ref)
            ):
                raise ScenarioError(f"schedule[{i}]", "references must be finite")

    # Derived electrical quantities (per phase, fundamental) --------------------

    @property
    def omega(self) -> float:
        return self.left.omega

    @property
    def series_z(self) -> complex:
        """Line plus both filter halves between the two terminals."""
        return self.line.z + 1j * self.omega * self.filter_l

    @property
    def series_l(self) -> float:
        return self.line.x / self.omega + self.filter_l

    def command_at(self, t: float) -> Command:
        cmd: Command = Bypass()
        for ts, c in self.schedule:
            if t >= ts:
                cmd = c
        return cmd

    def intervals(self) -> list[tuple[float, float, Command]]:
        """Schedule as contiguous (start, end, command) spans covering [0, t_end]."""
        edges = [0.0] + [t for t, _ in self.schedule if 0 < t < self.sim.t_end] + [self.sim.t_end]
        return [(a, b, self.command_at(a)) for a, b in zip(edges, edges[1:]) if b > a]


# ------------------------------------------------------------ analytic solutions


def steady_state_current(v2: complex, v1: complex, vm: complex, z: LineImpedance | complex) -> Phasor:
    """``(V2 - V1 - Vm) / Z``: the series-path current driven from terminal 2 to terminal 1."""
    zc = z.z if isinstance(z, LineImpedance) else complex(z)
    if abs(zc) == 0:
        raise ZeroDivisionError("line impedance is zero")
    return Phasor.from_complex((complex(v2) - complex(v1) - complex(vm)) / zc)


def module_apparent_power(vm: complex, v1: complex, v2: complex, z: LineImpedance | complex) -> complex:
    """Complex power absorbed by the module, ``Vm * conj(I)``, per phase."""
    i = complex(steady_state_current(v2, v1, vm, z))
    return complex(vm) * i.conjugate()


@dataclass(frozen=True)
class LoadFlow:
    i: Phasor
    p_source: float  # three-phase W at the source terminal
    q_source: float  # three-phase var


def load_flow(load: RlLoad | complex, v_source: complex, z: LineImpedance | complex, vm: complex = 0j,
              phases: int = 3) -> LoadFlow:
    """Series source - line - module - load solution for one phase, totals scaled by ``phases``."""
    zl = load.z if isinstance(load, RlLoad) else complex(load)
    zs = z.z if isinstance(z, LineImpedance) else complex(z)
    if abs(zl + zs) == 0:
        raise ZeroDivisionError("total series impedance is zero")
    i = (complex(v_source) - complex(vm)) / (zs + zl)
    s = complex(v_source) * i.conjugate() * phases
    return LoadFlow(Phasor.from_complex(i), s.real, s.imag)


# --------------------------------------------------------------------- the cases

T_ENABLE = 0.38
CASE_IDS = ("A", "B", "C", "D", "E", "F")

_BASE_GRID = GridSegment(400.0, 0.0, 50.0)
_BASE_LINE = LineImpedance(0.020, 0.010)

CASE_DESCRIPTIONS = {
    "A": "RL load (22 + j4) ohm, reactive power shielded from the source",
    "B": "RL load (4 + j22) ohm, active power shielded from the source",
    "C": "second grid 390 V ph-ph 0 deg: hold zero flow, 20 A unity pf, 90 deg, reversed",
    "D": "second grid 400 V ph-ph 8 deg: hold zero flow, 20 A unity pf, lagging 90 deg, reversed, leading 90 deg",
    "E": "RL load (22 + j4) ohm, grid with 3rd (0.1 pu, -25 deg) and 5th (0.05 pu, 35 deg) harmonics",
    "F": "unbalanced grid 245/230/200 V rms, 5 ohm resistive load, per-phase in-phase injection",
}


def build_case(case_id: str) -> Scenario:
    """Return one of the six built-in test cases."""
    cid = str(case_id).strip().upper()
    if cid not in CASE_IDS:
        raise ScenarioError("case", f"unknown case id {case_id!r}; expected one of {', '.join(CASE_IDS)}")
    common = dict(line=_BASE_LINE, filter_l=200e-6, module=ModuleParams(), controllers=ControllerParams())
    if cid == "A":
        return Scenario("A", "load", _BASE_GRID, RlLoad(22.0, 4.0),
                        schedule=((T_ENABLE, CompensateQ()),), **common)
    if cid == "B":
        return Scenario("B", "load", _BASE_GRID, RlLoad(4.0, 22.0),
                        schedule=((T_ENABLE, CompensateP()),), **common)
    if cid == "C":
        return Scenario("C", "two_grid", _BASE_GRID, GridSegment(390.0, 0.0, 50.0), schedule=(
            (0.0, RegulateCurrent(0.0)),
            (0.38, RegulateCurrent(20.0, 0.0)),
            (0.46, RegulateCurrent(20.0, -90.0)),
            (0.54, RegulateCurrent(20.0, 180.0)),
        ), sim=SimConfig(t_end=0.62), **common)
    if cid == "D":
        # a fourth, leading interval returns reactive power so both Q directions are exercised;
        # it needs 96 % of the linear module voltage and rings longer, hence the longer interval
        return Scenario("D", "two_grid", _BASE_GRID, GridSegment(400.0, 8.0, 50.0), schedule=(
            (0.0, RegulateCurrent(0.0)),
            (0.38, RegulateCurrent(20.0, 0.0)),
            (0.46, RegulateCurrent(20.0, -90.0)),
            (0.54, RegulateCurrent(20.0, 180.0)),
            (0.62, RegulateCurrent(20.0, 90.0)),
        ), sim=SimConfig(t_end=0.80), **common)
    if cid == "E":
        grid = dataclasses.replace(_BASE_GRID, harmonics=((3, 0.10, -25.0), (5, 0.05, 35.0)))
        return Scenario("E", "load", grid, RlLoad(22.0, 4.0),
                        schedule=((T_ENABLE, BlockHarmonics((3, 5))),), **common)
    # F: each module lifts or lowers its own phase to the nominal phase voltage.
    overrides = (245.0, 230.0, 200.0)
    nominal = 400.0 / SQRT3
    grid = dataclasses.replace(_BASE_GRID, per_phase_overrides=overrides)
    return Scenario("F", "load", grid, RlLoad(5.0, 0.0), schedule=(
        (T_ENABLE, InjectVoltage(tuple(v - nominal for v in overrides), 0.0)),
    ), **common)


# ----------------------------------------------------------------- serialization


def _command_to_dict(cmd: Command) -> dict[str, Any]:
    d = dataclasses.asdict(cmd)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def _command_from_dict(d: dict[str, Any], where: str) -> Command:
    if not isinstance(d, dict) or "kind" not in d:
        raise ScenarioError(where, "command must be an object with a 'kind'")
    cls = _COMMANDS.get(d["kind"])
    if cls is None:
        raise ScenarioError(f"{where}.kind", f"unknown command {d['kind']!r}")
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    allowed = {f.name for f in dataclasses.fields(cls)} - {"kind"}
    extra = set(kwargs) - allowed
    if extra:
        raise ScenarioError(where, f"unexpected keys {sorted(extra)}")
    if "orders" in kwargs:
        kwargs["orders"] = tuple(int(o) for o in kwargs["orders"])
    if isinstance(kwargs.get("v_rms"), list):
        kwargs["v_rms"] = tuple(float(v) for v in kwargs["v_rms"])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioError(where, str(exc)) from None


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ScenarioError(where, "expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    extra = set(data) - set(names)
    if extra:
        raise ScenarioError(where, f"unexpected keys {sorted(extra)}")
    kwargs = {}
    try:
        for key, value in data.items():
            ftype = str(names[key].type)
            if key == "llc":
                value = _build(LlcParams, value, f"{where}.llc")
            elif key in ("series", "afe") and cls is ControllerParams:
                value = _build(SeriesGains if key == "series" else AfeGains, value, f"{where}.{key}")
            elif key == "harmonics":
                value = tuple((int(h[0]), float(h[1]), float(h[2])) for h in value)
            elif key == "per_phase_overrides":
                value = None if value is None else tuple(float(v) for v in value)
            elif ftype == "bool":
                if not isinstance(value, bool):
                    raise ScenarioError(key, "expected true/false")
            elif ftype == "int":
                if isinstance(value, bool) or float(value) != int(value):
                    raise ScenarioError(key, "expected an integer")
                value = int(value)
            elif ftype == "float":
                if isinstance(value, bool):
                    raise ScenarioError(key, "expected a number")
                value = float(value)
            kwargs[key] = value
        return cls(**kwargs)
    except ScenarioError as exc:
        if exc.field.startswith(where):
            raise
        raise ScenarioError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except (TypeError, ValueError, IndexError) as exc:
        raise ScenarioError(where, str(exc)) from None


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    right = _plain(sc.right)
    right["kind"] = "load" if isinstance(sc.right, RlLoad) else "grid"
    return {
        "name": sc.name,
        "topology": sc.topology,
        "left": _plain(sc.left),
        "right": right,
        "line": _plain(sc.line),
        "filter": {"l": sc.filter_l},
        "module": _plain(sc.module),
        "controllers": _plain(sc.controllers),
        "schedule": [{"t": t, "command": _command_to_dict(c)} for t, c in sc.schedule],
        "sim": _plain(sc.sim),
    }


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    required = ("topology", "left", "right", "line")
    for key in required:
        if key not in d:
            raise ScenarioError(key, "missing")
    allowed = {"name", "topology", "left", "right", "line", "filter", "module", "controllers", "schedule", "sim"}
    extra = set(d) - allowed
    if extra:
        raise ScenarioError("<root>", f"unexpected keys {sorted(extra)}")
    right = dict(d["right"]) if isinstance(d["right"], dict) else d["right"]
    if not isinstance(right, dict):
        raise ScenarioError("right", "expected an object")
    kind = right.pop("kind", "load" if d["topology"] == "load" else "grid")
    if kind == "load":
        right_obj = _build(RlLoad, right, "right")
    elif kind == "grid":
        right_obj = _build(GridSegment, right, "right")
    else:
        raise ScenarioError("right.kind", f"unknown kind {kind!r}")
    schedule = []
    for i, item in enumerate(d.get("schedule", [])):
        if not isinstance(item, dict) or "t" not in item or "command" not in item:
            raise ScenarioError(f"schedule[{i}]", "expected {t, command}")
        try:
            t = float(item["t"])
        except (TypeError, ValueError):
            raise ScenarioError(f"schedule[{i}].t", "not a number") from None
        schedule.append((t, _command_from_dict(item["command"], f"schedule[{i}].command")))
    filt = d.get("filter", {"l": 200e-6})
    if not isinstance(filt, dict) or "l" not in filt:
        raise ScenarioError("filter", "expected {l: henries}")
    try:
        filter_l = float(filt["l"])
    except (TypeError, ValueError):
        raise ScenarioError("filter.l", "not a number") from None
    return Scenario(
        name=str(d.get("name", "custom")),
        topology=d["topology"],
        left=_build(GridSegment, d["left"], "left"),
        right=right_obj,
        line=_build(LineImpedance, d["line"], "line"),
        filter_l=filter_l,
        module=_build(ModuleParams, d.get("module", {}), "module"),
        controllers=_build(ControllerParams, d.get("controllers", {}), "controllers"),
        schedule=tuple(schedule),
        sim=_build(SimConfig, d.get("sim", {}), "sim"),
    )
