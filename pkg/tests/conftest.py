import dataclasses
import math
from functools import lru_cache

import pytest

from diupfc.engine import run
from diupfc.network import GridSegment, RegulateCurrent, SimConfig, build_case

VPH = 400 / math.sqrt(3)


@lru_cache(maxsize=None)
def case_run(cid: str, variant: str = "base"):
    """Simulate a built-in case once per session; variants: base, half_dt, switched."""
    sc = build_case(cid)
    if variant == "half_dt":
        sc = dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, dt=sc.sim.dt / 2,
                                                             record_decimation=2 * sc.sim.record_decimation))
    elif variant == "switched":
        sc = dataclasses.replace(sc, sim=sc.sim.with_fidelity("switched"))
    elif variant != "base":
        raise ValueError(variant)
    return sc, run(sc)


def hold_probe(dv: float = 0.0, dtheta: float = 0.0, overmod: bool = False, t_end: float = 0.3):
    """Two-grid zero-current hold with the far grid displaced by ``dv`` volts and ``dtheta`` degrees."""
    base = build_case("C")
    series = dataclasses.replace(base.controllers.series, allow_overmod=overmod)
    sc = dataclasses.replace(
        base,
        right=GridSegment(math.sqrt(3) * (VPH - dv), dtheta, 50.0),
        schedule=((0.0, RegulateCurrent(0.0)),),
        sim=SimConfig(t_end=t_end),
        controllers=dataclasses.replace(base.controllers, series=series),
    )
    return sc, run(sc)


@pytest.fixture(scope="session")
def runs():
    return case_run


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
