"""Command line: ``diupfc run | cases | envelope | loss``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .checks import case_checks
from .converters import VoltageCollapse
from .engine import NumericalDivergence, run
from .envelope import EnvelopeQuery, Unreachable, limits_table, sample_region
from .io import (fmt, file_sha256, load_scenario, scenario_hash, write_charts, write_json_atomic,
                 write_metrics_csv, write_region_svg, write_trace_csv)
from .losses import (BertottiParams, FaultSpec, NoCrossing, bandwidth_3db, bertotti_loss, fault_ratings,
                     load_lineup, loss_lineup, transformer_transfer)
from .metrics import compute_metrics
from .network import CASE_DESCRIPTIONS, CASE_IDS, Scenario, ScenarioError, build_case, scenario_to_dict

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4
OUT_ENV = "DIUPFC_OUT"


def _err(msg: str) -> None:
    print(f"diupfc: {msg}", file=sys.stderr)


def default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "diupfc_out")) / name


def resolve_scenario(ref: str) -> Scenario:
    """A scenario file path, or a built-in case as ``cases/A`` or ``A``."""
    p = Path(ref)
    if p.is_file():
        return load_scenario(p)
    key = ref[len("cases/"):] if ref.startswith("cases/") else ref
    if key.upper() in CASE_IDS and (ref.startswith("cases/") or len(key) == 1):
        return build_case(key)
    if ref.startswith("cases/"):
        raise ScenarioError("case", f"unknown case id {key!r}; expected one of {', '.join(CASE_IDS)}")
    raise ScenarioError("scenario", f"no such file {ref!r}")


def execute(sc: Scenario, out: Path, charts: bool = True) -> dict:
    """Run one scenario and write its files; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    tr = run(sc)
    elapsed = time.perf_counter() - t0
    files = {"trace.csv": out / "trace.csv", "metrics.csv": out / "metrics.csv"}
    write_trace_csv(tr, files["trace.csv"])
    write_metrics_csv(compute_metrics(tr, sc.intervals()), files["metrics.csv"])
    if charts:
        files["charts.svg"] = out / "charts.svg"
        write_charts(tr, sc, files["charts.svg"])
    checks = case_checks(tr, sc)
    manifest = {
        "tool": "diupfc",
        "version": __version__,
        "scenario": sc.name,
        "scenario_sha256": scenario_hash(sc),
        "config": scenario_to_dict(sc),
        "fidelity": sc.sim.fidelity,
        "elapsed_s": round(elapsed, 3),
        "energy_relative_residual": tr.energy.relative_residual,
        "files": {k: {"sha256": file_sha256(v), "bytes": v.stat().st_size} for k, v in files.items()},
        "checks": [dataclasses.asdict(c) for c in checks],
        "passed": all(c.passed for c in checks),
    }
    write_json_atomic(manifest, out / "manifest.json")
    return manifest


def _print_checks(manifest: dict) -> None:
    for c in manifest["checks"]:
        print(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}  ({c['detail']})")


def cmd_run(args) -> int:
    sc = resolve_scenario(args.scenario)
    if args.fidelity:
        sc = dataclasses.replace(sc, sim=sc.sim.with_fidelity(args.fidelity))
    if args.t_end is not None:
        sc = dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, t_end=args.t_end))
    out = Path(args.out) if args.out else default_out(sc.name)
    m = execute(sc, out, charts=not args.no_charts)
    print(f"case {sc.name}: {m['elapsed_s']} s, energy residual {m['energy_relative_residual']:.2e}, out {out}")
    _print_checks(m)
    return EXIT_OK


def _run_case(cid: str, root: str, charts: bool) -> tuple[str, dict]:
    return cid, execute(build_case(cid), Path(root) / cid, charts)


def cmd_cases(args) -> int:
    if args.action == "list":
        for cid in CASE_IDS:
            sc = build_case(cid)
            sched = ", ".join(f"{t:g}s {c.kind}" for t, c in sc.schedule)
            print(f"{cid}  {CASE_DESCRIPTIONS[cid]}")
            print(f"   grid {sc.left.v_ll_rms:g} V ph-ph {sc.left.freq:g} Hz, line {sc.line.r:g}+j{sc.line.x:g} ohm, "
                  f"filter {sc.filter_l * 1e6:g} uH, module {sc.module.v_dc:g} V, shared link {sc.module.v_shared:g} V; "
                  f"schedule: {sched}")
        return EXIT_OK
    root = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "diupfc_out"))
    ids = [c.upper() for c in args.ids] if args.ids else list(CASE_IDS)
    for c in ids:
        if c not in CASE_IDS:
            raise ScenarioError("case", f"unknown case id {c!r}")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = dict(ex.map(_run_case, ids, [str(root)] * len(ids), [not args.no_charts] * len(ids)))
    else:
        results = dict(_run_case(c, str(root), not args.no_charts) for c in ids)
    ok = True
    for cid in ids:
        m = results[cid]
        ok &= m["passed"]
        print(f"{cid}: {'PASS' if m['passed'] else 'FAIL'}  ({m['elapsed_s']} s)")
        _print_checks(m)
    return EXIT_OK if ok else EXIT_NUMERIC if args.strict else EXIT_OK


def cmd_envelope(args) -> int:
    tab = limits_table(args.v1, args.vdc, args.xline)
    lin = ["dv_max", "beta_deg", "gamma_deg", "dv_pct"]
    om = ["dv_max_overmod", "beta_deg_overmod", "gamma_deg_overmod", "dv_pct_overmod"]
    keys = lin + om if args.overmod else lin
    if args.xline is not None:
        keys += ["radius_va"] + (["radius_va_overmod"] if args.overmod else [])
    units = {"dv_max": "V", "beta_deg": "deg", "gamma_deg": "deg", "dv_pct": "%", "radius_va": "VA"}
    for k in keys:
        u = units.get(k.replace("_overmod", ""), "")
        print(f"{k:20s} {tab[k]:.4f} {u}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "limits.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["quantity", "value"])
            for k, v in tab.items():
                w.writerow([k, fmt(v)])
        q = EnvelopeQuery(args.v1, None, args.vdc, args.overmod, args.xline or 0.1, args.theta)
        kinds = ["reactive_comp", "active_comp", "two_grid_limits"] + (["regulation"] if args.xline else [])
        regions = [sample_region(k, q, args.points) for k in kinds]
        for r in regions:
            with open(out / f"region_{r.kind}.csv", "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["x", "y", "on_constraint"])
                for x, y, c in zip(r.x, r.y, r.on_constraint):
                    w.writerow([fmt(x), fmt(y), int(c)])
        write_region_svg(regions, out / "envelope.svg", f"V1={args.v1:g} V, Vdc={args.vdc:g} V")
        print(f"wrote {out}")
    return EXIT_OK


def _parse_sweep(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise ScenarioError("sweep", f"expected START:STOP in Hz, got {text!r}") from None
    if not 0 < a < b:
        raise ScenarioError("sweep", "need 0 < START < STOP")
    return a, b


def cmd_loss(args) -> int:
    import numpy as np

    bp = BertottiParams(args.eta, args.bm, args.t_sheet, args.rho, args.volume)
    lineup = load_lineup(args.lineup)
    rep = loss_lineup(lineup)
    print(f"per-phase losses at {lineup.i_rms:g} A rms")
    print(f"  {'direct injection':28s}{'W':>9s}    {'transformer injection':28s}{'W':>9s}")
    left = list(rep.direct.items()) + [("total", rep.direct_total)]
    right = list(rep.transformer.items()) + [("total", rep.transformer_total)]
    for i in range(max(len(left), len(right))):
        a = f"  {left[i][0]:28s}{left[i][1]:9.1f}" if i < len(left) else " " * 39
        b = f"    {right[i][0]:28s}{right[i][1]:9.1f}" if i < len(right) else ""
        print(a + b)
    print(f"  transformer I^2R from {lineup.r_transformer * 1e3:g} mOhm: {rep.transformer_i2r:.1f} W "
          f"(reference stage value {rep.transformer_reference:.1f} W)")
    fr = fault_ratings(FaultSpec(args.s_tx, args.v_ll, args.uk, args.clear_time))
    print(f"fault: nominal {fr.i_nominal:.2f} A, short-circuit {fr.i_short:.2f} A, I2t {fr.i2t:.4g} A^2s")
    try:
        bw = bandwidth_3db(args.p_inject, bp, amplitude=args.amplitude)
        print(f"transformer bandwidth at P_g={args.p_inject:g} W, B_m={args.bm:g} T: {bw:.1f} Hz")
    except NoCrossing as exc:
        print(f"transformer bandwidth: {exc}")
    f0, f1 = _parse_sweep(args.sweep)
    freqs = np.geomspace(f0, f1, args.points)
    rows = []
    for f in freqs:
        cl = bertotti_loss(bp, float(f))
        rows.append((f, cl.hysteresis, cl.eddy, transformer_transfer(args.p_inject, bp, float(f)).h))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bertotti_sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["f", "p_hys", "p_edd", "h"])
            w.writerows([[fmt(x) for x in r] for r in rows])
        with open(out / "lineup.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["column", "stage", "watts"])
            for k, v in left:
                w.writerow(["direct", k, fmt(v)])
            for k, v in right:
                w.writerow(["transformer", k, fmt(v)])
        with open(out / "faults.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i_nominal", "i_short", "i2t"])
            w.writerow([fmt(fr.i_nominal), fmt(fr.i_short), fmt(fr.i2t)])
        print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diupfc", description="Direct-injection series power flow controller simulator")
    ap.add_argument("--version", action="version", version=f"diupfc {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a scenario file or a built-in case (cases/A)")
    r.add_argument("scenario")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or diupfc_out/<name>)")
    r.add_argument("--fidelity", choices=("averaged", "switched"))
    r.add_argument("--t-end", type=float, dest="t_end")
    r.add_argument("--no-charts", action="store_true")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("cases", help="list or run the built-in cases")
    c.add_argument("action", choices=("list", "run-all"))
    c.add_argument("ids", nargs="*", help="subset of case ids for run-all")
    c.add_argument("--out")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--no-charts", action="store_true")
    c.add_argument("--strict", action="store_true", help="exit 3 if any built-in check fails")
    c.set_defaults(fn=cmd_cases)

    e = sub.add_parser("envelope", help="coverage limits and region boundaries")
    e.add_argument("--v1", type=float, default=230.0, help="rms phase voltage")
    e.add_argument("--vdc", type=float, default=48.0)
    e.add_argument("--xline", type=float)
    e.add_argument("--theta", type=float, default=0.0)
    e.add_argument("--overmod", action="store_true")
    e.add_argument("--points", type=int, default=256)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_envelope)

    lo = sub.add_parser("loss", help="core loss sweep, loss lineup and fault ratings")
    lo.add_argument("--lineup", help="coefficient JSON (default: packaged file)")
    lo.add_argument("--sweep", default="10:10000", help="START:STOP in Hz")
    lo.add_argument("--points", type=int, default=50)
    lo.add_argument("--p-inject", type=float, default=10e3, dest="p_inject")
    lo.add_argument("--eta", type=float, default=15.0)
    lo.add_argument("--bm", type=float, default=1.5)
    lo.add_argument("--t-sheet", type=float, default=0.27e-3, dest="t_sheet")
    lo.add_argument("--rho", type=float, default=0.48e-6)
    lo.add_argument("--volume", type=float, default=0.129)
    lo.add_argument("--amplitude", action="store_true", help="use H = 1/sqrt(2) for the bandwidth")
    lo.add_argument("--s-tx", type=float, default=300e3, dest="s_tx")
    lo.add_argument("--v-ll", type=float, default=400.0, dest="v_ll")
    lo.add_argument("--uk", type=float, default=0.085)
    lo.add_argument("--clear-time", type=float, default=0.4, dest="clear_time")
    lo.add_argument("--out")
    lo.set_defaults(fn=cmd_loss)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.fn(args)
    except (NumericalDivergence, VoltageCollapse) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except (ScenarioError, Unreachable, FileNotFoundError, ValueError) as exc:
        _err(f"invalid input: {exc}")
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        _err(f"internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
