"""Command-line front end: ``run``, ``sweep``, ``stationary`` and ``oracle``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .clock import (
    KSPACE_MAPPING,
    ClockError,
    ClockOrders,
    TimesReport,
    clamped_weight,
    clock_time_x,
    clock_time_y,
    excluded_weight,
    extract_orders,
    tau_x_of_t,
    tau_y_of_t,
    tau_z_diagnostic,
    time_R_kspace,
    time_y_kspace,
)
from .config import ConfigError, Report, RunConfig, format_float, load_config
from .legacy import LegacyError, LegacyTimes, legacy_times
from .observables import (
    SPIN_PHASE_SIGN,
    CrossCheckError,
    RegionId,
    TimeSeriesBundle,
    build_bundles,
    ratio_R,
    ratio_R_direct,
)
from .oracle import OracleError, default_grid, oracle_series
from .packet import KGrid, build_kgrid
from .scattering import amplitude_derivatives, amplitudes

__all__ = ["RunResult", "compute", "build_report", "run", "sweep", "stationary", "oracle", "main"]

SERIES_COLUMNS = ["t", "omega", "P1", "P2", "P3", "Nx1", "Ny1", "Nz1", "Nx3", "Ny3", "Nz3"]
ORDERS_COLUMNS = ["t", "region", "p0", "p2", "nx2", "ny1", "tau_x", "tau_y"]
SWEEP_COLUMNS = ["axis", "value", "tau_T_x", "tau_T_y", "tau_R_x", "tau_R_y", "status"]
MIN_FRACTION = 1e-4
# The ratio relation involves O(omega^2) differences of rates, so it is only
# meaningful where dp0 is well above the k-quadrature error.
RATIO_FLOOR = 1e-3


class InvariantBreach(RuntimeError):
    pass


@dataclass
class RunResult:
    config: RunConfig
    grid: KGrid
    bundles: dict
    orders: dict
    times: TimesReport
    legacy: LegacyTimes | None
    diagnostics: dict


def time_grid(config: RunConfig) -> np.ndarray:
    n = int(round(config.t_max / config.dt_sample))
    return np.arange(n + 1) * config.dt_sample


def compute(config: RunConfig, threads: int = 1) -> RunResult:
    """Full experiment: bundles for omega in {0, omega1, omega2}, orders, times."""
    barrier, packet = config.barrier, config.packet
    grid = build_kgrid(packet, config.n_k, config.span_sigmas, barrier=barrier, t_max=config.t_max)
    times = time_grid(config)
    w1, w2 = config.omega1, config.omega2
    checkpoints = [c for c in config.checkpoint_times if 0 <= c <= times[-1]]
    bundles = build_bundles([0.0, w1, w2], times, grid, barrier, packet, checkpoints=checkpoints,
                            cross_tol=config.cross_tol, threads=threads)
    b0, ba, bb = bundles[0.0], bundles[w1], bundles[w2]
    T_total = float(b0.region3.P[-1])
    R_total = float(b0.region1.P[-1])
    diag = {"P2_final": float(b0.P2[-1]), "unitarity_max_deviation": float(b0.checks.get("direct_norm_max_deviation", 0.0))}
    diag["flux_direct_max_residual"] = max(float(b.checks.get("flux_direct_max_residual", 0.0)) for b in bundles.values())
    diag["grid_nodes"] = len(grid)

    orders = {}
    results = {}
    for region, label, total in ((RegionId.BEYOND, "T", T_total), (RegionId.FRONT, "R", R_total)):
        if total < MIN_FRACTION:
            diag[f"{label}_omitted"] = f"{label}_total below {MIN_FRACTION:g}"
            results[label] = (None, None)
            continue
        o = extract_orders(b0, ba, bb, region, noise_floor=config.noise_floor)
        orders[region] = o
        tx = clock_time_x(o, eps_neg=config.eps_neg)
        ty, ty_int = clock_time_y(o)
        results[label] = (tx, ty)
        diag[f"tau_{label}_y_integral"] = ty_int
        diag[f"clamped_weight_{label}"] = clamped_weight(o)
        diag[f"excluded_weight_{label}"] = excluded_weight(o)
        diag[f"omega_too_large_{label}"] = bool(o.omega_too_large)
        diag[f"omega_discrepancy_{label}"] = float(o.omega_discrepancy)
        tz = tau_z_diagnostic(o, tx, ty)
        diag[f"tau_z_{label}"] = tz.tau_z
        diag[f"buttiker_relation_holds_{label}"] = tz.buttiker_relation_holds
        diag[f"buttiker_mismatch_{label}"] = tz.relative_mismatch
        diag.update(_ratio_summary(o, bb, region, w2, label))

    tau_k = time_y_kspace(grid, barrier, packet)
    if R_total >= MIN_FRACTION:
        diag["tau_R_y_kspace"] = time_R_kspace(grid, barrier, packet)
    (tTx, tTy), (tRx, tRy) = results["T"], results["R"]
    if tTx is None:
        raise InvariantBreach(f"invariant violated: T_total >= {MIN_FRACTION:g} (got {T_total:.3e})")
    report = TimesReport(tTx, tTy, tRx, tRy, tau_k, T_total, R_total, diag)

    try:
        leg = legacy_times(b0, config.epsilon)
    except LegacyError as exc:
        raise InvariantBreach(str(exc)) from None
    if tRx is not None and tTx is not None:
        dec = T_total * tTy + R_total * tRy
        diag["dwell_decomposition_mismatch"] = abs(dec - leg.tau_D) / leg.tau_D
    return RunResult(config, grid, bundles, orders, report, leg, diag)


def _ratio_summary(o: ClockOrders, bundle: TimeSeriesBundle, region, omega, label) -> dict:
    R = ratio_R(o, omega)
    t = o.times
    out = {}
    for t0 in (2.0, 2.7):
        sel = (t >= t0) & np.isfinite(R)
        out[f"R_{label}_max_t_ge_{t0}"] = float(np.max(R[sel])) if sel.any() else math.nan
        out[f"R_{label}_over_omega2_absmax_t_ge_{t0}"] = float(np.max(np.abs(R[sel])) / omega**2) if sel.any() else math.nan
    Rd = ratio_R_direct(bundle, region, noise_floor=RATIO_FLOOR)
    m = np.isfinite(R) & np.isfinite(Rd) & (o.dp0 > RATIO_FLOOR * np.max(o.dp0)) & (R != 0)
    out[f"ratio_relation_max_rel_{label}"] = float(np.max(np.abs(Rd[m] - R[m]) / np.abs(R[m]))) if m.any() else math.nan
    return out


def build_report(result: RunResult) -> Report:
    r = Report()
    r.set("report", "version", __version__)
    tr = result.times
    for key in ("tau_T_x", "tau_T_y", "tau_R_x", "tau_R_y", "tau_T_y_kspace", "T_total", "R_total"):
        v = getattr(tr, key)
        if v is not None:
            r.set("times", key, float(v))
    leg = result.legacy
    if leg is not None:
        for key in ("tau_D", "tau_eps", "tau_T_legacy", "tau_R_legacy", "epsilon", "t1", "t3"):
            v = getattr(leg, key)
            if v is not None:
                r.set("legacy", key, float(v))
        for k, v in leg.clipped.items():
            r.set("legacy", f"clipped_weight_{k}", float(v))
    for k, v in result.diagnostics.items():
        r.set("diagnostics", k, float(v) if isinstance(v, (np.floating, float)) else v)
    r.set("conventions", "kspace_mapping", KSPACE_MAPPING)
    r.set("conventions", "spin_phase_sign", SPIN_PHASE_SIGN)
    r.set("conventions", "tau_y_form", "endpoint -2 ny1(t_max) / p0(t_max)")
    r.set("conventions", "legacy_reflection", "integrand 1 - P1/R from t1, clipped to [0, 1]")
    for f in fields(result.config):
        r.set("config", f.name, getattr(result.config, f.name))
    return r


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(x) if isinstance(x, (float, np.floating)) else x for x in row])


def write_series(path, bundles: dict):
    rows = []
    for om, b in bundles.items():
        r1, r3 = b.region1, b.region3
        P2 = b.P2
        for i, t in enumerate(b.times):
            rows.append((float(t), float(om), r1.P[i], P2[i], r3.P[i], r1.Nx[i], r1.Ny[i], r1.Nz[i],
                         r3.Nx[i], r3.Ny[i], r3.Nz[i]))
    _write_csv(path, SERIES_COLUMNS, rows)


def write_orders(path, orders: dict, eps_neg: float):
    rows = []
    for region, o in orders.items():
        tx = tau_x_of_t(o, eps_neg)
        ty = tau_y_of_t(o)
        for i, t in enumerate(o.times):
            rows.append((float(t), int(region), o.p0[i], o.p2[i], o.nx2[i], o.ny1[i], tx[i], ty[i]))
    _write_csv(path, ORDERS_COLUMNS, rows)


def run(config: RunConfig, out: Path, threads: int = 1) -> Report:
    out.mkdir(parents=True, exist_ok=True)
    result = compute(config, threads)
    write_series(out / config.series_path, result.bundles)
    write_orders(out / config.orders_path, result.orders, config.eps_neg)
    report = build_report(result)
    report.write(out / config.report_path)
    return report


def _sweep_config(config: RunConfig, axis: str, value: float) -> RunConfig:
    if axis == "y0":
        extra = abs(value - config.y0) / (config.k_av / config.m)
        return config.replace(y0=value, t_max=config.t_max + extra)
    if axis == "omega":
        return config.replace(omega2=value, omega1=value / 2)
    if axis in ("delta", "k_av"):
        return config.replace(**{axis: value})
    raise ConfigError(f"unknown sweep axis {axis!r}")


def sweep(config: RunConfig, axis: str, values, out: Path, threads: int = 1) -> list[dict]:
    """One report per value; failures are recorded and the sweep continues."""
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for i, v in enumerate(values):
        row = {"axis": axis, "value": float(v)}
        try:
            rep = run(_sweep_config(config, axis, v), out / f"{axis}_{i:02d}", threads)
            for key in ("tau_T_x", "tau_T_y", "tau_R_x", "tau_R_y"):
                row[key] = rep["times"].get(key, math.nan)
            row["status"] = "ok"
        except (ConfigError, ClockError, CrossCheckError, InvariantBreach, LegacyError, ValueError) as exc:
            row.update({k: math.nan for k in ("tau_T_x", "tau_T_y", "tau_R_x", "tau_R_y")})
            row["status"] = f"error: {exc}"
        summary.append(row)
    _write_csv(out / config.summary_path, SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in summary])
    return summary


def stationary(config: RunConfig, k_min: float, k_max: float, n: int):
    """Table of k, D, |D|^2, Im[D* dD/dV] and the monochromatic y-time."""
    if not 0 < k_min < k_max:
        raise ConfigError("invariant violated: 0 < k_min < k_max")
    k = np.linspace(k_min, k_max, n)
    barrier = config.barrier
    _, D = amplitudes(k, barrier.V0, barrier)
    dD, _ = amplitude_derivatives(k, barrier.V0, barrier)
    im = np.imag(np.conj(D) * dD)
    tau = -im / np.abs(D) ** 2
    return k, D, np.abs(D) ** 2, im, tau


def oracle(config: RunConfig, out: Path) -> np.ndarray:
    out.mkdir(parents=True, exist_ok=True)
    barrier, packet = config.barrier, config.packet
    g = default_grid(barrier, packet, config.oracle_t_max, h=config.oracle_h, dt=config.oracle_dt)
    s = oracle_series(config.oracle_omega_list, config.oracle_t_max, g, barrier, packet,
                      sample_every=config.oracle_sample)
    _write_csv(out / config.oracle_path, SERIES_COLUMNS, [tuple(float(x) for x in row) for row in s])
    return s


def _parser():
    p = argparse.ArgumentParser(prog="larmorclock", description="Larmor-clock times for a Gaussian packet on a square barrier.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="default experiment")
    sw = sub.add_parser("sweep", parents=[common], help="repeat the experiment along one axis")
    sw.add_argument("--axis", required=True, choices=["y0", "delta", "k_av", "omega"])
    sw.add_argument("--values", required=True, help="comma-separated values")
    st = sub.add_parser("stationary", parents=[common], help="tabulate stationary quantities")
    st.add_argument("--k-range", nargs=3, type=float, default=[9.0, 11.0, 401], metavar=("KMIN", "KMAX", "N"))
    sub.add_parser("oracle", parents=[common], help="grid propagation for comparison")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        config = load_config(args.config, args.set)
        if args.command == "run":
            rep = run(config, out, args.threads)
            print(rep.dumps(), end="")
        elif args.command == "sweep":
            values = [float(v) for v in args.values.split(",")]
            rows = sweep(config, args.axis, values, out, args.threads)
            for r in rows:
                print(f"{args.axis}={r['value']:g}: {r['status']}")
        elif args.command == "stationary":
            k_min, k_max, n = args.k_range
            cols = stationary(config, k_min, k_max, int(n))
            out.mkdir(parents=True, exist_ok=True)
            k, D, T, im, tau = cols
            _write_csv(out / "stationary.csv", ["k", "D_re", "D_im", "abs_D2", "im_Dconj_dDdV", "tau_y"],
                       zip(k, D.real, D.imag, T, im, tau))
        elif args.command == "oracle":
            oracle(config, out)
    except (ConfigError, ClockError, CrossCheckError, InvariantBreach, LegacyError, OracleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
