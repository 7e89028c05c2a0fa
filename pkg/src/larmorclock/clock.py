"""Larmor-clock times from the small-omega expansion of the spin moments.

For each region the series are expanded as

    P  = p0 + omega^2 p2,   Nx = p0/2 + omega^2 nx2,   Ny = omega ny1,   Nz = omega nz1

and the time spent in the barrier by the fraction ``dp0`` leaving at ``t``
follows from

    tau_y(t) = -2 (dny1/dt) / (dp0/dt)
    tau_x(t) = sqrt(2 (dp2/dt - 2 dnx2/dt) / (dp0/dt))

Each prescription is weighted with ``dp0`` and normalised by ``p0(inf)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .observables import RegionId, TimeSeriesBundle
from .packet import KGrid, PacketSpec, spectral_amplitude
from .scattering import BarrierSpec, amplitude_derivatives, amplitudes

__all__ = [
    "ClockOrders",
    "TimesReport",
    "ClockError",
    "KSPACE_MAPPING",
    "extract_orders",
    "tau_y_of_t",
    "tau_x_of_t",
    "clamped_weight",
    "excluded_weight",
    "clock_time_x",
    "clock_time_y",
    "time_y_kspace",
    "time_R_kspace",
    "tau_z_diagnostic",
]

# omega enters the barrier heights as V0 -+ omega/2, so the relative
# spin-up/spin-down amplitude D_+ - D_- has derivative -dD/dV in omega.
KSPACE_MAPPING = "tau = -int |a|^2 Im[D* dD/dV] / int |a|^2 |D|^2  (d/domega of D_plus - D_minus = -dD/dV)"


class ClockError(RuntimeError):
    pass


@dataclass
class ClockOrders:
    region: RegionId
    times: np.ndarray
    p0: np.ndarray
    p2: np.ndarray
    nx2: np.ndarray
    ny1: np.ndarray
    nz1: np.ndarray
    dp0: np.ndarray
    dp2: np.ndarray
    dnx2: np.ndarray
    dny1: np.ndarray
    dnz1: np.ndarray
    noise_floor: float = 1e-8
    omega_too_large: bool = False
    omega_discrepancy: float = 0.0

    @property
    def active(self) -> np.ndarray:
        """Times where ``dp0/dt`` is above the noise floor."""
        return self.dp0 > self.noise_floor * np.max(self.dp0)


def _odd(fa, fb, wa, wb):
    # f(w) = w c1 + w^3 c3: eliminate c3
    ea, eb = fa / wa, fb / wb
    r2 = (wb / wa) ** 2
    return (r2 * ea - eb) / (r2 - 1.0), ea, eb


def _even(f0, fa, fb, wa, wb):
    ea, eb = (fa - f0) / wa**2, (fb - f0) / wb**2
    r2 = (wb / wa) ** 2
    return (r2 * ea - eb) / (r2 - 1.0), ea, eb


def extract_orders(bundle0: TimeSeriesBundle, bundleA: TimeSeriesBundle, bundleB: TimeSeriesBundle,
                   region, *, noise_floor: float = 1e-8, flag_tol: float = 0.01,
                   flag_floor: float = 1e-3) -> ClockOrders:
    """Richardson-combined perturbative orders from omega = 0, omega1, omega2.

    Rates are combined directly from the boundary currents of each bundle,
    so no numerical time differentiation is involved.  ``omega_too_large``
    is set when the two single-omega estimates of an order differ by more
    than ``flag_tol`` relative wherever that order exceeds ``flag_floor``
    times its own maximum.  Near zero crossings a pointwise relative test
    is meaningless, hence the separate floor.
    """
    region = RegionId(region)
    wa, wb = bundleA.omega, bundleB.omega
    if wa == wb or wa <= 0 or wb <= 0:
        raise ValueError("need two distinct positive omega values")
    if bundle0.omega != 0:
        raise ValueError("bundle0 must be the omega = 0 bundle")
    m0, ma, mb = (b.region(region) for b in (bundle0, bundleA, bundleB))
    r0, ra, rb = (b.rates(region) for b in (bundle0, bundleA, bundleB))

    worst = 0.0

    def track(est, ea, eb):
        nonlocal worst
        scale = np.max(np.abs(est))
        if scale == 0:
            return est
        mask = np.abs(est) > flag_floor * scale
        if mask.any():
            rel = np.abs(ea[mask] - eb[mask]) / np.abs(est[mask])
            worst = max(worst, float(np.max(rel)))
        return est

    p2 = track(*_even(m0.P, ma.P, mb.P, wa, wb))
    nx2 = track(*_even(m0.Nx, ma.Nx, mb.Nx, wa, wb))
    ny1 = track(*_odd(ma.Ny, mb.Ny, wa, wb))
    nz1 = track(*_odd(ma.Nz, mb.Nz, wa, wb))
    dp2 = track(*_even(r0.P, ra.P, rb.P, wa, wb))
    dnx2 = track(*_even(r0.Nx, ra.Nx, rb.Nx, wa, wb))
    dny1 = track(*_odd(ra.Ny, rb.Ny, wa, wb))
    dnz1 = track(*_odd(ra.Nz, rb.Nz, wa, wb))
    return ClockOrders(
        region=region,
        times=bundle0.times,
        p0=m0.P.copy(),
        p2=p2,
        nx2=nx2,
        ny1=ny1,
        nz1=nz1,
        dp0=r0.P.copy(),
        dp2=dp2,
        dnx2=dnx2,
        dny1=dny1,
        dnz1=dnz1,
        noise_floor=noise_floor,
        omega_too_large=worst > flag_tol,
        omega_discrepancy=worst,
    )


def tau_y_of_t(orders: ClockOrders) -> np.ndarray:
    mask = orders.active
    out = np.full(orders.dp0.shape, np.nan)
    out[mask] = -2.0 * orders.dny1[mask] / orders.dp0[mask]
    return out


def _radicand(orders: ClockOrders) -> np.ndarray:
    out = np.full(orders.dp0.shape, np.nan)
    mask = orders.active
    out[mask] = 2.0 * (orders.dp2[mask] - 2.0 * orders.dnx2[mask]) / orders.dp0[mask]
    return out


def clamped_weight(orders: ClockOrders) -> float:
    """Fraction of the weight ``int dp0`` sitting at negative radicands."""
    rad = _radicand(orders)
    mask = orders.active
    neg = mask & (rad < 0)
    total = np.trapezoid(np.where(mask, orders.dp0, 0.0), orders.times)
    if total <= 0:
        return 0.0
    return float(np.trapezoid(np.where(neg, orders.dp0, 0.0), orders.times) / total)


def excluded_weight(orders: ClockOrders) -> float:
    """Share of the positive outflow ``int max(dp0, 0)`` that falls below the noise floor."""
    pos = np.maximum(orders.dp0, 0.0)
    total = np.trapezoid(pos, orders.times)
    if total <= 0:
        return 0.0
    return float(np.trapezoid(np.where(orders.active, 0.0, pos), orders.times) / total)


def tau_x_of_t(orders: ClockOrders, eps_neg: float = 1e-4, max_clamped: float = 1e-3) -> np.ndarray:
    """``tau_x(t)``; radicands below zero are clamped to zero.

    Raises ``ClockError`` if a radicand falls below ``-eps_neg`` times the
    largest radicand while carrying more than ``max_clamped`` of the weight.
    """
    rad = _radicand(orders)
    finite = np.isfinite(rad)
    if finite.any():
        worst = np.min(rad[finite])
        if worst < -eps_neg * np.max(rad[finite]) and clamped_weight(orders) > max_clamped:
            raise ClockError(
                f"negative radicand carries {clamped_weight(orders):.2e} of the weight (limit {max_clamped:g})"
            )
    out = np.full(rad.shape, np.nan)
    out[finite] = np.sqrt(np.maximum(rad[finite], 0.0))
    return out


def clock_time_x(orders: ClockOrders, eps_neg: float = 1e-4, max_clamped: float = 1e-3) -> float:
    tau = tau_x_of_t(orders, eps_neg, max_clamped)
    integrand = np.where(orders.active, tau * orders.dp0, 0.0)
    return float(np.trapezoid(integrand, orders.times) / orders.p0[-1])


def clock_time_y(orders: ClockOrders) -> tuple[float, float]:
    """Endpoint form ``-2 ny1(t_max) / p0(t_max)`` and the weighted-integral form."""
    endpoint = -2.0 * orders.ny1[-1] / orders.p0[-1]
    tau = tau_y_of_t(orders)
    integrand = np.where(orders.active, tau * orders.dp0, 0.0)
    integral = np.trapezoid(integrand, orders.times) / orders.p0[-1]
    return float(endpoint), float(integral)


def _kspace(grid: KGrid, barrier: BarrierSpec, packet: PacketSpec, which: str) -> float:
    k = grid.nodes
    a2 = np.abs(spectral_amplitude(k, packet)) ** 2
    A, D = amplitudes(k, barrier.V0, barrier)
    dD, dA = amplitude_derivatives(k, barrier.V0, barrier)
    amp, damp = (D, dD) if which == "T" else (A, dA)
    num = np.sum(grid.weights * a2 * np.imag(np.conj(amp) * damp))
    den = np.sum(grid.weights * a2 * np.abs(amp) ** 2)
    return float(-num / den)


def time_y_kspace(grid: KGrid, barrier: BarrierSpec, packet: PacketSpec) -> float:
    """Asymptotic tunnelling time from a single k-integral (no time evolution)."""
    return _kspace(grid, barrier, packet, "T")


def time_R_kspace(grid: KGrid, barrier: BarrierSpec, packet: PacketSpec) -> float:
    """Reflection analogue of :func:`time_y_kspace`, with A in place of D."""
    return _kspace(grid, barrier, packet, "R")


@dataclass
class TauZ:
    tau_z: float
    tau_x: float
    tau_y: float
    buttiker_relation_holds: bool
    relative_mismatch: float


def tau_z_diagnostic(orders: ClockOrders, tau_x: float, tau_y: float, rel_tol: float = 0.05) -> TauZ:
    """``tau_z = 2 |nz1| / p0`` at the last time and a check of tau_z^2 = tau_x^2 + tau_y^2."""
    tau_z = 2.0 * abs(orders.nz1[-1]) / orders.p0[-1]
    ref = tau_x**2 + tau_y**2
    mismatch = abs(tau_z**2 - ref) / ref if ref > 0 else (0.0 if tau_z == 0 else math.inf)
    return TauZ(tau_z, tau_x, tau_y, bool(mismatch <= rel_tol), float(mismatch))


@dataclass
class TimesReport:
    tau_T_x: float
    tau_T_y: float
    tau_R_x: float | None
    tau_R_y: float | None
    tau_T_y_kspace: float
    T_total: float
    R_total: float
    diagnostics: dict = field(default_factory=dict)
