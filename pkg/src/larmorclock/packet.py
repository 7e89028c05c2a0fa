"""Gaussian packet, k-space quadrature and spectral time evolution.

The packet is expanded on barrier eigenstates with spectral amplitude

    a(k) = (2 delta^2 / 4 pi^3)^(1/4) exp(-delta^2 (k - k_av)^2) exp(-i k y0)

so that ``2 pi * int |a|^2 dk = 1``.  Spin component ``+`` sees the barrier
height ``V0 - omega/2`` and ``-`` sees ``V0 + omega/2``; both are built with
the same ``a(k)`` and the full spinor is ``(psi_plus, psi_minus) / sqrt(2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .scattering import BarrierSpec, amplitude_derivatives, amplitudes, boundary_values, state_values

__all__ = [
    "PacketSpec",
    "KGrid",
    "SpinorSample",
    "BoundarySeries",
    "spectral_amplitude",
    "build_kgrid",
    "spectral_sum",
    "evolve_at",
    "boundary_series",
    "spin_heights",
]


@dataclass(frozen=True)
class PacketSpec:
    delta: float = math.sqrt(2.0)
    k_av: float = 9.9
    y0: float = -15.0

    def __post_init__(self):
        for name in ("delta", "k_av", "y0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"PacketSpec.{name} must be finite")
        if self.delta <= 0:
            raise ValueError(f"invariant violated: delta > 0 (got delta={self.delta})")

    @property
    def sigma_k(self) -> float:
        """Standard deviation of |a(k)|^2."""
        return 1.0 / (2.0 * self.delta)

    def check_against(self, barrier: BarrierSpec) -> None:
        """Raise if the packet does not start clear of the barrier."""
        limit = -barrier.d - 3.0 * self.delta
        if not self.y0 < limit:
            raise ValueError(f"invariant violated: y0 < -d - 3*delta (got y0={self.y0}, limit {limit})")


def spectral_amplitude(k, spec: PacketSpec):
    k = np.asarray(k, dtype=float)
    norm = (2.0 * spec.delta**2 / (4.0 * math.pi**3)) ** 0.25
    return norm * np.exp(-(spec.delta**2) * (k - spec.k_av) ** 2) * np.exp(-1j * k * spec.y0)


def spin_heights(V0: float, omega: float) -> tuple[float, float]:
    """Barrier heights ``(V_plus, V_minus)`` seen by the two spin components."""
    return V0 - 0.5 * omega, V0 + 0.5 * omega


@dataclass(frozen=True)
class KGrid:
    nodes: np.ndarray
    weights: np.ndarray
    span: tuple[float, float]
    breaks: np.ndarray = field(repr=False)
    order: int = 32

    def __len__(self) -> int:
        return self.nodes.size


def _gl_panels(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (half * x[None, :] + 0.5 * (hi + lo)).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def _resolution_integrands(k, packet, barrier):
    """Integrands whose k-quadrature has to converge for the clock observables."""
    a2 = 2 * math.pi * np.abs(spectral_amplitude(k, packet)) ** 2
    A, D = amplitudes(k, barrier.V0, barrier)
    dD, dA = amplitude_derivatives(k, barrier.V0, barrier)
    return np.stack(
        [
            a2 * np.abs(D) ** 2,
            a2 * np.abs(A) ** 2,
            a2 * np.imag(np.conj(D) * dD),
            a2 * np.imag(np.conj(A) * dA),
            a2 * np.abs(dD) ** 2,
            a2 * np.abs(dA) ** 2,
        ]
    )


def build_kgrid(
    spec: PacketSpec,
    n_nodes: int = 16384,
    span_sigmas: float = 8.0,
    *,
    barrier: BarrierSpec | None = None,
    t_max: float | None = None,
    order: int = 32,
    tol: float = 1e-12,
    max_depth: int = 24,
) -> KGrid:
    """Composite Gauss-Legendre grid over ``k_av +- span_sigmas * sigma_k``.

    The span is cut into ``ceil(n_nodes / order)`` equal panels of ``order``
    nodes.  With ``t_max`` given, panels are split until the phase
    ``k**2 t / 2m`` is resolved up to ``t_max``.  With ``barrier`` given,
    panels are bisected until the stationary integrands (transmitted and
    reflected weight and their barrier-height derivatives) agree between one
    panel and its two halves to ``tol``; this is what resolves narrow
    over-barrier resonances.
    """
    if n_nodes < 64:
        raise ValueError("n_nodes must be at least 64")
    lo = spec.k_av - span_sigmas * spec.sigma_k
    hi = spec.k_av + span_sigmas * spec.sigma_k
    if lo <= 0:
        raise ValueError(f"k span reaches k <= 0 (k_min = {lo:.6g})")
    n_panels = max(1, math.ceil(n_nodes / order))
    breaks = list(np.linspace(lo, hi, n_panels + 1))

    if t_max is not None and t_max > 0:
        mass = barrier.m if barrier is not None else 1.0
        offset = abs(spec.y0) + (barrier.d if barrier is not None else 0.0)
        out = [breaks[0]]
        for a, b in zip(breaks[:-1], breaks[1:]):
            omega = b * t_max / mass + offset
            pieces = max(1, math.ceil(omega * (b - a) / order))
            out.extend(np.linspace(a, b, pieces + 1)[1:])
        breaks = out

    if barrier is not None:
        x, w = np.polynomial.legendre.leggauss(order)

        def panel_integral(a, b):
            half = 0.5 * (b - a)
            k = half * x + 0.5 * (a + b)
            return _resolution_integrands(k, spec, barrier) @ (half * w)

        refined = [breaks[0]]
        stack = [(a, b, 0) for a, b in zip(breaks[-2::-1], breaks[:0:-1])]
        # stack holds panels right-to-left so pops come out in increasing k
        while stack:
            a, b, depth = stack.pop()
            mid = 0.5 * (a + b)
            whole = panel_integral(a, b)
            halves = panel_integral(a, mid) + panel_integral(mid, b)
            if depth < max_depth and np.max(np.abs(whole - halves)) > tol:
                stack.append((mid, b, depth + 1))
                stack.append((a, mid, depth + 1))
            else:
                refined.append(b)
        breaks = refined

    breaks = np.asarray(breaks)
    nodes, weights = _gl_panels(breaks, order)
    return KGrid(nodes=nodes, weights=weights, span=(lo, hi), breaks=breaks, order=order)


@dataclass
class SpinorSample:
    """psi_plus, psi_minus and their y-derivatives (arrays or scalars)."""

    plus: np.ndarray
    minus: np.ndarray
    dplus: np.ndarray
    dminus: np.ndarray


def _uniform_step(times):
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        return None
    steps = np.diff(times)
    dt = steps[0]
    if dt > 0 and np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        return dt
    return None


def spectral_sum(times, coeffs, energies, *, chunk: int = 512, block: int = 64, threads: int = 1):
    """``out[j, c] = sum_k coeffs[k, c] exp(-i energies[k] times[j])``.

    The phase matrix is never held for all times at once.  On uniform time
    grids it is generated blockwise as ``exp(-i E t_b) * exp(-i E n dt)``,
    which costs one complex product per entry instead of an exponential.
    Chunks are independent, so the result does not depend on ``threads``.
    """
    times = np.asarray(times, dtype=float)
    coeffs = np.asarray(coeffs, dtype=complex)
    squeeze = coeffs.ndim == 1
    if squeeze:
        coeffs = coeffs[:, None]
    energies = np.asarray(energies, dtype=float)
    out = np.empty((times.size, coeffs.shape[1]), dtype=complex)
    dt = _uniform_step(times)
    steps = None
    if dt is not None:
        steps = np.exp(-1j * np.outer(np.arange(block) * dt, energies))

    def work(start):
        stop = min(start + chunk, times.size)
        ts = times[start:stop]
        if steps is None:
            phase = np.exp(-1j * np.outer(ts, energies))
        else:
            phase = np.empty((ts.size, energies.size), dtype=complex)
            for b0 in range(0, ts.size, block):
                nb = min(block, ts.size - b0)
                base = np.exp(-1j * ts[b0] * energies)
                np.multiply(steps[:nb], base[None, :], out=phase[b0 : b0 + nb])
        out[start:stop] = phase @ coeffs

    starts = range(0, times.size, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return out[:, 0] if squeeze else out


def evolve_at(y, t, omega: float, grid: KGrid, barrier: BarrierSpec, packet: PacketSpec, threads: int = 1,
              y_block: int = 128):
    """Both spin components and their slopes at ``(y, t)``.

    Either ``y`` or ``t`` may be an array; the other must be a scalar.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    if y_arr.size > 1 and t_arr.size > 1:
        raise ValueError("evaluate on a y-array or a t-array, not both")
    k = grid.nodes
    energies = k * k / (2.0 * barrier.m)
    wa = grid.weights * spectral_amplitude(k, packet)
    vals = []
    for V in spin_heights(barrier.V0, omega):
        if t_arr.size > 1:
            psi, dpsi = state_values(k, V, y_arr, barrier)
            coeffs = np.concatenate([psi.T, dpsi.T], axis=1) * wa[:, None]
            res = spectral_sum(t_arr, coeffs, energies, threads=threads)
            vals.append((res[:, 0], res[:, 1]))
        else:
            c = wa * np.exp(-1j * energies * t_arr[0])
            f = np.empty(y_arr.size, dtype=complex)
            df = np.empty(y_arr.size, dtype=complex)
            for start in range(0, y_arr.size, y_block):
                sl = slice(start, start + y_block)
                psi, dpsi = state_values(k, V, y_arr[sl], barrier)
                f[sl] = psi @ c
                df[sl] = dpsi @ c
            vals.append((f, df))
    (p, dp), (mm, dm) = vals
    if np.ndim(y) == 0 and np.ndim(t) == 0:
        return SpinorSample(p[0], mm[0], dp[0], dm[0])
    return SpinorSample(p, mm, dp, dm)


@dataclass
class BoundarySeries:
    """Spinor samples at ``y = -d`` and ``y = +d`` on a time grid, per omega."""

    times: np.ndarray
    left: dict
    right: dict

    def at(self, omega: float, side: str) -> SpinorSample:
        return (self.left if side == "left" else self.right)[omega]


def boundary_series(times, omegas, grid: KGrid, barrier: BarrierSpec, packet: PacketSpec, threads: int = 1):
    """Evaluate every spin component needed for ``omegas`` at both barrier edges.

    All barrier heights share one pass over the phase matrix.
    """
    times = np.asarray(times, dtype=float)
    k = grid.nodes
    wa = grid.weights * spectral_amplitude(k, packet)
    heights = []
    for om in omegas:
        for V in spin_heights(barrier.V0, om):
            if V not in heights:
                heights.append(V)
    cols = []
    for V in heights:
        fl, dfl, fr, dfr = boundary_values(k, V, barrier)
        cols.extend([fl, dfl, fr, dfr])
    coeffs = np.stack(cols, axis=1) * wa[:, None]
    res = spectral_sum(times, coeffs, k * k / (2.0 * barrier.m), threads=threads)
    by_height = {V: res[:, 4 * i : 4 * i + 4] for i, V in enumerate(heights)}
    left, right = {}, {}
    for om in omegas:
        Vp, Vm = spin_heights(barrier.V0, om)
        P, M = by_height[Vp], by_height[Vm]
        left[om] = SpinorSample(P[:, 0], M[:, 0], P[:, 1], M[:, 1])
        right[om] = SpinorSample(P[:, 2], M[:, 2], P[:, 3], M[:, 3])
    return BoundarySeries(times=times, left=left, right=right)
